//! Command-line front end.
//!
//! Exit codes: 0 all enabled tests passed, 2 configuration error, 3 numerical
//! failure, 4 statistical failure (or an unfinished run).

mod selftest;

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dos::{estimate_dos_histogram, stieltjes_estimate, DosEnsemble, DosEstimate, DosMethod, HistogramGrid};
use crate::error::{Error, Result};
use crate::experiments::{run_experiment, Experiment, ExperimentConfig, ExperimentRecord, RunOptions, RunStatus, StageStore};
use crate::hamiltonian::{sample_operator, PotentialSpec};
use crate::lattice::LatticeBox;
use crate::spectral::{count_in_interval, dense_spectrum, greens_entry, inertia_at};

pub use selftest::{run_selftest, SelftestOutcome, Tolerances};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_STATISTICAL: i32 = 4;

/// Version of the CSV column layouts written by this tool.
pub const CSV_CONTRACT: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "anderson-meso", version, about = "Mesoscopic eigenvalue statistics of the Anderson model")]
pub struct Cli {
    /// Worker threads (0 = all cores). Never changes results.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Estimate the density of states and write dos.csv / dos.json.
    Dos(RunArgs),
    /// Run one experiment into a run directory named by the config hash.
    Experiment {
        /// One of: microscopic, lln, clt, partition, localization, minami, green-decay.
        #[arg(value_parser = parse_experiment)]
        name: Experiment,
        #[command(flatten)]
        run: RunArgs,
        /// Reuse finished stages of an earlier run with the same config.
        #[arg(long)]
        resume: bool,
        /// Replace spectral counts by Poisson draws of the target intensity.
        #[arg(long)]
        synthetic_null: bool,
        /// Stop after this many freshly computed stages.
        #[arg(long, hide = true)]
        stop_after_stages: Option<usize>,
    },
    /// Closed forms, identities and oracle micro-checks.
    Selftest {
        /// TOML file with a `[tolerances]` table.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Single-realization probes; print JSON on stdout.
    #[command(subcommand)]
    Probe(Probe),
}

#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    /// Overrides `schedule.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 1)]
    pub dimension: usize,
    #[arg(long)]
    pub half_width: i64,
    /// Width `W` of the uniform single-site distribution.
    #[arg(long, default_value_t = 4.0)]
    pub disorder: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Subcommand, Debug)]
pub enum Probe {
    /// Eigenvalues in the open interval (lo, hi).
    Count {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_hyphen_values = true)]
        lo: f64,
        #[arg(long, allow_hyphen_values = true)]
        hi: f64,
    },
    /// Inertia of H - shift.
    Inertia {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_hyphen_values = true)]
        shift: f64,
    },
    /// Green's function entry G(x, y; E + i·im_z) for site indices x, y.
    Greens {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        x: usize,
        #[arg(long)]
        y: usize,
        #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
        energy: f64,
        #[arg(long, default_value_t = 1e-3)]
        im_z: f64,
    },
    /// Full spectrum from the dense solver.
    Spectrum {
        #[command(flatten)]
        model: ModelArgs,
    },
}

fn parse_experiment(s: &str) -> std::result::Result<Experiment, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERIC
    } else {
        EXIT_CONFIG
    }
}

/// A file the run promises to produce.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub columns: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_path: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub synthetic_null: bool,
    pub csv_contract: u32,
    /// `running`, `partial`, `complete` or `failed`.
    pub status: String,
    pub outputs: Vec<OutputFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passed: Option<bool>,
}

impl RunManifest {
    fn new(command: &str, config_path: &Path, cfg: &ExperimentConfig, hash: String) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_path: config_path.display().to_string(),
            config_hash: hash,
            master_seed: cfg.schedule.seed,
            synthetic_null: cfg.synthetic_null.enabled,
            csv_contract: CSV_CONTRACT,
            status: "running".into(),
            outputs: Vec::new(),
            passed: None,
        }
    }

    fn declare(&mut self, path: String, kind: &str, columns: &[&str]) {
        if !self.outputs.iter().any(|o| o.path == path) {
            self.outputs.push(OutputFile {
                path,
                kind: kind.into(),
                columns: columns.iter().map(|c| c.to_string()).collect(),
            });
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let tmp = dir.join(".manifest.json.tmp");
        std::fs::write(&tmp, serde_json::to_vec_pretty(self)?)?;
        std::fs::rename(tmp, dir.join("manifest.json"))?;
        Ok(())
    }
}

/// Parse `args` and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start {} worker threads: {e}", cli.threads);
            return EXIT_CONFIG;
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Dos(args) => cmd_dos(&args),
        Command::Experiment {
            name,
            run,
            resume,
            synthetic_null,
            stop_after_stages,
        } => cmd_experiment(name, &run, resume, synthetic_null, stop_after_stages),
        Command::Selftest { config } => cmd_selftest(config.as_deref()),
        Command::Probe(p) => cmd_probe(p),
    }
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.schedule.seed = seed;
    }
    Ok(cfg)
}

fn write_csv_file(path: &Path, write: impl FnOnce(BufWriter<File>) -> Result<()>) -> Result<()> {
    write(BufWriter::new(File::create(path)?))
}

/// DOS over the boxes of the schedule.
pub fn cmd_dos(args: &RunArgs) -> Result<i32> {
    let cfg = load_config(args)?;
    let d = cfg.model.dimension;
    let boxes = cfg
        .schedule
        .half_widths
        .iter()
        .map(|&l| LatticeBox::centered(l as i64, d))
        .collect::<Result<Vec<_>>>()?;
    let ens = DosEnsemble {
        boxes,
        spec: cfg.model.potential.clone(),
        n_realizations: cfg.dos.n_realizations,
        seed: crate::experiments::dos_seed(cfg.schedule.seed),
        hopping: cfg.model.hopping,
    };
    std::fs::create_dir_all(&args.out)?;
    let mut manifest = RunManifest::new("dos", &args.config, &cfg, cfg.hash("dos"));
    manifest.declare("dos.csv".into(), "dos", &["E", "f_hat", "std_err"]);
    manifest.declare("dos.json".into(), "dos", &[]);
    manifest.write(&args.out)?;

    let (lo, hi) = ens.spectral_range();
    let grid = cfg
        .dos
        .bin_width
        .map(|h| HistogramGrid::centered(cfg.window.energy, h, lo, hi))
        .transpose()?;
    let hist = estimate_dos_histogram(&ens, grid, cfg.dos.backend)?;
    let est: DosEstimate = match cfg.dos.method {
        DosMethod::Histogram => hist,
        DosMethod::Stieltjes => {
            let w = hist.metadata.bin_width.expect("histogram bin width");
            stieltjes_estimate(&ens, &hist.energies, cfg.dos.im_z.unwrap_or(10.0 * w))?
        }
    };
    write_csv_file(&args.out.join("dos.csv"), |w| est.write_csv(w))?;
    std::fs::write(args.out.join("dos.json"), est.to_json()?)?;
    manifest.status = "complete".into();
    manifest.write(&args.out)?;
    println!("{}", args.out.join("dos.csv").display());
    Ok(EXIT_OK)
}

/// Files an experiment will write, in the order they are written.
fn planned_outputs(exp: Experiment, cfg: &ExperimentConfig) -> Vec<(String, &'static str)> {
    let levels: Vec<u64> = match exp {
        Experiment::Localization => vec![cfg.localization.half_width],
        Experiment::GreenDecay => vec![cfg.green.outer_half_width],
        Experiment::Minami => vec![cfg.minami.half_width.unwrap_or(cfg.largest_half_width())],
        _ => cfg.schedule.half_widths.clone(),
    };
    let mut out: Vec<(String, &'static str)> = levels.iter().map(|l| (format!("samples_L{l}.csv"), "samples")).collect();
    let with_dos = matches!(exp, Experiment::Microscopic | Experiment::Lln | Experiment::Clt) && !cfg.synthetic_null.enabled;
    if with_dos {
        out.push(("dos.csv".into(), "dos"));
    }
    out.push(("reports.json".into(), "reports"));
    out
}

pub fn run_dir(out: &Path, exp: Experiment, hash: &str) -> PathBuf {
    out.join(format!("{}-{}", exp.name(), &hash[..16]))
}

pub fn cmd_experiment(
    exp: Experiment,
    args: &RunArgs,
    resume: bool,
    synthetic_null: bool,
    stop_after_stages: Option<usize>,
) -> Result<i32> {
    let mut cfg = load_config(args)?;
    if synthetic_null {
        cfg.synthetic_null.enabled = true;
    }
    let hash = cfg.hash(exp.name());
    let dir = run_dir(&args.out, exp, &hash);
    std::fs::create_dir_all(&dir)?;
    let stages = StageStore::open(dir.join("stages"))?;
    if !resume {
        stages.clear()?;
    }

    let mut manifest = RunManifest::new(&format!("experiment {exp}"), &args.config, &cfg, hash);
    for (path, kind) in planned_outputs(exp, &cfg) {
        manifest.declare(path, kind, &[]);
    }
    manifest.write(&dir)?;

    let opts = RunOptions {
        stages: Some(stages),
        stop_after_stages,
    };
    let rec = match run_experiment(exp, &cfg, &opts) {
        Ok(r) => r,
        Err(e) => {
            manifest.status = "failed".into();
            manifest.write(&dir)?;
            return Err(e);
        }
    };
    // the final manifest lists exactly what was written
    manifest.outputs.clear();
    write_record(&rec, &dir, &mut manifest)?;
    manifest.status = match rec.status {
        RunStatus::Complete => "complete",
        RunStatus::Partial => "partial",
    }
    .into();
    manifest.passed = Some(rec.passed());
    manifest.write(&dir)?;

    println!("{}", dir.display());
    for r in &rec.reports {
        println!(
            "{} {} = {:.6} (threshold {:.6})",
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.value,
            r.threshold
        );
    }
    if rec.status == RunStatus::Partial {
        eprintln!("run is partial; rerun with --resume to finish it");
        return Ok(EXIT_STATISTICAL);
    }
    Ok(if rec.passed() { EXIT_OK } else { EXIT_STATISTICAL })
}

fn write_record(rec: &ExperimentRecord, dir: &Path, manifest: &mut RunManifest) -> Result<()> {
    for level in &rec.levels {
        let cols: Vec<&str> = level.table.columns.iter().map(|c| c.as_str()).collect();
        manifest.declare(level.csv_name(), "samples", &cols);
        manifest.write(dir)?;
        write_csv_file(&dir.join(level.csv_name()), |w| level.table.write_csv(w))?;
    }
    if let Some(dos) = &rec.dos {
        manifest.declare("dos.csv".into(), "dos", &["E", "f_hat", "std_err"]);
        manifest.write(dir)?;
        write_csv_file(&dir.join("dos.csv"), |w| dos.write_csv(w))?;
    }
    manifest.declare("reports.json".into(), "reports", &[]);
    manifest.write(dir)?;
    std::fs::write(dir.join("reports.json"), serde_json::to_vec_pretty(rec)?)?;
    Ok(())
}

fn cmd_selftest(config: Option<&Path>) -> Result<i32> {
    let tol = match config {
        Some(p) => Tolerances::from_path(p)?,
        None => Tolerances::default(),
    };
    let outcome = run_selftest(&tol)?;
    for c in &outcome.checks {
        if c.pass {
            println!("ok   {}", c.name);
        } else {
            println!("FAIL {}: {}", c.name, c.detail);
        }
    }
    println!("{} checks run, {} failed", outcome.checks.len(), outcome.failures());
    Ok(if outcome.failures() == 0 { EXIT_OK } else { EXIT_STATISTICAL })
}

fn probe_operator(m: &ModelArgs) -> Result<crate::hamiltonian::DisorderedOperator> {
    let b = LatticeBox::centered(m.half_width, m.dimension)?;
    sample_operator(&b, &PotentialSpec::uniform(m.disorder)?, m.seed)
}

fn cmd_probe(p: Probe) -> Result<i32> {
    let out = match p {
        Probe::Count { model, lo, hi } => {
            let op = probe_operator(&model)?;
            serde_json::json!({ "sites": op.site_count(), "lo": lo, "hi": hi, "count": count_in_interval(&op, lo, hi)? })
        }
        Probe::Inertia { model, shift } => serde_json::to_value(inertia_at(&probe_operator(&model)?, shift)?)?,
        Probe::Greens {
            model,
            x,
            y,
            energy,
            im_z,
        } => {
            let g = greens_entry(&probe_operator(&model)?, x, y, Complex64::new(energy, im_z))?;
            serde_json::json!({ "x": x, "y": y, "re": g.re, "im": g.im })
        }
        Probe::Spectrum { model } => serde_json::json!({ "eigenvalues": dense_spectrum(&probe_operator(&model)?)? }),
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(EXIT_OK)
}
