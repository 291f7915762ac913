//! Experiments built on eigenvalue counts in energy windows.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand_distr::{Binomial, Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::record::{ExperimentRecord, LevelRecord, RunStatus, SampleTable};
use super::{dos_seed, replicate_seed, Experiment, ExperimentConfig, RunOptions, Stager};
use crate::dos::{estimate_dos_histogram, intensity, DosEnsemble, DosEstimate, HistogramGrid};
use crate::error::{Error, Result};
use crate::hamiltonian::{sample_operator, DisorderedOperator};
use crate::lattice::{dyadic_partition, make_box, partition_box, LatticeBox};
use crate::rng::CounterRng;
use crate::spectral::{count_from, count_in_interval, inertia_many, trace_im_resolvent};
use crate::stats::{
    ks_normal, ks_threshold, lindeberg_diagnostic, total_variation_poisson, EmpiricalDistribution, PointEstimate,
    Summary, TestReport,
};

pub(crate) const SCHEME: &str = "replicate r at half-width L uses key CounterRng(seed).derive(L).derive(r); \
     V_x = F^-1(site_uniform(CounterRng(key).derive_label(\"potential\"), x)); \
     synthetic draws use ChaCha8 seeded from the replicate key; DOS realizations use CounterRng(seed).derive_label(\"dos\")";

/// Realizations used for the dyadic-tree diagnostics at each `L`.
const DYADIC_REALIZATIONS: usize = 200;

/// What a stage persists: the raw table plus auxiliary matrices.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct LevelData {
    half_width: u64,
    volume: usize,
    scale: f64,
    table: SampleTable,
    #[serde(default)]
    aux: BTreeMap<String, Vec<Vec<f64>>>,
    #[serde(default)]
    notes: Vec<String>,
}

impl LevelData {
    fn into_record(self) -> (LevelRecord, BTreeMap<String, Vec<Vec<f64>>>) {
        let mut rec = LevelRecord::new(self.half_width, self.volume, self.scale, self.table);
        rec.notes = self.notes;
        (rec, self.aux)
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn volume(half_width: u64, d: usize) -> usize {
    (2 * half_width as usize + 1).pow(d as u32)
}

fn centered(half_width: u64, d: usize) -> Result<LatticeBox> {
    LatticeBox::centered(half_width as i64, d)
}

fn operator(cfg: &ExperimentConfig, b: &LatticeBox, key: u64) -> Result<DisorderedOperator> {
    Ok(sample_operator(b, &cfg.model.potential, key)?.with_hopping(cfg.model.hopping))
}

fn poisson(lambda: f64) -> Result<Poisson<f64>> {
    Poisson::new(lambda).map_err(|e| Error::invalid("lambda", format!("{lambda}: {e}")))
}

fn require_statistical(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.schedule.n < 100 {
        return Err(config_err(format!("schedule.n = {} is below the minimum of 100 for statistical tests", cfg.schedule.n)));
    }
    Ok(())
}

fn require_spectral(cfg: &ExperimentConfig, exp: Experiment) -> Result<()> {
    if cfg.synthetic_null.enabled {
        return Err(config_err(format!("synthetic-null mode has no analogue for `{exp}`")));
    }
    Ok(())
}

fn estimate_dos(cfg: &ExperimentConfig) -> Result<DosEstimate> {
    let w = &cfg.window;
    let l = cfg.dos.half_width.unwrap_or(cfg.largest_half_width());
    let b = centered(l, cfg.model.dimension)?;
    let grid = match cfg.dos.bin_width {
        Some(h) => HistogramGrid {
            lo: w.energy - 0.5 * h,
            bin_width: h,
            bins: 1,
        },
        None => {
            let (lo, hi) = w.interval(b.site_count());
            HistogramGrid {
                lo,
                bin_width: hi - lo,
                bins: 1,
            }
        }
    };
    let ens = DosEnsemble {
        boxes: vec![b],
        spec: cfg.model.potential.clone(),
        n_realizations: cfg.dos.n_realizations,
        seed: dos_seed(cfg.schedule.seed),
        hopping: cfg.model.hopping,
    };
    estimate_dos_histogram(&ens, Some(grid), cfg.dos.backend)
}

/// `λ̂ = f̂(E)(b - a)`; in synthetic mode the single-site density `ρ(E)` plays
/// the role of `f(E)`. `None` when the stage budget ran out.
fn lambda_hat(cfg: &ExperimentConfig, rec: &mut ExperimentRecord, stager: &Stager) -> Result<Option<PointEstimate>> {
    let w = &cfg.window;
    let lam = if cfg.synthetic_null.enabled {
        PointEstimate {
            value: cfg.model.potential.density(w.energy) * (w.b - w.a),
            std_err: 0.0,
        }
    } else {
        let Some(dos) = stager.stage("dos", || estimate_dos(cfg))? else {
            return Ok(None);
        };
        let f = dos
            .at(w.energy)
            .ok_or_else(|| Error::invalid("dos", "estimate does not cover the window energy"))?;
        rec.dos = Some(dos);
        rec.seeds.dos = Some(dos_seed(cfg.schedule.seed));
        intensity(f, w)
    };
    if !(lam.value > 0.0) {
        return Err(config_err(format!(
            "estimated density of states vanishes at E = {}; choose an energy inside the spectrum",
            w.energy
        )));
    }
    rec.lambda_hat = Some(lam);
    rec.diag("lambda_hat", lam.value);
    rec.diag("lambda_hat_std_err", lam.std_err);
    Ok(Some(lam))
}

/// Drive `level` over the schedule, then derive statistics with `stats`.
fn drive<L, S>(
    exp: Experiment,
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    needs_lambda: bool,
    level: L,
    stats: S,
) -> Result<ExperimentRecord>
where
    L: Fn(u64, Option<PointEstimate>) -> Result<LevelData>,
    S: Fn(LevelData, Option<PointEstimate>) -> Result<LevelRecord>,
{
    let mut rec = ExperimentRecord::new(exp, cfg, SCHEME);
    let stager = Stager::new(opts);
    let lam = if needs_lambda {
        match lambda_hat(cfg, &mut rec, &stager)? {
            Some(l) => Some(l),
            None => {
                rec.status = RunStatus::Partial;
                return Ok(rec);
            }
        }
    } else {
        None
    };
    for &l in &cfg.schedule.half_widths {
        match stager.stage(&format!("L{l}"), || level(l, lam))? {
            Some(data) => rec.levels.push(stats(data, lam)?),
            None => {
                rec.status = RunStatus::Partial;
                break;
            }
        }
    }
    Ok(rec)
}

/// Reports of the largest `L` decide the run.
fn adopt_last_level(rec: &mut ExperimentRecord) {
    if rec.status != RunStatus::Complete {
        return;
    }
    if let Some(last) = rec.levels.last() {
        let l = last.half_width;
        rec.reports = last
            .reports
            .iter()
            .map(|r| r.clone().with_note(format!("L = {l}")))
            .collect();
    }
}

fn collect_rows<F>(n: usize, row: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(usize) -> Result<Vec<f64>> + Sync + Send,
{
    (0..n).into_par_iter().map(row).collect()
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (sx, sy) = (Summary::from_samples(x.iter().cloned()), Summary::from_samples(y.iter().cloned()));
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - sx.mean) * (b - sy.mean)).sum::<f64>();
    cov / (sx.m2 * sy.m2).sqrt()
}

/// Box with random offset `a_L ∈ [0,1)^d` and trim `c_L ↓ 0`.
fn varied_box(cfg: &ExperimentConfig, half_width: u64, rng: &CounterRng) -> Result<LatticeBox> {
    let d = cfg.model.dimension;
    let bv = &cfg.box_variation;
    let offset: Vec<f64> = if bv.randomize_offset {
        let o = rng.derive_label("offset");
        (0..d as u64).map(|k| o.uniform(k)).collect()
    } else {
        vec![0.0; d]
    };
    let trim = bv.trim_scale * rng.derive_label("trim").uniform(0) / (half_width as f64).sqrt();
    make_box(half_width as f64, d, &offset, trim)
}

/// `k`-th raw moment of Poisson(λ), `k ≤ 4`.
fn poisson_raw_moment(lambda: f64, k: u32) -> f64 {
    let l = lambda;
    match k {
        1 => l,
        2 => l * l + l,
        3 => l.powi(3) + 3.0 * l * l + l,
        4 => l.powi(4) + 6.0 * l.powi(3) + 7.0 * l * l + l,
        _ => f64::NAN,
    }
}

fn mean_report(emp: &EmpiricalDistribution, target: f64, target_err: f64, sigmas: f64) -> TestReport {
    let se = (emp.summary.std_err().powi(2) + target_err.powi(2)).sqrt();
    let z = (emp.summary.mean - target).abs() / se;
    TestReport::new("mean_vs_lambda", z, sigmas, emp.len())
        .with_note(format!("mean = {}, lambda_hat = {target} ± {target_err}", emp.summary.mean))
}

/// Counts in a microscopic window on boxes with random offsets and trims.
pub fn run_microscopic(cfg: &ExperimentConfig) -> Result<ExperimentRecord> {
    super::run_experiment(Experiment::Microscopic, cfg, &RunOptions::default())
}

pub(crate) fn microscopic(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentRecord> {
    require_statistical(cfg)?;
    let w = cfg.window;
    if w.eta != 1.0 {
        return Err(config_err(format!("microscopic needs window.eta = 1, got {}", w.eta)));
    }
    let d = cfg.model.dimension;
    let level = |l: u64, lam: Option<PointEstimate>| -> Result<LevelData> {
        let vol = volume(l, d);
        let (lo, hi) = w.interval(vol);
        let mid = 0.5 * (lo + hi);
        let lam = lam.expect("lambda").value;
        let rows = collect_rows(cfg.schedule.n, |r| {
            let key = replicate_seed(cfg.schedule.seed, l, r);
            let rng = CounterRng::new(key);
            if cfg.synthetic_null.enabled {
                let mut s = rng.sequential();
                let p = poisson(0.5 * lam)?;
                let (c1, c2) = (p.sample(&mut s), p.sample(&mut s));
                return Ok(vec![r as f64, c1 + c2, c1, c2, vol as f64]);
            }
            let op = operator(cfg, &varied_box(cfg, l, &rng)?, key)?;
            let i = inertia_many(&op, &[lo, mid, hi])?;
            Ok(vec![
                r as f64,
                count_from(&i[0], &i[2]) as f64,
                count_from(&i[0], &i[1]) as f64,
                count_from(&i[1], &i[2]) as f64,
                op.site_count() as f64,
            ])
        })?;
        Ok(LevelData {
            half_width: l,
            volume: vol,
            scale: 1.0,
            table: SampleTable {
                columns: ["replicate", "count", "count_lower", "count_upper", "sites"].map(String::from).to_vec(),
                rows,
            },
            aux: BTreeMap::new(),
            notes: Vec::new(),
        })
    };
    let stats = |data: LevelData, lam: Option<PointEstimate>| -> Result<LevelRecord> {
        let lam = lam.expect("lambda");
        let (mut rec, _) = data.into_record();
        let emp = EmpiricalDistribution::new(rec.table.column("count").expect("count"));
        rec.summary = emp.summary;
        rec.reports.push(total_variation_poisson(&emp, lam.value, cfg.tests.tv_threshold)?);
        rec.reports.push(mean_report(&emp, lam.value, lam.std_err, cfg.tests.mean_sigmas));
        let var = emp.summary.variance();
        rec.diag("mean", emp.summary.mean);
        rec.diag("variance", var);
        rec.diag("variance_over_lambda", var / lam.value);
        rec.diag("variance_over_lambda_sq", var / (lam.value * lam.value));
        rec.diag("p_zero", 1.0 - emp.tail(1.0));
        rec.diag("poisson_p_zero", (-lam.value).exp());
        for k in 2..=4 {
            rec.diag(&format!("raw_moment_{k}"), emp.summary.raw_moment(k)?);
            rec.diag(&format!("poisson_raw_moment_{k}"), poisson_raw_moment(lam.value, k));
        }
        let corr = pearson(
            &rec.table.column("count_lower").expect("lower"),
            &rec.table.column("count_upper").expect("upper"),
        );
        rec.diag("half_window_correlation", corr);
        rec.diag("half_window_correlation_z", corr * (emp.len() as f64).sqrt());
        Ok(rec)
    };
    let mut rec = drive(Experiment::Microscopic, cfg, opts, true, level, stats)?;
    adopt_last_level(&mut rec);
    Ok(rec)
}

/// Law of large numbers for `X_L / |Λ_L|^{1-η}`.
pub fn run_lln(cfg: &ExperimentConfig) -> Result<ExperimentRecord> {
    super::run_experiment(Experiment::Lln, cfg, &RunOptions::default())
}

/// Counts in `I_L` on the centred box, or synthetic Poisson totals.
fn window_counts(cfg: &ExperimentConfig, l: u64, lam: f64) -> Result<LevelData> {
    let w = cfg.window;
    let b = centered(l, cfg.model.dimension)?;
    let vol = b.site_count();
    let scale = (vol as f64).powf(1.0 - w.eta);
    let (lo, hi) = w.interval(vol);
    let rows = collect_rows(cfg.schedule.n, |r| {
        let key = replicate_seed(cfg.schedule.seed, l, r);
        let x = if cfg.synthetic_null.enabled {
            poisson(lam * scale)?.sample(&mut CounterRng::new(key).sequential())
        } else {
            count_in_interval(&operator(cfg, &b, key)?, lo, hi)? as f64
        };
        Ok(vec![r as f64, x, x / scale])
    })?;
    Ok(LevelData {
        half_width: l,
        volume: vol,
        scale,
        table: SampleTable {
            columns: ["replicate", "count", "statistic"].map(String::from).to_vec(),
            rows,
        },
        aux: BTreeMap::new(),
        notes: Vec::new(),
    })
}

pub(crate) fn lln(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentRecord> {
    require_statistical(cfg)?;
    let t = &cfg.tests;
    let level = |l: u64, lam: Option<PointEstimate>| window_counts(cfg, l, lam.expect("lambda").value);
    let stats = |data: LevelData, lam: Option<PointEstimate>| -> Result<LevelRecord> {
        let lam = lam.expect("lambda");
        let (mut rec, _) = data.into_record();
        let stat = rec.table.column("statistic").expect("statistic");
        let n = stat.len() as f64;
        let p = stat.iter().filter(|&&x| (x - lam.value).abs() > t.deviation_delta * lam.value).count() as f64 / n;
        let emp = EmpiricalDistribution::new(stat);
        rec.summary = emp.summary;
        rec.reports.push(
            TestReport::new("deviation_probability", p, t.deviation_max, emp.len())
                .with_note(format!("P(|X/|Λ|^(1-η) - λ̂| > {}·λ̂)", t.deviation_delta)),
        );
        rec.diag("mean_statistic", emp.summary.mean);
        rec.diag("mean_statistic_std_err", emp.summary.std_err());
        rec.diag("deviation_probability", p);
        rec.diag("deviation_probability_std_err", (p * (1.0 - p) / n).sqrt());
        rec.diag("relative_bias", emp.summary.mean / lam.value - 1.0);
        Ok(rec)
    };
    let mut rec = drive(Experiment::Lln, cfg, opts, true, level, stats)?;
    if rec.status == RunStatus::Complete {
        let ps: Vec<f64> = rec.levels.iter().map(|l| l.diagnostics["deviation_probability"]).collect();
        let n = cfg.schedule.n;
        let trend = if ps.len() < 2 {
            TestReport::degenerate("deviation_decreasing", n, "needs at least two L values")
        } else {
            // strict decrease at the resolution 1/n of the estimates
            let worst = ps.windows(2).map(|p| p[1] - p[0]).fold(f64::NEG_INFINITY, f64::max);
            TestReport::new("deviation_decreasing", worst + 1.0 / n as f64, 0.0, n)
                .with_note(format!("deviation probabilities {ps:?}"))
        };
        rec.reports.push(trend);
        let last = rec.levels.last().expect("levels");
        let r = last.report("deviation_probability").expect("report").clone();
        rec.reports.push(r.with_note(format!("L = {}", last.half_width)));
    }
    Ok(rec)
}

/// Gaussian fluctuations of `(X_L - |Λ|^{1-η} λ̂)/√|Λ|^{1-η}`.
pub fn run_clt(cfg: &ExperimentConfig) -> Result<ExperimentRecord> {
    super::run_experiment(Experiment::Clt, cfg, &RunOptions::default())
}

fn clt_level(cfg: &ExperimentConfig, l: u64, lam: f64) -> Result<LevelData> {
    let w = cfg.window;
    if !cfg.synthetic_null.enabled {
        let mut data = window_counts(cfg, l, lam)?;
        for row in &mut data.table.rows {
            row[2] = (row[1] - data.scale * lam) / data.scale.sqrt();
        }
        if w.eta <= 0.5 {
            dyadic_cells(cfg, l, &mut data)?;
        }
        return Ok(data);
    }
    let b = centered(l, cfg.model.dimension)?;
    let vol = b.site_count();
    let m = ((vol as f64).powf(1.0 - w.eta).round() as usize).max(1);
    let p = poisson(lam)?;
    let draws: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.schedule.n)
        .into_par_iter()
        .map(|r| {
            let mut s = CounterRng::new(replicate_seed(cfg.schedule.seed, l, r)).sequential();
            let cells: Vec<f64> = (0..m).map(|_| p.sample(&mut s)).collect();
            let x: f64 = cells.iter().sum();
            (vec![r as f64, x, (x - m as f64 * lam) / (m as f64).sqrt()], cells)
        })
        .collect();
    let (rows, cells): (Vec<_>, Vec<_>) = draws.into_iter().unzip();
    let mut aux = BTreeMap::new();
    aux.insert("cells".to_string(), cells);
    Ok(LevelData {
        half_width: l,
        volume: vol,
        scale: m as f64,
        table: SampleTable {
            columns: ["replicate", "count", "statistic"].map(String::from).to_vec(),
            rows,
        },
        aux,
        notes: vec![format!("synthetic: sums of {m} Poisson(λ̂) cells")],
    })
}

/// Per-level cell counts of the dyadic tree for the first realizations.
fn dyadic_cells(cfg: &ExperimentConfig, l: u64, data: &mut LevelData) -> Result<()> {
    let b = centered(l, cfg.model.dimension)?;
    let tree = match dyadic_partition(&b, cfg.window.eta) {
        Ok(t) => t,
        Err(e) => {
            data.notes.push(format!("dyadic diagnostics skipped: {e}"));
            return Ok(());
        }
    };
    let (lo, hi) = cfg.window.interval(b.site_count());
    let reps = cfg.schedule.n.min(DYADIC_REALIZATIONS);
    let per_rep: Vec<Vec<Vec<f64>>> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let op = operator(cfg, &b, replicate_seed(cfg.schedule.seed, l, r))?;
            tree.levels
                .iter()
                .map(|lvl| {
                    lvl.cells
                        .iter()
                        .map(|c| Ok(count_in_interval(&op.restrict(c)?, lo, hi)? as f64))
                        .collect()
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    for k in 0..tree.levels.len() {
        data.aux
            .insert(format!("dyadic_level{}", k + 1), per_rep.iter().map(|r| r[k].clone()).collect());
    }
    Ok(())
}

fn centred_columns(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = rows.first().map_or(0, |r| r.len());
    (0..m)
        .map(|j| {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64;
            rows.iter().map(|r| r[j] - mean).collect()
        })
        .collect()
}

pub(crate) fn clt(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentRecord> {
    require_statistical(cfg)?;
    let t = &cfg.tests;
    let level = |l: u64, lam: Option<PointEstimate>| clt_level(cfg, l, lam.expect("lambda").value);
    let stats = |data: LevelData, lam: Option<PointEstimate>| -> Result<LevelRecord> {
        let lam = lam.expect("lambda");
        let (mut rec, aux) = data.into_record();
        let stat = rec.table.column("statistic").expect("statistic");
        let counts = rec.table.column("count").expect("count");
        let n = stat.len();
        let sigma = (stat.iter().map(|s| s * s).sum::<f64>() / n as f64).sqrt();
        let emp = EmpiricalDistribution::new(stat);
        rec.summary = emp.summary;
        rec.reports.push(ks_normal(&emp.samples, 0.0, sigma, Some(t.ks_threshold.unwrap_or(ks_threshold(n)))));
        let skew_se = (6.0 / n as f64).sqrt();
        rec.reports.push(
            TestReport::new("skewness", emp.summary.skewness().abs(), t.skew_sigmas * skew_se, n)
                .with_note(format!("skewness = {}", emp.summary.skewness())),
        );
        let v = Summary::from_samples(counts.iter().cloned()).variance() / rec.scale;
        rec.diag("sigma_hat", sigma);
        rec.diag("variance_constant", v);
        rec.diag("variance_over_lambda", v / lam.value);
        rec.diag("variance_over_lambda_sq", v / (lam.value * lam.value));
        rec.diag("skewness", emp.summary.skewness());
        rec.diag("skewness_std_err", skew_se);
        rec.diag("excess_kurtosis", emp.summary.excess_kurtosis());
        rec.diag("mean_statistic", emp.summary.mean);
        rec.diag("mean_statistic_std_err", emp.summary.std_err());
        rec.diag("centering_std_err", lam.std_err * rec.scale.sqrt());
        if let Some(cells) = aux.get("cells") {
            rec.diag("lindeberg_cells", lindeberg_diagnostic(&centred_columns(cells), t.lindeberg_eps));
        }
        let mut k = 1;
        while let Some(rows) = aux.get(&format!("dyadic_level{k}")) {
            let total = Summary::from_samples(counts[..rows.len()].iter().cloned()).variance();
            let cols = centred_columns(rows);
            let sum_var: f64 = cols.iter().map(|c| c.iter().map(|y| y * y).sum::<f64>() / (c.len() as f64 - 1.0)).sum();
            let disc = rows.iter().zip(&counts).map(|(r, x)| (x - r.iter().sum::<f64>()).abs()).sum::<f64>() / rows.len() as f64;
            rec.diag(&format!("dyadic_level{k}_cells"), cols.len() as f64);
            rec.diag(&format!("dyadic_level{k}_variance_ratio"), sum_var / total);
            rec.diag(&format!("dyadic_level{k}_mean_discrepancy"), disc);
            if !aux.contains_key(&format!("dyadic_level{}", k + 1)) {
                rec.diag("lindeberg_leaves", lindeberg_diagnostic(&cols, t.lindeberg_eps));
            }
            k += 1;
        }
        Ok(rec)
    };
    let mut rec = drive(Experiment::Clt, cfg, opts, true, level, stats)?;
    adopt_last_level(&mut rec);
    Ok(rec)
}

/// `E|X_L - Σ_j X_{L,j}| / |Λ_L|^α` for the β-partition of `Λ_L`.
pub fn run_partition_approximation(cfg: &ExperimentConfig) -> Result<ExperimentRecord> {
    super::run_experiment(Experiment::Partition, cfg, &RunOptions::default())
}

pub(crate) fn partition(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentRecord> {
    require_spectral(cfg, Experiment::Partition)?;
    let p = &cfg.partition;
    let w = cfg.window;
    if !(p.beta > 0.0 && p.beta <= 1.0) {
        return Err(config_err(format!("partition.beta = {} is outside (0, 1]", p.beta)));
    }
    if !(p.alpha >= 0.0) || p.alpha + w.eta <= 1.0 - p.beta {
        return Err(config_err(format!(
            "partition needs α ≥ 0 and α + η > 1 - β; got α = {}, η = {}, β = {}",
            p.alpha, w.eta, p.beta
        )));
    }
    let level = |l: u64, _: Option<PointEstimate>| -> Result<LevelData> {
        let b = centered(l, cfg.model.dimension)?;
        let vol = b.site_count();
        let part = partition_box(&b, p.beta)?;
        let covered: usize = part.cells.iter().map(|c| c.site_count()).sum();
        if covered != vol {
            return Err(Error::invalid("partition", format!("cells cover {covered} of {vol} sites")));
        }
        let (lo, hi) = w.interval(vol);
        let z = Complex64::new(w.energy, 1.0 / (vol as f64 * vol as f64));
        let rows = collect_rows(cfg.schedule.n, |r| {
            let op = operator(cfg, &b, replicate_seed(cfg.schedule.seed, l, r))?;
            let x = count_in_interval(&op, lo, hi)? as f64;
            let mut sum = 0.0;
            let mut trace_cells = 0.0;
            for c in &part.cells {
                let sub = op.restrict(c)?;
                sum += count_in_interval(&sub, lo, hi)? as f64;
                if p.trace {
                    trace_cells += trace_im_resolvent(&sub, z)?;
                }
            }
            let trace_gap = if p.trace {
                (trace_im_resolvent(&op, z)? - trace_cells).abs() / std::f64::consts::PI
            } else {
                0.0
            };
            Ok(vec![r as f64, x, sum, (x - sum).abs(), trace_gap])
        })?;
        Ok(LevelData {
            half_width: l,
            volume: vol,
            scale: (vol as f64).powf(p.alpha),
            table: SampleTable {
                columns: ["replicate", "count", "cell_sum", "discrepancy", "trace_discrepancy"]
                    .map(String::from)
                    .to_vec(),
                rows,
            },
            aux: BTreeMap::new(),
            notes: vec![format!("{} cells", part.cell_count())],
        })
    };
    let stats = |data: LevelData, _: Option<PointEstimate>| -> Result<LevelRecord> {
        let (mut rec, _) = data.into_record();
        let disc = Summary::from_samples(rec.table.column("discrepancy").expect("discrepancy"));
        let trace = Summary::from_samples(rec.table.column("trace_discrepancy").expect("trace"));
        rec.summary = disc;
        rec.diag("mean_discrepancy", disc.mean);
        rec.diag("normalized_discrepancy", disc.mean / rec.scale);
        rec.diag("normalized_discrepancy_std_err", disc.std_err() / rec.scale);
        if p.trace {
            rec.diag("normalized_trace_discrepancy", trace.mean / rec.scale);
            rec.diag("normalized_trace_discrepancy_std_err", trace.std_err() / rec.scale);
        }
        Ok(rec)
    };
    let mut rec = drive(Experiment::Partition, cfg, opts, false, level, stats)?;
    if rec.status == RunStatus::Complete {
        let m: Vec<f64> = rec.levels.iter().map(|l| l.diagnostics["normalized_discrepancy"]).collect();
        let n = cfg.schedule.n;
        if m.len() < 2 {
            rec.reports.push(TestReport::degenerate("discrepancy_decreasing", n, "needs at least two L values"));
        } else {
            let worst = m.windows(2).map(|p| p[1] - p[0]).fold(f64::NEG_INFINITY, f64::max);
            rec.reports.push(
                TestReport::new("discrepancy_decreasing", worst, 0.0, n)
                    .with_note(format!("normalized discrepancies {m:?}")),
            );
            let (first, last) = (m[0], m[m.len() - 1]);
            let ratio = if first == 0.0 && last == 0.0 { 0.0 } else { last / first };
            rec.reports.push(TestReport::new("discrepancy_ratio", ratio, cfg.tests.discrepancy_ratio, n));
        }
        if let Some(r) = rec.reports.last().map(|r| r.value) {
            rec.diag("discrepancy_ratio", r);
        }
    }
    Ok(rec)
}

/// Tail probabilities `P(Z ≥ k)` in nested microscopic windows.
pub fn run_minami_tail(cfg: &ExperimentConfig) -> Result<ExperimentRecord> {
    super::run_experiment(Experiment::Minami, cfg, &RunOptions::default())
}

pub(crate) fn minami(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentRecord> {
    require_statistical(cfg)?;
    let w = cfg.window;
    if w.eta != 1.0 {
        return Err(config_err(format!("minami needs a microscopic window (window.eta = 1), got {}", w.eta)));
    }
    let halvings = cfg.minami.halvings;
    if halvings == 0 {
        return Err(config_err("minami.halvings must be at least 1"));
    }
    let l = cfg.minami.half_width.unwrap_or(cfg.largest_half_width());
    let d = cfg.model.dimension;
    let vol = volume(l, d);
    let centre = w.energy + 0.5 * (w.a + w.b) / vol as f64;
    let half = 0.5 * (w.b - w.a) / vol as f64;
    let windows: Vec<(f64, f64)> = (0..=halvings)
        .map(|k| {
            let h = half / (1u64 << k) as f64;
            (centre - h, centre + h)
        })
        .collect();

    let mut rec = ExperimentRecord::new(Experiment::Minami, cfg, SCHEME);
    let stager = Stager::new(opts);
    let lam = if cfg.synthetic_null.enabled {
        lambda_hat(cfg, &mut rec, &stager)?.map(|l| l.value)
    } else {
        None
    };
    let compute = || -> Result<LevelData> {
        let b = centered(l, d)?;
        let mut shifts: Vec<f64> = windows.iter().map(|w| w.0).collect();
        shifts.extend(windows.iter().rev().map(|w| w.1));
        let rows = collect_rows(cfg.schedule.n, |r| {
            let key = replicate_seed(cfg.schedule.seed, l, r);
            let mut row = vec![r as f64];
            if let Some(lam) = lam {
                let mut s = CounterRng::new(key).sequential();
                let mut z = poisson(lam)?.sample(&mut s) as u64;
                row.push(z as f64);
                for _ in 0..halvings {
                    z = Binomial::new(z, 0.5).expect("valid").sample(&mut s);
                    row.push(z as f64);
                }
                return Ok(row);
            }
            let i = inertia_many(&operator(cfg, &b, key)?, &shifts)?;
            let m = windows.len();
            for k in 0..m {
                row.push(count_from(&i[k], &i[2 * m - 1 - k]) as f64);
            }
            Ok(row)
        })?;
        let mut columns = vec!["replicate".to_string()];
        columns.extend((0..=halvings).map(|k| format!("count_w{k}")));
        Ok(LevelData {
            half_width: l,
            volume: vol,
            scale: 1.0,
            table: SampleTable { columns, rows },
            aux: BTreeMap::new(),
            notes: Vec::new(),
        })
    };
    let data = match stager.stage(&format!("L{l}"), compute)? {
        Some(d) => d,
        None => {
            rec.status = RunStatus::Partial;
            return Ok(rec);
        }
    };
    let (mut level, _) = data.into_record();
    let n = cfg.schedule.n;
    let c_bound = std::f64::consts::PI * cfg.model.potential.rho_sup();
    let mut p2 = Vec::new();
    for (k, &(lo, hi)) in windows.iter().enumerate() {
        let emp = EmpiricalDistribution::new(level.table.column(&format!("count_w{k}")).expect("column"));
        if k == 0 {
            level.summary = emp.summary;
        }
        let width = hi - lo;
        let g_i = vol as f64 * width;
        let tails: Vec<f64> = (0..=3).map(|m| emp.tail(m as f64)).collect();
        for (m, t) in tails.iter().enumerate() {
            level.diag(&format!("w{k}_p_ge_{m}"), *t);
        }
        level.diag(&format!("w{k}_width"), width);
        level.diag(&format!("w{k}_calibrated_c"), tails[1] / g_i);
        let bound = (c_bound * g_i).powi(2) / 2.0;
        level.diag(&format!("w{k}_minami_bound"), bound);
        level.reports.push(
            TestReport::new(format!("minami_bound_w{k}"), tails[2] - bound, 0.0, n)
                .with_note(format!("P(Z ≥ 2) = {} against (π‖ρ‖∞|Λ||I|)²/2 = {bound}", tails[2])),
        );
        p2.push(tails[2]);
    }
    let [lo, hi] = cfg.tests.minami_ratio;
    for k in 0..halvings {
        let r = p2[k] / p2[k + 1];
        level.diag(&format!("p2_ratio_{k}"), r);
        let miss = if r.is_nan() { f64::INFINITY } else { (lo - r).max(r - hi).max(0.0) };
        level.reports.push(
            TestReport::new(format!("p2_ratio_{k}"), miss, 0.0, n)
                .with_note(format!("P(Z≥2) ratio {r} on halving the width; accepted range [{lo}, {hi}]")),
        );
    }
    rec.levels.push(level);
    adopt_last_level(&mut rec);
    Ok(rec)
}
