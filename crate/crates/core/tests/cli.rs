use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_anderson-meso");

const SMALL_LLN: &str = r#"
[model]
potential = { family = "uniform", width = 4.0 }

[window]
energy = 0.0
eta = 0.5
a = -4.0
b = 4.0

[schedule]
half_widths = [50, 100, 200]
n = 300
seed = 7

[dos]
n_realizations = 500
"#;

fn cli(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run_dir(out: &Output) -> PathBuf {
    PathBuf::from(String::from_utf8_lossy(&out.stdout).lines().next().expect("run dir line"))
}

fn experiment(cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["experiment", "lln", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    cli(&args)
}

fn read_csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn selftest_runs_at_least_thirty_checks() {
    let out = cli(&["selftest"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().filter(|l| l.starts_with("ok")).count() >= 30, "{text}");
}

#[test]
fn negative_tolerance_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "tol.toml", "[tolerances]\nspectrum = -1e-10\n");
    let out = cli(&["selftest", "--config", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_experiment_exits_with_config_code() {
    let out = cli(&["experiment", "nonsense"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("green-decay"));
}

#[test]
fn invalid_experiment_config_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "bad.toml", &format!("{SMALL_LLN}\n[tests]\ntv = -0.1\n"));
    let out = experiment(&p, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tv"));
}

#[test]
fn dos_writes_contracted_csv() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "lln.toml", SMALL_LLN);
    let out = cli(&["dos", "--config", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("dos.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("E,f_hat,std_err"));
    assert!(csv.lines().count() > 5);
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn experiment_outputs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "lln.toml", SMALL_LLN);
    let out = experiment(&p, dir.path(), &[]);
    assert!(matches!(out.status.code(), Some(0) | Some(4)));
    let run = run_dir(&out);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "complete");
    assert_eq!(manifest["master_seed"], 7);
    for l in [50, 100, 200] {
        let csv = fs::read_to_string(run.join(format!("samples_L{l}.csv"))).unwrap();
        assert_eq!(csv.lines().next(), Some("replicate,count,statistic"));
        assert_eq!(csv.lines().count(), 301);
    }
}

#[test]
fn thread_count_does_not_change_samples() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "lln.toml", SMALL_LLN);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let one = cli(&["--threads", "1", "experiment", "lln", "--config", p.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    let four = cli(&["--threads", "4", "experiment", "lln", "--config", p.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    let (x, y) = (read_csvs(&run_dir(&one)), read_csvs(&run_dir(&four)));
    assert!(!x.is_empty());
    assert_eq!(x, y);
}

#[test]
fn interrupted_run_resumes_to_identical_output() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "lln.toml", SMALL_LLN);
    let fresh = experiment(&p, &dir.path().join("fresh"), &[]);

    let out = dir.path().join("resumed");
    let cut = experiment(&p, &out, &["--stop-after-stages", "2"]);
    assert_eq!(cut.status.code(), Some(4));
    let run = run_dir(&cut);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "partial");

    let resumed = experiment(&p, &out, &["--resume"]);
    assert_eq!(resumed.status.code(), fresh.status.code());
    assert_eq!(read_csvs(&run_dir(&resumed)), read_csvs(&run_dir(&fresh)));
}

#[test]
fn probe_count_prints_json() {
    let out = cli(&["probe", "count", "--half-width", "20", "--lo", "-1", "--hi", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v.is_object());
}
