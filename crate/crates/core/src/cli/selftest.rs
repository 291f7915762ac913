//! Fast closed-form and identity checks across every module.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dos::{estimate_dos_histogram, DosBackend, DosEnsemble, HistogramGrid};
use crate::error::{Error, Result};
use crate::hamiltonian::{sample_operator, DisorderedOperator, PotentialSpec};
use crate::lattice::{dyadic_depth, make_box, partition_box, LatticeBox, MesoWindow};
use crate::rng::CounterRng;
use crate::spectral::{
    count_in_interval, dense_spectrum, greens_entry, inertia_at, resolvent_column, trace_im_resolvent_dense,
    trace_im_resolvent_solve,
};
use crate::stats::{
    ks_normal, ks_statistic, lindeberg_diagnostic, mollifier_by_quadrature, mollifier_eval, mollifier_l1_error,
    mollifier_l1_error_by_quadrature, mollifier_l1_error_from_antiderivative, poisson_pmf, total_variation_poisson,
    EmpiricalDistribution, Summary,
};

/// Absolute tolerances of the self-test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub spectrum: f64,
    pub greens: f64,
    pub mollifier: f64,
    pub pmf: f64,
    pub merge: f64,
    pub dos_mass: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            spectrum: 1e-10,
            greens: 1e-12,
            mollifier: 1e-8,
            pmf: 1e-12,
            merge: 1e-12,
            dos_mass: 1e-6,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TolFile {
    #[serde(default)]
    tolerances: Tolerances,
}

impl Tolerances {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let t = toml::from_str::<TolFile>(&text)
            .map_err(|e| Error::Config(e.to_string()))?
            .tolerances;
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("spectrum", self.spectrum),
            ("greens", self.greens),
            ("mollifier", self.mollifier),
            ("pmf", self.pmf),
            ("merge", self.merge),
            ("dos_mass", self.dos_mass),
        ];
        for (name, v) in all {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("tolerances.{name} must be non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default)]
pub struct SelftestOutcome {
    pub checks: Vec<CheckResult>,
}

impl SelftestOutcome {
    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.pass).count()
    }
}

type Check = fn(&Tolerances) -> Result<(bool, String)>;

fn close(got: f64, want: f64, tol: f64) -> (bool, String) {
    ((got - want).abs() <= tol, format!("got {got}, expected {want} ± {tol}"))
}

fn path(n: usize) -> DisorderedOperator {
    DisorderedOperator::from_potential(LatticeBox::new(vec![0], vec![n as i64 - 1]).unwrap(), vec![0.0; n]).unwrap()
}

fn free(b: LatticeBox) -> DisorderedOperator {
    let n = b.site_count();
    DisorderedOperator::from_potential(b, vec![0.0; n]).unwrap()
}

fn path_levels(n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (1..=n).map(|k| 2.0 * (k as f64 * PI / (n as f64 + 1.0)).cos()).collect();
    v.sort_by(f64::total_cmp);
    v
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

const CHECKS: &[(&str, Check)] = &[
    ("lattice/make_box_examples", |_| {
        let b = make_box(2.0, 1, &[0.0], 0.0)?;
        let c = make_box(2.0, 2, &[0.5, 0.5], 0.0)?;
        Ok((b.site_count() == 5 && c.site_count() == 16, format!("{b} and {c}")))
    }),
    ("lattice/empty_box_rejected", |_| Ok((make_box(1.0, 1, &[0.0], 0.6).is_err(), String::new()))),
    ("lattice/window_interval", |_| {
        let w = MesoWindow::new(0.5, 0.5, -2.0, 2.0)?;
        let (lo, hi) = w.interval(16);
        Ok((lo == 0.0 && hi == 1.0, format!("({lo}, {hi})")))
    }),
    ("lattice/partition_tiles_parent", |_| {
        let b = LatticeBox::centered(40, 2)?;
        let p = partition_box(&b, 0.5)?;
        let total: usize = p.cells.iter().map(|c| c.site_count()).sum();
        let disjoint = b.sites().all(|s| p.cells.iter().filter(|c| c.contains_site(&s)).count() == 1);
        Ok((total == b.site_count() && disjoint, format!("{} cells", p.cell_count())))
    }),
    ("lattice/identity_partition", |_| {
        let b = LatticeBox::centered(7, 1)?;
        let p = partition_box(&b, 1.0)?;
        let same = p.cells.len() == 1 && p.cells[0].lower() == b.lower() && p.cells[0].upper() == b.upper();
        Ok((same, String::new()))
    }),
    ("lattice/dyadic_depth", |_| {
        let d = [dyadic_depth(1.0)?, dyadic_depth(0.5)?, dyadic_depth(0.3)?, dyadic_depth(0.2)?];
        Ok((d == [1, 2, 2, 3], format!("{d:?}")))
    }),
    ("hamiltonian/path_matvec", |_| {
        let y = path(3).apply(&[1.0, 2.0, 3.0])?;
        Ok((y == vec![2.0, 4.0, 2.0], format!("{y:?}")))
    }),
    ("hamiltonian/restriction_is_fresh_sample", |_| {
        let spec = PotentialSpec::uniform(4.0)?;
        let big = sample_operator(&LatticeBox::centered(10, 2)?, &spec, 5)?;
        let sub = LatticeBox::new(vec![-3, 0], vec![2, 4])?;
        Ok((big.restrict(&sub)?.potential() == sample_operator(&sub, &spec, 5)?.potential(), String::new()))
    }),
    ("hamiltonian/potential_in_support", |_| {
        let op = sample_operator(&LatticeBox::centered(500, 1)?, &PotentialSpec::uniform(4.0)?, 1)?;
        Ok((op.potential().iter().all(|v| v.abs() <= 2.0), String::new()))
    }),
    ("rng/counter_determinism", |_| {
        let r = CounterRng::new(3);
        let same = r.uniform(7) == CounterRng::new(3).uniform(7);
        Ok((same && r.derive(1).key() != r.derive(2).key(), String::new()))
    }),
    ("spectral/path_spectrum", |t| {
        let got = dense_spectrum(&path(30))?;
        let e = max_diff(&got, &path_levels(30));
        Ok((e <= t.spectrum, format!("max error {e}")))
    }),
    ("spectral/grid_spectrum", |t| {
        let got = dense_spectrum(&free(LatticeBox::new(vec![0, 0], vec![5, 6])?))?;
        let (a, b) = (path_levels(6), path_levels(7));
        let mut want: Vec<f64> = a.iter().flat_map(|x| b.iter().map(move |y| x + y)).collect();
        want.sort_by(f64::total_cmp);
        let e = max_diff(&got, &want);
        Ok((e <= t.spectrum, format!("max error {e}")))
    }),
    ("spectral/path_sturm_counts", |_| {
        let op = path(25);
        let levels = path_levels(25);
        let ok = (0..40).all(|k| {
            let s = -2.3 + 0.117 * k as f64;
            inertia_at(&op, s).map(|i| i.negative).ok() == Some(levels.iter().filter(|&&l| l < s).count())
        });
        Ok((ok, String::new()))
    }),
    ("spectral/grid_block_counts", |_| {
        let op = free(LatticeBox::new(vec![0, 0, 0], vec![3, 4, 2])?);
        let levels = dense_spectrum(&op)?;
        let ok = (0..30).all(|k| {
            let s = -6.1 + 0.41 * k as f64 + 1e-3;
            inertia_at(&op, s).map(|i| i.negative).ok() == Some(levels.iter().filter(|&&l| l < s).count())
        });
        Ok((ok, String::new()))
    }),
    ("spectral/count_matches_dense", |_| {
        let spec = PotentialSpec::uniform(4.0)?;
        let mut ok = true;
        for seed in 0..20 {
            let op = sample_operator(&LatticeBox::centered(30, 1)?, &spec, seed)?;
            let ev = dense_spectrum(&op)?;
            let (lo, hi) = (-1.0 + 0.05 * seed as f64, 0.7 + 0.05 * seed as f64);
            ok &= count_in_interval(&op, lo, hi)? == ev.iter().filter(|&&e| e > lo && e < hi).count();
        }
        Ok((ok, String::new()))
    }),
    ("spectral/nested_window_monotone", |_| {
        let op = sample_operator(&LatticeBox::centered(200, 1)?, &PotentialSpec::uniform(4.0)?, 2)?;
        Ok((count_in_interval(&op, -0.1, 0.1)? <= count_in_interval(&op, -0.3, 0.2)?, String::new()))
    }),
    ("spectral/scalar_green", |t| {
        let op = DisorderedOperator::from_potential(LatticeBox::new(vec![0], vec![0])?, vec![2.0])?;
        let g = greens_entry(&op, 0, 0, Complex64::new(0.0, 1.0))?;
        let e = (g - Complex64::new(0.4, 0.2)).norm();
        Ok((e <= t.greens, format!("G = {g}")))
    }),
    ("spectral/two_site_green", |t| {
        let (v0, v1) = (0.3, -0.7);
        let op = DisorderedOperator::from_potential(LatticeBox::new(vec![0], vec![1])?, vec![v0, v1])?;
        let z = Complex64::new(0.1, 0.5);
        let det = (v0 - z) * (v1 - z) - 1.0;
        let want = [(v1 - z) / det, -1.0 / det];
        let got = [greens_entry(&op, 0, 0, z)?, greens_entry(&op, 1, 0, z)?];
        let e = (got[0] - want[0]).norm().max((got[1] - want[1]).norm());
        Ok((e <= t.greens, format!("error {e}")))
    }),
    ("spectral/green_symmetry", |_| {
        let op = sample_operator(&LatticeBox::centered(4, 2)?, &PotentialSpec::uniform(4.0)?, 3)?;
        let z = Complex64::new(0.2, 0.1);
        let e = (greens_entry(&op, 3, 40, z)? - greens_entry(&op, 40, 3, z)?).norm();
        Ok((e < 1e-10, format!("asymmetry {e}")))
    }),
    ("spectral/resolvent_residual", |_| {
        let op = sample_operator(&LatticeBox::centered(50, 1)?, &PotentialSpec::uniform(4.0)?, 4)?;
        let z = Complex64::new(0.0, 1e-3);
        let g = resolvent_column(&op, 17, z)?;
        let mut worst: f64 = 0.0;
        for i in 0..op.site_count() {
            let mut r = (op.potential()[i] - z) * g[i];
            for j in op.neighbors(i) {
                r += g[j];
            }
            if i == 17 {
                r -= 1.0;
            }
            worst = worst.max(r.norm());
        }
        Ok((worst < 1e-8, format!("residual {worst}")))
    }),
    ("spectral/trace_paths_agree", |_| {
        let op = sample_operator(&LatticeBox::centered(60, 1)?, &PotentialSpec::uniform(4.0)?, 5)?;
        let z = Complex64::new(0.1, 0.05);
        let (a, b) = (trace_im_resolvent_dense(&op, z, 4096)?, trace_im_resolvent_solve(&op, z)?);
        Ok(((a - b).abs() <= 1e-8 * a.abs().max(1.0), format!("{a} vs {b}")))
    }),
    ("dos/histogram_mass", |t| {
        let ens = DosEnsemble {
            boxes: vec![LatticeBox::centered(30, 1)?],
            spec: PotentialSpec::uniform(4.0)?,
            n_realizations: 10,
            seed: 1,
            hopping: 1.0,
        };
        let (lo, hi) = ens.spectral_range();
        let d = estimate_dos_histogram(&ens, Some(HistogramGrid::centered(0.0, 0.25, lo, hi)?), DosBackend::Inertia)?;
        let (ok, msg) = close(d.total_mass(), 1.0, t.dos_mass);
        Ok((ok && d.f_hat.iter().all(|&f| f >= 0.0), msg))
    }),
    ("stats/pmf_examples", |t| {
        let a = close(poisson_pmf(1.0, 0)?, (-1.0f64).exp(), t.pmf);
        let b = close(poisson_pmf(2.0, 2)?, 2.0 * (-2.0f64).exp(), t.pmf);
        Ok((a.0 && b.0, format!("{}; {}", a.1, b.1)))
    }),
    ("stats/pmf_normalization", |t| {
        let mut worst: f64 = 0.0;
        for lambda in [0.1, 1.0, 5.0, 20.0] {
            let s: f64 = (0..=200).map(|k| poisson_pmf(lambda, k).unwrap()).sum();
            worst = worst.max((s - 1.0).abs());
        }
        Ok((worst <= t.pmf, format!("max deviation {worst}")))
    }),
    ("stats/pmf_mode", |_| {
        let ok = [0.5, 2.5, 7.3].iter().all(|&l: &f64| {
            let mode = (0..60u64)
                .max_by(|&a, &b| poisson_pmf(l, a).unwrap().total_cmp(&poisson_pmf(l, b).unwrap()))
                .unwrap();
            mode == l.floor() as u64
        });
        Ok((ok, String::new()))
    }),
    ("stats/pmf_rejects_nonpositive", |_| Ok((poisson_pmf(0.0, 1).is_err(), String::new()))),
    ("stats/tv_all_zero", |_| {
        let r = total_variation_poisson(&EmpiricalDistribution::from_counts(&[0; 50]), 1.0, 0.05)?;
        Ok(close(r.value, 1.0 - (-1.0f64).exp(), 1e-12))
    }),
    ("stats/ks_quantile_sample", |_| {
        let n = 200;
        let xs: Vec<f64> = (1..=n)
            .map(|i| {
                let p = (i as f64 - 0.5) / n as f64;
                statrs::distribution::ContinuousCDF::inverse_cdf(&statrs::distribution::Normal::standard(), p)
            })
            .collect();
        let d = ks_statistic(&xs, 0.0, 1.0);
        Ok((d <= 0.5 / n as f64 + 1e-9, format!("KS = {d}")))
    }),
    ("stats/ks_constant_fails", |_| {
        let r = ks_normal(&[0.0; 30], 0.0, 1.0, None);
        Ok((r.value >= 0.5 && !r.pass, format!("KS = {}", r.value)))
    }),
    ("stats/summary_merge", |t| {
        let a: Vec<f64> = (0..37).map(|i| (i as f64 * 0.37).sin() * 10.0).collect();
        let b: Vec<f64> = (0..53).map(|i| (i as f64 * 1.3).cos() * 3.0 + 2.0).collect();
        let m = Summary::from_samples(a.iter().cloned()).merge(&Summary::from_samples(b.iter().cloned()));
        let all = Summary::from_samples(a.iter().chain(&b).cloned());
        let e = ((m.m2 - all.m2).abs() / all.m2).max((m.m4 - all.m4).abs() / all.m4);
        Ok((e <= t.merge, format!("relative error {e}")))
    }),
    ("stats/constant_variance", |_| {
        let s = Summary::from_samples(std::iter::repeat(1.5).take(20));
        Ok((s.variance() == 0.0, String::new()))
    }),
    ("stats/lindeberg_bounded", |_| {
        let cells: Vec<Vec<f64>> = (0..50).map(|_| vec![1.0, -1.0]).collect();
        Ok((lindeberg_diagnostic(&cells, 0.5) == 0.0, String::new()))
    }),
    ("stats/lindeberg_heavy", |_| {
        let mut cells: Vec<Vec<f64>> = (0..50).map(|_| vec![1.0, -1.0]).collect();
        cells[3] = vec![1e6];
        let v = lindeberg_diagnostic(&cells, 0.5);
        Ok(((v - 1.0).abs() < 1e-6, format!("{v}")))
    }),
    ("stats/mollifier_eval", |t| Ok(close(mollifier_eval(0.0, 1.0, 0.0, 1.0)?, 0.25, t.mollifier))),
    ("stats/mollifier_midpoint", |t| {
        let (a, b, eps): (f64, f64, f64) = (-0.4, 1.1, 0.3);
        let want = 2.0 / PI * ((b - a) / (2.0 * eps)).atan();
        Ok(close(mollifier_eval(0.5 * (a + b), eps, a, b)?, want, t.mollifier))
    }),
    ("stats/mollifier_vs_quadrature", |t| {
        let mut worst: f64 = 0.0;
        for (x, eps) in [(0.3, 0.1), (-2.0, 0.5), (1.7, 0.05)] {
            worst = worst.max((mollifier_eval(x, eps, 0.0, 1.0)? - mollifier_by_quadrature(x, eps, 0.0, 1.0)?).abs());
        }
        Ok((worst <= t.mollifier, format!("max error {worst}")))
    }),
    ("stats/mollifier_l1_forms", |t| {
        let a = mollifier_l1_error(1e-3, -1.0, 1.0)?;
        let b = mollifier_l1_error_from_antiderivative(1e-3, -1.0, 1.0)?;
        let c = mollifier_l1_error_by_quadrature(1e-3, -1.0, 1.0)?;
        Ok(((a - b).abs() <= 1e-12 && (a - c).abs() <= t.mollifier, format!("{a}, {b}, {c}")))
    }),
    ("stats/mollifier_l1_decreasing", |_| {
        let errs: Vec<f64> = (1..=6)
            .map(|k| mollifier_l1_error(10f64.powi(-k), 0.0, 1.0).unwrap())
            .collect();
        Ok((errs.windows(2).all(|w| w[1] < w[0]), format!("{errs:?}")))
    }),
];

pub fn run_selftest(tol: &Tolerances) -> Result<SelftestOutcome> {
    tol.validate()?;
    let checks = CHECKS
        .iter()
        .map(|(name, f)| match f(tol) {
            Ok((pass, detail)) => CheckResult { name, pass, detail },
            Err(e) => CheckResult {
                name,
                pass: false,
                detail: format!("error: {e}"),
            },
        })
        .collect();
    Ok(SelftestOutcome { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass_with_default_tolerances() {
        let out = run_selftest(&Tolerances::default()).unwrap();
        assert!(out.checks.len() >= 30);
        let failed: Vec<_> = out.checks.iter().filter(|c| !c.pass).collect();
        assert!(failed.is_empty(), "{failed:?}");
    }

    #[test]
    fn negative_tolerance_is_a_config_error() {
        let t = Tolerances {
            greens: -1.0,
            ..Tolerances::default()
        };
        assert!(matches!(run_selftest(&t), Err(Error::Config(_))));
    }
}
