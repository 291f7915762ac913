//! Experiments on Green's-function entries.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::counting::SCHEME;
use super::record::{ExperimentRecord, LevelRecord, RunStatus, SampleTable};
use super::{Experiment, ExperimentConfig, RunOptions, Stager};
use crate::error::{Error, Result};
use crate::hamiltonian::sample_operator;
use crate::lattice::LatticeBox;
use crate::rng::CounterRng;
use crate::spectral::{fractional_moment_profile, green_comparison, Ensemble};
use crate::stats::{PointEstimate, TestReport};

/// Least-squares fit `ln y ≈ ln C₁ - C₂·x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate: f64,
    pub prefactor: f64,
    pub r2: f64,
}

/// `None` when fewer than two points or a non-positive `y`.
pub fn fit_exponential_decay(xs: &[f64], ys: &[f64]) -> Option<DecayFit> {
    if xs.len() != ys.len() || xs.len() < 2 || ys.iter().any(|&y| !(y > 0.0)) {
        return None;
    }
    let n = xs.len() as f64;
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(DecayFit {
        rate: -slope,
        prefactor: (my - slope * mx).exp(),
        r2,
    })
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn check_probe(cfg: &ExperimentConfig, exp: Experiment, im_z: f64, samples: usize) -> Result<()> {
    if cfg.synthetic_null.enabled {
        return Err(config_err(format!("synthetic-null mode has no analogue for `{exp}`")));
    }
    if !(im_z > 0.0) {
        return Err(config_err(format!("{exp}: im_z must be positive")));
    }
    if samples < 2 {
        return Err(config_err(format!("{exp}: need at least 2 samples")));
    }
    Ok(())
}

fn profile_table(columns: &[&str], rows: Vec<Vec<f64>>) -> SampleTable {
    SampleTable {
        columns: columns.iter().map(|c| c.to_string()).collect(),
        rows,
    }
}

/// Fit `E|G(x, y; z)|^s` against `|x - y|` along the first axis.
pub fn run_localization_probe(cfg: &ExperimentConfig) -> Result<ExperimentRecord> {
    super::run_experiment(Experiment::Localization, cfg, &RunOptions::default())
}

pub(crate) fn localization(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentRecord> {
    let p = &cfg.localization;
    check_probe(cfg, Experiment::Localization, p.im_z, p.samples)?;
    if cfg.model.hopping != 1.0 {
        return Err(config_err("localization probes use unit hopping; set model.hopping = 1"));
    }
    if p.s_values.is_empty() || p.s_values.iter().any(|&s| !(s > 0.0 && s < 1.0)) {
        return Err(config_err("localization.s_values must be non-empty and inside (0, 1)"));
    }
    let d = cfg.model.dimension;
    let b = LatticeBox::centered(p.half_width as i64, d)?;
    let origin = vec![0i64; d];
    let y = b.index_of(&origin).expect("centre");
    let xs: Vec<usize> = p
        .distances
        .iter()
        .map(|&k| {
            let mut c = origin.clone();
            c[0] = k as i64;
            b.index_of(&c)
                .ok_or_else(|| config_err(format!("localization distance {k} exceeds half width {}", p.half_width)))
        })
        .collect::<Result<_>>()?;
    let ens = Ensemble {
        lattice: b,
        spec: cfg.model.potential.clone(),
        seed: CounterRng::new(cfg.schedule.seed).derive_label("localization").key(),
    };
    let z = Complex64::new(cfg.window.energy, p.im_z);

    let mut rec = ExperimentRecord::new(Experiment::Localization, cfg, SCHEME);
    let stager = Stager::new(opts);
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    let mut diags = BTreeMap::new();
    for &s in &p.s_values {
        let Some(profile) = stager.stage(&format!("s{s}"), || fractional_moment_profile(&ens, &xs, y, z, s, p.samples))?
        else {
            rec.status = RunStatus::Partial;
            break;
        };
        let dist: Vec<f64> = p.distances.iter().map(|&k| k as f64).collect();
        let means: Vec<f64> = profile.iter().map(|e: &PointEstimate| e.value).collect();
        for (k, e) in profile.iter().enumerate() {
            rows.push(vec![s, dist[k], e.value, e.std_err]);
        }
        match fit_exponential_decay(&dist, &means) {
            Some(fit) => {
                diags.insert(format!("s{s}_rate"), fit.rate);
                diags.insert(format!("s{s}_prefactor"), fit.prefactor);
                diags.insert(format!("s{s}_r2"), fit.r2);
                let mut rate = TestReport::new(format!("decay_rate_s{s}"), -fit.rate, 0.0, p.samples)
                    .with_note(format!("C2 = {}, C1 = {}", fit.rate, fit.prefactor));
                if fit.rate <= 0.0 {
                    rate.pass = false;
                    rate.notes.push("localization not detected".into());
                }
                reports.push(rate);
                reports.push(
                    TestReport::new(format!("one_minus_r2_s{s}"), 1.0 - fit.r2, 1.0 - cfg.tests.min_r2, p.samples)
                        .with_note(format!("R² = {}", fit.r2)),
                );
            }
            None => reports.push(TestReport::degenerate(
                format!("decay_rate_s{s}"),
                p.samples,
                "localization not detected: a fractional moment vanished",
            )),
        }
    }
    let mut level = LevelRecord::new(
        p.half_width,
        (2 * p.half_width as usize + 1).pow(d as u32),
        1.0,
        profile_table(&["s", "distance", "mean", "std_err"], rows),
    );
    for (k, v) in diags {
        level.diag(&k, v);
    }
    level.reports = reports;
    rec.levels.push(level);
    if rec.status == RunStatus::Complete {
        rec.reports = rec.levels[0].reports.clone();
    }
    Ok(rec)
}

/// Fit `E|G_Λ(x,x) - G_Λ'(x,x)|` against `dist(x, ∂Λ)`.
pub fn run_green_comparison_decay(cfg: &ExperimentConfig) -> Result<ExperimentRecord> {
    super::run_experiment(Experiment::GreenDecay, cfg, &RunOptions::default())
}

pub(crate) fn green_decay(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentRecord> {
    let g = &cfg.green;
    check_probe(cfg, Experiment::GreenDecay, g.im_z, g.samples)?;
    if g.outer_half_width < g.inner_half_width {
        return Err(config_err("green.outer_half_width must be at least green.inner_half_width"));
    }
    let d = cfg.model.dimension;
    let inner = LatticeBox::centered(g.inner_half_width as i64, d)?;
    let outer = LatticeBox::centered(g.outer_half_width as i64, d)?;
    let sites: Vec<Vec<i64>> = g
        .distances
        .iter()
        .map(|&k| {
            let mut c = vec![0i64; d];
            c[0] = -(g.inner_half_width as i64) + k as i64;
            if inner.contains_site(&c) && inner.face_distance(&c) == k as i64 {
                Ok(c)
            } else {
                Err(config_err(format!(
                    "green distance {k} is not realized inside a box of half width {}",
                    g.inner_half_width
                )))
            }
        })
        .collect::<Result<_>>()?;
    let z = Complex64::new(cfg.window.energy, g.im_z);
    let key = CounterRng::new(cfg.schedule.seed).derive_label("green");

    let mut rec = ExperimentRecord::new(Experiment::GreenDecay, cfg, SCHEME);
    let stager = Stager::new(opts);
    let compute = || -> Result<Vec<PointEstimate>> {
        let rows: Vec<Vec<f64>> = (0..g.samples)
            .into_par_iter()
            .map(|r| {
                let big = sample_operator(&outer, &cfg.model.potential, key.derive(r as u64).key())?
                    .with_hopping(cfg.model.hopping);
                let small = big.restrict(&inner)?;
                sites.iter().map(|x| green_comparison(&small, &big, x, z)).collect()
            })
            .collect::<Result<_>>()?;
        Ok((0..sites.len())
            .map(|k| PointEstimate::from_samples(rows.iter().map(|r| r[k])))
            .collect())
    };
    let Some(profile) = stager.stage("profile", compute)? else {
        rec.status = RunStatus::Partial;
        return Ok(rec);
    };
    let dist: Vec<f64> = g.distances.iter().map(|&k| k as f64).collect();
    let rows = profile
        .iter()
        .zip(&dist)
        .map(|(e, &k)| vec![k, e.value, e.std_err])
        .collect();
    let mut level = LevelRecord::new(
        g.outer_half_width,
        outer.site_count(),
        1.0,
        profile_table(&["distance", "mean", "std_err"], rows),
    );
    let means: Vec<f64> = profile.iter().map(|e| e.value).collect();
    match fit_exponential_decay(&dist, &means) {
        Some(fit) => {
            level.diag("rate", fit.rate);
            level.diag("prefactor", fit.prefactor);
            level.diag("r2", fit.r2);
            let mut r = TestReport::new("decay_rate", -fit.rate, 0.0, g.samples)
                .with_note(format!("B2 = {}, B1 = {}, R² = {}", fit.rate, fit.prefactor, fit.r2));
            if fit.rate <= 0.0 {
                r.pass = false;
            }
            level.reports.push(r);
        }
        None => {
            let why = if means.iter().all(|&m| m == 0.0) {
                "all differences vanish (identical boxes)"
            } else {
                "a mean difference vanished"
            };
            level.reports.push(TestReport::degenerate("decay_rate", g.samples, why));
        }
    }
    rec.levels.push(level);
    rec.reports = rec.levels[0].reports.clone();
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(width: f64) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(&format!(
            r#"
            [model]
            potential = {{ family = "uniform", width = {width} }}
            [window]
            energy = 0.0
            eta = 1.0
            a = -1.0
            b = 1.0
            [schedule]
            half_widths = [10]
            n = 100
            seed = 9
            [localization]
            samples = 400
            [green]
            samples = 400
            "#
        ))
        .unwrap()
    }

    #[test]
    fn fit_recovers_exact_exponential() {
        let xs: Vec<f64> = (1..=6).map(|k| k as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * (-0.7 * x).exp()).collect();
        let f = fit_exponential_decay(&xs, &ys).unwrap();
        assert!((f.rate - 0.7).abs() < 1e-12 && (f.prefactor - 3.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        assert!(fit_exponential_decay(&xs, &[0.0; 6]).is_none());
    }

    #[test]
    fn strong_disorder_localizes() {
        let rec = run_localization_probe(&config(15.0)).unwrap();
        assert!(rec.passed(), "{:?}", rec.reports);
        let rate = rec.levels[0].diagnostics["s0.5_rate"];
        assert!(rate > 0.3, "rate {rate}");
    }

    #[test]
    fn green_control_and_decay() {
        let mut cfg = config(15.0);
        let rec = run_green_comparison_decay(&cfg).unwrap();
        assert!(rec.passed(), "{:?}", rec.reports);
        cfg.green.outer_half_width = cfg.green.inner_half_width;
        let rec = run_green_comparison_decay(&cfg).unwrap();
        assert!(rec.levels[0].table.rows.iter().all(|r| r[1] == 0.0));
        assert!(!rec.passed());
    }
}
