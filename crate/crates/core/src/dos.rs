//! Density-of-states estimates and the Poisson intensity `λ = f(E)(b - a)`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{sample_operator, DisorderedOperator, PotentialSpec};
use crate::lattice::{LatticeBox, MesoWindow};
use crate::rng::CounterRng;
use crate::spectral::{dense_spectrum_with_cap, inertia_at, inertia_many, resolvent_diagonal, DEFAULT_DENSE_CAP};
use crate::stats::{PointEstimate, Summary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DosMethod {
    Histogram,
    Stieltjes,
}

/// How histogram counts are obtained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DosBackend {
    /// Full diagonalization, limited by the dense cap.
    Dense,
    /// Inertia differences at the bin edges.
    Inertia,
    #[default]
    Auto,
}

/// Equal-width bins `[lo + k·w, lo + (k+1)·w)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramGrid {
    pub lo: f64,
    pub bin_width: f64,
    pub bins: usize,
}

impl HistogramGrid {
    /// Grid covering `[lo, hi]` with one bin centred exactly on `center`.
    pub fn centered(center: f64, bin_width: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(bin_width > 0.0) || !bin_width.is_finite() {
            return Err(Error::invalid("dos.bin_width", "must be positive and finite"));
        }
        let below = ((center - 0.5 * bin_width - lo) / bin_width).ceil().max(0.0) as usize;
        let above = ((hi - center - 0.5 * bin_width) / bin_width).ceil().max(0.0) as usize;
        Ok(Self {
            lo: center - 0.5 * bin_width - below as f64 * bin_width,
            bin_width,
            bins: below + above + 1,
        })
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.bins).map(|k| self.lo + k as f64 * self.bin_width).collect()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.bins).map(|k| self.lo + (k as f64 + 0.5) * self.bin_width).collect()
    }

    pub fn bin_of(&self, e: f64) -> Option<usize> {
        let k = ((e - self.lo) / self.bin_width).floor();
        (k >= 0.0 && (k as usize) < self.bins).then_some(k as usize)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DosMetadata {
    pub box_sites: Vec<usize>,
    pub n_realizations: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bin_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub im_z: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backend: Option<DosBackend>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DosEstimate {
    pub energies: Vec<f64>,
    pub f_hat: Vec<f64>,
    pub std_err: Vec<f64>,
    pub method: DosMethod,
    pub metadata: DosMetadata,
}

impl DosEstimate {
    /// `∫ f̂` over the grid (histograms only).
    pub fn total_mass(&self) -> f64 {
        let w = self.metadata.bin_width.unwrap_or(0.0);
        self.f_hat.iter().sum::<f64>() * w
    }

    /// Estimate in the bin containing `e` (histogram) or at the nearest
    /// grid energy (pointwise estimates).
    pub fn at(&self, e: f64) -> Option<PointEstimate> {
        let k = match (self.method, self.metadata.bin_width) {
            (DosMethod::Histogram, Some(w)) => {
                let lo = self.energies.first()? - 0.5 * w;
                let k = ((e - lo) / w).floor();
                if k < 0.0 || k as usize >= self.energies.len() {
                    return None;
                }
                k as usize
            }
            _ => (0..self.energies.len()).min_by(|&i, &j| {
                (self.energies[i] - e).abs().total_cmp(&(self.energies[j] - e).abs())
            })?,
        };
        Some(PointEstimate {
            value: self.f_hat[k],
            std_err: self.std_err[k],
        })
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["E", "f_hat", "std_err"])?;
        for i in 0..self.energies.len() {
            wr.write_record([
                format!("{:?}", self.energies[i]),
                format!("{:?}", self.f_hat[i]),
                format!("{:?}", self.std_err[i]),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Ensemble specification shared by both estimators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DosEnsemble {
    pub boxes: Vec<LatticeBox>,
    pub spec: PotentialSpec,
    pub n_realizations: usize,
    pub seed: u64,
    /// Hopping weight; `0` removes the Laplacian.
    #[serde(default = "one")]
    pub hopping: f64,
}

fn one() -> f64 {
    1.0
}

impl DosEnsemble {
    fn validate(&self) -> Result<()> {
        if self.boxes.is_empty() {
            return Err(Error::invalid("dos.boxes", "need at least one box"));
        }
        if self.n_realizations < 2 {
            return Err(Error::invalid("dos.n_realizations", "need at least 2 realizations"));
        }
        self.spec.validate()
    }

    /// Realization `r` on box `b`; seeds depend on `(seed, b, r)` only.
    pub fn realization(&self, b: usize, r: usize) -> Result<DisorderedOperator> {
        let key = CounterRng::new(self.seed).derive(b as u64).derive(r as u64).key();
        Ok(sample_operator(&self.boxes[b], &self.spec, key)?.with_hopping(self.hopping))
    }

    fn tasks(&self) -> Vec<(usize, usize)> {
        (0..self.boxes.len())
            .flat_map(|b| (0..self.n_realizations).map(move |r| (b, r)))
            .collect()
    }

    /// Enclosure of every spectrum in the ensemble.
    pub fn spectral_range(&self) -> (f64, f64) {
        let (lo, hi) = self.spec.support();
        let d = self.boxes.iter().map(|b| b.dimension()).max().unwrap_or(1) as f64;
        let r = 2.0 * d * self.hopping.abs();
        (lo - r, hi + r)
    }
}

/// Energy with `#{E_i < s} ≈ q·n`, by bisection on inertia counts.
pub fn spectral_quantile(op: &DisorderedOperator, q: f64) -> Result<f64> {
    let (mut lo, mut hi) = op.spectral_bounds();
    let target = (q * op.site_count() as f64).round() as usize;
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if inertia_at(op, mid)?.negative < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Freedman–Diaconis width `2·IQR·N^{-1/3}` from a pilot realization,
/// with `N` the pooled number of eigenvalues.
pub fn freedman_diaconis_width(ens: &DosEnsemble) -> Result<f64> {
    let pilot = ens.realization(0, 0)?;
    let iqr = spectral_quantile(&pilot, 0.75)? - spectral_quantile(&pilot, 0.25)?;
    let pooled: usize = ens.boxes.iter().map(|b| b.site_count()).sum::<usize>() * ens.n_realizations;
    let w = 2.0 * iqr * (pooled as f64).powf(-1.0 / 3.0);
    if !(w > 0.0) {
        return Err(Error::invalid("dos.bin_width", "pilot spectrum is degenerate; set the bin width"));
    }
    Ok(w)
}

fn choose_backend(backend: DosBackend, op: &DisorderedOperator, bins: usize) -> DosBackend {
    match backend {
        DosBackend::Auto => {
            if op.dimension() == 1 || op.site_count() > DEFAULT_DENSE_CAP {
                DosBackend::Inertia
            } else {
                let width = op.site_count() / op.lattice().extents().into_iter().max().unwrap_or(1);
                let per_shift = op.site_count() * width * width;
                if (bins + 1) * per_shift < op.site_count().pow(3) {
                    DosBackend::Inertia
                } else {
                    DosBackend::Dense
                }
            }
        }
        b => b,
    }
}

/// Normalized eigenvalue histogram, averaged over the ensemble; per-bin
/// errors come from the spread across realizations.
pub fn estimate_dos_histogram(ens: &DosEnsemble, grid: Option<HistogramGrid>, backend: DosBackend) -> Result<DosEstimate> {
    ens.validate()?;
    if backend == DosBackend::Dense {
        if let Some(b) = ens.boxes.iter().find(|b| b.site_count() > DEFAULT_DENSE_CAP) {
            return Err(Error::DenseCapExceeded {
                sites: b.site_count(),
                cap: DEFAULT_DENSE_CAP,
            });
        }
    }
    let grid = match grid {
        Some(g) => g,
        None => {
            let (lo, hi) = ens.spectral_range();
            HistogramGrid::centered(0.5 * (lo + hi), freedman_diaconis_width(ens)?, lo, hi)?
        }
    };
    if grid.bins == 0 {
        return Err(Error::invalid("dos.grid", "need at least one bin"));
    }
    let edges = grid.edges();
    let rows: Vec<(Vec<f64>, DosBackend)> = ens
        .tasks()
        .into_par_iter()
        .map(|(b, r)| {
            let op = ens.realization(b, r)?;
            let n = op.site_count() as f64;
            let used = choose_backend(backend, &op, grid.bins);
            let mut counts = vec![0.0; grid.bins];
            match used {
                DosBackend::Dense => {
                    for e in dense_spectrum_with_cap(&op, DEFAULT_DENSE_CAP)? {
                        if let Some(k) = grid.bin_of(e) {
                            counts[k] += 1.0;
                        }
                    }
                }
                _ => {
                    let inert = inertia_many(&op, &edges)?;
                    for k in 0..grid.bins {
                        counts[k] = (inert[k + 1].negative - inert[k].negative) as f64;
                    }
                }
            }
            Ok((counts.into_iter().map(|c| c / (n * grid.bin_width)).collect(), used))
        })
        .collect::<Result<_>>()?;
    let mut f_hat = Vec::with_capacity(grid.bins);
    let mut std_err = Vec::with_capacity(grid.bins);
    for k in 0..grid.bins {
        let s = Summary::from_samples(rows.iter().map(|r| r.0[k]));
        f_hat.push(s.mean);
        std_err.push(s.std_err());
    }
    Ok(DosEstimate {
        energies: grid.centers(),
        f_hat,
        std_err,
        method: DosMethod::Histogram,
        metadata: DosMetadata {
            box_sites: ens.boxes.iter().map(|b| b.site_count()).collect(),
            n_realizations: ens.n_realizations,
            seed: ens.seed,
            bin_width: Some(grid.bin_width),
            im_z: None,
            backend: Some(rows.first().map_or(backend, |r| r.1)),
        },
    })
}

/// Sites at face distance greater than a quarter of the box half-width.
pub fn stieltjes_sites(b: &LatticeBox) -> Vec<usize> {
    let half = (0..b.dimension())
        .map(|k| (b.extent(k) - 1) as f64 / 2.0)
        .fold(f64::INFINITY, f64::min);
    crate::lattice::interior_boundary_split(b, half / 4.0).0
}

/// `f̂(E) = (1/π)·mean Im G(x, x; E + i·im_z)` over realizations and over
/// sites away from the boundary.
pub fn estimate_dos_stieltjes(ens: &DosEnsemble, energy: f64, im_z: f64) -> Result<PointEstimate> {
    Ok(estimate_dos_stieltjes_grid(ens, &[energy], im_z)?.remove(0))
}

/// Pointwise Stieltjes estimates at several energies.
pub fn estimate_dos_stieltjes_grid(ens: &DosEnsemble, energies: &[f64], im_z: f64) -> Result<Vec<PointEstimate>> {
    ens.validate()?;
    if !(im_z > 0.0) {
        return Err(Error::invalid("dos.im_z", "must be positive"));
    }
    let sites: Vec<Vec<usize>> = ens.boxes.iter().map(stieltjes_sites).collect();
    if let Some(b) = sites.iter().position(|s| s.is_empty()) {
        return Err(Error::EmptyDomain(format!("box {} has no sites away from its boundary", ens.boxes[b])));
    }
    let rows: Vec<Vec<f64>> = ens
        .tasks()
        .into_par_iter()
        .map(|(b, r)| {
            let op = ens.realization(b, r)?;
            energies
                .iter()
                .map(|&e| {
                    let diag = resolvent_diagonal(&op, Complex64::new(e, im_z))?;
                    let s: f64 = sites[b].iter().map(|&x| diag[x].im).sum();
                    Ok(s / (sites[b].len() as f64 * std::f64::consts::PI))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok((0..energies.len())
        .map(|k| PointEstimate::from_samples(rows.iter().map(|r| r[k])))
        .collect())
}

/// Wrap pointwise Stieltjes values as a [`DosEstimate`].
pub fn stieltjes_estimate(ens: &DosEnsemble, energies: &[f64], im_z: f64) -> Result<DosEstimate> {
    let pts = estimate_dos_stieltjes_grid(ens, energies, im_z)?;
    Ok(DosEstimate {
        energies: energies.to_vec(),
        f_hat: pts.iter().map(|p| p.value).collect(),
        std_err: pts.iter().map(|p| p.std_err).collect(),
        method: DosMethod::Stieltjes,
        metadata: DosMetadata {
            box_sites: ens.boxes.iter().map(|b| b.site_count()).collect(),
            n_realizations: ens.n_realizations,
            seed: ens.seed,
            bin_width: None,
            im_z: Some(im_z),
            backend: None,
        },
    })
}

/// `λ = f(E)·(b - a)` with linearly propagated error.
pub fn intensity(f_at_e: PointEstimate, w: &MesoWindow) -> PointEstimate {
    f_at_e.scale(w.b - w.a)
}
