//! Eigenvalue counting by inertia, the dense oracle, and resolvent entries.

mod dense;
mod greens;
mod layout;
mod ldlt;
mod sturm;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{sample_operator, DisorderedOperator, PotentialSpec};
use crate::lattice::LatticeBox;
use crate::rng::CounterRng;
use crate::stats::PointEstimate;

pub use dense::{dense_spectrum, dense_spectrum_with_cap, tridiagonal_eigenvalues, DEFAULT_DENSE_CAP};
pub use greens::{greens_entry, resolvent_column, resolvent_diagonal, MIN_IM_Z};

/// Sylvester inertia of `H - shift·I`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inertia {
    pub negative: usize,
    pub zero: usize,
    pub positive: usize,
    /// Shift actually factored (differs from the request after jitter).
    pub shift_used: f64,
    pub jittered: bool,
}

/// Relative jitter scale for exactly singular pivots.
pub const JITTER: f64 = 1e-12;

struct RawSweep {
    negative: usize,
    last_zero: bool,
    breakdown: bool,
}

fn finish(raw: RawSweep, n: usize, shift_used: f64, jittered: bool) -> Inertia {
    let zero = raw.last_zero as usize;
    Inertia {
        negative: raw.negative,
        zero,
        positive: n - raw.negative - zero,
        shift_used,
        jittered,
    }
}

fn sweep_at(op: &DisorderedOperator, layout: Option<&layout::BlockLayout>, shift: f64) -> RawSweep {
    match layout {
        None => {
            let t = op.hopping();
            let s = sturm::sweep(op.potential(), t * t, shift);
            RawSweep {
                negative: s.negative,
                last_zero: s.last_zero,
                breakdown: s.breakdown,
            }
        }
        Some(l) => {
            let s = ldlt::block_inertia(op, l, shift);
            RawSweep {
                negative: s.negative,
                last_zero: s.last_zero,
                breakdown: s.breakdown,
            }
        }
    }
}

fn with_jitter(op: &DisorderedOperator, layout: Option<&layout::BlockLayout>, shift: f64) -> Result<Inertia> {
    let n = op.site_count();
    let raw = sweep_at(op, layout, shift);
    if !raw.breakdown {
        return Ok(finish(raw, n, shift, false));
    }
    let delta = JITTER * (1.0 + shift.abs());
    for f in [1.0, -1.0, 0.5, -0.5, 0.25, -0.25] {
        let s = shift + f * delta;
        let raw = sweep_at(op, layout, s);
        if !raw.breakdown {
            log::debug!("zero pivot at shift {shift}; recounted at {s}");
            return Ok(finish(raw, n, s, true));
        }
    }
    Err(Error::Factorization {
        shift,
        reason: "zero pivot persisted after jitter".into(),
    })
}

fn block_layout(op: &DisorderedOperator) -> Option<layout::BlockLayout> {
    (op.dimension() > 1).then(|| layout::BlockLayout::new(op))
}

/// Inertia of `H - shift·I`: Sturm sequence in 1D, block `LDLᵀ` otherwise.
pub fn inertia_at(op: &DisorderedOperator, shift: f64) -> Result<Inertia> {
    if !shift.is_finite() {
        return Err(Error::invalid("shift", "must be finite"));
    }
    with_jitter(op, block_layout(op).as_ref(), shift)
}

/// Inertia at many shifts; in 1D the shifts share one pass over the sites.
pub fn inertia_many(op: &DisorderedOperator, shifts: &[f64]) -> Result<Vec<Inertia>> {
    if shifts.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("shift", "must be finite"));
    }
    let n = op.site_count();
    if op.dimension() == 1 {
        let t = op.hopping();
        let sweeps = sturm::sweep_many(op.potential(), t * t, shifts);
        return shifts
            .iter()
            .zip(sweeps)
            .map(|(&s, w)| {
                if w.breakdown {
                    with_jitter(op, None, s)
                } else {
                    Ok(finish(
                        RawSweep {
                            negative: w.negative,
                            last_zero: w.last_zero,
                            breakdown: false,
                        },
                        n,
                        s,
                        false,
                    ))
                }
            })
            .collect();
    }
    let layout = block_layout(op);
    shifts.iter().map(|&s| with_jitter(op, layout.as_ref(), s)).collect()
}

/// Both endpoint inertias of the open interval `(lo, hi)`.
pub fn interval_inertia(op: &DisorderedOperator, lo: f64, hi: f64) -> Result<(Inertia, Inertia)> {
    if !(lo < hi) {
        return Err(Error::invalid("interval", format!("need lo < hi, got ({lo}, {hi})")));
    }
    let v = inertia_many(op, &[lo, hi])?;
    Ok((v[0], v[1]))
}

/// Number of eigenvalues in the open interval `(lo, hi)`.
pub fn count_in_interval(op: &DisorderedOperator, lo: f64, hi: f64) -> Result<usize> {
    let (a, b) = interval_inertia(op, lo, hi)?;
    Ok(count_from(&a, &b))
}

/// `#{E < hi} - #{E ≤ lo}`.
pub fn count_from(lo: &Inertia, hi: &Inertia) -> usize {
    (hi.negative).saturating_sub(lo.negative + lo.zero)
}

/// `Σ_i Im 1/(E_i - z)` from a known spectrum.
pub fn trace_im_from_spectrum(spectrum: &[f64], z: Complex64) -> f64 {
    spectrum
        .iter()
        .map(|&e| (Complex64::new(e, 0.0) - z).inv().im)
        .sum()
}

/// `Tr Im (H - z)^{-1}` by dense diagonalization.
pub fn trace_im_resolvent_dense(op: &DisorderedOperator, z: Complex64, cap: usize) -> Result<f64> {
    greens::check_z(z)?;
    Ok(trace_im_from_spectrum(&dense_spectrum_with_cap(op, cap)?, z))
}

/// `Tr Im (H - z)^{-1}` from the diagonal of the inverse.
pub fn trace_im_resolvent_solve(op: &DisorderedOperator, z: Complex64) -> Result<f64> {
    Ok(resolvent_diagonal(op, z)?.iter().map(|g| g.im).sum())
}

/// Linear-time solve path in 1D; in higher dimension dense under the cap.
pub fn trace_im_resolvent(op: &DisorderedOperator, z: Complex64) -> Result<f64> {
    if op.dimension() > 1 && op.site_count() <= DEFAULT_DENSE_CAP {
        trace_im_resolvent_dense(op, z, DEFAULT_DENSE_CAP)
    } else {
        trace_im_resolvent_solve(op, z)
    }
}

/// Independent realizations on a fixed box: replicate `r` uses a seed
/// derived from `(seed, r)` only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub lattice: LatticeBox,
    pub spec: PotentialSpec,
    pub seed: u64,
}

impl Ensemble {
    pub fn replicate_seed(&self, r: u64) -> u64 {
        CounterRng::new(self.seed).derive(r).key()
    }

    pub fn replicate(&self, r: u64) -> Result<DisorderedOperator> {
        sample_operator(&self.lattice, &self.spec, self.replicate_seed(r))
    }
}

fn check_s(s: f64, n_samples: usize) -> Result<()> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::invalid("s", format!("{s} is outside (0, 1)")));
    }
    if n_samples < 2 {
        return Err(Error::invalid("n_samples", "need at least 2 samples"));
    }
    Ok(())
}

/// Monte Carlo estimate of `E|G(x, y; z)|^s`.
pub fn fractional_moment_probe(
    ensemble: &Ensemble,
    x: usize,
    y: usize,
    z: Complex64,
    s: f64,
    n_samples: usize,
) -> Result<PointEstimate> {
    Ok(fractional_moment_profile(ensemble, &[x], y, z, s, n_samples)?.remove(0))
}

/// `E|G(x, y; z)|^s` for several `x` at once, from one column solve per
/// realization.
pub fn fractional_moment_profile(
    ensemble: &Ensemble,
    xs: &[usize],
    y: usize,
    z: Complex64,
    s: f64,
    n_samples: usize,
) -> Result<Vec<PointEstimate>> {
    check_s(s, n_samples)?;
    let n = ensemble.lattice.site_count();
    if let Some(&bad) = xs.iter().find(|&&x| x >= n) {
        return Err(Error::invalid("x", format!("site index {bad} outside box of {n} sites")));
    }
    let rows: Vec<Vec<f64>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|r| {
            let op = ensemble.replicate(r)?;
            let col = resolvent_column(&op, y, z)?;
            Ok(xs.iter().map(|&x| col[x].norm().powf(s)).collect())
        })
        .collect::<Result<_>>()?;
    Ok((0..xs.len())
        .map(|k| PointEstimate::from_samples(rows.iter().map(|r| r[k])))
        .collect())
}

/// `|G_Λ(x, x; z) - G_Λ'(x, x; z)|` for one realization shared by `Λ ⊆ Λ'`.
pub fn green_comparison(small: &DisorderedOperator, big: &DisorderedOperator, x: &[i64], z: Complex64) -> Result<f64> {
    let restricted = big.restrict(small.lattice())?;
    if restricted.potential() != small.potential() || restricted.hopping() != small.hopping() {
        return Err(Error::invalid("opΛ", "does not share the potential of the enclosing operator"));
    }
    let xs = small
        .lattice()
        .index_of(x)
        .ok_or_else(|| Error::invalid("x", format!("{x:?} is not a site of {}", small.lattice())))?;
    let xb = big.lattice().index_of(x).expect("contained");
    if small.lattice() == big.lattice() {
        greens::check_z(z)?;
        return Ok(0.0);
    }
    let a = resolvent_column(small, xs, z)?[xs];
    let b = resolvent_column(big, xb, z)?[xb];
    Ok((a - b).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn path(n: usize) -> DisorderedOperator {
        DisorderedOperator::from_potential(LatticeBox::new(vec![0], vec![n as i64 - 1]).unwrap(), vec![0.0; n]).unwrap()
    }

    #[test]
    fn path_inertia_examples() {
        let op = path(3);
        let i = inertia_at(&op, 1.0).unwrap();
        assert_eq!((i.negative, i.zero, i.positive), (2, 0, 1));
        let i = inertia_at(&op, -2.0 - 1e-9).unwrap();
        assert_eq!((i.negative, i.zero, i.positive), (0, 0, 3));
        assert_eq!(count_in_interval(&op, -1.0, 1.0).unwrap(), 1);
        assert_eq!(count_in_interval(&op, -3.0, 3.0).unwrap(), 3);
    }

    #[test]
    fn exact_eigenvalue_shift_is_jittered_or_zero() {
        // 0 is an eigenvalue of the 3-site path; the middle pivot vanishes
        let i = inertia_at(&path(3), 0.0).unwrap();
        assert!(i.jittered);
        assert_eq!(i.negative + i.zero + i.positive, 3);
        // zero-hopping operator: the zero pivot is the last one
        let op = DisorderedOperator::from_potential(LatticeBox::new(vec![0], vec![1]).unwrap(), vec![-1.0, 0.5])
            .unwrap()
            .with_hopping(0.0);
        let i = inertia_at(&op, 0.5).unwrap();
        assert_eq!((i.negative, i.zero, i.positive, i.jittered), (1, 1, 0, false));
        assert_eq!(count_in_interval(&op, 0.5, 1.0).unwrap(), 0);
        assert_eq!(count_in_interval(&op, -2.0, 0.5).unwrap(), 1);
    }

    #[test]
    fn block_inertia_matches_dense_2d_3d() {
        let spec = PotentialSpec::uniform(4.0).unwrap();
        for (k, b) in [
            LatticeBox::new(vec![0, 0], vec![11, 11]).unwrap(),
            LatticeBox::new(vec![0, 0], vec![3, 17]).unwrap(),
            LatticeBox::new(vec![0, 0, 0], vec![4, 5, 3]).unwrap(),
        ]
        .iter()
        .enumerate()
        {
            let op = sample_operator(b, &spec, 40 + k as u64).unwrap();
            let ev = dense_spectrum(&op).unwrap();
            let r = CounterRng::new(k as u64);
            for i in 0..200 {
                let s = -6.0 + 12.0 * r.uniform(i);
                let want = ev.iter().filter(|&&e| e < s).count();
                assert_eq!(inertia_at(&op, s).unwrap().negative, want);
            }
        }
    }

    #[test]
    fn trace_paths_agree() {
        let spec = PotentialSpec::uniform(4.0).unwrap();
        for b in [
            LatticeBox::new(vec![0], vec![400]).unwrap(),
            LatticeBox::new(vec![0, 0], vec![9, 12]).unwrap(),
        ] {
            let op = sample_operator(&b, &spec, 5).unwrap();
            for z in [Complex64::new(0.0, 1.0), Complex64::new(0.3, 1e-3), Complex64::new(-1.0, 1e-6)] {
                let a = trace_im_resolvent_dense(&op, z, DEFAULT_DENSE_CAP).unwrap();
                let b = trace_im_resolvent_solve(&op, z).unwrap();
                assert!((a - b).abs() <= 1e-8 * a.abs(), "{a} vs {b}");
                assert!(a > 0.0);
            }
        }
        let one = DisorderedOperator::from_potential(LatticeBox::new(vec![0], vec![0]).unwrap(), vec![0.0]).unwrap();
        assert!((trace_im_resolvent(&one, Complex64::new(0.0, 1.0)).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn green_comparison_closed_forms() {
        let spec = PotentialSpec::uniform(4.0).unwrap();
        let big = sample_operator(&LatticeBox::new(vec![0], vec![1]).unwrap(), &spec, 8).unwrap();
        let z = Complex64::new(0.1, 0.3);
        assert_eq!(green_comparison(&big, &big, &[0], z).unwrap(), 0.0);
        let small = big.restrict(&LatticeBox::new(vec![0], vec![0]).unwrap()).unwrap();
        let (v0, v1) = (big.potential()[0], big.potential()[1]);
        let g_small = (Complex64::new(v0, 0.0) - z).inv();
        let g_big = (Complex64::new(v0, 0.0) - z - (Complex64::new(v1, 0.0) - z).inv()).inv();
        let d = green_comparison(&small, &big, &[0], z).unwrap();
        assert!((d - (g_small - g_big).norm()).abs() < 1e-12);

        let other = sample_operator(&LatticeBox::new(vec![0], vec![0]).unwrap(), &spec, 9).unwrap();
        assert!(green_comparison(&other, &big, &[0], z).is_err());
    }

    #[test]
    fn fractional_moment_single_site_quadrature() {
        // E|1/(v - i)|^s for v ~ U[-1, 1], by composite Simpson
        let ens = Ensemble {
            lattice: LatticeBox::new(vec![0], vec![0]).unwrap(),
            spec: PotentialSpec::uniform(2.0).unwrap(),
            seed: 3,
        };
        let s = 0.5;
        let est = fractional_moment_probe(&ens, 0, 0, Complex64::new(0.0, 1.0), s, 4000).unwrap();
        let f = |v: f64| (v * v + 1.0).powf(-s / 2.0) * 0.5;
        let m = 2000;
        let h = 2.0 / m as f64;
        let mut q = f(-1.0) + f(1.0);
        for k in 1..m {
            q += f(-1.0 + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        q *= h / 3.0;
        assert!((est.value - q).abs() < 3.0 * est.std_err, "{} vs {q} ± {}", est.value, est.std_err);

        let tiny = fractional_moment_probe(&ens, 0, 0, Complex64::new(0.0, 1.0), 1e-9, 10).unwrap();
        assert!((tiny.value - 1.0).abs() < 1e-8);
        assert!(fractional_moment_probe(&ens, 0, 0, Complex64::new(0.0, 1.0), 0.5, 1).is_err());
    }

    proptest! {
        #[test]
        fn sturm_counts_match_dense(seed in any::<u64>(), n in 1usize..120, shift in -4.0f64..4.0) {
            let b = LatticeBox::new(vec![0], vec![n as i64 - 1]).unwrap();
            let op = sample_operator(&b, &PotentialSpec::uniform(4.0).unwrap(), seed).unwrap();
            let ev = dense_spectrum(&op).unwrap();
            prop_assert_eq!(inertia_at(&op, shift).unwrap().negative, ev.iter().filter(|&&e| e < shift).count());
        }

        #[test]
        fn counts_are_monotone(seed in any::<u64>(), a in -3.0f64..3.0, w1 in 0.01f64..1.0, w2 in 0.0f64..1.0) {
            let b = LatticeBox::new(vec![0], vec![299]).unwrap();
            let op = sample_operator(&b, &PotentialSpec::uniform(4.0).unwrap(), seed).unwrap();
            let inner = count_in_interval(&op, a, a + w1).unwrap();
            let outer = count_in_interval(&op, a - w2, a + w1 + w2).unwrap();
            prop_assert!(inner <= outer);
            prop_assert!(inertia_at(&op, a).unwrap().negative <= inertia_at(&op, a + w1).unwrap().negative);
        }
    }
}
