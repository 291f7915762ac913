//! Potential distributions and the truncated operator `H_Λ = Δ + V`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::LatticeBox;
use crate::rng::CounterRng;

/// Single-site distribution of the potential. Only bounded absolutely
/// continuous densities are supported.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PotentialSpec {
    /// Uniform on `[-width/2, width/2]`.
    Uniform { width: f64 },
    /// Uniform on `[lo, hi]`.
    UniformRange { lo: f64, hi: f64 },
    /// Piecewise-constant density: `density[i]` on `[edges[i], edges[i+1])`.
    Table { edges: Vec<f64>, density: Vec<f64> },
}

impl PotentialSpec {
    pub fn uniform(width: f64) -> Result<Self> {
        let s = PotentialSpec::Uniform { width };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PotentialSpec::Uniform { width } => {
                if !(*width > 0.0 && width.is_finite()) {
                    return Err(Error::invalid("model.potential.width", "must be positive and finite"));
                }
            }
            PotentialSpec::UniformRange { lo, hi } => {
                if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                    return Err(Error::invalid("model.potential", "need finite lo < hi"));
                }
            }
            PotentialSpec::Table { edges, density } => {
                if edges.len() < 2 || density.len() + 1 != edges.len() {
                    return Err(Error::invalid(
                        "model.potential.density",
                        "need len(edges) = len(density) + 1 >= 2",
                    ));
                }
                if edges.windows(2).any(|w| !(w[0] < w[1])) || edges.iter().any(|e| !e.is_finite()) {
                    return Err(Error::invalid("model.potential.edges", "must be finite and strictly increasing"));
                }
                if density.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
                    return Err(Error::invalid("model.potential.density", "must be finite and non-negative"));
                }
                let mass: f64 = self.table_masses().iter().sum();
                if (mass - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid(
                        "model.potential.density",
                        format!("integrates to {mass}, not 1"),
                    ));
                }
            }
        }
        Ok(())
    }

    fn table_masses(&self) -> Vec<f64> {
        match self {
            PotentialSpec::Table { edges, density } => density
                .iter()
                .zip(edges.windows(2))
                .map(|(p, w)| p * (w[1] - w[0]))
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Support `[lo, hi]`.
    pub fn support(&self) -> (f64, f64) {
        match self {
            PotentialSpec::Uniform { width } => (-width / 2.0, width / 2.0),
            PotentialSpec::UniformRange { lo, hi } => (*lo, *hi),
            PotentialSpec::Table { edges, .. } => (edges[0], edges[edges.len() - 1]),
        }
    }

    /// `||ρ||_∞`.
    pub fn rho_sup(&self) -> f64 {
        match self {
            PotentialSpec::Table { density, .. } => density.iter().cloned().fold(0.0, f64::max),
            _ => {
                let (lo, hi) = self.support();
                1.0 / (hi - lo)
            }
        }
    }

    pub fn density(&self, v: f64) -> f64 {
        match self {
            PotentialSpec::Table { edges, density } => {
                if v < edges[0] || v >= edges[edges.len() - 1] {
                    return 0.0;
                }
                let i = edges.partition_point(|&e| e <= v) - 1;
                density[i]
            }
            _ => {
                let (lo, hi) = self.support();
                if v >= lo && v <= hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn cdf(&self, v: f64) -> f64 {
        match self {
            PotentialSpec::Table { edges, density } => {
                let mut acc = 0.0;
                for (i, w) in edges.windows(2).enumerate() {
                    if v >= w[1] {
                        acc += density[i] * (w[1] - w[0]);
                    } else {
                        if v > w[0] {
                            acc += density[i] * (v - w[0]);
                        }
                        break;
                    }
                }
                acc.min(1.0)
            }
            _ => {
                let (lo, hi) = self.support();
                ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
            }
        }
    }

    /// Quantile function, used for sampling.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        match self {
            PotentialSpec::Table { edges, density } => {
                let mut acc = 0.0;
                for (i, w) in edges.windows(2).enumerate() {
                    let m = density[i] * (w[1] - w[0]);
                    if m > 0.0 && u <= acc + m {
                        return w[0] + (u - acc) / density[i];
                    }
                    acc += m;
                }
                // roundoff at u ≈ 1: last bin with positive mass
                let last = density.iter().rposition(|&p| p > 0.0).unwrap_or(density.len() - 1);
                edges[last + 1]
            }
            _ => {
                let (lo, hi) = self.support();
                lo + u * (hi - lo)
            }
        }
    }
}

/// One realization of `H_Λ = Δ + V` with Dirichlet truncation.
///
/// The Laplacian is implicit: sites at `|x - y|₁ = 1` inside the box are
/// coupled with weight `hopping` (1 for the Anderson model).
#[derive(Clone, Debug, PartialEq)]
pub struct DisorderedOperator {
    lattice: LatticeBox,
    potential: Vec<f64>,
    hopping: f64,
    seed: Option<u64>,
}

/// Potential key for a master seed; shared by every box sampled from it.
fn potential_rng(seed: u64) -> CounterRng {
    CounterRng::new(seed).derive_label("potential")
}

/// Draw `V_x = F^{-1}(U(seed, x))` at every site of `lattice`.
///
/// The value at a site depends only on the seed and the site's global
/// coordinates, so sub-boxes sampled with the same seed see the same
/// potential as the parent.
pub fn sample_operator(lattice: &LatticeBox, spec: &PotentialSpec, seed: u64) -> Result<DisorderedOperator> {
    spec.validate()?;
    let rng = potential_rng(seed);
    let potential = if lattice.dimension() == 1 {
        (lattice.lower()[0]..=lattice.upper()[0])
            .map(|x| spec.inverse_cdf(rng.site_uniform(&[x])))
            .collect()
    } else {
        lattice.sites().map(|s| spec.inverse_cdf(rng.site_uniform(&s))).collect()
    };
    Ok(DisorderedOperator {
        lattice: lattice.clone(),
        potential,
        hopping: 1.0,
        seed: Some(seed),
    })
}

impl DisorderedOperator {
    /// Operator with an explicit potential vector (row-major site order).
    pub fn from_potential(lattice: LatticeBox, potential: Vec<f64>) -> Result<Self> {
        if potential.len() != lattice.site_count() {
            return Err(Error::DimensionMismatch {
                expected: lattice.site_count(),
                got: potential.len(),
            });
        }
        Ok(Self {
            lattice,
            potential,
            hopping: 1.0,
            seed: None,
        })
    }

    /// Replace the hopping weight. `0.0` switches the Laplacian off, which
    /// makes the spectrum the potential values themselves.
    pub fn with_hopping(mut self, hopping: f64) -> Self {
        self.hopping = hopping;
        self
    }

    pub fn lattice(&self) -> &LatticeBox {
        &self.lattice
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn hopping(&self) -> f64 {
        self.hopping
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn dimension(&self) -> usize {
        self.lattice.dimension()
    }

    pub fn site_count(&self) -> usize {
        self.potential.len()
    }

    /// Dirichlet restriction to `sub`, keeping the parent's potential values.
    pub fn restrict(&self, sub: &LatticeBox) -> Result<DisorderedOperator> {
        if !self.lattice.contains_box(sub) {
            return Err(Error::NotContained {
                sub: sub.to_string(),
                parent: self.lattice.to_string(),
            });
        }
        let potential = if sub.dimension() == 1 {
            let start = (sub.lower()[0] - self.lattice.lower()[0]) as usize;
            self.potential[start..start + sub.site_count()].to_vec()
        } else {
            sub.sites()
                .map(|s| self.potential[self.lattice.index_of(&s).expect("contained")])
                .collect()
        };
        Ok(DisorderedOperator {
            lattice: sub.clone(),
            potential,
            hopping: self.hopping,
            seed: self.seed,
        })
    }

    /// `Hv`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        let n = self.site_count();
        if v.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: v.len() });
        }
        let mut out: Vec<f64> = self.potential.iter().zip(v).map(|(p, x)| p * x).collect();
        let t = self.hopping;
        let strides = self.lattice.strides();
        let extents = self.lattice.extents();
        for (&stride, &extent) in strides.iter().zip(&extents) {
            // couple i and i + stride whenever they share the other coordinates
            for i in 0..n {
                if (i / stride) % extent + 1 < extent {
                    let j = i + stride;
                    out[i] += t * v[j];
                    out[j] += t * v[i];
                }
            }
        }
        Ok(out)
    }

    /// Nearest neighbours of site index `i` inside the box.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        let strides = self.lattice.strides();
        let extents = self.lattice.extents();
        let mut out = Vec::with_capacity(2 * strides.len());
        for (&stride, &extent) in strides.iter().zip(&extents) {
            let c = (i / stride) % extent;
            if c > 0 {
                out.push(i - stride);
            }
            if c + 1 < extent {
                out.push(i + stride);
            }
        }
        out
    }

    /// Matrix entry `H(i, j)`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.potential[i]
        } else if self.neighbors(i).contains(&j) {
            self.hopping
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.site_count();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.potential[i];
            for j in self.neighbors(i) {
                m[(i, j)] = self.hopping;
            }
        }
        m
    }

    /// Gershgorin enclosure of the spectrum.
    pub fn spectral_bounds(&self) -> (f64, f64) {
        let lo = self.potential.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.potential.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let r = 2.0 * self.dimension() as f64 * self.hopping.abs();
        (lo - r, hi + r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::make_box;
    use proptest::prelude::*;

    fn line(lo: i64, hi: i64) -> LatticeBox {
        LatticeBox::new(vec![lo], vec![hi]).unwrap()
    }

    #[test]
    fn sampling_is_reproducible_and_supported() {
        let b = line(0, 4);
        let spec = PotentialSpec::UniformRange { lo: 0.0, hi: 1.0 };
        let a = sample_operator(&b, &spec, 11).unwrap();
        assert_eq!(a.potential(), sample_operator(&b, &spec, 11).unwrap().potential());
        assert_ne!(a.potential(), sample_operator(&b, &spec, 12).unwrap().potential());

        let w = 3.0;
        let op = sample_operator(&b, &PotentialSpec::uniform(w).unwrap(), 5).unwrap();
        assert!(op.potential().iter().all(|v| v.abs() <= w / 2.0));
    }

    #[test]
    fn sampled_potential_is_uniform() {
        let b = line(0, 99_999);
        let op = sample_operator(&b, &PotentialSpec::UniformRange { lo: 0.0, hi: 1.0 }, 3).unwrap();
        let mut v = op.potential().to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let ks = v
            .iter()
            .enumerate()
            .map(|(i, &x)| (x - i as f64 / n).max((i + 1) as f64 / n - x))
            .fold(0.0, f64::max);
        assert!(ks < 0.01, "KS = {ks}");
    }

    #[test]
    fn table_density_validation_and_sampling() {
        let spec = PotentialSpec::Table {
            edges: vec![-1.0, 0.0, 2.0],
            density: vec![0.5, 0.25],
        };
        spec.validate().unwrap();
        assert_eq!(spec.rho_sup(), 0.5);
        assert!((spec.cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((spec.inverse_cdf(0.75) - 1.0).abs() < 1e-15);
        let bad = PotentialSpec::Table {
            edges: vec![0.0, 1.0],
            density: vec![0.9],
        };
        assert!(bad.validate().is_err());
        assert!(PotentialSpec::uniform(0.0).is_err());
    }

    #[test]
    fn apply_examples() {
        let op = DisorderedOperator::from_potential(line(0, 2), vec![0.0; 3]).unwrap();
        assert_eq!(op.apply(&[1.0, 0.0, 0.0]).unwrap(), vec![0.0, 1.0, 0.0]);
        let op = DisorderedOperator::from_potential(line(4, 4), vec![3.0]).unwrap();
        assert_eq!(op.apply(&[1.0]).unwrap(), vec![3.0]);
        assert!(matches!(op.apply(&[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn restriction_examples() {
        let parent = sample_operator(&line(-2, 2), &PotentialSpec::uniform(4.0).unwrap(), 9).unwrap();
        assert_eq!(parent.restrict(parent.lattice()).unwrap(), parent);
        let sub = parent.restrict(&line(0, 2)).unwrap();
        assert_eq!(sub.potential(), &parent.potential()[2..5]);
        let m = sub.to_dense();
        assert_eq!(m[(0, 1)], 1.0);
        assert_eq!(m[(0, 2)], 0.0);
        assert!(matches!(parent.restrict(&line(0, 3)), Err(Error::NotContained { .. })));
    }

    #[test]
    fn restriction_matches_fresh_sample() {
        let spec = PotentialSpec::uniform(4.0).unwrap();
        let parent_box = make_box(6.0, 2, &[0.3, -0.2], 0.0).unwrap();
        let parent = sample_operator(&parent_box, &spec, 77).unwrap();
        let sub_box = LatticeBox::new(vec![-2, 0], vec![1, 4]).unwrap();
        let fresh = sample_operator(&sub_box, &spec, 77).unwrap();
        assert_eq!(parent.restrict(&sub_box).unwrap(), fresh);
    }

    #[test]
    fn restricted_matvec_agrees_on_interior_vectors() {
        let spec = PotentialSpec::uniform(2.0).unwrap();
        let parent = sample_operator(&LatticeBox::new(vec![0, 0], vec![7, 7]).unwrap(), &spec, 1).unwrap();
        let sub_box = LatticeBox::new(vec![2, 1], vec![6, 5]).unwrap();
        let sub = parent.restrict(&sub_box).unwrap();
        let rng = CounterRng::new(4);
        let mut v_parent = vec![0.0; parent.site_count()];
        let mut v_sub = vec![0.0; sub.site_count()];
        for (i, s) in sub_box.sites().enumerate() {
            if sub_box.face_distance(&s) > 0 {
                let x = rng.uniform(i as u64) - 0.5;
                v_sub[i] = x;
                v_parent[parent.lattice().index_of(&s).unwrap()] = x;
            }
        }
        let hp = parent.apply(&v_parent).unwrap();
        let hs = sub.apply(&v_sub).unwrap();
        for (i, s) in sub_box.sites().enumerate() {
            assert!((hs[i] - hp[parent.lattice().index_of(&s).unwrap()]).abs() < 1e-15);
        }
    }

    #[test]
    fn dense_matches_apply() {
        let op = sample_operator(&LatticeBox::new(vec![0, 0, 0], vec![2, 3, 1]).unwrap(), &PotentialSpec::uniform(1.0).unwrap(), 2)
            .unwrap();
        let m = op.to_dense();
        assert_eq!(m, m.transpose());
        for j in 0..op.site_count() {
            let mut e = vec![0.0; op.site_count()];
            e[j] = 1.0;
            let col = op.apply(&e).unwrap();
            for i in 0..op.site_count() {
                assert_eq!(col[i], m[(i, j)]);
                assert_eq!(op.entry(i, j), m[(i, j)]);
            }
        }
    }

    proptest! {
        #[test]
        fn operator_is_symmetric(seed in any::<u64>(), ex in 1i64..6, ey in 1i64..6) {
            let b = LatticeBox::new(vec![0, 0], vec![ex, ey]).unwrap();
            let op = sample_operator(&b, &PotentialSpec::uniform(3.0).unwrap(), seed).unwrap();
            let rng = CounterRng::new(seed);
            let n = op.site_count() as u64;
            let u: Vec<f64> = (0..n).map(|i| rng.uniform(i) - 0.5).collect();
            let v: Vec<f64> = (0..n).map(|i| rng.uniform(n + i) - 0.5).collect();
            let hu = op.apply(&u).unwrap();
            let hv = op.apply(&v).unwrap();
            let lhs: f64 = u.iter().zip(&hv).map(|(a, b)| a * b).sum();
            let rhs: f64 = hu.iter().zip(&v).map(|(a, b)| a * b).sum();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
