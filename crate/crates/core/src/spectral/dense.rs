//! Full-spectrum oracle.

use crate::error::{Error, Result};
use crate::hamiltonian::DisorderedOperator;

pub const DEFAULT_DENSE_CAP: usize = 4096;

/// Eigenvalues of a symmetric tridiagonal matrix by implicit QL with
/// Wilkinson-type shifts; `off[i]` couples `i` and `i + 1`.
pub fn tridiagonal_eigenvalues(diag: &[f64], off: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut d = diag.to_vec();
    if n <= 1 {
        return Ok(d);
    }
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(&off[..n - 1]);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Factorization {
                    shift: d[l],
                    reason: "tridiagonal QL did not converge".into(),
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0f64, 1.0f64, 0.0f64);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d.sort_by(f64::total_cmp);
    Ok(d)
}

/// All eigenvalues, ascending. Refuses boxes above `cap` sites.
pub fn dense_spectrum_with_cap(op: &DisorderedOperator, cap: usize) -> Result<Vec<f64>> {
    let n = op.site_count();
    if n > cap {
        return Err(Error::DenseCapExceeded { sites: n, cap });
    }
    if op.dimension() == 1 {
        let off = vec![op.hopping(); n.saturating_sub(1)];
        return tridiagonal_eigenvalues(op.potential(), &off);
    }
    let mut ev: Vec<f64> = op.to_dense().symmetric_eigenvalues().iter().cloned().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

pub fn dense_spectrum(op: &DisorderedOperator) -> Result<Vec<f64>> {
    dense_spectrum_with_cap(op, DEFAULT_DENSE_CAP)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{sample_operator, PotentialSpec};
    use crate::lattice::LatticeBox;
    use std::f64::consts::PI;

    #[test]
    fn path_graph_spectrum() {
        for n in [1usize, 2, 3, 10, 257] {
            let op = DisorderedOperator::from_potential(LatticeBox::new(vec![0], vec![n as i64 - 1]).unwrap(), vec![0.0; n])
                .unwrap();
            let ev = dense_spectrum(&op).unwrap();
            let mut want: Vec<f64> = (1..=n).map(|k| 2.0 * (k as f64 * PI / (n as f64 + 1.0)).cos()).collect();
            want.sort_by(f64::total_cmp);
            for (a, b) in ev.iter().zip(&want) {
                assert!((a - b).abs() < 1e-10, "n = {n}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn trace_identity_and_agreement_with_general_solver() {
        let b = LatticeBox::new(vec![0], vec![199]).unwrap();
        let op = sample_operator(&b, &PotentialSpec::uniform(4.0).unwrap(), 3).unwrap();
        let ql = dense_spectrum(&op).unwrap();
        let mut general: Vec<f64> = op.to_dense().symmetric_eigenvalues().iter().cloned().collect();
        general.sort_by(f64::total_cmp);
        for (a, b) in ql.iter().zip(&general) {
            assert!((a - b).abs() < 1e-10);
        }
        let tr: f64 = op.potential().iter().sum();
        assert!((ql.iter().sum::<f64>() - tr).abs() <= 1e-9 * tr.abs().max(1.0));
    }

    #[test]
    fn single_site_and_cap() {
        let op = DisorderedOperator::from_potential(LatticeBox::new(vec![3, 3], vec![3, 3]).unwrap(), vec![1.25]).unwrap();
        assert_eq!(dense_spectrum(&op).unwrap(), vec![1.25]);
        let big = DisorderedOperator::from_potential(LatticeBox::new(vec![0], vec![9]).unwrap(), vec![0.0; 10]).unwrap();
        assert!(matches!(dense_spectrum_with_cap(&big, 5), Err(Error::DenseCapExceeded { sites: 10, cap: 5 })));
    }
}
