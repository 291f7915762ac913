//! Dense Bunch–Kaufman `LDLᵀ` and block-tridiagonal inertia.
//!
//! For `d ≥ 2` the operator is block tridiagonal (see [`BlockLayout`]), so
//! `H - σI` is congruent to `diag(S_0, …, S_{B-1})` with Schur complements
//! `S_t = A_t - σI - t²·S_{t-1}^{-1}`. The inertia of `H - σI` is the sum of
//! the block inertias, each read off a symmetric-pivoting factorization.

use super::layout::BlockLayout;
use crate::hamiltonian::DisorderedOperator;

const ALPHA: f64 = 0.640_388_203_202_207_6; // (1 + √17) / 8

#[derive(Clone, Copy, Debug)]
enum Pivot {
    One(usize),
    Two(usize),
}

/// `P A Pᵀ = L D Lᵀ` with unit lower `L` stored below the diagonal of `a`
/// and 1×1/2×2 blocks of `D` on its block diagonal.
pub(crate) struct BunchKaufman {
    n: usize,
    a: Vec<f64>,
    swaps: Vec<(usize, usize)>,
    pivots: Vec<Pivot>,
}

/// Position of an exactly singular pivot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ZeroPivot {
    pub at: usize,
}

impl BunchKaufman {
    /// Factor a symmetric row-major `n × n` matrix (both triangles filled).
    pub fn factor(mut a: Vec<f64>, n: usize) -> Result<Self, ZeroPivot> {
        debug_assert_eq!(a.len(), n * n);
        let mut swaps = Vec::new();
        let mut pivots = Vec::new();
        let mut k = 0;
        let mut c1 = vec![0.0; n];
        let mut c2 = vec![0.0; n];
        while k < n {
            let absakk = a[k * n + k].abs();
            let (mut imax, mut colmax) = (k, 0.0f64);
            for i in k + 1..n {
                let v = a[i * n + k].abs();
                if v > colmax {
                    imax = i;
                    colmax = v;
                }
            }
            if absakk.max(colmax) == 0.0 {
                return Err(ZeroPivot { at: k });
            }
            let (kp, kstep) = if absakk >= ALPHA * colmax {
                (k, 1)
            } else {
                let rowmax = (k..n)
                    .filter(|&j| j != imax)
                    .map(|j| a[imax * n + j].abs())
                    .fold(0.0, f64::max);
                if absakk * rowmax >= ALPHA * colmax * colmax {
                    (k, 1)
                } else if a[imax * n + imax].abs() >= ALPHA * rowmax {
                    (imax, 1)
                } else {
                    (imax, 2)
                }
            };
            let kk = k + kstep - 1;
            if kp != kk {
                for j in 0..n {
                    a.swap(kk * n + j, kp * n + j);
                }
                for i in 0..n {
                    a.swap(i * n + kk, i * n + kp);
                }
                swaps.push((kk, kp));
            }
            if kstep == 1 {
                let d = a[k * n + k];
                for i in k + 1..n {
                    c1[i] = a[i * n + k];
                }
                for i in k + 1..n {
                    let l = c1[i] / d;
                    let row = &mut a[i * n..(i + 1) * n];
                    for j in k + 1..n {
                        row[j] -= l * c1[j];
                    }
                    row[k] = l;
                }
                pivots.push(Pivot::One(k));
            } else {
                let d11 = a[k * n + k];
                let d21 = a[(k + 1) * n + k];
                let d22 = a[(k + 1) * n + k + 1];
                let det = d11 * d22 - d21 * d21;
                if det == 0.0 {
                    return Err(ZeroPivot { at: k });
                }
                for i in k + 2..n {
                    c1[i] = a[i * n + k];
                    c2[i] = a[i * n + k + 1];
                }
                for i in k + 2..n {
                    let l1 = (d22 * c1[i] - d21 * c2[i]) / det;
                    let l2 = (d11 * c2[i] - d21 * c1[i]) / det;
                    let row = &mut a[i * n..(i + 1) * n];
                    for j in k + 2..n {
                        row[j] -= l1 * c1[j] + l2 * c2[j];
                    }
                    row[k] = l1;
                    row[k + 1] = l2;
                }
                pivots.push(Pivot::Two(k));
            }
            k += kstep;
        }
        Ok(Self { n, a, swaps, pivots })
    }

    /// `(negative, positive)` eigenvalue counts of the factored matrix.
    pub fn inertia(&self) -> (usize, usize) {
        let n = self.n;
        let (mut neg, mut pos) = (0, 0);
        for p in &self.pivots {
            match *p {
                Pivot::One(k) => {
                    if self.a[k * n + k] < 0.0 {
                        neg += 1
                    } else {
                        pos += 1
                    }
                }
                Pivot::Two(k) => {
                    let d11 = self.a[k * n + k];
                    let d21 = self.a[(k + 1) * n + k];
                    let d22 = self.a[(k + 1) * n + k + 1];
                    let det = d11 * d22 - d21 * d21;
                    if det < 0.0 {
                        neg += 1;
                        pos += 1;
                    } else if d11 + d22 < 0.0 {
                        neg += 2;
                    } else {
                        pos += 2;
                    }
                }
            }
        }
        (neg, pos)
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.n;
        let a = &self.a;
        for &(i, j) in &self.swaps {
            x.swap(i, j);
        }
        for p in &self.pivots {
            match *p {
                Pivot::One(k) => {
                    let xk = x[k];
                    for i in k + 1..n {
                        x[i] -= a[i * n + k] * xk;
                    }
                }
                Pivot::Two(k) => {
                    let (x1, x2) = (x[k], x[k + 1]);
                    for i in k + 2..n {
                        x[i] -= a[i * n + k] * x1 + a[i * n + k + 1] * x2;
                    }
                }
            }
        }
        for p in &self.pivots {
            match *p {
                Pivot::One(k) => x[k] /= a[k * n + k],
                Pivot::Two(k) => {
                    let d11 = a[k * n + k];
                    let d21 = a[(k + 1) * n + k];
                    let d22 = a[(k + 1) * n + k + 1];
                    let det = d11 * d22 - d21 * d21;
                    let (x1, x2) = (x[k], x[k + 1]);
                    x[k] = (d22 * x1 - d21 * x2) / det;
                    x[k + 1] = (d11 * x2 - d21 * x1) / det;
                }
            }
        }
        for p in self.pivots.iter().rev() {
            let (k, size) = match *p {
                Pivot::One(k) => (k, 1),
                Pivot::Two(k) => (k, 2),
            };
            for c in k..k + size {
                let mut s = 0.0;
                for i in k + size..n {
                    s += a[i * n + c] * x[i];
                }
                x[c] -= s;
            }
        }
        for &(i, j) in self.swaps.iter().rev() {
            x.swap(i, j);
        }
    }

    /// Row-major inverse.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            col.iter_mut().for_each(|v| *v = 0.0);
            col[j] = 1.0;
            self.solve_in_place(&mut col);
            for i in 0..n {
                inv[i * n + j] = col[i];
            }
        }
        inv
    }
}

/// Outcome of a block sweep, in the same shape as the tridiagonal one.
pub(crate) struct BlockSweep {
    pub negative: usize,
    pub last_zero: bool,
    pub breakdown: bool,
}

pub(crate) fn block_inertia(op: &DisorderedOperator, layout: &BlockLayout, shift: f64) -> BlockSweep {
    let m = layout.width;
    let v = op.potential();
    let h = op.hopping();
    let h2 = h * h;
    let mut negative = 0;
    let mut prev_inv: Option<Vec<f64>> = None;
    for t in 0..layout.blocks {
        let sites = layout.block_sites(t);
        let mut s = match prev_inv.take() {
            Some(inv) => inv.into_iter().map(|x| -h2 * x).collect(),
            None => vec![0.0; m * m],
        };
        for (j, &g) in sites.iter().enumerate() {
            s[j * m + j] += v[g] - shift;
        }
        for &(i, j) in &layout.edges {
            s[i * m + j] += h;
            s[j * m + i] += h;
        }
        match BunchKaufman::factor(s, m) {
            Ok(f) => {
                negative += f.inertia().0;
                if t + 1 < layout.blocks {
                    let inv = f.inverse();
                    if inv.iter().any(|x| !x.is_finite()) {
                        return BlockSweep {
                            negative,
                            last_zero: false,
                            breakdown: true,
                        };
                    }
                    prev_inv = Some(inv);
                }
            }
            Err(ZeroPivot { at }) => {
                let last = t + 1 == layout.blocks && at + 1 == m;
                return BlockSweep {
                    negative,
                    last_zero: last,
                    breakdown: !last,
                };
            }
        }
    }
    BlockSweep {
        negative,
        last_zero: false,
        breakdown: false,
    }
}
