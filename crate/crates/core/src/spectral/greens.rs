//! Resolvent entries `G(x, y; z) = ⟨x, (H - z)^{-1} y⟩` by block-tridiagonal
//! elimination.
//!
//! Forward pivots are `g_t = (A_t - z - t²·g_{t-1})^{-1}`. With `Im z > 0`
//! every pivot has strictly negative-definite imaginary part, so the sweep
//! cannot break down; the diagonal of the inverse follows from one forward
//! and one backward sweep.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::layout::BlockLayout;
use crate::error::{Error, Result};
use crate::hamiltonian::DisorderedOperator;

/// Smallest `Im z` accepted by the solvers.
pub const MIN_IM_Z: f64 = 1e-14;

pub(crate) fn check_z(z: Complex64) -> Result<()> {
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::invalid("z", "must be finite"));
    }
    if z.im <= 0.0 {
        return Err(Error::invalid("z", format!("Im z = {} must be positive", z.im)));
    }
    if z.im < MIN_IM_Z {
        return Err(Error::Conditioning { im: z.im });
    }
    Ok(())
}

fn finite_or_conditioning(v: &[Complex64], z: Complex64) -> Result<()> {
    if v.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::Conditioning { im: z.im })
    }
}

/// Full column `(H - z)^{-1} δ_y`.
pub fn resolvent_column(op: &DisorderedOperator, y: usize, z: Complex64) -> Result<Vec<Complex64>> {
    check_z(z)?;
    let n = op.site_count();
    if y >= n {
        return Err(Error::invalid("y", format!("site index {y} outside box of {n} sites")));
    }
    let out = if op.dimension() == 1 {
        column_1d(op.potential(), op.hopping(), y, z)
    } else {
        column_blocks(op, y, z)?
    };
    finite_or_conditioning(&out, z)?;
    Ok(out)
}

fn column_1d(v: &[f64], t: f64, y: usize, z: Complex64) -> Vec<Complex64> {
    let n = v.len();
    let t2 = t * t;
    let mut inv_pivot = vec![Complex64::new(0.0, 0.0); n];
    let mut rhs = vec![Complex64::new(0.0, 0.0); n];
    let mut prev_inv = Complex64::new(0.0, 0.0);
    let mut prev_rhs = Complex64::new(0.0, 0.0);
    for i in 0..n {
        let p = Complex64::new(v[i], 0.0) - z - t2 * prev_inv;
        let b = if i == y { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) };
        let g = b - t * prev_inv * prev_rhs;
        prev_inv = p.inv();
        prev_rhs = g;
        inv_pivot[i] = prev_inv;
        rhs[i] = g;
    }
    let mut u = vec![Complex64::new(0.0, 0.0); n];
    let mut next = Complex64::new(0.0, 0.0);
    for i in (0..n).rev() {
        next = inv_pivot[i] * (rhs[i] - t * next);
        u[i] = next;
    }
    u
}

fn block_matrix(op: &DisorderedOperator, layout: &BlockLayout, t: usize, z: Complex64) -> DMatrix<Complex64> {
    let m = layout.width;
    let h = Complex64::new(op.hopping(), 0.0);
    let mut a = DMatrix::<Complex64>::zeros(m, m);
    for (j, &g) in layout.block_sites(t).iter().enumerate() {
        a[(j, j)] = Complex64::new(op.potential()[g], 0.0) - z;
    }
    for &(i, j) in &layout.edges {
        a[(i, j)] = h;
        a[(j, i)] = h;
    }
    a
}

fn invert(m: DMatrix<Complex64>, z: Complex64) -> Result<DMatrix<Complex64>> {
    m.try_inverse().ok_or(Error::Conditioning { im: z.im })
}

fn column_blocks(op: &DisorderedOperator, y: usize, z: Complex64) -> Result<Vec<Complex64>> {
    let layout = BlockLayout::new(op);
    let (nb, m) = (layout.blocks, layout.width);
    let h = op.hopping();
    let h2 = Complex64::new(h * h, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let mut g_left: Vec<DMatrix<Complex64>> = Vec::with_capacity(nb);
    let mut rhs: Vec<nalgebra::DVector<Complex64>> = Vec::with_capacity(nb);
    for t in 0..nb {
        let mut a = block_matrix(op, &layout, t, z);
        let mut b = nalgebra::DVector::from_iterator(
            m,
            layout
                .block_sites(t)
                .iter()
                .map(|&g| if g == y { Complex64::new(1.0, 0.0) } else { zero }),
        );
        if t > 0 {
            a -= &g_left[t - 1] * h2;
            b -= (&g_left[t - 1] * &rhs[t - 1]) * Complex64::new(h, 0.0);
        }
        g_left.push(invert(a, z)?);
        rhs.push(b);
    }
    let mut out = vec![zero; op.site_count()];
    let mut next = nalgebra::DVector::<Complex64>::zeros(m);
    for t in (0..nb).rev() {
        let u = &g_left[t] * (&rhs[t] - &next * Complex64::new(h, 0.0));
        for (j, &g) in layout.block_sites(t).iter().enumerate() {
            out[g] = u[j];
        }
        next = u;
    }
    Ok(out)
}

/// Single entry `G(x, y; z)`.
pub fn greens_entry(op: &DisorderedOperator, x: usize, y: usize, z: Complex64) -> Result<Complex64> {
    if x >= op.site_count() {
        return Err(Error::invalid("x", format!("site index {x} outside box")));
    }
    Ok(resolvent_column(op, y, z)?[x])
}

/// Diagonal of `(H - z)^{-1}`.
pub fn resolvent_diagonal(op: &DisorderedOperator, z: Complex64) -> Result<Vec<Complex64>> {
    check_z(z)?;
    let out = if op.dimension() == 1 {
        diagonal_1d(op.potential(), op.hopping(), z)
    } else {
        diagonal_blocks(op, z)?
    };
    finite_or_conditioning(&out, z)?;
    Ok(out)
}

fn diagonal_1d(v: &[f64], t: f64, z: Complex64) -> Vec<Complex64> {
    let n = v.len();
    let t2 = t * t;
    let zero = Complex64::new(0.0, 0.0);
    // left[i]: forward pivot at i; right[i]: backward pivot at i
    let mut left = vec![zero; n];
    let mut prev = zero;
    for i in 0..n {
        let p = Complex64::new(v[i], 0.0) - z - if i > 0 { t2 / prev } else { zero };
        left[i] = p;
        prev = p;
    }
    let mut out = vec![zero; n];
    let mut right_next = zero;
    for i in (0..n).rev() {
        let diag = Complex64::new(v[i], 0.0) - z;
        let from_right = if i + 1 < n { t2 / right_next } else { zero };
        out[i] = (left[i] - from_right).inv();
        right_next = diag - from_right;
    }
    out
}

fn diagonal_blocks(op: &DisorderedOperator, z: Complex64) -> Result<Vec<Complex64>> {
    let layout = BlockLayout::new(op);
    let nb = layout.blocks;
    let h2 = Complex64::new(op.hopping() * op.hopping(), 0.0);
    let mut schur_left: Vec<DMatrix<Complex64>> = Vec::with_capacity(nb);
    let mut prev_inv: Option<DMatrix<Complex64>> = None;
    for t in 0..nb {
        let mut a = block_matrix(op, &layout, t, z);
        if let Some(g) = &prev_inv {
            a -= g * h2;
        }
        prev_inv = Some(invert(a.clone(), z)?);
        schur_left.push(a);
    }
    let mut out = vec![Complex64::new(0.0, 0.0); op.site_count()];
    let mut right_inv: Option<DMatrix<Complex64>> = None;
    for t in (0..nb).rev() {
        let a = block_matrix(op, &layout, t, z);
        let coupling = right_inv.as_ref().map(|g| g * h2);
        let mut full = schur_left[t].clone();
        let mut right = a;
        if let Some(c) = &coupling {
            full -= c;
            right -= c;
        }
        let g = invert(full, z)?;
        for (j, &site) in layout.block_sites(t).iter().enumerate() {
            out[site] = g[(j, j)];
        }
        if t > 0 {
            right_inv = Some(invert(right, z)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{sample_operator, PotentialSpec};
    use crate::lattice::LatticeBox;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn scalar_resolvent() {
        let op = DisorderedOperator::from_potential(LatticeBox::new(vec![0], vec![0]).unwrap(), vec![2.0]).unwrap();
        let g = greens_entry(&op, 0, 0, c(0.0, 1.0)).unwrap();
        assert!((g - c(0.4, 0.2)).norm() < 1e-15);
    }

    #[test]
    fn two_site_schur_complement() {
        let (v0, v1) = (0.3, -1.1);
        let op = DisorderedOperator::from_potential(LatticeBox::new(vec![0], vec![1]).unwrap(), vec![v0, v1]).unwrap();
        let z = c(0.2, 0.05);
        let want = (c(v0, 0.0) - z - (c(v1, 0.0) - z).inv()).inv();
        assert!((greens_entry(&op, 0, 0, z).unwrap() - want).norm() < 1e-12);
        assert!((resolvent_diagonal(&op, z).unwrap()[0] - want).norm() < 1e-12);
    }

    fn residual(op: &DisorderedOperator, y: usize, z: Complex64) -> f64 {
        let u = resolvent_column(op, y, z).unwrap();
        let n = op.site_count();
        let re: Vec<f64> = u.iter().map(|c| c.re).collect();
        let im: Vec<f64> = u.iter().map(|c| c.im).collect();
        let hre = op.apply(&re).unwrap();
        let him = op.apply(&im).unwrap();
        (0..n)
            .map(|i| {
                let hu = c(hre[i], him[i]) - z * u[i];
                let e = if i == y { c(1.0, 0.0) } else { c(0.0, 0.0) };
                (hu - e).norm()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn residuals_are_small() {
        let spec = PotentialSpec::uniform(4.0).unwrap();
        for (k, b) in [
            LatticeBox::new(vec![0], vec![300]).unwrap(),
            LatticeBox::new(vec![0, 0], vec![9, 13]).unwrap(),
            LatticeBox::new(vec![0, 0, 0], vec![4, 3, 5]).unwrap(),
        ]
        .iter()
        .enumerate()
        {
            let op = sample_operator(b, &spec, 10 + k as u64).unwrap();
            for y in [0, op.site_count() / 3, op.site_count() - 1] {
                assert!(residual(&op, y, c(0.1, 0.01)) < 1e-10);
            }
        }
    }

    #[test]
    fn symmetric_and_diagonal_consistent() {
        let spec = PotentialSpec::uniform(3.0).unwrap();
        let op = sample_operator(&LatticeBox::new(vec![0, 0], vec![6, 8]).unwrap(), &spec, 4).unwrap();
        let z = c(-0.4, 0.02);
        let diag = resolvent_diagonal(&op, z).unwrap();
        for (x, y) in [(0, 5), (3, 40), (17, 62)] {
            let gxy = greens_entry(&op, x, y, z).unwrap();
            let gyx = greens_entry(&op, y, x, z).unwrap();
            assert!((gxy - gyx).norm() < 1e-10);
        }
        for x in 0..op.site_count() {
            let g = greens_entry(&op, x, x, z).unwrap();
            assert!((g - diag[x]).norm() < 1e-10);
            assert!(g.im > 0.0);
        }
        let op1 = sample_operator(&LatticeBox::new(vec![0], vec![50]).unwrap(), &spec, 4).unwrap();
        let d1 = resolvent_diagonal(&op1, z).unwrap();
        for x in 0..51 {
            assert!((greens_entry(&op1, x, x, z).unwrap() - d1[x]).norm() < 1e-10);
        }
    }

    #[test]
    fn rejects_tiny_im_z() {
        let op = DisorderedOperator::from_potential(LatticeBox::new(vec![0], vec![0]).unwrap(), vec![2.0]).unwrap();
        assert!(matches!(greens_entry(&op, 0, 0, c(0.0, 1e-16)), Err(Error::Conditioning { .. })));
        assert!(greens_entry(&op, 0, 0, c(0.0, -1.0)).is_err());
    }
}
