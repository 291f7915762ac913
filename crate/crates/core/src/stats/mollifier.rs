//! The Cauchy-smoothed window indicator
//! `g_ε(x) = (1/π)(atan((x - a)/ε) - atan((x - b)/ε))`
//! and its distance to `χ_(a,b)` in L¹.

use std::f64::consts::PI;

use crate::error::{Error, Result};

fn check(eps: f64, a: f64, b: f64) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::invalid("eps", format!("{eps} must be positive and finite")));
    }
    if !(a < b) {
        return Err(Error::invalid("a/b", format!("need a < b, got a = {a}, b = {b}")));
    }
    Ok(())
}

pub fn mollifier_eval(x: f64, eps: f64, a: f64, b: f64) -> Result<f64> {
    check(eps, a, b)?;
    Ok((((x - a) / eps).atan() - ((x - b) / eps).atan()) / PI)
}

/// `(A_ε(x), B_ε(x))` with `∫ g_ε = A_ε - B_ε`:
/// `A = (1/π)[(x-a)·atan((x-a)/ε) - (x-b)·atan((x-b)/ε)]`,
/// `B = (ε/2π)[ln(1 + ((x-a)/ε)²) - ln(1 + ((x-b)/ε)²)]`.
pub fn mollifier_antiderivative_parts(x: f64, eps: f64, a: f64, b: f64) -> Result<(f64, f64)> {
    check(eps, a, b)?;
    let (u, v) = ((x - a) / eps, (x - b) / eps);
    let big_a = ((x - a) * u.atan() - (x - b) * v.atan()) / PI;
    let big_b = eps / (2.0 * PI) * (u.mul_add(u, 1.0).ln() - v.mul_add(v, 1.0).ln());
    Ok((big_a, big_b))
}

pub fn mollifier_antiderivative(x: f64, eps: f64, a: f64, b: f64) -> Result<f64> {
    let (p, q) = mollifier_antiderivative_parts(x, eps, a, b)?;
    Ok(p - q)
}

/// `‖χ_(a,b) - g_ε‖₁`.
///
/// With `F = A_ε - B_ε` and `F(±∞) = ±(b-a)/2` the error is
/// `[F(a) - F(-∞)] + [(b-a) - F(b) + F(a)] + [F(∞) - F(b)]`, which
/// simplifies (with `D = b - a`) to
/// `(4D/π)·atan(ε/D) + (2ε/π)·ln(1 + D²/ε²)`; the simplified form avoids
/// the cancellation in `F(b) - F(a) ≈ D` for small ε.
pub fn mollifier_l1_error(eps: f64, a: f64, b: f64) -> Result<f64> {
    check(eps, a, b)?;
    let d = b - a;
    let r = d / eps;
    Ok(4.0 * d / PI * (eps / d).atan() + 2.0 * eps / PI * r.mul_add(r, 1.0).ln())
}

/// The unsimplified antiderivative evaluation of the same quantity.
pub fn mollifier_l1_error_from_antiderivative(eps: f64, a: f64, b: f64) -> Result<f64> {
    let d = b - a;
    let fa = mollifier_antiderivative(a, eps, a, b)?;
    let fb = mollifier_antiderivative(b, eps, a, b)?;
    Ok((fa + d / 2.0) + (d - fb + fa) + (d / 2.0 - fb))
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// 15-point Kronrod estimate and its distance to the embedded 7-point Gauss rule.
fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let s = f(c - h * XGK[j]) + f(c + h * XGK[j]);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Globally adaptive Gauss–Kronrod quadrature of `f` on `[lo, hi]` to an
/// absolute tolerance.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, tol: f64) -> f64 {
    let (v, e) = kronrod15(f, lo, hi);
    let mut parts = vec![(lo, hi, v, e)];
    for _ in 0..4000 {
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if err <= tol {
            break;
        }
        let (worst, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (a, b, _, _) = parts.swap_remove(worst);
        let m = 0.5 * (a + b);
        let (v1, e1) = kronrod15(f, a, m);
        let (v2, e2) = kronrod15(f, m, b);
        parts.push((a, m, v1, e1));
        parts.push((m, b, v2, e2));
    }
    let mut vals: Vec<f64> = parts.iter().map(|p| p.2).collect();
    vals.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
    vals.iter().sum()
}

/// `(φ_{iε} * χ_(a,b))(x) = ∫_a^b (ε/π) / ((x - y)² + ε²) dy` by quadrature,
/// split at `x` where the kernel peaks.
pub fn mollifier_by_quadrature(x: f64, eps: f64, a: f64, b: f64) -> Result<f64> {
    check(eps, a, b)?;
    let k = |y: f64| eps / PI / ((x - y) * (x - y) + eps * eps);
    let mut cuts = vec![a];
    for c in [x - 10.0 * eps, x, x + 10.0 * eps] {
        if c > a && c < b {
            cuts.push(c);
        }
    }
    cuts.push(b);
    Ok(cuts.windows(2).map(|w| integrate(&k, w[0], w[1], 1e-13)).sum())
}

/// `‖χ_(a,b) - g_ε‖₁` by quadrature; the tails beyond `±T` use the
/// asymptotic `g_ε ≈ (ε/π)(b - a)/x²`.
pub fn mollifier_l1_error_by_quadrature(eps: f64, a: f64, b: f64) -> Result<f64> {
    check(eps, a, b)?;
    let g = |x: f64| (((x - a) / eps).atan() - ((x - b) / eps).atan()) / PI;
    let inside = |x: f64| 1.0 - g(x);
    let d = b - a;
    let reach = (1e4 * d).max(1e4 * eps);
    let pieces = |f: &dyn Fn(f64) -> f64, lo: f64, hi: f64| {
        // geometric refinement towards the singular-looking end points
        let mut total = 0.0;
        let mut edges = vec![lo, hi];
        let mut w = eps;
        while w < hi - lo {
            edges.push(lo + w);
            edges.push(hi - w);
            w *= 4.0;
        }
        edges.retain(|&e| e >= lo && e <= hi);
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        for p in edges.windows(2) {
            total += integrate(&f, p[0], p[1], 1e-13);
        }
        total
    };
    let left = pieces(&g, a - reach, a);
    let right = pieces(&g, b, b + reach);
    let mid = pieces(&inside, a, b);
    // ∫_{|x| > reach} g ≈ 2·(ε/π)·d / reach, with midpoint-centred tails
    let tails = 2.0 * eps * d / (PI * reach);
    Ok(left + right + mid + tails)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    #[test]
    fn eval_examples() {
        assert!((mollifier_eval(0.0, 1.0, 0.0, 1.0).unwrap() - 0.25).abs() < 1e-15);
        let (a, b, eps) = (-0.7f64, 1.9f64, 0.3f64);
        let want = 2.0 / PI * ((b - a) / (2.0 * eps)).atan();
        assert!((mollifier_eval(0.5 * (a + b), eps, a, b).unwrap() - want).abs() < 1e-15);
        assert!(mollifier_eval(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(mollifier_eval(0.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn eval_matches_convolution() {
        let r = CounterRng::new(6);
        for i in 0..20 {
            let x = -3.0 + 6.0 * r.uniform(2 * i);
            let eps = 10f64.powf(-3.0 + 3.0 * r.uniform(2 * i + 1));
            let (a, b) = (-1.0, 1.5);
            let q = mollifier_by_quadrature(x, eps, a, b).unwrap();
            let g = mollifier_eval(x, eps, a, b).unwrap();
            assert!((q - g).abs() < 1e-8, "x = {x}, eps = {eps}: {q} vs {g}");
        }
    }

    #[test]
    fn bounds_and_pointwise_limits() {
        let (a, b) = (-1.0, 2.0);
        for &eps in &[1.0, 0.1, 0.01, 1e-3] {
            for k in 0..=60 {
                let x = -4.0 + 0.1 * k as f64;
                let g = mollifier_eval(x, eps, a, b).unwrap();
                assert!(g > 0.0 && g < 1.0);
            }
        }
        let g_in: Vec<f64> = [1.0, 0.1, 0.01, 1e-3].iter().map(|&e| mollifier_eval(0.5, e, a, b).unwrap()).collect();
        let g_out: Vec<f64> = [1.0, 0.1, 0.01, 1e-3].iter().map(|&e| mollifier_eval(3.0, e, a, b).unwrap()).collect();
        assert!(g_in.windows(2).all(|w| w[1] > w[0]) && 1.0 - g_in[3] < 1e-3);
        assert!(g_out.windows(2).all(|w| w[1] < w[0]) && g_out[3] < 1e-3);
    }

    #[test]
    fn l1_error_closed_forms_agree() {
        for &eps in &[0.5, 0.1, 1e-2, 1e-3] {
            let s = mollifier_l1_error(eps, -1.0, 1.0).unwrap();
            let raw = mollifier_l1_error_from_antiderivative(eps, -1.0, 1.0).unwrap();
            assert!((s - raw).abs() < 1e-12, "{s} vs {raw}");
        }
    }

    #[test]
    fn l1_error_matches_quadrature() {
        for &(eps, a, b) in &[(0.1, -1.0, 1.0), (1e-3, -1.0, 1.0), (1e-5, 0.0, 2.0), (0.7, -0.2, 0.3)] {
            let c = mollifier_l1_error(eps, a, b).unwrap();
            let q = mollifier_l1_error_by_quadrature(eps, a, b).unwrap();
            assert!((c - q).abs() < 1e-8, "eps = {eps}: {c} vs {q}");
        }
    }

    #[test]
    fn l1_error_decays_almost_linearly() {
        let (a, b) = (-1.0, 1.0);
        let grid: Vec<f64> = (3..=6).map(|k| 10f64.powi(-k)).collect();
        let errs: Vec<f64> = grid.iter().map(|&e| mollifier_l1_error(e, a, b).unwrap()).collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]));
        let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
        // O(ε^α) for every α < 1: each decade gains at least 10^0.8 and the
        // ratio climbs towards 10 as the logarithm's share shrinks
        assert!(ratios.iter().all(|&r| r >= 10f64.powf(0.8) && r < 10.0), "{ratios:?}");
        assert!(ratios.windows(2).all(|w| w[1] > w[0]));
    }
}
