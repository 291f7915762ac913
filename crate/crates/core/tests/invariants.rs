use anderson_meso::rng::CounterRng;
use anderson_meso::spectral::{count_in_interval, dense_spectrum, inertia_at, trace_im_resolvent_dense, trace_im_resolvent_solve};
use anderson_meso::stats::{mollifier_eval, poisson_pmf};
use anderson_meso::{sample_operator, LatticeBox, PotentialSpec};
use num_complex::Complex64;
use proptest::prelude::*;

fn boxed(d2: bool, a: i64, b: i64) -> LatticeBox {
    if d2 {
        LatticeBox::new(vec![0, 0], vec![a, b]).unwrap()
    } else {
        LatticeBox::new(vec![0], vec![a * b + a]).unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn counts_add_over_adjacent_intervals(
        seed in any::<u64>(), d2 in any::<bool>(), a in 1i64..12, b in 1i64..12,
        x in -5.0f64..5.0, w1 in 0.01f64..3.0, w2 in 0.01f64..3.0,
    ) {
        let op = sample_operator(&boxed(d2, a, b), &PotentialSpec::uniform(4.0).unwrap(), seed).unwrap();
        let whole = count_in_interval(&op, x, x + w1 + w2).unwrap();
        let left = count_in_interval(&op, x, x + w1).unwrap();
        let right = count_in_interval(&op, x + w1, x + w1 + w2).unwrap();
        let at_cut = inertia_at(&op, x + w1).unwrap().zero;
        prop_assert_eq!(whole, left + right + at_cut);
    }

    #[test]
    fn inertia_sums_to_site_count_and_is_monotone(
        seed in any::<u64>(), d2 in any::<bool>(), a in 1i64..10, b in 1i64..10,
        s in -6.0f64..6.0, ds in 0.0f64..2.0,
    ) {
        let op = sample_operator(&boxed(d2, a, b), &PotentialSpec::uniform(6.0).unwrap(), seed).unwrap();
        let lo = inertia_at(&op, s).unwrap();
        let hi = inertia_at(&op, s + ds).unwrap();
        prop_assert_eq!(lo.negative + lo.zero + lo.positive, op.site_count());
        prop_assert!(lo.negative <= hi.negative);
    }

    #[test]
    fn block_counts_match_dense(seed in any::<u64>(), a in 1i64..14, b in 1i64..14, lo in -5.0f64..5.0, w in 0.0f64..4.0) {
        let op = sample_operator(&boxed(true, a, b), &PotentialSpec::uniform(4.0).unwrap(), seed).unwrap();
        let ev = dense_spectrum(&op).unwrap();
        let hi = lo + w + 1e-6;
        prop_assert_eq!(count_in_interval(&op, lo, hi).unwrap(), ev.iter().filter(|&&e| e > lo && e < hi).count());
    }

    #[test]
    fn trace_is_positive_and_paths_agree(seed in any::<u64>(), d2 in any::<bool>(), a in 1i64..8, e in -3.0f64..3.0, eta in 0.01f64..1.0) {
        let op = sample_operator(&boxed(d2, a, a), &PotentialSpec::uniform(4.0).unwrap(), seed).unwrap();
        let z = Complex64::new(e, eta);
        let dense = trace_im_resolvent_dense(&op, z, 4096).unwrap();
        let solve = trace_im_resolvent_solve(&op, z).unwrap();
        prop_assert!(dense > 0.0);
        prop_assert!((dense - solve).abs() <= 1e-8 * dense.max(1.0));
    }

    #[test]
    fn mollifier_is_a_smoothed_indicator(x in -10.0f64..10.0, eps in 1e-3f64..5.0, a in -3.0f64..3.0, w in 0.01f64..4.0) {
        let g = mollifier_eval(x, eps, a, a + w).unwrap();
        prop_assert!((0.0..=1.0).contains(&g));
        let mirrored = mollifier_eval(2.0 * a + w - x, eps, a, a + w).unwrap();
        prop_assert!((g - mirrored).abs() < 1e-12);
    }

    #[test]
    fn pmf_ratio_recurrence(lambda in 0.01f64..50.0, n in 0u64..80) {
        let p = poisson_pmf(lambda, n).unwrap();
        let q = poisson_pmf(lambda, n + 1).unwrap();
        prop_assume!(p > 1e-250);
        prop_assert!((q / p - lambda / (n + 1) as f64).abs() <= 1e-10 * (lambda / (n + 1) as f64).max(1.0));
    }

    #[test]
    fn counter_streams_are_pure(seed in any::<u64>(), stream in any::<u64>(), k in any::<u64>()) {
        let r = CounterRng::new(seed).derive(stream);
        let u = r.uniform(k);
        prop_assert!((0.0..1.0).contains(&u));
        prop_assert_eq!(u, CounterRng::new(seed).derive(stream).uniform(k));
    }
}
