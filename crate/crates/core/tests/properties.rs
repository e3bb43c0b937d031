use proptest::prelude::*;

use samplecurve::baselines::{epv_sample_size, EpvInput};
use samplecurve::metrics::{auc, brier, mape};
use samplecurve::rng::{StreamId, MAX_STREAM_INDEX, MAX_STREAM_N};
use samplecurve::simulate::empirical_quantile;
use samplecurve::surrogate::{find_crossing, gp_fit, Crossing, CurveObservation};
use samplecurve::Orientation;

fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..80).prop_flat_map(|n| {
        (
            prop::collection::vec(-5i32..5, n).prop_map(|v| v.into_iter().map(f64::from).collect()),
            prop::collection::vec(prop::bool::ANY, n - 2).prop_map(|mut v| {
                v.push(true);
                v.push(false);
                v.into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect()
            }),
        )
    })
}

fn crossing_rank(c: Crossing) -> f64 {
    match c {
        Crossing::AlreadySatisfied => 0.0,
        Crossing::Found { n_hat, .. } => n_hat as f64,
        Crossing::Unreachable => f64::INFINITY,
    }
}

proptest! {
    #[test]
    fn auc_invariant_under_monotone_transform((s, y) in scored_labels()) {
        let a = auc(&s, &y).unwrap();
        let t: Vec<f64> = s.iter().map(|v| (0.7 * v).exp() + 3.0).collect();
        prop_assert_eq!(a, auc(&t, &y).unwrap());
    }

    #[test]
    fn auc_of_negated_scores_complements((s, y) in scored_labels()) {
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        let total = auc(&s, &y).unwrap() + auc(&neg, &y).unwrap();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantile_monotone_in_level(
        values in prop::collection::vec(-100.0f64..100.0, 1..60),
        q1 in 0.0f64..=1.0,
        q2 in 0.0f64..=1.0,
    ) {
        let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
        let a = empirical_quantile(&values, lo).unwrap();
        let b = empirical_quantile(&values, hi).unwrap();
        prop_assert!(a <= b);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(a >= min && b <= max);
    }

    #[test]
    fn brier_and_mape_permutation_invariant(
        rows in prop::collection::vec((0.001f64..0.999, prop::bool::ANY, 0.001f64..0.999), 1..50),
        rotate in 0usize..50,
    ) {
        let p: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let y: Vec<f64> = rows.iter().map(|r| if r.1 { 1.0 } else { 0.0 }).collect();
        let t: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let k = rotate % rows.len();
        let rot = |v: &[f64]| { let mut w = v.to_vec(); w.rotate_left(k); w };
        prop_assert!((brier(&p, &y).unwrap() - brier(&rot(&p), &rot(&y)).unwrap()).abs() < 1e-12);
        prop_assert!((mape(&p, &t).unwrap() - mape(&rot(&p), &rot(&t)).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn epv_monotone(p in 1usize..60, prev in 0.01f64..0.49, epv in 1.0f64..30.0) {
        let base = epv_sample_size(&EpvInput { p, prevalence: prev, epv }).unwrap();
        let more_p = epv_sample_size(&EpvInput { p: p + 1, prevalence: prev, epv }).unwrap();
        let more_epv = epv_sample_size(&EpvInput { p, prevalence: prev, epv: epv + 1.0 }).unwrap();
        let more_prev = epv_sample_size(&EpvInput { p, prevalence: prev + 0.005, epv }).unwrap();
        prop_assert!(more_p >= base);
        prop_assert!(more_epv >= base);
        prop_assert!(more_prev <= base);
    }

    #[test]
    fn stream_ids_injective(
        a in (0u64..=MAX_STREAM_N, 0u64..=MAX_STREAM_INDEX),
        b in (0u64..=MAX_STREAM_N, 0u64..=MAX_STREAM_INDEX),
    ) {
        prop_assert_eq!(StreamId::dev(a.0, a.1) == StreamId::dev(b.0, b.1), a == b);
        prop_assert_ne!(StreamId::dev(a.0, a.1), StreamId::val(b.0, b.1));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn crossing_monotone_in_threshold(
        asymptote in 0.8f64..1.0,
        amplitude in 0.5f64..3.0,
        alpha in 0.2f64..1.0,
        t1 in 0.3f64..1.0,
        t2 in 0.3f64..1.0,
    ) {
        let obs: Vec<CurveObservation> = [50.0, 200.0, 800.0, 3200.0, 12_800.0, 51_200.0]
            .iter()
            .map(|&n: &f64| CurveObservation::new(n, asymptote - amplitude * n.powf(-alpha), 0.005))
            .collect();
        let model = gp_fit(&obs).unwrap();
        prop_assume!(model.is_monotone(Orientation::Maximize, 50.0, 51_200.0));
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let a = crossing_rank(find_crossing(&model, lo, Orientation::Maximize, 50.0, 51_200.0));
        let b = crossing_rank(find_crossing(&model, hi, Orientation::Maximize, 50.0, 51_200.0));
        prop_assert!(a <= b, "{a} > {b}");
        if let Crossing::Found { n_hat, ci_low, ci_high } =
            find_crossing(&model, lo, Orientation::Maximize, 50.0, 51_200.0)
        {
            prop_assert!(ci_low <= n_hat && n_hat <= ci_high);
        }
    }
}
