//! Randomized invariants that hold for every input, checked with proptest.

use proptest::prelude::*;

use swad_core::averaging::{detect_end, detect_start, swa_sparse_average, ValTrace};
use swad_core::theory::{tv_divergence, DiscreteDistribution};
use swad_core::{ParamVector, RunningMean};

fn probs(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-3..1.0f64, n).prop_map(|raw| {
        let total: f64 = raw.iter().sum();
        raw.iter().map(|v| v / total).collect()
    })
}

fn distribution(n: usize) -> impl Strategy<Value = DiscreteDistribution> {
    probs(n).prop_map(move |p| DiscreteDistribution::new((0..n).collect(), p).unwrap())
}

proptest! {
    #[test]
    fn tv_is_a_bounded_metric(p in distribution(8), q in distribution(8), m in distribution(8)) {
        let pq = tv_divergence(&p, &q).unwrap();
        let qp = tv_divergence(&q, &p).unwrap();
        prop_assert!((pq - qp).abs() < 1e-12);
        prop_assert!((0.0..=2.0 + 1e-12).contains(&pq));
        prop_assert!(tv_divergence(&p, &p).unwrap() < 1e-12);
        let pm = tv_divergence(&p, &m).unwrap();
        let mq = tv_divergence(&m, &q).unwrap();
        prop_assert!(pq <= pm + mq + 1e-12);
    }

    #[test]
    fn detected_interval_is_well_ordered(
        losses in prop::collection::vec(0.0..2.0f64, 4..40),
        n_s in 2usize..5,
        n_e in 2usize..5,
        r in 1.0..1.5f64,
    ) {
        let t = losses.len();
        let trace = ValTrace::from_losses(losses);
        if let Some((t_s, l)) = detect_start(&trace, n_s, r) {
            prop_assert!((1..=t).contains(&t_s));
            prop_assert!(l.is_finite());
            if let Some(t_e) = detect_end(&trace, l, t_s + n_s, n_e) {
                prop_assert!(t_s <= t_e && t_e <= t);
            }
        }
    }

    #[test]
    fn merged_mean_equals_concatenated_mean(
        a in prop::collection::vec(prop::collection::vec(-10.0..10.0f64, 3), 1..20),
        b in prop::collection::vec(prop::collection::vec(-10.0..10.0f64, 3), 1..20),
    ) {
        let mut left = RunningMean::empty();
        for v in &a {
            left.update(&ParamVector::new(v.clone())).unwrap();
        }
        let mut right = RunningMean::empty();
        for v in &b {
            right.update(&ParamVector::new(v.clone())).unwrap();
        }
        left.merge(&right).unwrap();

        let mut whole = RunningMean::empty();
        for v in a.iter().chain(&b) {
            whole.update(&ParamVector::new(v.clone())).unwrap();
        }
        for (x, y) in left.mean().values().iter().zip(whole.mean().values()) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn sparse_average_stays_in_the_coordinate_envelope(
        snaps in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 4), 1..15),
    ) {
        let vecs: Vec<ParamVector> = snaps.iter().map(|v| ParamVector::new(v.clone())).collect();
        let avg = swa_sparse_average(&vecs).unwrap();
        for i in 0..4 {
            let lo = snaps.iter().map(|v| v[i]).fold(f64::INFINITY, f64::min);
            let hi = snaps.iter().map(|v| v[i]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(avg.values()[i] >= lo - 1e-12 && avg.values()[i] <= hi + 1e-12);
        }
    }
}
