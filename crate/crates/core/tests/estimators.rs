use bbm_core::engine::Path;
use bbm_core::estimators::{
    ballot_prob, excursion_oracle_flat, many_to_one_check, many_to_two_check, BarrierEstimator, EndProjectionAtLeast,
    FnFunctional,
};
use bbm_core::kernel::RngStream;

fn stream(k: u64) -> RngStream {
    RngStream::derive(2024, &[k])
}

#[test]
fn ballot_is_monotone_in_the_offset() {
    let ys = [0.5, 1.0, 1.5, 2.0];
    let est: Vec<_> = ys.iter().enumerate().map(|(i, &y)| ballot_prob(y, 1.0, 20_000, &stream(i as u64)).unwrap()).collect();
    for w in est.windows(2) {
        let drop = w[0].estimate.point - w[1].estimate.point;
        assert!(drop < 2.0 * w[0].estimate.combined_se(&w[1].estimate).unwrap());
    }
    for e in &est {
        assert!((0.0..=1.0).contains(&e.estimate.point));
        assert!(e.estimate.z_to(e.oracle.unwrap()).unwrap() < 3.0);
    }
}

#[test]
fn refining_the_grid_leaves_ballot_estimates_unchanged() {
    let coarse = BarrierEstimator::default().ballot(1.0, 1.0, 40_000, &stream(10)).unwrap();
    let fine = BarrierEstimator::default().with_step(0.001).ballot(1.0, 1.0, 40_000, &stream(11)).unwrap();
    assert!(coarse.estimate.z_distance(&fine.estimate).unwrap() < 2.0, "{coarse:?} {fine:?}");
}

#[test]
fn tilted_and_plain_agree_under_a_bent_curve() {
    let t = 4.0;
    let curve = move |s: f64| 0.5 * s.min(t - s).powf(0.4);
    let sampler = BarrierEstimator::default();
    let plain = sampler.excursion(1.0, 1.0, t, curve, false, 40_000, &stream(20)).unwrap();
    let tilted = sampler.excursion(1.0, 1.0, t, curve, true, 40_000, &stream(21)).unwrap();
    assert!(plain.estimate.point > 0.0 && tilted.estimate.point > 0.0);
    assert!(plain.estimate.z_distance(&tilted.estimate).unwrap() < 3.0, "{plain:?} {tilted:?}");
    assert!(tilted.estimate.point.is_finite());
}

#[test]
fn excursion_scaling_is_stable_across_horizons() {
    // P ~ y z / t^(3/2) for a flat barrier once t is large.
    let (y, z) = (1.0, 1.0);
    let scaled: Vec<f64> = [4.0, 16.0, 64.0]
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let e = BarrierEstimator::default().excursion(y, z, t, |_| 0.0, false, 40_000, &stream(30 + i as u64)).unwrap();
            let oracle = excursion_oracle_flat(y, z, t);
            assert!(e.estimate.z_to(oracle).unwrap() < 3.5, "t={t}: {e:?} vs {oracle}");
            e.estimate.point * t.powf(1.5) / (y * z)
        })
        .collect();
    let ratio = scaled.iter().cloned().fold(f64::MIN, f64::max) / scaled.iter().cloned().fold(f64::MAX, f64::min);
    assert!(ratio <= 5.0, "{scaled:?}");
}

#[test]
fn first_moment_identity_for_a_path_functional() {
    // Whether the first coordinate ever exceeds 1 on the checkpoint grid.
    let f = FnFunctional(|p: &Path| f64::from(u8::from(p.iter().any(|(_, x)| x[0] >= 1.0))));
    let r = many_to_one_check(&f, 2, 2.0, 0.05, 3000, 100_000, &stream(40)).unwrap();
    assert!(r.bbm_side.z_distance(&r.bm_side).unwrap() < 3.0, "{r:?}");
}

#[test]
fn second_moment_identity_for_a_half_plane() {
    let half = EndProjectionAtLeast { direction: vec![1.0, 0.0], level: 0.0 };
    let r = many_to_two_check(&half, &half, 2, 1.0, 1.0, 20_000, 100_000, &stream(41)).unwrap();
    assert!(r.lhs.z_distance(&r.rhs()).unwrap() < 3.0, "{r:?}");
}
