use serde::{Deserialize, Serialize};

use super::{replicate, EstimateWithCI, Method};
use crate::error::{invalid, Result};
use crate::kernel::{bridge_crossing_prob_gaps, RngStream};
use crate::stats::normal_cdf;

/// Drift of the tilted sampler; puts the tilted path on the ballistic front.
pub const DEFAULT_TILT: f64 = std::f64::consts::SQRT_2;
const MAX_STEP: f64 = 1e-2;

/// An estimate paired with the closed-form value it is meant to reproduce.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallotEstimate {
    pub estimate: EstimateWithCI,
    pub oracle: Option<f64>,
}

/// P(|beta_t| <= y), which by reflection equals P(beta_s >= -y for s <= t).
pub fn ballot_oracle(y: f64, t: f64) -> f64 {
    2.0 * normal_cdf(y / t.sqrt()) - 1.0
}

/// P(beta_s >= -y for s <= t, beta_t + y in [z, z+1]) for a flat barrier:
/// the reflected density `phi_t(x) - phi_t(x + 2y)` integrated over the window.
pub fn excursion_oracle_flat(y: f64, z: f64, t: f64) -> f64 {
    let sd = t.sqrt();
    let lo = (z - y).max(-y);
    let hi = z + 1.0 - y;
    if hi <= lo {
        return 0.0;
    }
    let mass = |a: f64, b: f64| normal_cdf(b / sd) - normal_cdf(a / sd);
    (mass(lo, hi) - mass(lo + 2.0 * y, hi + 2.0 * y)).max(0.0)
}

/// Path sampler for events `beta_s >= lower(s)` on `[0, t]`.
///
/// Each replicate walks a grid of step at most `step`. With `bridge` on, the
/// replicate's value is the conditional probability, given the grid
/// values, that the Brownian bridge between grid points stays above the
/// (linearly interpolated) barrier; otherwise only grid points are checked.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierEstimator {
    pub step: f64,
    pub bridge: bool,
    pub tilt: f64,
}

impl Default for BarrierEstimator {
    fn default() -> Self {
        BarrierEstimator { step: MAX_STEP, bridge: true, tilt: DEFAULT_TILT }
    }
}

struct Walk {
    survival: f64,
    end: f64,
}

impl BarrierEstimator {
    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    pub fn with_bridge(mut self, bridge: bool) -> Self {
        self.bridge = bridge;
        self
    }

    pub fn with_tilt(mut self, tilt: f64) -> Self {
        self.tilt = tilt;
        self
    }

    fn validate(&self, t: f64, n: usize) -> Result<()> {
        if n == 0 {
            return Err(invalid("replicate count must be at least 1"));
        }
        if !(self.step > 0.0 && self.step <= MAX_STEP) {
            return Err(invalid(format!("path step must lie in (0, {MAX_STEP}], got {}", self.step)));
        }
        if !(t > 0.0) || !t.is_finite() {
            return Err(invalid(format!("horizon must be > 0, got {t}")));
        }
        if !self.tilt.is_finite() {
            return Err(invalid("tilt must be finite"));
        }
        Ok(())
    }

    /// One path with drift `drift`; stops early once survival hits zero.
    fn walk<L: Fn(f64) -> f64>(&self, t: f64, drift: f64, lower: &L, stream: &mut RngStream) -> Walk {
        let steps = (t / self.step).ceil().max(1.0) as usize;
        let dt = t / steps as f64;
        let sd = dt.sqrt();
        let mut x = 0.0;
        let mut gap = x - lower(0.0);
        if gap < 0.0 {
            return Walk { survival: 0.0, end: x };
        }
        let mut survival = 1.0;
        for k in 1..=steps {
            let s = if k == steps { t } else { k as f64 * dt };
            x += drift * dt + sd * stream.standard_normal();
            let next_gap = x - lower(s);
            if next_gap < 0.0 {
                return Walk { survival: 0.0, end: x };
            }
            if self.bridge {
                survival *= 1.0 - bridge_crossing_prob_gaps(gap, next_gap, dt);
                if survival == 0.0 {
                    return Walk { survival, end: x };
                }
            }
            gap = next_gap;
        }
        Walk { survival, end: x }
    }

    fn barrier_event<L, E>(&self, t: f64, n: usize, stream: &RngStream, lower: L, accept_end: E) -> EstimateWithCI
    where
        L: Fn(f64) -> f64 + Sync,
        E: Fn(f64) -> bool + Sync,
    {
        let samples = replicate(n, stream, |s| {
            let w = self.walk(t, 0.0, &lower, s);
            if accept_end(w.end) {
                w.survival
            } else {
                0.0
            }
        });
        EstimateWithCI::from_samples(&samples, Method::Plain)
    }

    pub fn ballot(&self, y: f64, t: f64, n: usize, stream: &RngStream) -> Result<BallotEstimate> {
        self.validate(t, n)?;
        check_offset(y)?;
        let estimate = self.barrier_event(t, n, stream, |_| -y, |_| true);
        Ok(BallotEstimate { estimate, oracle: Some(ballot_oracle(y, t)) })
    }

    /// Barrier `-y + a s^alpha` bent upward by a sub-diffusive power.
    pub fn bent_ballot(&self, y: f64, t: f64, a: f64, alpha: f64, n: usize, stream: &RngStream) -> Result<BallotEstimate> {
        self.validate(t, n)?;
        check_offset(y)?;
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(invalid(format!("bending exponent must lie in (0, 1/2), got {alpha}")));
        }
        if !a.is_finite() {
            return Err(invalid("bending amplitude must be finite"));
        }
        let estimate = self.barrier_event(t, n, stream, |s| -y + a * s.powf(alpha), |_| true);
        let oracle = (a == 0.0).then(|| ballot_oracle(y, t));
        Ok(BallotEstimate { estimate, oracle })
    }

    /// P(beta_s >= -y + f(s) for s <= t, beta_t + y - f(t) in [z, z+1]).
    /// With `tilted`, paths carry drift `self.tilt` and are reweighted by
    /// the likelihood ratio `exp(-mu beta_t + mu^2 t / 2)`.
    pub fn excursion<F>(&self, y: f64, z: f64, t: f64, curve: F, tilted: bool, n: usize, stream: &RngStream) -> Result<BallotEstimate>
    where
        F: Fn(f64) -> f64 + Sync,
    {
        self.validate(t, n)?;
        check_offset(y)?;
        if !z.is_finite() || z < 0.0 {
            return Err(invalid(format!("window start must be >= 0, got {z}")));
        }
        let (f0, ft) = (curve(0.0), curve(t));
        if !(f0.abs() <= 1e-9 && ft.abs() <= 1e-9) {
            return Err(invalid(format!("curve must vanish at both ends, got f(0)={f0}, f(t)={ft}")));
        }
        let lower = |s: f64| -y + curve(s);
        let in_window = |end: f64| {
            let shifted = end + y - ft;
            (z..=z + 1.0).contains(&shifted)
        };
        let (drift, method) = if tilted { (self.tilt, Method::GirsanovTilted) } else { (0.0, Method::Plain) };
        let samples = replicate(n, stream, |s| {
            let w = self.walk(t, drift, &lower, s);
            if w.survival == 0.0 || !in_window(w.end) {
                return 0.0;
            }
            w.survival * (-drift * w.end + 0.5 * drift * drift * t).exp()
        });
        let estimate = EstimateWithCI::from_samples(&samples, method);
        Ok(BallotEstimate { estimate, oracle: None })
    }
}

fn check_offset(y: f64) -> Result<()> {
    if !(y > 0.0) || y.is_infinite() {
        return Err(invalid(format!("barrier offset must be > 0, got {y}")));
    }
    Ok(())
}

/// Estimates P(beta_s >= -y, s <= t) with the default sampler.
pub fn ballot_prob(y: f64, t: f64, n: usize, stream: &RngStream) -> Result<BallotEstimate> {
    BarrierEstimator::default().ballot(y, t, n, stream)
}

/// Estimates P(beta_s >= -y + a s^alpha, s <= t) with the default sampler.
pub fn bent_ballot_prob(y: f64, t: f64, a: f64, alpha: f64, n: usize, stream: &RngStream) -> Result<BallotEstimate> {
    BarrierEstimator::default().bent_ballot(y, t, a, alpha, n, stream)
}

/// Excursion probability with the default sampler; `tilted` selects the
/// Girsanov-reweighted variant.
pub fn excursion_prob<F>(y: f64, z: f64, t: f64, curve: F, tilted: bool, n: usize, stream: &RngStream) -> Result<BallotEstimate>
where
    F: Fn(f64) -> f64 + Sync,
{
    let mut est = BarrierEstimator::default().excursion(y, z, t, &curve, tilted, n, stream)?;
    if curve_is_flat(&curve, t) {
        est.oracle = Some(excursion_oracle_flat(y, z, t));
    }
    Ok(est)
}

fn curve_is_flat<F: Fn(f64) -> f64>(curve: &F, t: f64) -> bool {
    (0..=64).all(|i| curve(t * i as f64 / 64.0) == 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(k: u64) -> RngStream {
        RngStream::derive(99, &[k])
    }

    #[test]
    fn oracle_values() {
        assert!((ballot_oracle(1.0, 1.0) - 0.682689492137).abs() < 1e-9);
        // flat excursion at y = z = 2, t = 4 by direct quadrature
        let t = 4.0f64;
        let phi = |x: f64| (-x * x / (2.0 * t)).exp() / (2.0 * std::f64::consts::PI * t).sqrt();
        let quad: f64 = (0..10_000)
            .map(|i| {
                let x = (i as f64 + 0.5) / 10_000.0;
                (phi(x) - phi(x + 4.0)) / 10_000.0
            })
            .sum();
        assert!((excursion_oracle_flat(2.0, 2.0, 4.0) - quad).abs() < 1e-8);
    }

    #[test]
    fn argument_checks() {
        let s = stream(0);
        assert!(ballot_prob(1.0, 1.0, 0, &s).is_err());
        assert!(bent_ballot_prob(1.0, 4.0, 1.0, 0.5, 10, &s).is_err());
        assert!(BarrierEstimator::default().with_step(0.1).ballot(1.0, 1.0, 10, &s).is_err());
        assert!(excursion_prob(1.0, 1.0, 4.0, |s: f64| s, false, 10, &s).is_err());
        assert!(excursion_prob(1.0, 1.0, 4.0, |s: f64| s * (4.0 - s), false, 10, &s).is_ok());
    }

    #[test]
    fn ballot_matches_reflection() {
        let e = ballot_prob(1.0, 1.0, 20_000, &stream(1)).unwrap();
        assert!(e.estimate.z_to(e.oracle.unwrap()).unwrap() < 3.0, "{e:?}");
        let far = ballot_prob(10.0, 1.0, 1_000, &stream(2)).unwrap();
        assert!(far.estimate.point >= 0.999);
    }

    #[test]
    fn grid_only_mode_overestimates() {
        let e = BarrierEstimator::default().with_bridge(false).with_step(0.01);
        let raw = e.ballot(1.0, 1.0, 5_000, &stream(3)).unwrap();
        let bridged = BarrierEstimator::default().ballot(1.0, 1.0, 5_000, &stream(3)).unwrap();
        assert!(raw.estimate.point >= bridged.estimate.point);
    }

    #[test]
    fn bent_barrier_is_harder() {
        let flat = bent_ballot_prob(2.0, 16.0, 0.0, 0.4, 4_000, &stream(4)).unwrap();
        let bent = bent_ballot_prob(2.0, 16.0, 1.0, 0.4, 4_000, &stream(4)).unwrap();
        assert!(bent.estimate.point > 0.0);
        assert!(bent.estimate.point <= flat.estimate.point);
        assert!(flat.oracle.is_some() && bent.oracle.is_none());
    }

    #[test]
    fn plain_and_tilted_excursions_agree() {
        let plain = excursion_prob(1.0, 1.0, 4.0, |_| 0.0, false, 20_000, &stream(5)).unwrap();
        let tilted = excursion_prob(1.0, 1.0, 4.0, |_| 0.0, true, 20_000, &stream(6)).unwrap();
        assert!(plain.estimate.z_distance(&tilted.estimate).unwrap() < 3.0, "{plain:?} {tilted:?}");
        assert!(plain.estimate.z_to(plain.oracle.unwrap()).unwrap() < 3.0);
        assert_eq!(tilted.estimate.method, Method::GirsanovTilted);
    }

    #[test]
    fn excursion_vanishes_for_far_windows() {
        let near = excursion_prob(1.0, 1.0, 4.0, |_| 0.0, false, 2_000, &stream(7)).unwrap();
        let far = excursion_prob(1.0, 12.0, 4.0, |_| 0.0, false, 2_000, &stream(7)).unwrap();
        assert!(far.estimate.point < near.estimate.point);
        assert!(far.estimate.point < 1e-3);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(16))]
        #[test]
        fn probabilities_in_unit_interval(y in 0.2f64..3.0, t in 0.5f64..3.0, seed in 0u64..1000) {
            let e = ballot_prob(y, t, 200, &RngStream::new(seed)).unwrap().estimate;
            proptest::prop_assert!((0.0..=1.0).contains(&e.point));
            let x = excursion_prob(y, 0.5, t, |_| 0.0, true, 200, &RngStream::new(seed)).unwrap().estimate;
            proptest::prop_assert!(x.point.is_finite() && x.point >= 0.0);
        }
    }
}
