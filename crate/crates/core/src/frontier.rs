//! Closed-form frontier curve and the predicted median radius.
//!
//! `frontier(s) = sqrt2 s + (d-1)/(2 sqrt2) log(s + y) - 3/(2 sqrt2) log((t+1)/(t-s+1)) + y`
//! is the moving radius that, with high probability, no particle path exits
//! before time `t`. Its s-derivative is at least `sqrt2 - 3/(2 sqrt2) > 0`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// The triple (d, t, y) parameterising the frontier. Requires t >= 1 and
/// 1 <= y <= sqrt(t).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierParams {
    dim: usize,
    horizon: f64,
    offset: f64,
}

impl FrontierParams {
    pub fn new(dim: usize, horizon: f64, offset: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if !(horizon >= 1.0) || !horizon.is_finite() {
            return Err(invalid(format!("frontier horizon must be >= 1, got {horizon}")));
        }
        if !(offset >= 1.0 && offset <= horizon.sqrt() + 1e-12) {
            return Err(invalid(format!("frontier offset y={offset} outside [1, sqrt(t)] for t={horizon}")));
        }
        Ok(Self::unchecked(dim, horizon, offset))
    }

    /// Skips the window check on (t, y). Used by the desk-scale experiments
    /// that probe the curve at y = 0.
    pub fn unchecked(dim: usize, horizon: f64, offset: f64) -> Self {
        FrontierParams { dim, horizon, offset }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Formula value without range checking on `s`.
    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        let d = self.dim as f64;
        let t = self.horizon;
        let y = self.offset;
        SQRT_2 * s + (d - 1.0) / (2.0 * SQRT_2) * (s + y).ln() - 3.0 / (2.0 * SQRT_2) * ((t + 1.0) / (t - s + 1.0)).ln()
            + y
    }

    #[inline]
    pub fn eval_tilde(&self, s: f64) -> f64 {
        self.eval(s) - SQRT_2 * s
    }

    fn check_time(&self, s: f64) -> Result<()> {
        if !(0.0..=self.horizon).contains(&s) {
            return Err(invalid(format!("time {s} outside [0, {}]", self.horizon)));
        }
        Ok(())
    }
}

pub fn frontier(p: &FrontierParams, s: f64) -> Result<f64> {
    p.check_time(s)?;
    Ok(p.eval(s))
}

/// Frontier with the ballistic part removed.
pub fn tilde_frontier(p: &FrontierParams, s: f64) -> Result<f64> {
    p.check_time(s)?;
    Ok(p.eval_tilde(s))
}

/// r_t = sqrt2 t + (d-4)/(2 sqrt2) log t.
pub fn predicted_radius(dim: usize, t: f64) -> Result<f64> {
    if dim == 0 {
        return Err(Error::InvalidDimension(0));
    }
    if !(t >= 1.0) || !t.is_finite() {
        return Err(invalid(format!("predicted radius needs t >= 1, got {t}")));
    }
    Ok(SQRT_2 * t + (dim as f64 - 4.0) / (2.0 * SQRT_2) * t.ln())
}

/// Grid supremum over interior points s of
/// `|g(s) - g(0)| / s^a + |g(t) - g(s)| / (t - s)^a`.
pub fn holder_constant<G: Fn(f64) -> f64>(g: G, t: f64, alpha: f64, grid_n: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(invalid(format!("exponent must lie in (0, 1/2), got {alpha}")));
    }
    if grid_n < 2 {
        return Err(invalid("holder grid needs at least 2 points"));
    }
    let g0 = g(0.0);
    let gt = g(t);
    let sup = (1..grid_n)
        .map(|i| {
            let s = t * i as f64 / grid_n as f64;
            let gs = g(s);
            (gs - g0).abs() / s.powf(alpha) + (gt - gs).abs() / (t - s).powf(alpha)
        })
        .fold(0.0, f64::max);
    Ok(sup)
}

/// Regularity constant of the centred frontier `s -> f~(s) - f~(0)`.
pub fn holder_bound(p: &FrontierParams, alpha: f64, grid_n: usize) -> Result<f64> {
    let base = p.eval_tilde(0.0);
    holder_constant(|s| p.eval_tilde(s) - base, p.horizon, alpha, grid_n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frontier_reference_values() {
        for d in 1..5 {
            let p = FrontierParams::new(d, 25.0, 1.0).unwrap();
            assert!((frontier(&p, 0.0).unwrap() - 1.0).abs() < 1e-14);
            assert!((tilde_frontier(&p, 0.0).unwrap() - 1.0).abs() < 1e-14);
        }
        // 30-digit evaluation: 139.157973223857886..., -2.263383013451618...
        let p = FrontierParams::new(2, 100.0, 1.0).unwrap();
        assert!((frontier(&p, 100.0).unwrap() - 139.15797322385789).abs() < 1e-4);
        assert!((tilde_frontier(&p, 100.0).unwrap() + 2.2633830134516186).abs() < 1e-4);
    }

    #[test]
    fn frontier_rejects_out_of_range() {
        assert!(FrontierParams::new(2, 0.5, 1.0).is_err());
        assert!(FrontierParams::new(2, 16.0, 4.5).is_err());
        assert!(FrontierParams::new(2, 16.0, 0.5).is_err());
        assert!(FrontierParams::new(0, 16.0, 1.0).is_err());
        let p = FrontierParams::new(2, 16.0, 2.0).unwrap();
        assert!(frontier(&p, -0.1).is_err());
        assert!(frontier(&p, 16.1).is_err());
        assert!(tilde_frontier(&p, 17.0).is_err());
    }

    #[test]
    fn frontier_strictly_increasing_on_fine_grid() {
        let p = FrontierParams::new(2, 100.0, 1.0).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=10_000 {
            let v = frontier(&p, 100.0 * i as f64 / 10_000.0).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn predicted_radius_values() {
        for d in 1..6 {
            assert!((predicted_radius(d, 1.0).unwrap() - SQRT_2).abs() < 1e-12);
        }
        assert!((predicted_radius(4, 100.0).unwrap() - 141.42135623730951).abs() < 1e-10);
        // 30-digit evaluation: 136.536835636764064...
        assert!((predicted_radius(1, 100.0).unwrap() - 136.53683563676406).abs() < 1e-4);
        assert!(predicted_radius(2, 0.5).is_err());
    }

    #[test]
    fn holder_checks() {
        assert_eq!(holder_constant(|_| 0.0, 10.0, 0.4, 100).unwrap(), 0.0);
        let p = FrontierParams::new(2, 10.0, 1.0).unwrap();
        assert!(holder_bound(&p, 0.5, 100).is_err());
        assert!(holder_bound(&p, 0.0, 100).is_err());
        let values: Vec<f64> = [10.0, 100.0, 1000.0]
            .iter()
            .map(|&t| holder_bound(&FrontierParams::new(2, t, 1.0).unwrap(), 0.4, 10_000).unwrap())
            .collect();
        let max = values.iter().cloned().fold(0.0, f64::max);
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(max / min < 1.5, "{values:?}");
        assert!(values[2] / values[0] < 1.5);
        for &t in &[10.0, 100.0, 1000.0] {
            let p = FrontierParams::new(2, t, 1.0).unwrap();
            let coarse = holder_bound(&p, 0.4, 1_000).unwrap();
            let fine = holder_bound(&p, 0.4, 10_000).unwrap();
            assert!(((fine - coarse) / fine).abs() < 0.01);
        }
    }

    proptest::proptest! {
        #[test]
        fn increasing_in_s_y_and_d(d in 1usize..6, t in 1.0f64..500.0, fy in 0.0f64..1.0,
                                   a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let y = 1.0 + fy * (t.sqrt() - 1.0);
            let p = FrontierParams::new(d, t, y).unwrap();
            let (s1, s2) = (t * a.min(b), t * a.max(b));
            if s2 > s1 {
                proptest::prop_assert!(p.eval(s2) > p.eval(s1));
            }
            let q = FrontierParams::new(d + 1, t, y).unwrap();
            proptest::prop_assert!(q.eval(s1) >= p.eval(s1));
            let y2 = (y + 0.5).min(t.sqrt());
            let r = FrontierParams::new(d, t, y2).unwrap();
            proptest::prop_assert!(r.eval(s1) >= p.eval(s1));
        }

        #[test]
        fn endpoint_gap_to_prediction_bounded(d in 1usize..6, t in 1.0f64..1e4, fy in 0.0f64..1.0) {
            let y = 1.0 + fy * (t.sqrt() - 1.0);
            let p = FrontierParams::new(d, t, y).unwrap();
            let gap = p.eval(t) - predicted_radius(d, t).unwrap() - y;
            proptest::prop_assert!(gap.abs() <= 5.0, "gap {}", gap);
        }
    }
}
