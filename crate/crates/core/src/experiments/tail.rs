use serde::Serialize;
use serde_json::{json, Value};

use super::{check_feasible, check_offsets, point, replica_config, tail_shape, ReplicaExperiment, Tabulate};
use crate::engine::{horizon_sample, SimConfig};
use crate::error::Result;
use crate::estimators::{EstimateWithCI, Method};
use crate::frontier::predicted_radius;
use crate::report::{PointEstimate, Table};
use crate::stats::{normal_quantile, weighted_linear_fit, wilson_interval};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailPoint {
    pub offset: f64,
    pub threshold: f64,
    pub successes: usize,
    pub estimate: EstimateWithCI,
    pub wilson: (f64, f64),
    /// Estimate divided by `y e^(-sqrt2 y)`.
    pub scaled: f64,
}

/// Estimated P(R_t >= r_t + y) over a grid of offsets.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailCurve {
    pub dim: usize,
    pub horizon: f64,
    pub points: Vec<TailPoint>,
    /// Slope of `log(p/y)` against `y`, weighted by inverse variance.
    pub fitted_slope: Option<f64>,
    pub slope_se: Option<f64>,
    /// max/min of the scaled estimates; absent if any estimate is zero.
    pub band_ratio: Option<f64>,
}

impl TailCurve {
    /// Largest violation, in combined SE units, of `p(y)` being nonincreasing.
    pub fn worst_increase(&self) -> f64 {
        self.points
            .windows(2)
            .filter_map(|w| {
                let se = w[0].estimate.combined_se(&w[1].estimate)?;
                let rise = w[1].estimate.point - w[0].estimate.point;
                Some(if se > 0.0 { rise / se } else if rise > 0.0 { f64::INFINITY } else { 0.0 })
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub struct TailSetup {
    base: SimConfig,
    offsets: Vec<f64>,
    radius: f64,
}

impl TailSetup {
    pub fn new(base: SimConfig, offsets: &[f64]) -> Result<Self> {
        base.validate()?;
        check_feasible(&base)?;
        check_offsets(offsets, base.horizon)?;
        let radius = predicted_radius(base.dim, base.horizon)?;
        Ok(TailSetup { base, offsets: offsets.to_vec(), radius })
    }
}

impl ReplicaExperiment for TailSetup {
    type Report = TailCurve;

    fn record_len(&self) -> usize {
        1
    }

    fn measure(&self, replica: u64) -> Result<Vec<f64>> {
        let sample = horizon_sample(&replica_config(&self.base, replica))?;
        Ok(vec![sample.max_norm().unwrap_or(f64::NEG_INFINITY)])
    }

    fn aggregate(&self, records: &[Vec<f64>]) -> TailCurve {
        let n = records.len();
        let z = normal_quantile(0.975);
        let points: Vec<TailPoint> = self
            .offsets
            .iter()
            .map(|&y| {
                let threshold = self.radius + y;
                let hits: Vec<f64> = records.iter().map(|r| f64::from(u8::from(r[0] >= threshold))).collect();
                let successes = hits.iter().filter(|&&h| h > 0.0).count();
                let estimate = EstimateWithCI::from_samples(&hits, Method::Plain);
                TailPoint {
                    offset: y,
                    threshold,
                    successes,
                    wilson: wilson_interval(successes, n, z),
                    scaled: estimate.point / tail_shape(y),
                    estimate,
                }
            })
            .collect();

        let usable: Vec<&TailPoint> = points.iter().filter(|p| p.successes > 0 && p.successes < n).collect();
        let xs: Vec<f64> = usable.iter().map(|p| p.offset).collect();
        let ys: Vec<f64> = usable.iter().map(|p| (p.estimate.point / p.offset).ln()).collect();
        let ws: Vec<f64> = usable
            .iter()
            .map(|p| n as f64 * p.estimate.point / (1.0 - p.estimate.point))
            .collect();
        let fit = weighted_linear_fit(&xs, &ys, &ws);

        let band_ratio = if points.iter().all(|p| p.successes > 0) {
            let max = points.iter().map(|p| p.scaled).fold(f64::NEG_INFINITY, f64::max);
            let min = points.iter().map(|p| p.scaled).fold(f64::INFINITY, f64::min);
            Some(max / min)
        } else {
            None
        };

        TailCurve {
            dim: self.base.dim,
            horizon: self.base.horizon,
            points,
            fitted_slope: fit.map(|f| f.0),
            slope_se: fit.map(|f| f.1),
            band_ratio,
        }
    }
}

impl Tabulate for TailCurve {
    fn table(&self) -> Table {
        let mut t = Table::new(&["y", "threshold", "successes", "n", "point", "se", "wilson_lower", "wilson_upper", "scaled"]);
        for p in &self.points {
            t.push(vec![
                p.offset.into(),
                p.threshold.into(),
                p.successes.into(),
                p.estimate.n.into(),
                p.estimate.point.into(),
                p.estimate.std_error.into(),
                p.wilson.0.into(),
                p.wilson.1.into(),
                p.scaled.into(),
            ]);
        }
        t
    }

    fn params(&self) -> Value {
        json!({
            "dim": self.dim,
            "horizon": self.horizon,
            "y_grid": self.points.iter().map(|p| p.offset).collect::<Vec<_>>(),
        })
    }

    fn estimates(&self) -> Vec<PointEstimate> {
        self.points.iter().map(|p| point(p.offset, &p.estimate)).collect()
    }

    fn fitted(&self) -> Value {
        json!({
            "slope": self.fitted_slope,
            "slope_se": self.slope_se,
            "reference_slope": -std::f64::consts::SQRT_2,
            "band_ratio": self.band_ratio,
        })
    }
}

/// Per-offset estimates of P(R_t >= r_t + y) from `replicas` independent runs.
pub fn tail_curve(base: &SimConfig, offsets: &[f64], replicas: usize) -> Result<TailCurve> {
    super::run_experiment(&TailSetup::new(base.clone(), offsets)?, replicas)
}
