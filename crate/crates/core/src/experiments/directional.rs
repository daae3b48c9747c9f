use serde::Serialize;
use serde_json::{json, Value};

use super::crossing::{FrontierWatch, MAX_WATCHED};
use super::{check_feasible, check_offsets, point, replica_config, tail_shape, ReplicaExperiment, Tabulate};
use crate::engine::{horizon_sample, simulate_with, Fate, ParticleEnd, Segment, SimConfig, Visitor, SQRT_2};
use crate::error::{invalid, Result};
use crate::estimators::{EstimateWithCI, Method};
use crate::kernel::{dot, norm, RngStream};
use crate::report::{PointEstimate, Table};
use crate::stats::median_with_se;

/// Location of the one-dimensional maximum, `sqrt2 t - 3/(2 sqrt2) log t`.
pub fn bramson_centering(t: f64) -> f64 {
    SQRT_2 * t - 3.0 / (2.0 * SQRT_2) * t.ln()
}

/// Expected excess of the radial over the directional maximum,
/// `(d-1)/(2 sqrt2) log t`.
pub fn dimension_gap(dim: usize, t: f64) -> f64 {
    (dim as f64 - 1.0) / (2.0 * SQRT_2) * t.ln()
}

/// Two reference directions: `e1` and an orthogonal axis (`-e1` when d = 1).
pub fn standard_directions(dim: usize) -> Vec<Vec<f64>> {
    let axis = |i: usize, sign: f64| (0..dim).map(|k| if k == i { sign } else { 0.0 }).collect::<Vec<f64>>();
    if dim >= 2 {
        vec![axis(0, 1.0), axis(1, 1.0)]
    } else {
        vec![axis(0, 1.0), axis(0, -1.0)]
    }
}

fn check_directions(dirs: &[Vec<f64>], dim: usize) -> Result<()> {
    if dirs.is_empty() {
        return Err(invalid("at least one direction is required"));
    }
    for v in dirs {
        if v.len() != dim || (norm(v) - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("direction {v:?} is not a unit {dim}-vector")));
        }
    }
    Ok(())
}

fn median_estimate(sample: &[f64]) -> EstimateWithCI {
    let (point, std_error) = median_with_se(sample).unwrap_or((f64::NAN, None));
    EstimateWithCI { point, std_error, n: sample.len(), method: Method::Plain }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DirectionalReport {
    pub dim: usize,
    pub horizon: f64,
    pub directions: Vec<Vec<f64>>,
    /// Median of R_t.
    pub radius: EstimateWithCI,
    /// Median of `max_u X_t(u) . v`, per direction.
    pub projections: Vec<EstimateWithCI>,
    /// Median radius minus the first directional median.
    pub gap: EstimateWithCI,
    pub centering: f64,
    pub predicted_gap: f64,
}

/// Radial and directional maxima at the horizon.
pub struct DirectionalSetup {
    base: SimConfig,
    directions: Vec<Vec<f64>>,
}

impl DirectionalSetup {
    pub fn new(base: SimConfig, directions: Vec<Vec<f64>>) -> Result<Self> {
        base.validate()?;
        check_feasible(&base)?;
        check_directions(&directions, base.dim)?;
        Ok(DirectionalSetup { base, directions })
    }
}

impl ReplicaExperiment for DirectionalSetup {
    type Report = DirectionalReport;

    fn record_len(&self) -> usize {
        1 + self.directions.len()
    }

    fn measure(&self, replica: u64) -> Result<Vec<f64>> {
        let sample = horizon_sample(&replica_config(&self.base, replica))?;
        let mut record = vec![sample.max_norm().unwrap_or(f64::NEG_INFINITY)];
        record.extend(self.directions.iter().map(|v| sample.max_projection(v).unwrap_or(f64::NEG_INFINITY)));
        Ok(record)
    }

    fn aggregate(&self, records: &[Vec<f64>]) -> DirectionalReport {
        let column = |c: usize| records.iter().map(|r| r[c]).collect::<Vec<f64>>();
        let radius = median_estimate(&column(0));
        let projections: Vec<EstimateWithCI> = (0..self.directions.len()).map(|k| median_estimate(&column(k + 1))).collect();
        let gap = EstimateWithCI {
            point: radius.point - projections[0].point,
            std_error: radius.combined_se(&projections[0]),
            ..radius
        };
        DirectionalReport {
            dim: self.base.dim,
            horizon: self.base.horizon,
            directions: self.directions.clone(),
            radius,
            projections,
            gap,
            centering: bramson_centering(self.base.horizon),
            predicted_gap: dimension_gap(self.base.dim, self.base.horizon),
        }
    }
}

impl Tabulate for DirectionalReport {
    fn table(&self) -> Table {
        let mut t = Table::new(&["quantity", "direction", "n", "median", "se", "reference"]);
        let r = &self.radius;
        t.push(vec!["radius".into(), "".into(), r.n.into(), r.point.into(), r.std_error.into(), None.into()]);
        for (v, e) in self.directions.iter().zip(&self.projections) {
            let label = v.iter().map(|c| crate::report::fmt_float(*c)).collect::<Vec<_>>().join(" ");
            t.push(vec![
                "projection".into(),
                label.as_str().into(),
                e.n.into(),
                e.point.into(),
                e.std_error.into(),
                self.centering.into(),
            ]);
        }
        let g = &self.gap;
        t.push(vec!["gap".into(), "".into(), g.n.into(), g.point.into(), g.std_error.into(), self.predicted_gap.into()]);
        t
    }

    fn params(&self) -> Value {
        json!({ "dim": self.dim, "horizon": self.horizon, "directions": self.directions })
    }

    fn estimates(&self) -> Vec<PointEstimate> {
        let mut out = vec![point("radius", &self.radius)];
        out.extend(self.projections.iter().enumerate().map(|(k, e)| point(format!("projection_{k}"), e)));
        out.push(point("gap", &self.gap));
        out
    }

    fn fitted(&self) -> Value {
        json!({
            "centering": self.centering,
            "predicted_gap": self.predicted_gap,
            "gap": self.gap.point,
            "gap_se": self.gap.std_error,
        })
    }
}

/// Median over replicas of `max_u X_t(u) . v`.
pub fn directional_max(base: &SimConfig, v: &[f64], replicas: usize) -> Result<EstimateWithCI> {
    let setup = DirectionalSetup::new(base.clone(), vec![v.to_vec()])?;
    Ok(super::run_experiment(&setup, replicas)?.projections[0])
}

struct CountVisitor<'a> {
    watch: &'a FrontierWatch,
    directions: &'a [Vec<f64>],
    counts: Vec<u64>,
}

impl Visitor for CountVisitor<'_> {
    /// Bit `j` set once the lineage has reached frontier `j`.
    type Lineage = u8;

    fn root_lineage(&mut self) -> u8 {
        0
    }

    #[inline]
    fn step(&mut self, lineage: &mut u8, seg: &Segment<'_>, aux: &mut RngStream) {
        let all = (1u16 << self.watch.len()) - 1;
        if u16::from(*lineage) == all {
            return;
        }
        let r0 = norm(seg.x0);
        let r1 = norm(seg.x1);
        let u = self.watch.draw(aux);
        for j in 0..self.watch.len() {
            if *lineage & (1 << j) == 0 && self.watch.exceeds(j, seg, r0, r1, u) {
                *lineage |= 1 << j;
            }
        }
    }

    fn end(&mut self, lineage: &u8, end: &ParticleEnd<'_>) {
        if end.fate != Fate::Horizon {
            return;
        }
        let nd = self.directions.len();
        for j in 0..self.watch.len() {
            if lineage & (1 << j) != 0 {
                continue;
            }
            let level = self.watch.at_horizon(j) - 1.0;
            for (k, v) in self.directions.iter().enumerate() {
                if dot(end.position, v) >= level {
                    self.counts[j * nd + k] += 1;
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountPoint {
    pub offset: f64,
    /// Mean count per direction.
    pub counts: Vec<EstimateWithCI>,
    /// `t^((d-1)/2)` times each count over `y e^(-sqrt2 y)`.
    pub scaled: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CountReport {
    pub dim: usize,
    pub horizon: f64,
    pub directions: Vec<Vec<f64>>,
    pub points: Vec<CountPoint>,
}

/// Particles at time t within one unit of the frontier in direction `v`
/// whose whole path stayed inside the frontier ball.
pub struct CountSetup {
    base: SimConfig,
    offsets: Vec<f64>,
    directions: Vec<Vec<f64>>,
    watch: FrontierWatch,
}

impl CountSetup {
    pub fn new(base: SimConfig, offsets: &[f64], directions: Vec<Vec<f64>>, bridge: bool) -> Result<Self> {
        base.validate()?;
        check_feasible(&base)?;
        check_offsets(offsets, base.horizon)?;
        check_directions(&directions, base.dim)?;
        debug_assert!(MAX_WATCHED <= 8);
        let watch = FrontierWatch::new(base.dim, base.horizon, offsets, bridge)?;
        Ok(CountSetup { base, offsets: offsets.to_vec(), directions, watch })
    }
}

impl ReplicaExperiment for CountSetup {
    type Report = CountReport;

    fn record_len(&self) -> usize {
        self.offsets.len() * self.directions.len()
    }

    fn measure(&self, replica: u64) -> Result<Vec<f64>> {
        let mut v = CountVisitor { watch: &self.watch, directions: &self.directions, counts: vec![0; self.record_len()] };
        simulate_with(&replica_config(&self.base, replica), &mut v)?;
        Ok(v.counts.into_iter().map(|c| c as f64).collect())
    }

    fn aggregate(&self, records: &[Vec<f64>]) -> CountReport {
        let nd = self.directions.len();
        let scale = self.base.horizon.powf((self.base.dim as f64 - 1.0) / 2.0);
        let points = self
            .offsets
            .iter()
            .enumerate()
            .map(|(j, &y)| {
                let counts: Vec<EstimateWithCI> = (0..nd)
                    .map(|k| {
                        let values: Vec<f64> = records.iter().map(|r| r[j * nd + k]).collect();
                        EstimateWithCI::from_samples(&values, Method::Plain)
                    })
                    .collect();
                let scaled = counts.iter().map(|c| scale * c.point / tail_shape(y)).collect();
                CountPoint { offset: y, scaled, counts }
            })
            .collect();
        CountReport { dim: self.base.dim, horizon: self.base.horizon, directions: self.directions.clone(), points }
    }
}

impl Tabulate for CountReport {
    fn table(&self) -> Table {
        let mut t = Table::new(&["y", "direction", "n", "point", "se", "scaled"]);
        for p in &self.points {
            for (k, (c, scaled)) in p.counts.iter().zip(&p.scaled).enumerate() {
                t.push(vec![p.offset.into(), k.into(), c.n.into(), c.point.into(), c.std_error.into(), (*scaled).into()]);
            }
        }
        t
    }

    fn params(&self) -> Value {
        json!({
            "dim": self.dim,
            "horizon": self.horizon,
            "directions": self.directions,
            "y_grid": self.points.iter().map(|p| p.offset).collect::<Vec<_>>(),
        })
    }

    fn estimates(&self) -> Vec<PointEstimate> {
        self.points.iter().map(|p| point(p.offset, &p.counts[0])).collect()
    }

    fn fitted(&self) -> Value {
        json!({ "scaled": self.points.iter().map(|p| &p.scaled).collect::<Vec<_>>() })
    }
}

/// Mean number of particles near the frontier in direction `v` whose path
/// never left the frontier ball.
pub fn directional_frontier_count(base: &SimConfig, y: f64, v: &[f64], bridge: bool, replicas: usize) -> Result<EstimateWithCI> {
    let setup = CountSetup::new(base.clone(), &[y], vec![v.to_vec()], bridge)?;
    Ok(super::run_experiment(&setup, replicas)?.points[0].counts[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_locations() {
        assert!((bramson_centering(10.0) - 11.69987532).abs() < 1e-7);
        assert!((dimension_gap(3, 10.0) - 1.62817).abs() < 1e-5);
        assert_eq!(dimension_gap(1, 10.0), 0.0);
    }

    #[test]
    fn directions_are_orthonormal_or_opposite() {
        let d2 = standard_directions(3);
        assert_eq!(dot(&d2[0], &d2[1]), 0.0);
        let d1 = standard_directions(1);
        assert_eq!(d1, vec![vec![1.0], vec![-1.0]]);
    }

    #[test]
    fn projections_never_exceed_radius() {
        let setup = DirectionalSetup::new(SimConfig::new(3, 4.0).with_grid_step(4.0), standard_directions(3)).unwrap();
        for i in 0..20 {
            let r = setup.measure(i).unwrap();
            assert!(r[1] <= r[0] + 1e-12 && r[2] <= r[0] + 1e-12);
        }
        assert!(DirectionalSetup::new(SimConfig::new(3, 4.0), vec![vec![1.0, 1.0, 0.0]]).is_err());
    }

    #[test]
    fn rare_count_at_top_offset() {
        let base = SimConfig::new(2, 4.0).with_grid_step(0.05).with_seed(2);
        let est = directional_frontier_count(&base, 2.0, &[1.0, 0.0], true, 200).unwrap();
        assert!(est.point < 0.05, "{est:?}");
    }
}
