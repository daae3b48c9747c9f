use serde::Serialize;
use serde_json::{json, Value};

use super::{check_feasible, check_offsets, point, replica_config, tail_shape, ReplicaExperiment, Tabulate};
use crate::engine::{simulate_with, Fate, ParticleEnd, Segment, SimConfig, Visitor};
use crate::error::{invalid, Result};
use crate::estimators::{EstimateWithCI, Method};
use crate::frontier::FrontierParams;
use crate::kernel::{bridge_crossing_prob_gaps, norm, RngStream};
use crate::report::{PointEstimate, Table};
use crate::stats::{normal_quantile, wilson_interval};

/// Most offsets a single path-watching run tracks at once.
pub(crate) const MAX_WATCHED: usize = 8;

/// Frontier curves for several offsets, checked along every segment.
pub(crate) struct FrontierWatch {
    curves: Vec<FrontierParams>,
    bridge: bool,
}

impl FrontierWatch {
    pub(crate) fn new(dim: usize, horizon: f64, offsets: &[f64], bridge: bool) -> Result<Self> {
        if offsets.len() > MAX_WATCHED {
            return Err(invalid(format!("at most {MAX_WATCHED} offsets per run, got {}", offsets.len())));
        }
        let curves = offsets.iter().map(|&y| FrontierParams::unchecked(dim, horizon, y)).collect();
        Ok(FrontierWatch { curves, bridge })
    }

    pub(crate) fn len(&self) -> usize {
        self.curves.len()
    }

    pub(crate) fn at_horizon(&self, j: usize) -> f64 {
        self.curves[j].eval(self.curves[j].horizon())
    }

    /// One uniform per segment, shared by every offset, so that reaching a
    /// higher curve always implies reaching the lower ones.
    #[inline]
    pub(crate) fn draw(&self, aux: &mut RngStream) -> f64 {
        if self.bridge {
            aux.uniform()
        } else {
            1.0
        }
    }

    /// Whether the radial path reaches curve `j` on this segment, given the
    /// segment's shared uniform `u`.
    #[inline]
    pub(crate) fn exceeds(&self, j: usize, seg: &Segment<'_>, r0: f64, r1: f64, u: f64) -> bool {
        let curve = &self.curves[j];
        let c1 = curve.eval(seg.t1);
        if r1 >= c1 {
            return true;
        }
        self.bridge && u < bridge_crossing_prob_gaps(curve.eval(seg.t0) - r0, c1 - r1, seg.t1 - seg.t0)
    }
}

/// Integer time `k + 1` if `t` is one (within rounding), as the index `k`.
fn unit_boundary(t: f64) -> Option<usize> {
    let r = t.round();
    ((t - r).abs() < 1e-9 && r >= 1.0).then(|| r as usize - 1)
}

/// Unit interval `[k, k+1]` containing a crossing observed at `t > 0`.
fn interval_of(t: f64, intervals: usize) -> i32 {
    (((t - 1e-9).ceil() as i64 - 1).clamp(0, intervals as i64 - 1)) as i32
}

struct CrossingVisitor<'a> {
    watch: &'a FrontierWatch,
    intervals: usize,
    crossed: Vec<bool>,
    endpoint: Vec<bool>,
    /// Per offset, per unit interval.
    counts: Vec<u64>,
}

impl Visitor for CrossingVisitor<'_> {
    /// Last unit interval in which the lineage was at or beyond each curve.
    type Lineage = [i32; MAX_WATCHED];

    fn root_lineage(&mut self) -> Self::Lineage {
        [-1; MAX_WATCHED]
    }

    #[inline]
    fn step(&mut self, lineage: &mut Self::Lineage, seg: &Segment<'_>, aux: &mut RngStream) {
        let r0 = norm(seg.x0);
        let r1 = norm(seg.x1);
        let u = self.watch.draw(aux);
        for j in 0..self.watch.len() {
            if self.watch.exceeds(j, seg, r0, r1, u) {
                lineage[j] = interval_of(seg.t1, self.intervals);
                self.crossed[j] = true;
            }
        }
        if !seg.on_grid {
            return;
        }
        if let Some(k) = unit_boundary(seg.t1).filter(|&k| k < self.intervals) {
            for j in 0..self.watch.len() {
                if lineage[j] == k as i32 {
                    self.counts[j * self.intervals + k] += 1;
                }
            }
        }
    }

    fn end(&mut self, _: &Self::Lineage, end: &ParticleEnd<'_>) {
        if end.fate == Fate::Horizon {
            let r = norm(end.position);
            for j in 0..self.watch.len() {
                if r >= self.watch.at_horizon(j) {
                    self.endpoint[j] = true;
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrossingPoint {
    pub offset: f64,
    /// P(some particle reaches the frontier before t).
    pub crossing: EstimateWithCI,
    pub wilson: (f64, f64),
    /// P(R_t >= frontier at t), the endpoint-only event.
    pub endpoint: EstimateWithCI,
    /// Crossing estimate divided by `y e^(-sqrt2 y)`.
    pub scaled: f64,
    /// Mean number of particles alive at k+1 whose lineage was beyond the
    /// frontier during `[k, k+1]`.
    pub interval_counts: Vec<EstimateWithCI>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CrossingReport {
    pub dim: usize,
    pub horizon: f64,
    pub bridge: bool,
    pub points: Vec<CrossingPoint>,
}

impl CrossingReport {
    /// Largest excess, in combined SE units, of the endpoint probability over
    /// the crossing probability (the first event is contained in the second).
    pub fn worst_inclusion_gap(&self) -> f64 {
        self.points
            .iter()
            .map(|p| {
                let excess = p.endpoint.point - p.crossing.point;
                match p.endpoint.combined_se(&p.crossing) {
                    Some(se) if se > 0.0 => excess / se,
                    _ if excess > 0.0 => f64::INFINITY,
                    _ => 0.0,
                }
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub struct CrossingSetup {
    base: SimConfig,
    offsets: Vec<f64>,
    watch: FrontierWatch,
    intervals: usize,
}

impl CrossingSetup {
    pub fn new(base: SimConfig, offsets: &[f64], bridge: bool) -> Result<Self> {
        base.validate()?;
        check_feasible(&base)?;
        check_offsets(offsets, base.horizon)?;
        let per_unit = 1.0 / base.grid_step;
        if (per_unit - per_unit.round()).abs() > 1e-6 {
            return Err(invalid(format!("grid step {} must divide 1 for per-interval counts", base.grid_step)));
        }
        let watch = FrontierWatch::new(base.dim, base.horizon, offsets, bridge)?;
        let intervals = (base.horizon - 1e-9).ceil().max(1.0) as usize;
        Ok(CrossingSetup { base, offsets: offsets.to_vec(), watch, intervals })
    }
}

impl ReplicaExperiment for CrossingSetup {
    type Report = CrossingReport;

    fn record_len(&self) -> usize {
        self.offsets.len() * (2 + self.intervals)
    }

    fn measure(&self, replica: u64) -> Result<Vec<f64>> {
        let ny = self.offsets.len();
        let mut v = CrossingVisitor {
            watch: &self.watch,
            intervals: self.intervals,
            crossed: vec![false; ny],
            endpoint: vec![false; ny],
            counts: vec![0; ny * self.intervals],
        };
        simulate_with(&replica_config(&self.base, replica), &mut v)?;
        let mut record = Vec::with_capacity(self.record_len());
        for j in 0..ny {
            record.push(f64::from(u8::from(v.crossed[j])));
            record.push(f64::from(u8::from(v.endpoint[j])));
            record.extend(v.counts[j * self.intervals..(j + 1) * self.intervals].iter().map(|&c| c as f64));
        }
        Ok(record)
    }

    fn aggregate(&self, records: &[Vec<f64>]) -> CrossingReport {
        let n = records.len();
        let block = 2 + self.intervals;
        let z = normal_quantile(0.975);
        let column = |c: usize| -> EstimateWithCI {
            let values: Vec<f64> = records.iter().map(|r| r[c]).collect();
            EstimateWithCI::from_samples(&values, Method::Plain)
        };
        let points = self
            .offsets
            .iter()
            .enumerate()
            .map(|(j, &y)| {
                let off = j * block;
                let crossing = column(off);
                let hits = records.iter().filter(|r| r[off] > 0.0).count();
                CrossingPoint {
                    offset: y,
                    wilson: wilson_interval(hits, n, z),
                    endpoint: column(off + 1),
                    scaled: crossing.point / tail_shape(y),
                    interval_counts: (0..self.intervals).map(|k| column(off + 2 + k)).collect(),
                    crossing,
                }
            })
            .collect();
        CrossingReport { dim: self.base.dim, horizon: self.base.horizon, bridge: self.watch.bridge, points }
    }
}

impl Tabulate for CrossingReport {
    fn table(&self) -> Table {
        let mut header: Vec<String> = [
            "y", "n", "point", "se", "wilson_lower", "wilson_upper", "endpoint_point", "endpoint_se", "scaled",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let intervals = self.points.first().map_or(0, |p| p.interval_counts.len());
        header.extend((0..intervals).map(|k| format!("count_{k}_{}", k + 1)));
        let mut t = Table::new(&header);
        for p in &self.points {
            let mut row = vec![
                p.offset.into(),
                p.crossing.n.into(),
                p.crossing.point.into(),
                p.crossing.std_error.into(),
                p.wilson.0.into(),
                p.wilson.1.into(),
                p.endpoint.point.into(),
                p.endpoint.std_error.into(),
                p.scaled.into(),
            ];
            row.extend(p.interval_counts.iter().map(|c| c.point.into()));
            t.push(row);
        }
        t
    }

    fn params(&self) -> Value {
        json!({
            "dim": self.dim,
            "horizon": self.horizon,
            "bridge": self.bridge,
            "y_grid": self.points.iter().map(|p| p.offset).collect::<Vec<_>>(),
        })
    }

    fn estimates(&self) -> Vec<PointEstimate> {
        self.points.iter().map(|p| point(p.offset, &p.crossing)).collect()
    }

    fn fitted(&self) -> Value {
        json!({
            "scaled": self.points.iter().map(|p| p.scaled).collect::<Vec<_>>(),
            "endpoint": self.points.iter().map(|p| p.endpoint.point).collect::<Vec<_>>(),
            "inclusion_gap_se": self.worst_inclusion_gap(),
            "interval_counts": self.points.iter()
                .map(|p| p.interval_counts.iter().map(|c| c.point).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
        })
    }
}

/// P(some particle path reaches the frontier `f^{t,y}` before t), per offset.
pub fn frontier_crossing_rate(base: &SimConfig, offsets: &[f64], bridge: bool, replicas: usize) -> Result<CrossingReport> {
    super::run_experiment(&CrossingSetup::new(base.clone(), offsets, bridge)?, replicas)
}
