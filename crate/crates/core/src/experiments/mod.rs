//! Replica campaigns for the large-time behaviour of the maximal
//! displacement: tail law, frontier crossings, directional maxima and
//! genealogy of frontier particles.
//!
//! Every experiment is a per-replica measurement returning a flat record
//! plus a deterministic aggregation over records in replica order, which is
//! what lets campaigns checkpoint and resume without changing their output.

mod campaign;
mod crossing;
mod directional;
mod genealogy;
mod tail;

pub use campaign::{
    parse_config, parse_pairs, run_campaign, CampaignConfig, CampaignOutput, ExperimentKind, Manifest, DEFAULT_BATCH,
};
pub use crossing::{frontier_crossing_rate, CrossingPoint, CrossingReport, CrossingSetup};
pub use directional::{
    bramson_centering, directional_frontier_count, directional_max, dimension_gap, standard_directions,
    CountPoint, CountReport, CountSetup, DirectionalReport, DirectionalSetup,
};
pub use genealogy::{genealogy_pairs, GenealogyReport, GenealogySetup, GenealogyStat, NEAR_FRONTIER_WINDOW};
pub use tail::{tail_curve, TailCurve, TailPoint, TailSetup};

use std::ops::Range;

use rayon::prelude::*;
use serde_json::Value;

use crate::engine::{Pruning, SimConfig, SQRT_2};
use crate::error::{invalid, Error, Result};
use crate::estimators::EstimateWithCI;
use crate::report::{PointEstimate, Table};

/// Largest horizon simulated without population control.
pub const UNPRUNED_HORIZON_LIMIT: f64 = 12.0;
/// Largest horizon simulated at all.
pub const PRUNED_HORIZON_LIMIT: f64 = 15.0;

/// Rejects horizons whose population would not fit the desk budget.
pub fn check_feasible(cfg: &SimConfig) -> Result<()> {
    let limit = match cfg.pruning {
        Pruning::None => UNPRUNED_HORIZON_LIMIT,
        Pruning::Barrier { .. } => PRUNED_HORIZON_LIMIT,
    };
    if cfg.horizon > limit {
        return Err(Error::HorizonLimit { horizon: cfg.horizon, limit });
    }
    Ok(())
}

/// A per-replica measurement with a deterministic aggregation.
pub trait ReplicaExperiment: Sync {
    type Report: Tabulate;

    fn record_len(&self) -> usize;

    fn measure(&self, replica: u64) -> Result<Vec<f64>>;

    fn aggregate(&self, records: &[Vec<f64>]) -> Self::Report;
}

/// Views of a report for the CSV and JSON writers.
pub trait Tabulate {
    fn table(&self) -> Table;
    fn params(&self) -> Value;
    fn estimates(&self) -> Vec<PointEstimate>;
    fn fitted(&self) -> Value;
}

/// Measures replicas in `range`, in parallel, returning records in index order.
pub fn run_replicas<E: ReplicaExperiment + ?Sized>(exp: &E, range: Range<u64>) -> Result<Vec<Vec<f64>>> {
    range.into_par_iter().map(|i| exp.measure(i)).collect()
}

/// Runs replicas `0..replicas` and aggregates.
pub fn run_experiment<E: ReplicaExperiment>(exp: &E, replicas: usize) -> Result<E::Report> {
    if replicas == 0 {
        return Err(invalid("replicas must be at least 1"));
    }
    let records = run_replicas(exp, 0..replicas as u64)?;
    Ok(exp.aggregate(&records))
}

pub(crate) fn replica_config(base: &SimConfig, replica: u64) -> SimConfig {
    base.clone().with_replica(replica).with_checkpoints(false)
}

/// `y e^(-sqrt2 y)`, the shape of the upper tail.
pub(crate) fn tail_shape(y: f64) -> f64 {
    y * (-SQRT_2 * y).exp()
}

pub(crate) fn check_offsets(grid: &[f64], horizon: f64) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid("offset grid must not be empty"));
    }
    let top = horizon.sqrt() + 1e-12;
    if let Some(y) = grid.iter().find(|&&y| !(y >= 1.0 && y <= top)) {
        return Err(invalid(format!("offset {y} outside [1, sqrt(t)] for t = {horizon}")));
    }
    Ok(())
}

pub(crate) fn point(x: impl Into<Value>, e: &EstimateWithCI) -> PointEstimate {
    PointEstimate { x: x.into(), point: e.point, se: e.std_error, n: e.n }
}

/// Ratio of means `sum(a) / sum(b)` with a delta-method standard error.
pub(crate) fn ratio_estimate(a: &[f64], b: &[f64]) -> Option<EstimateWithCI> {
    let n = a.len();
    let sb: f64 = b.iter().sum();
    if sb <= 0.0 {
        return None;
    }
    let r = a.iter().sum::<f64>() / sb;
    let se = (n >= 2).then(|| {
        let mean_b = sb / n as f64;
        let resid: f64 = a.iter().zip(b).map(|(x, y)| (x - r * y).powi(2)).sum();
        (resid / (n as f64 * (n as f64 - 1.0))).sqrt() / mean_b
    });
    Some(EstimateWithCI { point: r, std_error: se, n, method: crate::estimators::Method::Plain })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feasibility_limits() {
        assert!(check_feasible(&SimConfig::new(2, 12.0)).is_ok());
        let err = check_feasible(&SimConfig::new(2, 13.0)).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        let pruned = SimConfig::new(2, 14.0).with_pruning(Pruning::Barrier { lag: 6.0 });
        assert!(check_feasible(&pruned).is_ok());
        assert!(check_feasible(&pruned.with_max_particles(5).clone()).is_ok());
        let far = SimConfig::new(2, 16.0).with_pruning(Pruning::Barrier { lag: 6.0 });
        assert!(matches!(check_feasible(&far), Err(Error::HorizonLimit { .. })));
    }

    #[test]
    fn ratio_of_means() {
        let r = ratio_estimate(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
        assert_eq!(r.point, 0.5);
        assert_eq!(r.std_error, Some(0.0));
        assert!(ratio_estimate(&[0.0], &[0.0]).is_none());
        assert_eq!(ratio_estimate(&[1.0], &[2.0]).unwrap().std_error, None);
    }

    #[test]
    fn offset_window() {
        assert!(check_offsets(&[1.0, 3.0], 10.0).is_ok());
        assert!(check_offsets(&[0.5], 10.0).is_err());
        assert!(check_offsets(&[3.5], 10.0).is_err());
        assert!(check_offsets(&[], 10.0).is_err());
    }
}
