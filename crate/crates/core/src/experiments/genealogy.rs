use serde::Serialize;
use serde_json::{json, Value};

use super::{check_feasible, point, ratio_estimate, replica_config, ReplicaExperiment, Tabulate};
use crate::engine::{mrca_time, GenealogyTree, SimConfig};
use crate::error::{invalid, Result};
use crate::estimators::EstimateWithCI;
use crate::frontier::FrontierParams;
use crate::kernel::norm;
use crate::report::{PointEstimate, Table};

/// Particles within this distance of their replica's maximal radius count
/// as near the frontier.
pub const NEAR_FRONTIER_WINDOW: f64 = 1.5;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GenealogyStat {
    pub dim: usize,
    pub horizon: f64,
    pub lookback: f64,
    /// Pairs of distinct near-frontier particles, summed over replicas.
    pub near_pairs: u64,
    /// Near-frontier pairs at distance at most sqrt(t).
    pub close_pairs: u64,
    /// Close pairs whose common ancestor lived no later than t - lookback.
    pub old_pairs: u64,
    pub fraction_old: Option<EstimateWithCI>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GenealogyReport {
    /// Near-frontier means within [`NEAR_FRONTIER_WINDOW`] of the replica maximum.
    pub stats: Vec<GenealogyStat>,
    /// Near-frontier means at or beyond the zero-offset frontier at t.
    pub frontier_stats: Vec<GenealogyStat>,
    pub frontier_threshold: f64,
}

impl GenealogyReport {
    pub fn fraction(&self, lookback: f64) -> Option<EstimateWithCI> {
        self.stats.iter().find(|s| s.lookback == lookback).and_then(|s| s.fraction_old)
    }
}

pub struct GenealogySetup {
    base: SimConfig,
    lookbacks: Vec<f64>,
    frontier_threshold: f64,
}

impl GenealogySetup {
    pub fn new(base: SimConfig, lookbacks: &[f64]) -> Result<Self> {
        base.validate()?;
        check_feasible(&base)?;
        if lookbacks.is_empty() {
            return Err(invalid("lookback grid must not be empty"));
        }
        if let Some(r) = lookbacks.iter().find(|&&r| !(0.0..=base.horizon).contains(&r)) {
            return Err(invalid(format!("lookback {r} outside [0, {}]", base.horizon)));
        }
        let frontier = FrontierParams::unchecked(base.dim, base.horizon, 0.0);
        let frontier_threshold = frontier.eval(base.horizon);
        Ok(GenealogySetup { base, lookbacks: lookbacks.to_vec(), frontier_threshold })
    }

    fn block(&self) -> usize {
        2 + self.lookbacks.len()
    }

    /// `[near pairs, close pairs, old pairs per lookback]` for one near set.
    fn pair_counts(&self, tree: &GenealogyTree, near: &[(u64, &[f64])]) -> Result<Vec<f64>> {
        let t = self.base.horizon;
        let reach = t.sqrt();
        let mut out = vec![0.0; self.block()];
        for (i, (u, xu)) in near.iter().enumerate() {
            for (v, xv) in &near[i + 1..] {
                out[0] += 1.0;
                let dist = xu.iter().zip(xv.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                if dist > reach {
                    continue;
                }
                out[1] += 1.0;
                let split = mrca_time(tree, *u, *v)?;
                for (k, r) in self.lookbacks.iter().enumerate() {
                    if split <= t - r {
                        out[2 + k] += 1.0;
                    }
                }
            }
        }
        Ok(out)
    }

    fn stats_from(&self, records: &[Vec<f64>], offset: usize) -> Vec<GenealogyStat> {
        let total = |c: usize| records.iter().map(|r| r[offset + c]).sum::<f64>() as u64;
        let close: Vec<f64> = records.iter().map(|r| r[offset + 1]).collect();
        self.lookbacks
            .iter()
            .enumerate()
            .map(|(k, &lookback)| {
                let old: Vec<f64> = records.iter().map(|r| r[offset + 2 + k]).collect();
                GenealogyStat {
                    dim: self.base.dim,
                    horizon: self.base.horizon,
                    lookback,
                    near_pairs: total(0),
                    close_pairs: total(1),
                    old_pairs: total(2 + k),
                    fraction_old: ratio_estimate(&old, &close),
                }
            })
            .collect()
    }
}

impl ReplicaExperiment for GenealogySetup {
    type Report = GenealogyReport;

    fn record_len(&self) -> usize {
        2 * self.block()
    }

    fn measure(&self, replica: u64) -> Result<Vec<f64>> {
        let tree = GenealogyTree::simulate(&replica_config(&self.base, replica))?;
        let alive: Vec<(u64, &[f64], f64)> = tree
            .alive_at_horizon()
            .iter()
            .map(|&id| {
                let x = tree.end_position(id)?;
                Ok((id, x, norm(x)))
            })
            .collect::<Result<_>>()?;
        let max = alive.iter().map(|a| a.2).fold(f64::NEG_INFINITY, f64::max);
        let near: Vec<(u64, &[f64])> =
            alive.iter().filter(|a| a.2 >= max - NEAR_FRONTIER_WINDOW).map(|a| (a.0, a.1)).collect();
        let beyond: Vec<(u64, &[f64])> =
            alive.iter().filter(|a| a.2 >= self.frontier_threshold).map(|a| (a.0, a.1)).collect();
        let mut record = self.pair_counts(&tree, &near)?;
        record.extend(self.pair_counts(&tree, &beyond)?);
        Ok(record)
    }

    fn aggregate(&self, records: &[Vec<f64>]) -> GenealogyReport {
        GenealogyReport {
            stats: self.stats_from(records, 0),
            frontier_stats: self.stats_from(records, self.block()),
            frontier_threshold: self.frontier_threshold,
        }
    }
}

impl Tabulate for GenealogyReport {
    fn table(&self) -> Table {
        let mut t = Table::new(&[
            "near_set", "lookback", "near_pairs", "close_pairs", "old_pairs", "n", "fraction_old", "se",
        ]);
        for (label, stats) in [("replica_max", &self.stats), ("frontier", &self.frontier_stats)] {
            for s in stats.iter() {
                let f = s.fraction_old;
                t.push(vec![
                    label.into(),
                    s.lookback.into(),
                    s.near_pairs.into(),
                    s.close_pairs.into(),
                    s.old_pairs.into(),
                    f.map_or(0, |e| e.n).into(),
                    f.map(|e| e.point).into(),
                    f.and_then(|e| e.std_error).into(),
                ]);
            }
        }
        t
    }

    fn params(&self) -> Value {
        let first = self.stats.first();
        json!({
            "dim": first.map(|s| s.dim),
            "horizon": first.map(|s| s.horizon),
            "lookbacks": self.stats.iter().map(|s| s.lookback).collect::<Vec<_>>(),
            "near_window": NEAR_FRONTIER_WINDOW,
            "frontier_threshold": self.frontier_threshold,
        })
    }

    fn estimates(&self) -> Vec<PointEstimate> {
        self.stats
            .iter()
            .filter_map(|s| s.fraction_old.as_ref().map(|e| point(s.lookback, e)))
            .collect()
    }

    fn fitted(&self) -> Value {
        json!({
            "frontier_fraction_old": self.frontier_stats.iter()
                .map(|s| s.fraction_old.map(|e| e.point))
                .collect::<Vec<_>>(),
        })
    }
}

/// Fraction of close near-frontier pairs with an old common ancestor, per lookback.
pub fn genealogy_pairs(base: &SimConfig, lookbacks: &[f64], replicas: usize) -> Result<GenealogyReport> {
    super::run_experiment(&GenealogySetup::new(base.clone(), lookbacks)?, replicas)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_lookback_counts_every_close_pair() {
        let base = SimConfig::new(2, 5.0).with_grid_step(5.0).with_seed(9);
        let report = genealogy_pairs(&base, &[0.0, 1.0, 3.0], 60).unwrap();
        let s0 = &report.stats[0];
        assert_eq!(s0.old_pairs, s0.close_pairs);
        assert_eq!(s0.fraction_old.unwrap().point, 1.0);
        for w in report.stats.windows(2) {
            assert!(w[1].old_pairs <= w[0].old_pairs);
            assert!(w[0].close_pairs <= w[0].near_pairs);
        }
    }

    #[test]
    fn rejects_bad_lookbacks() {
        let base = SimConfig::new(2, 5.0).with_grid_step(5.0);
        assert!(GenealogySetup::new(base.clone(), &[]).is_err());
        assert!(GenealogySetup::new(base, &[6.0]).is_err());
    }
}
