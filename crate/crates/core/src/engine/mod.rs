//! Event-driven simulation of d-dimensional branching Brownian motion.
//!
//! Each particle lives an Exp(1) time, moves with exact Gaussian increments
//! between the checkpoint grid and its branch time, then splits into two
//! children at its final position. Lineages are simulated depth first; each
//! one owns a stream split from its parent's, so a particle's trajectory does
//! not depend on the traversal order or on what was pruned elsewhere.

mod curve;
mod path;
mod tree;
mod walker;

pub use curve::{path_exceeds_curve, segment_exceeds_curve};
pub use path::Path;
pub use tree::{max_displacement, mrca_time, write_genealogy_csv, GenealogyTree, Particle};
pub use walker::{
    horizon_sample, simulate_with, Fate, HorizonSample, ParticleEnd, ParticleStart, Segment, Visitor,
    WalkSummary,
};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernel::Displacement;

pub const SQRT_2: f64 = std::f64::consts::SQRT_2;

pub const DEFAULT_GRID_STEP: f64 = 0.01;
pub const DEFAULT_PRUNE_LAG: f64 = 6.0;
pub const DEFAULT_MAX_PARTICLES: usize = 10_000_000;

/// Population control policy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pruning {
    None,
    /// Drop particles whose radius is at most `sqrt(2) s - lag` at a grid time `s`.
    Barrier { lag: f64 },
}

impl Pruning {
    #[inline]
    pub fn removes(&self, radius: f64, s: f64) -> bool {
        match *self {
            Pruning::None => false,
            Pruning::Barrier { lag } => radius <= SQRT_2 * s - lag,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Pruning::None => "none".to_string(),
            Pruning::Barrier { lag } => format!("barrier({lag})"),
        }
    }
}

impl Default for Pruning {
    fn default() -> Self {
        Pruning::None
    }
}

/// Removes every position with radius `<= sqrt(2) s - L`; returns how many
/// were removed.
pub fn prune_step(population: &mut Vec<Displacement>, s: f64, policy: &Pruning) -> usize {
    let before = population.len();
    population.retain(|x| !policy.removes(x.norm(), s));
    before - population.len()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dim: usize,
    pub horizon: f64,
    pub grid_step: f64,
    pub pruning: Pruning,
    pub max_particles: usize,
    pub seed: u64,
    pub replica_index: u64,
    /// Keep every grid checkpoint in the genealogy tree. When off, only the
    /// birth and end positions are stored.
    pub record_checkpoints: bool,
}

impl SimConfig {
    pub fn new(dim: usize, horizon: f64) -> Self {
        SimConfig {
            dim,
            horizon,
            grid_step: DEFAULT_GRID_STEP,
            pruning: Pruning::None,
            max_particles: DEFAULT_MAX_PARTICLES,
            seed: 0,
            replica_index: 0,
            record_checkpoints: true,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_replica(mut self, replica_index: u64) -> Self {
        self.replica_index = replica_index;
        self
    }

    pub fn with_grid_step(mut self, grid_step: f64) -> Self {
        self.grid_step = grid_step;
        self
    }

    pub fn with_pruning(mut self, pruning: Pruning) -> Self {
        self.pruning = pruning;
        self
    }

    pub fn with_max_particles(mut self, max_particles: usize) -> Self {
        self.max_particles = max_particles;
        self
    }

    pub fn with_checkpoints(mut self, record: bool) -> Self {
        self.record_checkpoints = record;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        if !self.horizon.is_finite() || self.horizon < 0.0 {
            return Err(invalid(format!("horizon must be finite and >= 0, got {}", self.horizon)));
        }
        if !self.grid_step.is_finite() || self.grid_step <= 0.0 {
            return Err(invalid(format!("grid step must be > 0, got {}", self.grid_step)));
        }
        let steps = (self.horizon / self.grid_step).round();
        if (steps * self.grid_step - self.horizon).abs() > 1e-9 * self.horizon.max(1.0) {
            return Err(invalid(format!(
                "grid step {} does not divide horizon {}",
                self.grid_step, self.horizon
            )));
        }
        if self.max_particles == 0 {
            return Err(invalid("max_particles must be at least 1"));
        }
        if let Pruning::Barrier { lag } = self.pruning {
            if lag.is_nan() || lag <= 0.0 {
                return Err(invalid(format!("pruning lag must be > 0, got {lag}")));
            }
        }
        Ok(())
    }

    pub(crate) fn grid(&self) -> TimeGrid {
        TimeGrid::new(self.grid_step, self.horizon)
    }
}

/// Uniform checkpoint grid `k * step`, with the last point pinned to the horizon.
#[derive(Clone, Copy, Debug)]
pub(crate) struct TimeGrid {
    step: f64,
    n_steps: usize,
    horizon: f64,
}

impl TimeGrid {
    pub(crate) fn new(step: f64, horizon: f64) -> Self {
        TimeGrid { step, n_steps: (horizon / step).round() as usize, horizon }
    }

    #[inline]
    pub(crate) fn n_steps(&self) -> usize {
        self.n_steps
    }

    #[inline]
    pub(crate) fn time(&self, k: usize) -> f64 {
        if k >= self.n_steps {
            self.horizon
        } else {
            k as f64 * self.step
        }
    }

    /// Smallest index whose time is strictly after `t`.
    #[inline]
    pub(crate) fn first_after(&self, t: f64) -> usize {
        let mut k = (t / self.step).floor().max(0.0) as usize + 1;
        while k <= self.n_steps && self.time(k) <= t {
            k += 1;
        }
        k
    }

    pub(crate) fn is_grid_time(&self, t: f64) -> bool {
        let r = t / self.step;
        (r - r.round()).abs() < 1e-7 || (t - self.horizon).abs() < 1e-12
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(SimConfig::new(2, 1.0).validate().is_ok());
        assert!(matches!(SimConfig::new(0, 1.0).validate(), Err(Error::InvalidDimension(0))));
        assert!(SimConfig::new(1, 1.0).with_grid_step(0.3).validate().is_err());
        assert!(SimConfig::new(1, 0.9).with_grid_step(0.3).validate().is_ok());
        assert!(SimConfig::new(1, -1.0).validate().is_err());
        assert!(SimConfig::new(1, 1.0).with_max_particles(0).validate().is_err());
        assert!(SimConfig::new(1, 1.0).with_pruning(Pruning::Barrier { lag: -1.0 }).validate().is_err());
    }

    #[test]
    fn grid_indices() {
        let g = TimeGrid::new(0.25, 1.0);
        assert_eq!(g.n_steps(), 4);
        assert_eq!(g.first_after(0.0), 1);
        assert_eq!(g.first_after(0.25), 2);
        assert_eq!(g.first_after(0.3), 2);
        assert_eq!(g.time(4), 1.0);
        assert!(g.is_grid_time(0.5) && !g.is_grid_time(0.51));
    }

    #[test]
    fn prune_step_edge_cases() {
        let mut pop: Vec<Displacement> = (0..5)
            .map(|i| Displacement::from_coords(vec![i as f64, 0.0]).unwrap())
            .collect();
        let inf = Pruning::Barrier { lag: f64::INFINITY };
        assert_eq!(prune_step(&mut pop, 100.0, &inf), 0);
        let six = Pruning::Barrier { lag: 6.0 };
        assert_eq!(prune_step(&mut pop, 0.0, &six), 0);
        assert_eq!(pop.len(), 5);
        // barrier at sqrt(2)*5 - 6 ~ 1.07 removes radii 0 and 1
        assert_eq!(prune_step(&mut pop, 5.0, &six), 2);
        assert_eq!(pop.len(), 3);
        assert_eq!(prune_step(&mut pop, 5.0, &Pruning::None), 0);
    }
}
