use serde::{Deserialize, Serialize};

use super::SimConfig;
use crate::error::{Error, PartialStats, Result};
use crate::kernel::{dot, exp_lifetime, norm, RngStream};

/// Domain label for the per-replica root stream.
const SIM_DOMAIN: u64 = 0x4242_4d5f_5349_4d00;
const AUX_SPLIT: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fate {
    Branched,
    Horizon,
    Pruned,
}

pub struct ParticleStart<'a> {
    pub id: u64,
    pub parent: Option<u64>,
    pub birth_time: f64,
    pub position: &'a [f64],
}

/// One move of a particle between consecutive recorded times.
pub struct Segment<'a> {
    pub id: u64,
    pub t0: f64,
    pub x0: &'a [f64],
    pub t1: f64,
    pub x1: &'a [f64],
    /// `t1` is a point of the checkpoint grid (including the horizon).
    pub on_grid: bool,
}

pub struct ParticleEnd<'a> {
    pub id: u64,
    pub end_time: f64,
    pub position: &'a [f64],
    pub fate: Fate,
}

/// Observer of a depth-first BBM walk. `Lineage` is per-lineage state copied
/// into both children at a branching event.
pub trait Visitor {
    type Lineage: Clone;

    fn root_lineage(&mut self) -> Self::Lineage;

    #[inline]
    fn begin(&mut self, _start: &ParticleStart<'_>, _lineage: &mut Self::Lineage) {}

    /// `aux` is a stream reserved for the visitor; it never perturbs motion.
    #[inline]
    fn step(&mut self, _lineage: &mut Self::Lineage, _seg: &Segment<'_>, _aux: &mut RngStream) {}

    #[inline]
    fn end(&mut self, _lineage: &Self::Lineage, _end: &ParticleEnd<'_>) {}
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WalkSummary {
    pub particles: usize,
    pub alive_at_horizon: usize,
    pub pruned: usize,
}

struct Pending<L> {
    parent: Option<u64>,
    birth: f64,
    stream: RngStream,
    lineage: L,
}

/// Runs one replica, reporting every particle to `visitor`.
pub fn simulate_with<V: Visitor>(cfg: &SimConfig, visitor: &mut V) -> Result<WalkSummary> {
    cfg.validate()?;
    let d = cfg.dim;
    let grid = cfg.grid();
    let horizon = cfg.horizon;
    let root = RngStream::derive(cfg.seed, &[SIM_DOMAIN, cfg.replica_index]);

    let mut stack = vec![Pending { parent: None, birth: 0.0, stream: root, lineage: visitor.root_lineage() }];
    let mut positions: Vec<f64> = vec![0.0; d];
    let mut cur = vec![0.0; d];
    let mut next = vec![0.0; d];
    let mut noise = vec![0.0; d];
    let mut summary = WalkSummary::default();
    let mut time_reached: f64 = 0.0;

    while let Some(mut p) = stack.pop() {
        if summary.particles >= cfg.max_particles {
            return Err(Error::ResourceLimit(PartialStats {
                max_particles: cfg.max_particles,
                particles_simulated: summary.particles,
                alive_at_horizon_so_far: summary.alive_at_horizon,
                time_reached,
            }));
        }
        let id = summary.particles as u64;
        summary.particles += 1;

        let off = positions.len() - d;
        cur.copy_from_slice(&positions[off..]);
        positions.truncate(off);

        let death = p.birth + exp_lifetime(&mut p.stream);
        let branches = death < horizon;
        let end_time = if branches { death } else { horizon };

        visitor.begin(
            &ParticleStart { id, parent: p.parent, birth_time: p.birth, position: &cur },
            &mut p.lineage,
        );

        let mut aux: Option<RngStream> = None;
        let mut s = p.birth;
        let mut k = grid.first_after(s);
        let mut fate = if branches { Fate::Branched } else { Fate::Horizon };
        loop {
            let grid_next = k <= grid.n_steps() && grid.time(k) < end_time;
            let t1 = if grid_next { grid.time(k) } else { end_time };
            let dt = t1 - s;
            if dt > 0.0 {
                p.stream.fill_standard_normal(&mut noise);
                let scale = dt.sqrt();
                for i in 0..d {
                    next[i] = cur[i] + scale * noise[i];
                }
                let aux_stream = aux.get_or_insert_with(|| p.stream.split(AUX_SPLIT));
                visitor.step(
                    &mut p.lineage,
                    &Segment { id, t0: s, x0: &cur, t1, x1: &next, on_grid: grid_next || !branches },
                    aux_stream,
                );
                std::mem::swap(&mut cur, &mut next);
                s = t1;
            }
            if !grid_next {
                break;
            }
            k += 1;
            if cfg.pruning.removes(norm(&cur), s) {
                fate = Fate::Pruned;
                break;
            }
        }
        time_reached = time_reached.max(s);

        visitor.end(&p.lineage, &ParticleEnd { id, end_time: s, position: &cur, fate });
        match fate {
            Fate::Horizon => summary.alive_at_horizon += 1,
            Fate::Pruned => summary.pruned += 1,
            Fate::Branched => {
                for child in [1u64, 0] {
                    positions.extend_from_slice(&cur);
                    stack.push(Pending {
                        parent: Some(id),
                        birth: s,
                        stream: p.stream.split(child),
                        lineage: p.lineage.clone(),
                    });
                }
            }
        }
    }
    Ok(summary)
}

/// Positions of the particles alive at the horizon, stored flat.
#[derive(Clone, Debug, PartialEq)]
pub struct HorizonSample {
    pub dim: usize,
    pub positions: Vec<f64>,
    pub summary: WalkSummary,
}

impl HorizonSample {
    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.positions.chunks_exact(self.dim)
    }

    /// R_t: largest Euclidean norm among alive particles.
    pub fn max_norm(&self) -> Option<f64> {
        self.iter().map(norm).reduce(f64::max)
    }

    /// Largest projection on `v` among alive particles.
    pub fn max_projection(&self, v: &[f64]) -> Option<f64> {
        self.iter().map(|x| dot(x, v)).reduce(f64::max)
    }
}

struct HorizonCollector {
    positions: Vec<f64>,
}

impl Visitor for HorizonCollector {
    type Lineage = ();

    fn root_lineage(&mut self) {}

    #[inline]
    fn end(&mut self, _: &(), end: &ParticleEnd<'_>) {
        if end.fate == Fate::Horizon {
            self.positions.extend_from_slice(end.position);
        }
    }
}

/// Simulates one replica keeping only horizon positions.
pub fn horizon_sample(cfg: &SimConfig) -> Result<HorizonSample> {
    let mut collector = HorizonCollector { positions: Vec::new() };
    let summary = simulate_with(cfg, &mut collector)?;
    Ok(HorizonSample { dim: cfg.dim, positions: collector.positions, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Pruning;

    #[test]
    fn zero_horizon_single_particle_at_origin() {
        let cfg = SimConfig::new(3, 0.0);
        let hs = horizon_sample(&cfg).unwrap();
        assert_eq!(hs.len(), 1);
        assert_eq!(hs.positions, vec![0.0; 3]);
        assert_eq!(hs.max_norm(), Some(0.0));
    }

    #[test]
    fn replica_is_deterministic() {
        let cfg = SimConfig::new(2, 3.0).with_seed(11).with_replica(4).with_grid_step(0.1);
        assert_eq!(horizon_sample(&cfg).unwrap(), horizon_sample(&cfg).unwrap());
        let other = cfg.clone().with_replica(5);
        assert_ne!(horizon_sample(&cfg).unwrap(), horizon_sample(&other).unwrap());
    }

    #[test]
    fn resource_limit_carries_partial_stats() {
        let cfg = SimConfig::new(1, 12.0).with_grid_step(0.5).with_max_particles(100);
        match horizon_sample(&cfg) {
            Err(Error::ResourceLimit(stats)) => {
                assert_eq!(stats.max_particles, 100);
                assert_eq!(stats.particles_simulated, 100);
                assert!(stats.time_reached > 0.0);
            }
            other => panic!("expected resource limit, got {other:?}"),
        }
    }

    #[test]
    fn pruning_never_adds_particles_and_coupling_holds() {
        // Surviving lineages use the same streams, so pruning can only remove
        // horizon particles, never move them.
        for replica in 0..20 {
            let base = SimConfig::new(1, 8.0).with_grid_step(0.25).with_replica(replica);
            let full = horizon_sample(&base).unwrap();
            let pruned = horizon_sample(&base.clone().with_pruning(Pruning::Barrier { lag: 2.0 })).unwrap();
            assert!(pruned.len() <= full.len());
            let full_set: Vec<u64> = full.positions.iter().map(|x| x.to_bits()).collect();
            assert!(pruned.positions.iter().all(|x| full_set.contains(&x.to_bits())));
        }
    }
}
