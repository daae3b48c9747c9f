use std::io::Write;

use super::walker::{simulate_with, Fate, ParticleEnd, ParticleStart, Segment, Visitor};
use super::{Path, SimConfig, TimeGrid};
use crate::error::{invalid, Error, Result};
use crate::kernel::{norm, RngStream};
use crate::report::fmt_float;

#[derive(Clone, Debug, PartialEq)]
pub struct Particle {
    pub id: u64,
    pub parent_id: Option<u64>,
    pub birth_time: f64,
    pub end_time: f64,
    pub fate: Fate,
    pub children: [Option<u64>; 2],
    depth: u32,
    checkpoints: (usize, usize),
}

impl Particle {
    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn is_alive_at_horizon(&self) -> bool {
        self.fate == Fate::Horizon
    }
}

/// Full genealogy of one replica. Particle ids are dense and equal to their
/// index; a parent always has a smaller id than its children.
#[derive(Clone, Debug)]
pub struct GenealogyTree {
    dim: usize,
    horizon: f64,
    grid: TimeGrid,
    particles: Vec<Particle>,
    cp_times: Vec<f64>,
    cp_coords: Vec<f64>,
    alive: Vec<u64>,
    has_checkpoints: bool,
}

struct TreeBuilder {
    tree: GenealogyTree,
    record: bool,
}

impl Visitor for TreeBuilder {
    type Lineage = ();

    fn root_lineage(&mut self) {}

    fn begin(&mut self, start: &ParticleStart<'_>, _: &mut ()) {
        let tree = &mut self.tree;
        let depth = match start.parent {
            Some(p) => {
                let parent = &mut tree.particles[p as usize];
                let slot = if parent.children[0].is_none() { 0 } else { 1 };
                parent.children[slot] = Some(start.id);
                parent.depth + 1
            }
            None => 0,
        };
        let first = tree.cp_times.len();
        tree.cp_times.push(start.birth_time);
        tree.cp_coords.extend_from_slice(start.position);
        tree.particles.push(Particle {
            id: start.id,
            parent_id: start.parent,
            birth_time: start.birth_time,
            end_time: start.birth_time,
            fate: Fate::Horizon,
            children: [None, None],
            depth,
            checkpoints: (first, first + 1),
        });
    }

    fn step(&mut self, _: &mut (), seg: &Segment<'_>, _: &mut RngStream) {
        if self.record {
            self.tree.cp_times.push(seg.t1);
            self.tree.cp_coords.extend_from_slice(seg.x1);
        }
    }

    fn end(&mut self, _: &(), end: &ParticleEnd<'_>) {
        let tree = &mut self.tree;
        let last_time = *tree.cp_times.last().expect("birth checkpoint");
        if last_time != end.end_time {
            tree.cp_times.push(end.end_time);
            tree.cp_coords.extend_from_slice(end.position);
        }
        let particle = tree.particles.last_mut().expect("particle begun");
        particle.end_time = end.end_time;
        particle.fate = end.fate;
        particle.checkpoints.1 = tree.cp_times.len();
        if end.fate == Fate::Horizon {
            tree.alive.push(end.id);
        }
    }
}

impl GenealogyTree {
    /// Simulates one replica and records its genealogy.
    pub fn simulate(cfg: &SimConfig) -> Result<GenealogyTree> {
        let mut builder = TreeBuilder {
            tree: GenealogyTree {
                dim: cfg.dim,
                horizon: cfg.horizon,
                grid: cfg.grid(),
                particles: Vec::new(),
                cp_times: Vec::new(),
                cp_coords: Vec::new(),
                alive: Vec::new(),
                has_checkpoints: cfg.record_checkpoints,
            },
            record: cfg.record_checkpoints,
        };
        simulate_with(cfg, &mut builder)?;
        Ok(builder.tree)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn particle(&self, id: u64) -> Result<&Particle> {
        self.particles.get(id as usize).ok_or(Error::NotFound(id))
    }

    pub fn alive_at_horizon(&self) -> &[u64] {
        &self.alive
    }

    pub fn has_checkpoints(&self) -> bool {
        self.has_checkpoints
    }

    /// Recorded (time, position) pairs of one particle, birth first.
    pub fn checkpoints(&self, id: u64) -> Result<impl Iterator<Item = (f64, &[f64])>> {
        let p = self.particle(id)?;
        let (a, b) = p.checkpoints;
        let d = self.dim;
        Ok(self.cp_times[a..b]
            .iter()
            .copied()
            .zip(self.cp_coords[a * d..b * d].chunks_exact(d)))
    }

    pub fn birth_position(&self, id: u64) -> Result<&[f64]> {
        let p = self.particle(id)?;
        let a = p.checkpoints.0;
        Ok(&self.cp_coords[a * self.dim..(a + 1) * self.dim])
    }

    pub fn end_position(&self, id: u64) -> Result<&[f64]> {
        let p = self.particle(id)?;
        let b = p.checkpoints.1;
        Ok(&self.cp_coords[(b - 1) * self.dim..b * self.dim])
    }

    /// Ancestral line of `id`, root first.
    pub fn lineage(&self, id: u64) -> Result<Vec<u64>> {
        let mut line = vec![id];
        let mut cur = self.particle(id)?;
        while let Some(p) = cur.parent_id {
            line.push(p);
            cur = &self.particles[p as usize];
        }
        line.reverse();
        Ok(line)
    }

    /// Ancestral path X_s(u) restricted to checkpoint-grid times.
    pub fn grid_path(&self, id: u64) -> Result<Path> {
        if !self.has_checkpoints {
            return Err(invalid("tree was simulated without checkpoints"));
        }
        let mut path = Path::with_capacity(self.dim, self.grid.n_steps() + 1);
        for ancestor in self.lineage(id)? {
            for (t, x) in self.checkpoints(ancestor)? {
                if self.grid.is_grid_time(t) && path.times().last().map_or(true, |&last| t > last + 1e-12) {
                    path.push(t, x);
                }
            }
        }
        Ok(path)
    }

    /// Structural invariants: single root at the origin, parent/child time
    /// and position continuity, binary branching, increasing checkpoints.
    pub fn check_consistency(&self) -> std::result::Result<(), String> {
        let roots: Vec<&Particle> = self.particles.iter().filter(|p| p.parent_id.is_none()).collect();
        if roots.len() != 1 {
            return Err(format!("expected one root, found {}", roots.len()));
        }
        let root = roots[0];
        if root.birth_time != 0.0 || self.birth_position(root.id).unwrap().iter().any(|&c| c != 0.0) {
            return Err("root must start at the origin at time 0".into());
        }
        for p in &self.particles {
            if p.birth_time > p.end_time {
                return Err(format!("particle {} ends before birth", p.id));
            }
            let mut last = f64::NEG_INFINITY;
            for (t, _) in self.checkpoints(p.id).unwrap() {
                if t <= last || t < p.birth_time || t > p.end_time {
                    return Err(format!("particle {} has out-of-order checkpoint {t}", p.id));
                }
                last = t;
            }
            if let Some(parent) = p.parent_id {
                let q = self.particle(parent).map_err(|e| e.to_string())?;
                if q.end_time != p.birth_time {
                    return Err(format!("particle {} born at {} but parent ended at {}", p.id, p.birth_time, q.end_time));
                }
                if self.end_position(parent).unwrap() != self.birth_position(p.id).unwrap() {
                    return Err(format!("particle {} not born at parent's position", p.id));
                }
            }
            let n_children = p.children.iter().flatten().count();
            match p.fate {
                Fate::Branched if n_children != 2 => {
                    return Err(format!("branched particle {} has {n_children} children", p.id))
                }
                Fate::Horizon | Fate::Pruned if n_children != 0 => {
                    return Err(format!("leaf particle {} has children", p.id))
                }
                Fate::Horizon if (p.end_time - self.horizon).abs() > 1e-12 => {
                    return Err(format!("particle {} alive but ends before horizon", p.id))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// R_t for the simulated replica; `None` when pruning emptied the horizon.
pub fn max_displacement(tree: &GenealogyTree) -> Option<f64> {
    tree.alive
        .iter()
        .map(|&id| norm(tree.end_position(id).expect("alive id")))
        .reduce(f64::max)
}

/// Split time of the lineages of two distinct particles alive at the horizon.
pub fn mrca_time(tree: &GenealogyTree, u: u64, v: u64) -> Result<f64> {
    let mut a = tree.particle(u)?;
    let mut b = tree.particle(v)?;
    if u == v {
        return Err(invalid("mrca_time needs two distinct particles"));
    }
    if !a.is_alive_at_horizon() || !b.is_alive_at_horizon() {
        return Err(invalid("mrca_time is defined for particles alive at the horizon"));
    }
    while a.depth > b.depth {
        a = &tree.particles[a.parent_id.expect("non-root") as usize];
    }
    while b.depth > a.depth {
        b = &tree.particles[b.parent_id.expect("non-root") as usize];
    }
    while a.id != b.id {
        a = &tree.particles[a.parent_id.expect("non-root") as usize];
        b = &tree.particles[b.parent_id.expect("non-root") as usize];
    }
    Ok(a.end_time)
}

/// Genealogy export: `id,parent_id,birth_time,end_time,x1..xd` with the end
/// position (the horizon position for alive particles).
pub fn write_genealogy_csv<W: Write>(tree: &GenealogyTree, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string(), "parent_id".into(), "birth_time".into(), "end_time".into()];
    header.extend((1..=tree.dim).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for p in &tree.particles {
        let mut row = vec![
            p.id.to_string(),
            p.parent_id.map(|x| x.to_string()).unwrap_or_default(),
            fmt_float(p.birth_time),
            fmt_float(p.end_time),
        ];
        row.extend(tree.end_position(p.id)?.iter().map(|&x| fmt_float(x)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
