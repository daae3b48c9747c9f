//! Finite direction sets whose half-spaces `{x : x.v >= R - 1}` cover the
//! exterior of the ball of radius `R`.
//!
//! On the unit sphere the requirement reads: every unit `u` has some `v` in
//! the set with `|u - v| <= sqrt(2/R)`. The construction maps the lattice
//! `h Z^(d-1)` through the inverse stereographic chart of each hemisphere.
//! The chart stretches distances by `2 / (1 + |z|^2) <= 2`, so the pitch
//! `h = sqrt(2/R) / sqrt(d-1)` (half the covering radius of the lattice
//! times the Lipschitz bound) is enough. Each chart covers its hemisphere
//! plus an overlap band so the equator is seen by both.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernel::{dot, norm, RngStream};

/// Sup of `|sigma(z) - sigma(z')| / |z - z'|` for the inverse stereographic chart.
pub const CHART_LIPSCHITZ: f64 = 2.0;
/// Minimum chart overlap beyond the hemisphere, relative to the unit chart disc.
pub const CHART_OVERLAP: f64 = 0.1;
/// Transverse spacing constant of [`direction_lattice`], in units of t^(-1/2).
pub const DIRECTION_LATTICE_SPACING: f64 = 1.0;

const UNIT_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Construction {
    LatticeStereographic,
    CapLattice,
    Explicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionSet {
    dim: usize,
    radius: f64,
    construction: Construction,
    coords: Vec<f64>,
}

impl DirectionSet {
    /// Wraps caller-supplied directions; each must be a unit vector.
    pub fn explicit(dim: usize, radius: f64, dirs: &[Vec<f64>]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension(0));
        }
        let mut coords = Vec::with_capacity(dirs.len() * dim);
        for v in dirs {
            check_unit(v, dim)?;
            coords.extend_from_slice(v);
        }
        Ok(DirectionSet { dim, radius, construction: Construction::Explicit, coords })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn construction(&self) -> Construction {
        self.construction
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn dirs(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    /// `size / R^((d-1)/2)`, the constant this construction achieves.
    pub fn measured_constant(&self) -> f64 {
        self.len() as f64 / self.radius.powf((self.dim as f64 - 1.0) / 2.0)
    }

    /// Keeps the directions whose index passes `keep`.
    pub fn filtered<F: FnMut(usize) -> bool>(&self, mut keep: F) -> DirectionSet {
        let coords = self
            .dirs()
            .enumerate()
            .filter(|(i, _)| keep(*i))
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        DirectionSet { dim: self.dim, radius: self.radius, construction: Construction::Explicit, coords }
    }
}

fn check_unit(v: &[f64], dim: usize) -> Result<()> {
    if v.len() != dim {
        return Err(invalid(format!("expected a {dim}-vector, got length {}", v.len())));
    }
    if (norm(v) - 1.0).abs() > UNIT_TOLERANCE {
        return Err(invalid(format!("direction is not a unit vector (norm {})", norm(v))));
    }
    Ok(())
}

/// Inverse stereographic chart of the upper (`sign = 1`) or lower hemisphere.
fn chart_point(z: &[f64], sign: f64, out: &mut Vec<f64>) {
    let r2: f64 = z.iter().map(|c| c * c).sum();
    let scale = 2.0 / (1.0 + r2);
    let start = out.len();
    out.extend(z.iter().map(|c| c * scale));
    out.push(sign * (1.0 - r2) / (1.0 + r2));
    let n = norm(&out[start..]);
    out[start..].iter_mut().for_each(|c| *c /= n);
}

/// Visits every integer vector of length `k` with `|h * v| <= radius`.
fn for_each_lattice_point<F: FnMut(&[f64])>(k: usize, h: f64, radius: f64, visit: &mut F) {
    fn rec<F: FnMut(&[f64])>(z: &mut Vec<f64>, k: usize, h: f64, budget: f64, visit: &mut F) {
        if z.len() == k {
            visit(z);
            return;
        }
        let m = (budget.max(0.0).sqrt() / h).floor() as i64;
        for i in -m..=m {
            let c = i as f64 * h;
            let rest = budget - c * c;
            if rest < 0.0 {
                continue;
            }
            z.push(c);
            rec(z, k, h, rest, visit);
            z.pop();
        }
    }
    let mut z = Vec::with_capacity(k);
    rec(&mut z, k, h, radius * radius, visit);
}

/// Lattice pitch in the chart for covering radius `sqrt(2/R)`.
pub fn lattice_pitch(radius: f64, dim: usize) -> f64 {
    let k = (dim - 1) as f64;
    // Shrunk by 1e-9 so the boundary case stays strictly inside.
    2.0 * (2.0 / radius).sqrt() / (CHART_LIPSCHITZ * k.sqrt()) * (1.0 - 1e-9)
}

/// Direction set U(R) from two stereographic charts of a scaled integer lattice.
pub fn build_covering(radius: f64, dim: usize) -> Result<DirectionSet> {
    if dim == 0 {
        return Err(Error::InvalidDimension(0));
    }
    if !(radius > 1.0) || !radius.is_finite() {
        return Err(invalid(format!("covering radius must be > 1, got {radius}")));
    }
    if dim == 1 {
        return Ok(DirectionSet {
            dim,
            radius,
            construction: Construction::LatticeStereographic,
            coords: vec![-1.0, 1.0],
        });
    }
    let h = lattice_pitch(radius, dim);
    // Points of the closed hemisphere sit at |z| <= 1; their nearest lattice
    // point is within half a cell diagonal.
    let half_diagonal = h * ((dim - 1) as f64).sqrt() / 2.0;
    let reach = 1.0 + CHART_OVERLAP.max(half_diagonal);
    let mut coords = Vec::new();
    for sign in [1.0, -1.0] {
        for_each_lattice_point(dim - 1, h, reach, &mut |z| chart_point(z, sign, &mut coords));
    }
    Ok(DirectionSet { dim, radius, construction: Construction::LatticeStereographic, coords })
}

/// Numerical estimate of the chart's Lipschitz constant over `|z| <= reach`,
/// from `pairs` random nearby pairs.
pub fn measure_chart_lipschitz(dim: usize, reach: f64, pairs: usize, stream: &mut RngStream) -> f64 {
    assert!(dim >= 2);
    let k = dim - 1;
    let mut best: f64 = 0.0;
    let mut z = vec![0.0; k];
    let mut w = vec![0.0; k];
    let mut a = Vec::with_capacity(dim);
    let mut b = Vec::with_capacity(dim);
    for _ in 0..pairs {
        stream.fill_standard_normal(&mut z);
        let r = norm(&z);
        let target = reach * stream.uniform().powf(1.0 / k as f64);
        z.iter_mut().for_each(|c| *c *= target / r);
        stream.fill_standard_normal(&mut w);
        let step = 1e-4;
        let wn = norm(&w);
        let zp: Vec<f64> = z.iter().zip(&w).map(|(a, b)| a + step * b / wn).collect();
        a.clear();
        b.clear();
        chart_point(&z, 1.0, &mut a);
        chart_point(&zp, 1.0, &mut b);
        let chord = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        best = best.max(chord / step);
    }
    best
}

/// Cap membership `x.v >= R - 1`; `v` must be a unit vector.
pub fn cap_contains(v: &[f64], x: &[f64], radius: f64) -> Result<bool> {
    check_unit(v, x.len())?;
    Ok(dot(x, v) >= radius - 1.0)
}

/// Equivalent distance form `|x - R v| <= sqrt(2R)`, valid for `|x| = R`.
pub fn cap_contains_by_distance(v: &[f64], x: &[f64], radius: f64) -> Result<bool> {
    check_unit(v, x.len())?;
    let d2: f64 = x.iter().zip(v).map(|(a, b)| (a - radius * b).powi(2)).sum();
    Ok(d2 <= 2.0 * radius)
}

/// Uniform hash grid over R^d used to find the directions near a query.
struct CellIndex {
    dim: usize,
    cell: f64,
    cells: HashMap<u64, Vec<u32>>,
}

fn cell_key(idx: &[i64]) -> u64 {
    idx.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &i| {
        (h ^ (i as u64)).wrapping_mul(0x0100_0000_01b3).rotate_left(29)
    })
}

impl CellIndex {
    fn new(ds: &DirectionSet, cell: f64) -> Self {
        let mut cells: HashMap<u64, Vec<u32>> = HashMap::new();
        let mut idx = vec![0i64; ds.dim];
        for (i, v) in ds.dirs().enumerate() {
            for (slot, c) in idx.iter_mut().zip(v) {
                *slot = (c / cell).floor() as i64;
            }
            cells.entry(cell_key(&idx)).or_default().push(i as u32);
        }
        CellIndex { dim: ds.dim, cell, cells }
    }

    /// Whether some indexed direction satisfies `accept`, searching the 3^d
    /// cells around `u` (complete for directions within one cell width).
    fn any_near<F: Fn(u32) -> bool>(&self, u: &[f64], accept: F) -> bool {
        let base: Vec<i64> = u.iter().map(|c| (c / self.cell).floor() as i64).collect();
        let mut offset = vec![-1i64; self.dim];
        let mut idx = vec![0i64; self.dim];
        loop {
            for k in 0..self.dim {
                idx[k] = base[k] + offset[k];
            }
            if let Some(list) = self.cells.get(&cell_key(&idx)) {
                if list.iter().any(|&i| accept(i)) {
                    return true;
                }
            }
            let mut k = 0;
            loop {
                if k == self.dim {
                    return false;
                }
                offset[k] += 1;
                if offset[k] <= 1 {
                    break;
                }
                offset[k] = -1;
                k += 1;
            }
        }
    }
}

/// Counts uniformly sampled points on the sphere of radius `R` that no
/// half-space `{x : x.v >= R - 1}` of the set contains.
pub fn verify_covering(ds: &DirectionSet, radius: f64, n_samples: usize, stream: &RngStream) -> usize {
    const CHUNK: usize = 1 << 14;
    let d = ds.dim;
    if ds.is_empty() {
        return n_samples;
    }
    // Any qualifying v has |u - v| <= sqrt(2/R) (for R >= 1), so one cell
    // of that width around u holds every candidate.
    let reach = if radius > 1.0 { (2.0 / radius).sqrt() } else { 2.0 };
    let index = CellIndex::new(ds, reach.min(2.0));
    let threshold = radius - 1.0;
    let chunks = n_samples.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut s = stream.split(c as u64);
            let count = CHUNK.min(n_samples - c * CHUNK);
            let mut u = vec![0.0; d];
            let mut violations = 0usize;
            for _ in 0..count {
                let n = loop {
                    s.fill_standard_normal(&mut u);
                    let n = norm(&u);
                    if n > 0.0 {
                        break n;
                    }
                };
                u.iter_mut().for_each(|c| *c /= n);
                let covered = index.any_near(&u, |i| radius * dot(&u, ds.get(i as usize)) >= threshold);
                if !covered {
                    violations += 1;
                }
            }
            violations
        })
        .sum()
}

/// Orthonormal basis whose first vector is `v`.
pub fn complete_basis(v: &[f64]) -> Vec<Vec<f64>> {
    let d = v.len();
    let mut basis = vec![v.to_vec()];
    let skip = (0..d)
        .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()))
        .unwrap_or(0);
    for e in (0..d).filter(|&e| e != skip) {
        let mut w = vec![0.0; d];
        w[e] = 1.0;
        for b in &basis {
            let p = dot(&w, b);
            w.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let n = norm(&w);
        w.iter_mut().for_each(|x| *x /= n);
        basis.push(w);
    }
    basis
}

/// Directions inside the cap `{w : w.v > 1 - eps/2}` whose transverse
/// coordinates lie on a grid of spacing `t^(-1/2)`. Empty for a degenerate
/// (non-positive) aperture.
pub fn direction_lattice(t: f64, dim: usize, eps: f64, v: &[f64]) -> Result<DirectionSet> {
    if dim == 0 {
        return Err(Error::InvalidDimension(0));
    }
    check_unit(v, dim)?;
    if !(t >= 1.0) || !t.is_finite() {
        return Err(invalid(format!("direction lattice needs t >= 1, got {t}")));
    }
    if !(eps < 1.0) {
        return Err(invalid(format!("cap aperture must be < 1, got {eps}")));
    }
    let empty = DirectionSet { dim, radius: t, construction: Construction::CapLattice, coords: Vec::new() };
    if eps <= 0.0 {
        return Ok(empty);
    }
    if dim == 1 {
        return Ok(DirectionSet { coords: v.to_vec(), ..empty });
    }
    let basis = complete_basis(v);
    let spacing = DIRECTION_LATTICE_SPACING / t.sqrt();
    let floor = 1.0 - eps / 2.0;
    let transverse = (1.0 - floor * floor).sqrt();
    let mut coords = Vec::new();
    for_each_lattice_point(dim - 1, spacing, transverse, &mut |p| {
        let r2: f64 = p.iter().map(|c| c * c).sum();
        let along = (1.0 - r2).max(0.0).sqrt();
        if along <= floor {
            return;
        }
        let start = coords.len();
        coords.extend(basis[0].iter().map(|b| along * b));
        for (c, b) in p.iter().zip(&basis[1..]) {
            for (slot, bj) in coords[start..].iter_mut().zip(b) {
                *slot += c * bj;
            }
        }
        let n = norm(&coords[start..]);
        coords[start..].iter_mut().for_each(|x| *x /= n);
    });
    Ok(DirectionSet { coords, ..empty })
}
