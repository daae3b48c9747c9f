use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{replicate, EstimateWithCI, Method};
use crate::engine::{horizon_sample, GenealogyTree, Path, SimConfig};
use crate::error::{invalid, Result};
use crate::kernel::{dot, norm, RngStream};
use crate::stats::MeanVar;

/// Number of strata for the split time in the second-moment integral.
pub const SPLIT_STRATA: usize = 100;
const MANY_TO_ONE_MAX_T: f64 = 8.0;
const MANY_TO_TWO_MAX_T: f64 = 4.0;

/// A bounded functional of a sampled path.
pub trait PathFunctional: Sync {
    fn eval(&self, path: &Path) -> f64;

    /// False when only the end point matters; samplers may then skip the
    /// intermediate grid.
    fn needs_path(&self) -> bool {
        true
    }
}

pub struct Zero;

impl PathFunctional for Zero {
    fn eval(&self, _: &Path) -> f64 {
        0.0
    }

    fn needs_path(&self) -> bool {
        false
    }
}

pub struct Unit;

impl PathFunctional for Unit {
    fn eval(&self, _: &Path) -> f64 {
        1.0
    }

    fn needs_path(&self) -> bool {
        false
    }
}

/// `1{|path(t)| >= level}`.
pub struct EndNormAtLeast(pub f64);

impl PathFunctional for EndNormAtLeast {
    fn eval(&self, path: &Path) -> f64 {
        f64::from(u8::from(norm(path.end_point()) >= self.0))
    }

    fn needs_path(&self) -> bool {
        false
    }
}

/// `1{path(t) . direction >= level}`.
pub struct EndProjectionAtLeast {
    pub direction: Vec<f64>,
    pub level: f64,
}

impl PathFunctional for EndProjectionAtLeast {
    fn eval(&self, path: &Path) -> f64 {
        f64::from(u8::from(dot(path.end_point(), &self.direction) >= self.level))
    }

    fn needs_path(&self) -> bool {
        false
    }
}

/// Wraps a closure as a whole-path functional.
pub struct FnFunctional<F>(pub F);

impl<F: Fn(&Path) -> f64 + Sync> PathFunctional for FnFunctional<F> {
    fn eval(&self, path: &Path) -> f64 {
        (self.0)(path)
    }
}

/// Checkpoints of `[0, t]` with spacing at most `step`, ending exactly at `t`.
fn grid_times(t: f64, step: f64) -> Vec<f64> {
    let n = ((t / step) - 1e-9).ceil().max(1.0) as usize;
    (0..=n).map(|k| if k == n { t } else { t * k as f64 / n as f64 }).collect()
}

/// Brownian motion from `start` observed at `times` (first entry is the start time).
fn sample_bm(times: &[f64], start: &[f64], stream: &mut RngStream) -> Path {
    let d = start.len();
    let mut path = Path::with_capacity(d, times.len());
    let mut x = start.to_vec();
    let mut noise = vec![0.0; d];
    path.push(times[0], &x);
    for w in times.windows(2) {
        let sd = (w[1] - w[0]).sqrt();
        stream.fill_standard_normal(&mut noise);
        x.iter_mut().zip(&noise).for_each(|(c, n)| *c += sd * n);
        path.push(w[1], &x);
    }
    path
}

fn concat(head: &Path, tail: &Path) -> Path {
    let mut out = Path::with_capacity(head.dim(), head.len() + tail.len());
    for (t, x) in head.iter() {
        out.push(t, x);
    }
    for (t, x) in tail.iter().skip(1) {
        out.push(t, x);
    }
    out
}

/// A Brownian path up to `split_time` followed by two conditionally
/// independent continuations to the horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitPath {
    pub split_time: f64,
    pub shared: Path,
    pub branch_a: Path,
    pub branch_b: Path,
}

impl SplitPath {
    /// Samples on the grid of spacing `step` plus the split time itself.
    /// With `full_grid` off only the origin, split point and end points are drawn.
    pub fn sample(dim: usize, t: f64, split_time: f64, step: f64, full_grid: bool, stream: &mut RngStream) -> Result<Self> {
        if dim == 0 {
            return Err(crate::Error::InvalidDimension(0));
        }
        if !(0.0..=t).contains(&split_time) {
            return Err(invalid(format!("split time {split_time} outside [0, {t}]")));
        }
        let (head, tail) = if full_grid {
            let grid = grid_times(t, step);
            let mut head: Vec<f64> = grid.iter().copied().filter(|&g| g < split_time).collect();
            head.push(split_time);
            let mut tail = vec![split_time];
            tail.extend(grid.iter().copied().filter(|&g| g > split_time));
            (head, tail)
        } else {
            (vec![0.0, split_time], vec![split_time, t])
        };
        let shared = sample_bm(&head, &vec![0.0; dim], stream);
        let branch_a = sample_bm(&tail, shared.end_point(), stream);
        let branch_b = sample_bm(&tail, shared.end_point(), stream);
        Ok(SplitPath { split_time, shared, branch_a, branch_b })
    }

    pub fn path_a(&self) -> Path {
        concat(&self.shared, &self.branch_a)
    }

    pub fn path_b(&self) -> Path {
        concat(&self.shared, &self.branch_b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManyToOne {
    /// Mean of the sum of F over particles alive at t.
    pub bbm_side: EstimateWithCI,
    /// e^t times the Brownian mean of F.
    pub bm_side: EstimateWithCI,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManyToTwo {
    /// Mean of (sum_u F)(sum_u G) over particles alive at t.
    pub lhs: EstimateWithCI,
    /// e^t E[F(B) G(B)].
    pub diagonal: EstimateWithCI,
    /// int_0^t 2 e^(2t-s) E[F(B) G(W^(s))] ds.
    pub integral: EstimateWithCI,
}

impl ManyToTwo {
    pub fn rhs(&self) -> EstimateWithCI {
        self.diagonal.plus(&self.integral)
    }
}

fn check_common(dim: usize, t: f64, max_t: f64, counts: &[usize]) -> Result<()> {
    if dim == 0 {
        return Err(crate::Error::InvalidDimension(0));
    }
    if !(t >= 0.0 && t <= max_t) {
        return Err(invalid(format!("horizon must lie in [0, {max_t}], got {t}")));
    }
    if counts.contains(&0) {
        return Err(invalid("replicate counts must be at least 1"));
    }
    Ok(())
}

/// Per-replica sums of each functional over the particles alive at t.
fn bbm_sums(cfg: &SimConfig, functionals: &[&dyn PathFunctional]) -> Result<Vec<f64>> {
    let mut sums = vec![0.0; functionals.len()];
    if functionals.iter().any(|f| f.needs_path()) {
        let tree = GenealogyTree::simulate(cfg)?;
        for &id in tree.alive_at_horizon() {
            let path = tree.grid_path(id)?;
            for (sum, f) in sums.iter_mut().zip(functionals) {
                *sum += f.eval(&path);
            }
        }
    } else {
        let sample = horizon_sample(&cfg.clone().with_checkpoints(false))?;
        let origin = vec![0.0; cfg.dim];
        let mut path = Path::with_capacity(cfg.dim, 2);
        for x in sample.iter() {
            path.clear();
            path.push(0.0, &origin);
            path.push(cfg.horizon, x);
            for (sum, f) in sums.iter_mut().zip(functionals) {
                *sum += f.eval(&path);
            }
        }
    }
    Ok(sums)
}

fn bbm_replicas<T: Send, M>(n: usize, base: SimConfig, map: M) -> Result<Vec<T>>
where
    M: Fn(SimConfig) -> Result<T> + Sync,
{
    (0..n as u64)
        .into_par_iter()
        .map(|i| map(base.clone().with_replica(i)))
        .collect()
}

fn bm_path(dim: usize, t: f64, step: f64, full: bool, stream: &mut RngStream) -> Path {
    let times = if full { grid_times(t, step) } else { vec![0.0, t] };
    sample_bm(&times, &vec![0.0; dim], stream)
}

/// First-moment identity: E[sum_u F(X(u))] = e^t E[F(B)], each side from
/// independent samples. BBM replicas use seed `stream.split(0).key()`.
pub fn many_to_one_check<F: PathFunctional>(
    functional: &F,
    dim: usize,
    t: f64,
    grid_step: f64,
    n_bbm: usize,
    n_bm: usize,
    stream: &RngStream,
) -> Result<ManyToOne> {
    check_common(dim, t, MANY_TO_ONE_MAX_T, &[n_bbm, n_bm])?;
    let base = SimConfig::new(dim, t).with_seed(stream.split(0).key()).with_grid_step(grid_step);
    base.validate()?;
    let bbm = bbm_replicas(n_bbm, base, |cfg| Ok(bbm_sums(&cfg, &[functional])?[0]))?;
    let full = functional.needs_path();
    let growth = t.exp();
    let bm = replicate(n_bm, &stream.split(1), |s| functional.eval(&bm_path(dim, t, grid_step, full, s)));
    Ok(ManyToOne {
        bbm_side: EstimateWithCI::from_samples(&bbm, Method::Plain),
        bm_side: EstimateWithCI::from_samples(&bm, Method::Plain).scaled(growth),
    })
}

/// Second-moment identity checked term by term.
///
/// Ordered pairs of distinct particles at t whose lineages separate at time
/// s appear with density `2 e^(2t-s)`: e^s ancestors branch at rate 1, each
/// branching contributes both orderings of its two subtrees, and each
/// subtree grows by e^(t-s). The split time is drawn stratified over
/// [`SPLIT_STRATA`] equal cells, `n_bm` samples in total.
pub fn many_to_two_check<F: PathFunctional, G: PathFunctional>(
    f: &F,
    g: &G,
    dim: usize,
    t: f64,
    grid_step: f64,
    n_bbm: usize,
    n_bm: usize,
    stream: &RngStream,
) -> Result<ManyToTwo> {
    check_common(dim, t, MANY_TO_TWO_MAX_T, &[n_bbm, n_bm])?;
    if n_bm < SPLIT_STRATA {
        return Err(invalid(format!("need at least {SPLIT_STRATA} Brownian samples, got {n_bm}")));
    }
    let base = SimConfig::new(dim, t).with_seed(stream.split(0).key()).with_grid_step(grid_step);
    base.validate()?;
    let lhs = bbm_replicas(n_bbm, base, |cfg| {
        let sums = bbm_sums(&cfg, &[f, g])?;
        Ok(sums[0] * sums[1])
    })?;

    let full = f.needs_path() || g.needs_path();
    let diagonal = replicate(n_bm, &stream.split(1), |s| {
        let path = bm_path(dim, t, grid_step, full, s);
        f.eval(&path) * g.eval(&path)
    });

    let cell = t / SPLIT_STRATA as f64;
    let split_samples: Vec<(usize, f64)> = (0..n_bm as u64)
        .into_par_iter()
        .map(|i| {
            let mut s = stream.split(2).split(i);
            let stratum = i as usize % SPLIT_STRATA;
            let split = (stratum as f64 + s.uniform()) * cell;
            let sp = SplitPath::sample(dim, t, split, grid_step, full, &mut s)?;
            let weight = 2.0 * (2.0 * t - split).exp() * t;
            Ok((stratum, weight * f.eval(&sp.path_a()) * g.eval(&sp.path_b())))
        })
        .collect::<Result<_>>()?;
    let mut strata = vec![MeanVar::default(); SPLIT_STRATA];
    for (k, v) in split_samples {
        strata[k].push(v);
    }
    let point = strata.iter().map(MeanVar::mean).sum::<f64>() / SPLIT_STRATA as f64;
    let variance: Option<f64> = strata
        .iter()
        .map(|m| m.variance().map(|v| v / m.count() as f64))
        .sum();
    let integral = EstimateWithCI {
        point,
        std_error: variance.map(|v| v.sqrt() / SPLIT_STRATA as f64),
        n: n_bm,
        method: Method::Plain,
    };

    Ok(ManyToTwo {
        lhs: EstimateWithCI::from_samples(&lhs, Method::Plain),
        diagonal: EstimateWithCI::from_samples(&diagonal, Method::Plain).scaled(t.exp()),
        integral,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_path_branches_share_the_split_point() {
        let mut s = RngStream::new(3);
        let sp = SplitPath::sample(2, 1.0, 0.37, 0.1, true, &mut s).unwrap();
        assert_eq!(sp.branch_a.point(0), sp.shared.end_point());
        assert_eq!(sp.branch_b.point(0), sp.shared.end_point());
        assert_ne!(sp.branch_a.end_point(), sp.branch_b.end_point());
        let a = sp.path_a();
        assert_eq!(a.time(0), 0.0);
        assert_eq!(a.times().last(), Some(&1.0));
        assert!(a.times().windows(2).all(|w| w[1] > w[0]));
        assert!(a.times().contains(&0.37));
        assert!(SplitPath::sample(2, 1.0, 1.5, 0.1, true, &mut s).is_err());
    }

    #[test]
    fn grid_times_end_at_horizon() {
        let g = grid_times(1.0, 0.3);
        assert_eq!(g.len(), 5);
        assert_eq!(*g.last().unwrap(), 1.0);
        assert_eq!(grid_times(1.0, 0.25).len(), 5);
    }

    #[test]
    fn zero_functional_is_exactly_zero() {
        let s = RngStream::new(1);
        let one = many_to_one_check(&Zero, 2, 2.0, 0.01, 50, 100, &s).unwrap();
        assert_eq!(one.bbm_side.point, 0.0);
        assert_eq!(one.bm_side.point, 0.0);
        let two = many_to_two_check(&Zero, &Unit, 2, 1.0, 0.01, 50, 200, &s).unwrap();
        assert_eq!(two.lhs.point, 0.0);
        assert_eq!(two.diagonal.point, 0.0);
        assert_eq!(two.integral.point, 0.0);
    }

    #[test]
    fn horizon_limits() {
        let s = RngStream::new(1);
        assert!(many_to_one_check(&Unit, 2, 9.0, 0.01, 10, 10, &s).is_err());
        assert!(many_to_two_check(&Unit, &Unit, 2, 5.0, 0.01, 10, 200, &s).is_err());
        assert!(many_to_two_check(&Unit, &Unit, 2, 1.0, 0.01, 10, 50, &s).is_err());
    }

    #[test]
    fn constant_functional_first_moment() {
        let s = RngStream::new(11);
        let r = many_to_one_check(&Unit, 1, 2.0, 0.01, 4_000, 10, &s).unwrap();
        assert_eq!(r.bm_side.point, 2f64.exp());
        assert!(r.bbm_side.z_to(2f64.exp()).unwrap() < 3.0);
    }

    #[test]
    fn path_functional_uses_the_lineage() {
        // Running maximum of the first coordinate dominates its end value.
        let run_max = FnFunctional(|p: &Path| p.iter().map(|(_, x)| x[0]).fold(f64::MIN, f64::max));
        let end = FnFunctional(|p: &Path| p.end_point()[0]);
        let s = RngStream::new(2);
        let a = many_to_one_check(&run_max, 1, 1.0, 0.05, 300, 300, &s).unwrap();
        let b = many_to_one_check(&end, 1, 1.0, 0.05, 300, 300, &s).unwrap();
        assert!(a.bbm_side.point >= b.bbm_side.point);
        assert!(a.bm_side.point >= b.bm_side.point);
    }

    #[test]
    fn second_moment_of_population() {
        let s = RngStream::new(5);
        let r = many_to_two_check(&Unit, &Unit, 1, 1.0, 0.01, 20_000, 2_000, &s).unwrap();
        let e = 1f64.exp();
        assert!((r.diagonal.point - e).abs() < 1e-12);
        assert!((r.integral.point - 2.0 * (e * e - e)).abs() < 0.01 * e * e);
        assert!(r.lhs.z_to(2.0 * e * e - e).unwrap() < 3.0, "{r:?}");
        assert!(r.lhs.z_distance(&r.rhs()).unwrap() < 3.0);
    }
}
