use super::GenealogyTree;
use crate::error::Result;
use crate::kernel::{bridge_crossing_prob_gaps, norm, RngStream};

/// Whether a radial path segment from `(t0, r0)` to `(t1, r1)` meets `curve`.
///
/// The endpoint is compared directly. With `bridge` on, a segment whose
/// endpoints both sit below the curve still counts as crossing with the 1-d
/// Brownian-bridge probability computed from the two radial gaps (exact for
/// a linear barrier in one dimension, an approximation for radii in d > 1).
#[inline]
pub fn segment_exceeds_curve<C: Fn(f64) -> f64>(
    t0: f64,
    r0: f64,
    t1: f64,
    r1: f64,
    curve: &C,
    bridge: bool,
    stream: &mut RngStream,
) -> bool {
    let c1 = curve(t1);
    if r1 >= c1 {
        return true;
    }
    if !bridge {
        return false;
    }
    let p = bridge_crossing_prob_gaps(curve(t0) - r0, c1 - r1, t1 - t0);
    p > 0.0 && stream.uniform() < p
}

/// Whether the recorded path of particle `id` reaches `curve(time)` at some
/// checkpoint (or, with `bridge` on, between checkpoints).
pub fn path_exceeds_curve<C: Fn(f64) -> f64>(
    tree: &GenealogyTree,
    id: u64,
    curve: C,
    bridge: bool,
    stream: &mut RngStream,
) -> Result<bool> {
    let mut prev: Option<(f64, f64)> = None;
    for (t, x) in tree.checkpoints(id)? {
        let r = norm(x);
        match prev {
            None => {
                if r >= curve(t) {
                    return Ok(true);
                }
            }
            Some((t0, r0)) => {
                if segment_exceeds_curve(t0, r0, t, r, &curve, bridge, stream) {
                    return Ok(true);
                }
            }
        }
        prev = Some((t, r));
    }
    Ok(false)
}
