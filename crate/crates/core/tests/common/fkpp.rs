//! Finite-difference solutions of `w_t = w_xx / 2 + w^2 - w`, whose
//! solutions give the law of the maximal displacement.
#![allow(dead_code)]

/// Explicit scheme on a radial grid `rho = i dx`. `initial` is the cell
/// average of the initial condition; the outer boundary is held at `outer`.
fn solve_radial(dim: usize, t: f64, dx: f64, initial: Vec<f64>, outer: f64) -> Vec<f64> {
    let mut w = initial;
    let n = w.len();
    let steps = (t / (0.2 * dx * dx)).ceil() as usize;
    let dt = t / steps as f64;
    let drift = (dim - 1) as f64;
    let mut next = w.clone();
    for _ in 0..steps {
        // Symmetry at the origin turns the radial Laplacian into d w_rr.
        let lap0 = dim as f64 * 2.0 * (w[1] - w[0]) / (dx * dx);
        next[0] = w[0] + dt * (0.5 * lap0 + w[0] * w[0] - w[0]);
        for i in 1..n - 1 {
            let rho = i as f64 * dx;
            let second = (w[i + 1] - 2.0 * w[i] + w[i - 1]) / (dx * dx);
            let first = (w[i + 1] - w[i - 1]) / (2.0 * dx);
            let lap = if dim == 1 { second } else { second + drift / rho * first };
            next[i] = w[i] + dt * (0.5 * lap + w[i] * w[i] - w[i]);
        }
        next[n - 1] = outer;
        std::mem::swap(&mut w, &mut next);
    }
    w
}

/// Median of the one-dimensional maximum from a single translation-invariant solve.
pub fn line_median(t: f64, dx: f64) -> f64 {
    // w(x) = P(max of the process started at x stays <= 0); grid from -span to +tail.
    let (span, tail) = (2.0 * t + 10.0, 8.0);
    let n = ((span + tail) / dx).round() as usize + 1;
    let x = |i: usize| -span + i as f64 * dx;
    let initial: Vec<f64> = (0..n).map(|i| (0.5 - x(i) / dx).clamp(0.0, 1.0)).collect();
    // Reflect the grid so index 0 sits at +tail and the boundary value 0 applies there.
    let flipped: Vec<f64> = initial.into_iter().rev().collect();
    let mut w = solve_line(t, dx, flipped);
    w.reverse();
    let i = (0..n - 1).find(|&i| w[i] >= 0.5 && w[i + 1] < 0.5).expect("median bracketed");
    let frac = (w[i] - 0.5) / (w[i] - w[i + 1]);
    -(x(i) + frac * dx)
}

fn solve_line(t: f64, dx: f64, initial: Vec<f64>) -> Vec<f64> {
    // Fixed values at both ends: 0 far above the barrier, 1 far below.
    let mut w = initial;
    let n = w.len();
    let steps = (t / (0.2 * dx * dx)).ceil() as usize;
    let dt = t / steps as f64;
    let mut next = w.clone();
    for _ in 0..steps {
        next[0] = 0.0;
        next[n - 1] = 1.0;
        for i in 1..n - 1 {
            let lap = (w[i + 1] - 2.0 * w[i] + w[i - 1]) / (dx * dx);
            next[i] = w[i] + dt * (0.5 * lap + w[i] * w[i] - w[i]);
        }
        std::mem::swap(&mut w, &mut next);
    }
    w
}

/// P(R_t <= r) for the radial maximum in `dim` dimensions.
pub fn radial_cdf(dim: usize, t: f64, r: f64, dx: f64) -> f64 {
    let n = ((r + 12.0) / dx).round() as usize + 1;
    let initial: Vec<f64> = (0..n).map(|i| ((r - i as f64 * dx) / dx + 0.5).clamp(0.0, 1.0)).collect();
    solve_radial(dim, t, dx, initial, 0.0)[0]
}

pub fn radial_median(dim: usize, t: f64, dx: f64) -> f64 {
    let (mut lo, mut hi) = (0.5 * t, 2.0 * t);
    for _ in 0..16 {
        let mid = 0.5 * (lo + hi);
        if radial_cdf(dim, t, mid, dx) < 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
