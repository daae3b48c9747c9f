use bbm_core::kernel::{bridge_crossing_prob, brownian_increment, exp_lifetime, RngStream};
use bbm_core::stats::{chi_square_gof, MeanVar};

#[test]
fn normal_moments() {
    let mut s = RngStream::derive(1, &[10]);
    let n = 1_000_000;
    let (mut m1, mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..n {
        let z = s.standard_normal();
        m1 += z;
        m2 += z * z;
        m3 += z * z * z;
        m4 += z * z * z * z;
    }
    let n = n as f64;
    assert!((m1 / n).abs() < 4.0 / n.sqrt());
    assert!((m2 / n - 1.0).abs() < 4.0 * 2f64.sqrt() / n.sqrt());
    assert!((m3 / n).abs() < 4.0 * 15f64.sqrt() / n.sqrt());
    assert!((m4 / n - 3.0).abs() < 4.0 * 96f64.sqrt() / n.sqrt());
}

#[test]
fn uniforms_fill_bins_evenly() {
    let mut s = RngStream::derive(2, &[11]);
    let bins = 50;
    let mut counts = vec![0u64; bins];
    let n = 500_000;
    for _ in 0..n {
        counts[(s.uniform() * bins as f64) as usize] += 1;
    }
    let expected = vec![n as f64 / bins as f64; bins];
    let (_, _, p) = chi_square_gof(&counts, &expected);
    assert!(p > 0.001, "p = {p}");
}

#[test]
fn lifetimes_are_unit_exponential() {
    let mut s = RngStream::derive(3, &[12]);
    let edges = [0.0, 0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 5.0];
    let n = 200_000;
    let mut counts = vec![0u64; edges.len()];
    for _ in 0..n {
        let x = exp_lifetime(&mut s);
        let bin = edges.iter().rposition(|&e| x >= e).unwrap();
        counts[bin] += 1;
    }
    let cdf = |x: f64| 1.0 - (-x).exp();
    let expected: Vec<f64> = (0..edges.len())
        .map(|i| {
            let hi = edges.get(i + 1).map_or(1.0, |&e| cdf(e));
            n as f64 * (hi - cdf(edges[i]))
        })
        .collect();
    let (_, _, p) = chi_square_gof(&counts, &expected);
    assert!(p > 0.001, "p = {p}");
}

#[test]
fn split_streams_are_uncorrelated() {
    let root = RngStream::derive(4, &[13]);
    let n = 200_000;
    for (i, j) in [(0, 1), (1, 2), (7, 1000)] {
        let (mut a, mut b) = (root.split(i), root.split(j));
        let cov = (0..n).map(|_| a.standard_normal() * b.standard_normal()).sum::<f64>() / n as f64;
        assert!(cov.abs() < 4.0 / (n as f64).sqrt(), "streams {i},{j}: {cov}");
    }
}

#[test]
fn increments_scale_with_time() {
    let mut s = RngStream::derive(5, &[14]);
    for dt in [0.01, 1.0, 9.0] {
        let mut mv = MeanVar::default();
        for _ in 0..50_000 {
            let inc = brownian_increment(&mut s, 3, dt).unwrap();
            mv.push(inc.coords().iter().map(|c| c * c).sum::<f64>());
        }
        let want = 3.0 * dt;
        assert!((mv.mean() - want).abs() < 4.0 * mv.std_error().unwrap(), "dt {dt}: {} vs {want}", mv.mean());
    }
}

#[test]
fn bridge_formula_matches_fine_simulation() {
    // A fine grid sees the barrier as if shifted up by 0.5826 sqrt(h).
    let (barrier, steps, paths) = (0.5, 2000usize, 10_000usize);
    let h = 1.0 / steps as f64;
    let mut s = RngStream::derive(6, &[15]);
    let mut hits = 0usize;
    for _ in 0..paths {
        let mut x = 0.0;
        let mut hit = false;
        for k in 0..steps {
            let remaining = 1.0 - k as f64 * h;
            // Exact bridge step towards 0 at time 1.
            x += -x * h / remaining + (h * (remaining - h) / remaining).sqrt() * s.standard_normal();
            if x >= barrier {
                hit = true;
                break;
            }
        }
        hits += usize::from(hit);
    }
    let p = hits as f64 / paths as f64;
    let se = (p * (1.0 - p) / paths as f64).sqrt();
    let shifted = bridge_crossing_prob(0.0, 0.0, 1.0, barrier + 0.5826 * h.sqrt());
    assert!((p - shifted).abs() < 4.0 * se, "{p} vs {shifted}");
    assert!(bridge_crossing_prob(0.0, 0.0, 1.0, barrier) > p);
}
