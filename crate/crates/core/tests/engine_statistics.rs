use bbm_core::engine::{horizon_sample, path_exceeds_curve, GenealogyTree, Pruning, SimConfig};
use bbm_core::frontier::FrontierParams;
use bbm_core::kernel::{norm, RngStream};
use bbm_core::stats::{chi_square_gof, ks_two_sample, MeanVar};

fn replica_maxima(base: &SimConfig, n: u64, project: Option<&[f64]>) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let sample = horizon_sample(&base.clone().with_replica(i)).unwrap();
            match project {
                Some(v) => sample.max_projection(v).unwrap(),
                None => sample.max_norm().unwrap_or(f64::NEG_INFINITY),
            }
        })
        .collect()
}

#[test]
fn population_and_squared_norm_means() {
    // E[#N_t] = e^t and E[sum |X_u|^2] = e^t d t.
    let (t, d) = (3.0, 2usize);
    let base = SimConfig::new(d, t).with_grid_step(t).with_seed(21);
    let (mut count, mut sq) = (MeanVar::default(), MeanVar::default());
    for i in 0..4000 {
        let sample = horizon_sample(&base.clone().with_replica(i)).unwrap();
        count.push(sample.len() as f64);
        sq.push(sample.iter().map(|x| x.iter().map(|c| c * c).sum::<f64>()).sum());
    }
    let growth = f64::exp(t);
    assert!((count.mean() - growth).abs() < 3.0 * count.std_error().unwrap());
    let want = growth * d as f64 * t;
    assert!((sq.mean() - want).abs() < 3.0 * sq.std_error().unwrap(), "{} vs {want}", sq.mean());
}

#[test]
fn population_at_log_two_is_geometric() {
    let base = SimConfig::new(1, 2f64.ln()).with_grid_step(2f64.ln()).with_seed(22);
    let n = 20_000u64;
    let cells = 8usize;
    let mut counts = vec![0u64; cells];
    for i in 0..n {
        let k = horizon_sample(&base.clone().with_replica(i)).unwrap().len();
        counts[(k - 1).min(cells - 1)] += 1;
    }
    let mut expected: Vec<f64> = (0..cells).map(|k| n as f64 * 0.5f64.powi(k as i32 + 1)).collect();
    expected[cells - 1] = n as f64 * 0.5f64.powi(cells as i32 - 1);
    let (_, _, p) = chi_square_gof(&counts, &expected);
    assert!(p > 0.01, "p = {p}, counts {counts:?}");
}

#[test]
fn root_lifetime_is_exponential() {
    let t = 4.0;
    let base = SimConfig::new(2, t).with_grid_step(t).with_seed(23);
    let edges = [0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, t];
    let mut counts = vec![0u64; edges.len()];
    let n = 3000;
    for i in 0..n {
        let tree = GenealogyTree::simulate(&base.clone().with_replica(i)).unwrap();
        let life = tree.particles()[0].end_time;
        let bin = if life >= t { edges.len() - 1 } else { edges.iter().rposition(|&e| life >= e).unwrap() };
        counts[bin] += 1;
    }
    let cdf = |x: f64| 1.0 - (-x).exp();
    let expected: Vec<f64> = (0..edges.len())
        .map(|i| {
            let hi = if i + 1 < edges.len() { cdf(edges[i + 1]) } else { 1.0 };
            n as f64 * (hi - cdf(edges[i]))
        })
        .collect();
    let (_, _, p) = chi_square_gof(&counts, &expected);
    assert!(p > 0.01, "p = {p}");
}

#[test]
fn projection_is_a_one_dimensional_maximum() {
    let t = 6.0;
    let v = [1.0 / 3f64.sqrt(); 3];
    let projected = replica_maxima(&SimConfig::new(3, t).with_grid_step(t).with_seed(24), 1000, Some(&v));
    let line = replica_maxima(&SimConfig::new(1, t).with_grid_step(t).with_seed(25), 1000, Some(&[1.0]));
    let ks = ks_two_sample(&projected, &line);
    assert!(ks.p_value > 0.01, "{ks:?}");
}

#[test]
fn pruning_keeps_the_law_of_the_maximum() {
    let t = 8.0;
    let base = SimConfig::new(1, t).with_grid_step(0.05).with_seed(26);
    let full = replica_maxima(&base, 500, None);
    let pruned = replica_maxima(&base.clone().with_pruning(Pruning::Barrier { lag: 6.0 }), 500, None);
    let ks = ks_two_sample(&full, &pruned);
    assert!(ks.p_value > 0.01, "{ks:?}");
    assert!(pruned.iter().zip(&full).all(|(p, f)| p <= f));
}

/// Fills in a Brownian bridge between checkpoints and checks the curve on the finer grid.
fn fine_grid_exceeds(points: &[(f64, Vec<f64>)], curve: &dyn Fn(f64) -> f64, refine: usize, s: &mut RngStream) -> bool {
    if norm(&points[0].1) >= curve(points[0].0) {
        return true;
    }
    for w in points.windows(2) {
        let ((t0, x0), (t1, x1)) = (&w[0], &w[1]);
        let h = (t1 - t0) / refine as f64;
        let mut x = x0.clone();
        for k in 1..=refine {
            let now = t0 + (k - 1) as f64 * h;
            let remaining = t1 - now;
            if k < refine {
                let sd = (h * (remaining - h) / remaining).sqrt();
                for (xi, &target) in x.iter_mut().zip(x1.iter()) {
                    *xi += (target - *xi) * h / remaining + sd * s.standard_normal();
                }
            } else {
                x.clone_from(x1);
            }
            if norm(&x) >= curve(now + h) {
                return true;
            }
        }
    }
    false
}

#[test]
fn bridge_correction_agrees_with_refined_paths() {
    let t = 5.0;
    let curve_params = FrontierParams::unchecked(2, t, 1.0);
    let curve = |s: f64| curve_params.eval(s) - 2.0;
    let mut aux = RngStream::derive(27, &[1]);
    let mut fine = RngStream::derive(27, &[2]);
    let (mut agree, mut total, mut crossings) = (0usize, 0usize, 0usize);
    for replica in 0.. {
        let cfg = SimConfig::new(2, t).with_grid_step(0.01).with_seed(27).with_replica(replica);
        let tree = GenealogyTree::simulate(&cfg).unwrap();
        for p in tree.particles() {
            let coarse = path_exceeds_curve(&tree, p.id, curve, true, &mut aux).unwrap();
            let points: Vec<(f64, Vec<f64>)> = tree.checkpoints(p.id).unwrap().map(|(s, x)| (s, x.to_vec())).collect();
            let refined = fine_grid_exceeds(&points, &curve, 10, &mut fine);
            agree += usize::from(coarse == refined);
            crossings += usize::from(refined);
            total += 1;
        }
        if total >= 1000 {
            break;
        }
    }
    assert!(crossings > 0, "curve never approached");
    assert!(agree as f64 >= 0.99 * total as f64, "{agree}/{total}");
}
