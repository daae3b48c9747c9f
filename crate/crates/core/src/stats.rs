//! Small statistical toolkit: compensated accumulation, interval estimates
//! and the goodness-of-fit tests used by the verification suites.

use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Mean and unbiased variance of a sample, with compensated sums.
#[derive(Clone, Copy, Debug, Default)]
pub struct MeanVar {
    n: usize,
    sum: CompensatedSum,
    sum_sq: CompensatedSum,
    shift: Option<f64>,
}

impl MeanVar {
    pub fn push(&mut self, x: f64) {
        // Shifting by the first value keeps the second moment well conditioned.
        let shift = *self.shift.get_or_insert(x);
        let y = x - shift;
        self.n += 1;
        self.sum.add(y);
        self.sum_sq.add(y * y);
    }

    pub fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut mv = MeanVar::default();
        iter.into_iter().for_each(|x| mv.push(x));
        mv
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            return f64::NAN;
        }
        self.shift.unwrap_or(0.0) + self.sum.value() / self.n as f64
    }

    /// Unbiased sample variance; `None` below two samples.
    pub fn variance(&self) -> Option<f64> {
        if self.n < 2 {
            return None;
        }
        let n = self.n as f64;
        let s = self.sum.value();
        Some(((self.sum_sq.value() - s * s / n) / (n - 1.0)).max(0.0))
    }

    pub fn std_error(&self) -> Option<f64> {
        self.variance().map(|v| (v / self.n as f64).sqrt())
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").cdf(x)
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(p)
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Result of a two-sample Kolmogorov-Smirnov test.
#[derive(Clone, Copy, Debug)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Kolmogorov distribution survival function Q(lambda).
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample KS test with the asymptotic p-value (Stephens' small-sample
/// correction to the effective size).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    assert!(!a.is_empty() && !b.is_empty(), "KS test needs nonempty samples");
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = xs[i].min(ys[j]);
        while i < n && xs[i] <= v {
            i += 1;
        }
        while j < m && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let sq = ne.sqrt();
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    KsResult { statistic: d, p_value: kolmogorov_q(lambda) }
}

/// Pearson chi-square goodness of fit; returns (statistic, degrees of freedom, p-value).
/// Cells with expected count below 5 are pooled into the last retained cell.
pub fn chi_square_gof(observed: &[u64], expected: &[f64]) -> (f64, usize, f64) {
    assert_eq!(observed.len(), expected.len());
    let mut obs_cells = Vec::new();
    let mut exp_cells = Vec::new();
    let (mut acc_o, mut acc_e) = (0.0, 0.0);
    for (&o, &e) in observed.iter().zip(expected) {
        acc_o += o as f64;
        acc_e += e;
        if acc_e >= 5.0 {
            obs_cells.push(acc_o);
            exp_cells.push(acc_e);
            acc_o = 0.0;
            acc_e = 0.0;
        }
    }
    if acc_e > 0.0 || acc_o > 0.0 {
        if let (Some(o), Some(e)) = (obs_cells.last_mut(), exp_cells.last_mut()) {
            *o += acc_o;
            *e += acc_e;
        } else {
            obs_cells.push(acc_o);
            exp_cells.push(acc_e);
        }
    }
    let stat: f64 = obs_cells
        .iter()
        .zip(&exp_cells)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    let dof = obs_cells.len().saturating_sub(1).max(1);
    let p = 1.0 - ChiSquared::new(dof as f64).expect("positive dof").cdf(stat);
    (stat, dof, p)
}

/// Sample median with a distribution-free standard error taken from the
/// order-statistic 95% interval, (x_(k) - x_(j)) / (2 * 1.96).
pub fn median_with_se(sample: &[f64]) -> Option<(f64, Option<f64>)> {
    if sample.is_empty() {
        return None;
    }
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let median = if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    };
    if n < 2 {
        return Some((median, None));
    }
    let half_width = 1.96 * (n as f64).sqrt() / 2.0;
    let lo = ((n as f64 / 2.0 - half_width).floor().max(0.0)) as usize;
    let hi = ((n as f64 / 2.0 + half_width).ceil() as usize).min(n - 1);
    Some((median, Some((xs[hi] - xs[lo]) / (2.0 * 1.96))))
}

/// Weighted least squares line fit y = a + b x. Returns (slope, slope SE,
/// intercept). Weights are inverse variances, so the slope SE is the model
/// based one.
pub fn weighted_linear_fit(x: &[f64], y: &[f64], w: &[f64]) -> Option<(f64, f64, f64)> {
    if x.len() < 2 || x.len() != y.len() || x.len() != w.len() {
        return None;
    }
    let sw: f64 = w.iter().sum();
    let sx: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
    let sy: f64 = w.iter().zip(y).map(|(w, y)| w * y).sum();
    let mx = sx / sw;
    let my = sy / sw;
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = w.iter().zip(x.iter().zip(y)).map(|(w, (x, y))| w * (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some((slope, (1.0 / sxx).sqrt(), my - slope * mx))
}

/// Unweighted least-squares slope of y on x.
pub fn ols_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    weighted_linear_fit(x, y, &vec![1.0; x.len()]).map(|(s, _, _)| s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::default();
        s.add(1e16);
        for _ in 0..10 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 10.0);
    }

    #[test]
    fn mean_var_basic() {
        let mv = MeanVar::from_iter([1.0, 2.0, 3.0, 4.0]);
        assert!((mv.mean() - 2.5).abs() < 1e-15);
        assert!((mv.variance().unwrap() - 5.0 / 3.0).abs() < 1e-14);
        assert!(MeanVar::from_iter([7.0]).std_error().is_none());
    }

    #[test]
    fn wilson_contains_point() {
        let (lo, hi) = wilson_interval(30, 100, 1.96);
        assert!(lo < 0.3 && hi > 0.3);
        let (lo, hi) = wilson_interval(0, 50, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.1);
    }

    #[test]
    fn ks_identical_and_shifted() {
        let a: Vec<f64> = (0..500).map(|i| i as f64 / 500.0).collect();
        let r = ks_two_sample(&a, &a);
        assert_eq!(r.statistic, 0.0);
        assert!(r.p_value > 0.99);
        let b: Vec<f64> = a.iter().map(|x| x + 0.3).collect();
        assert!(ks_two_sample(&a, &b).p_value < 1e-6);
    }

    #[test]
    fn chi_square_perfect_fit() {
        let (stat, dof, p) = chi_square_gof(&[50, 30, 20], &[50.0, 30.0, 20.0]);
        assert_eq!(stat, 0.0);
        assert_eq!(dof, 2);
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn median_odd_even() {
        assert_eq!(median_with_se(&[3.0, 1.0, 2.0]).unwrap().0, 2.0);
        assert_eq!(median_with_se(&[4.0, 1.0, 2.0, 3.0]).unwrap().0, 2.5);
        assert!(median_with_se(&[1.0]).unwrap().1.is_none());
        assert!(median_with_se(&[]).is_none());
    }

    #[test]
    fn exact_line_fit() {
        let x = [1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0];
        let (b, _, a) = weighted_linear_fit(&x, &y, &[1.0, 2.0, 1.0]).unwrap();
        assert!((b - 2.0).abs() < 1e-12 && (a + 1.0).abs() < 1e-12);
    }
}
