//! Summary statistics used by the estimators and verification drivers.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Running first/second moment accumulator. Merging is associative, so
/// chunked reductions in a fixed order are bit-reproducible.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanAcc {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl MeanAcc {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(mut self, other: MeanAcc) -> MeanAcc {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        self
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            return f64::NAN;
        }
        self.sum / self.n as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let m = self.sum / n;
        ((self.sum_sq - n * m * m) / (n - 1.0)).max(0.0)
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        if self.n == 0 {
            return f64::NAN;
        }
        (self.variance() / self.n as f64).sqrt()
    }
}

impl FromIterator<f64> for MeanAcc {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = MeanAcc::default();
        for x in iter {
            acc.push(x);
        }
        acc
    }
}

/// Wilson score interval for a binomial proportion at normal quantile `z`.
pub fn wilson_interval(hits: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Binomial proportion with its plain standard error.
pub fn proportion(hits: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let p = hits as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a: Vec<f64> = a.to_vec();
    let mut b: Vec<f64> = b.to_vec();
    a.sort_by(|x, y| x.total_cmp(y));
    b.sort_by(|x, y| x.total_cmp(y));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic two-sample KS critical value at significance `level`.
pub fn ks_critical(level: f64, na: usize, nb: usize) -> f64 {
    let c = (-(level / 2.0).ln() / 2.0).sqrt();
    let (na, nb) = (na as f64, nb as f64);
    c * ((na + nb) / (na * nb)).sqrt()
}

/// Ordinary least squares fit `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
}

pub fn ols(x: &[f64], y: &[f64]) -> LinearFit {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_se = if x.len() > 2 {
        let rss: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (b - intercept - slope * a).powi(2))
            .sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    LinearFit { slope, intercept, slope_se }
}

/// Pearson correlation; the null standard error is `1/sqrt(n)`.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

/// Pearson chi-square goodness-of-fit on integer draws against a pmf.
///
/// Consecutive values are pooled into cells with expected count at least 5;
/// the upper tail beyond the last closed cell forms one final cell.
/// Returns `(statistic, degrees of freedom)`.
pub fn chi_square_gof(draws: &[u64], pmf: impl Fn(u64) -> f64) -> (f64, usize) {
    let n = draws.len() as f64;
    // cell upper bounds (exclusive) and probabilities
    let mut bounds: Vec<u64> = Vec::new();
    let mut probs: Vec<f64> = Vec::new();
    let mut mass = 0.0;
    let mut cell = 0.0;
    let mut k = 0u64;
    while n * (1.0 - mass - cell) >= 10.0 && k < 1_000_000 {
        cell += pmf(k);
        k += 1;
        if n * cell >= 5.0 {
            bounds.push(k);
            probs.push(cell);
            mass += cell;
            cell = 0.0;
        }
    }
    probs.push((1.0 - mass).max(0.0));
    let mut observed = vec![0u64; probs.len()];
    for &d in draws {
        let idx = bounds.partition_point(|&b| b <= d);
        observed[idx] += 1;
    }
    let mut stat = 0.0;
    for (o, p) in observed.iter().zip(&probs) {
        let e = n * p;
        if e > 0.0 {
            stat += (*o as f64 - e).powi(2) / e;
        }
    }
    (stat, probs.len() - 1)
}

/// Upper `level` quantile of the chi-square law with `dof` degrees of freedom.
pub fn chi_square_critical(level: f64, dof: usize) -> f64 {
    ChiSquared::new(dof as f64)
        .expect("dof > 0")
        .inverse_cdf(1.0 - level)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_acc_merge_matches_sequential() {
        let xs: Vec<f64> = (0..100).map(|i| (i as f64).sin()).collect();
        let all: MeanAcc = xs.iter().copied().collect();
        let a: MeanAcc = xs[..40].iter().copied().collect();
        let b: MeanAcc = xs[40..].iter().copied().collect();
        let m = a.merge(b);
        assert_eq!(m.n, all.n);
        assert!((m.mean() - all.mean()).abs() < 1e-15);
    }

    #[test]
    fn ks_identical_and_disjoint() {
        let a = [1.0, 2.0, 3.0];
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[5.0, 6.0]), 1.0);
        // 0.1% level constant is sqrt(-ln(0.0005)/2) ~ 1.9495
        let c = ks_critical(0.001, 1, 1) / 2f64.sqrt();
        assert!((c - 1.9495).abs() < 1e-3);
    }

    #[test]
    fn ols_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let f = ols(&x, &y);
        assert!((f.slope + 0.5).abs() < 1e-14);
        assert!((f.intercept - 2.0).abs() < 1e-14);
    }

    #[test]
    fn wilson_contains_point() {
        let (lo, hi) = wilson_interval(30, 100, 1.96);
        assert!(lo < 0.3 && 0.3 < hi);
        let (lo, hi) = wilson_interval(0, 100, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
    }

    #[test]
    fn chi_square_critical_value() {
        // chi2_{0.999}(1) = 10.828
        assert!((chi_square_critical(0.001, 1) - 10.828).abs() < 1e-2);
    }
}
