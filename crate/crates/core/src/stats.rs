//! Sample statistics used by the Monte Carlo harness.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

/// Single-pass mean/variance accumulator (Welford).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::default();
        for x in iter {
            m.push(x);
        }
        m
    }
}

/// Linear-interpolation quantile of an ascending sample.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Strictly increasing, `counts.len() + 1` entries.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Freedman–Diaconis bins: width `2 IQR n^{-1/3}`. A sample with zero
    /// spread gets a single narrow bin around its value.
    pub fn freedman_diaconis(sample: &[f64]) -> Self {
        assert!(!sample.is_empty(), "histogram of empty sample");
        let mut sorted = sample.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
        let n = sorted.len() as f64;
        let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
        let mut width = 2.0 * iqr / n.cbrt();
        if !(width > 0.0) {
            width = if max > min { (max - min) / n.sqrt().ceil() } else { 0.0 };
        }
        if !(width > 0.0) {
            let half = (min.abs() * 1e-9).max(1e-300);
            return Self {
                edges: vec![min - half, min + half],
                counts: vec![sorted.len() as u64],
            };
        }
        let bins = (((max - min) / width).ceil() as usize).clamp(1, sorted.len());
        let width = (max - min) / bins as f64;
        let edges: Vec<f64> = (0..=bins)
            .map(|k| if k == bins { max } else { min + k as f64 * width })
            .collect();
        let mut counts = vec![0u64; bins];
        for &x in &sorted {
            let k = (((x - min) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        Self { edges, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Kolmogorov–Smirnov statistic of `sample` against `N(mean, std²)`.
/// With `std == 0` the reference is a point mass at `mean`.
pub fn ks_statistic_normal(sample: &[f64], mean: f64, std: f64) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let cdf = |x: f64| -> f64 {
        if std > 0.0 {
            Normal::new(mean, std).expect("positive std").cdf(x)
        } else if x >= mean {
            1.0
        } else {
            0.0
        }
    };
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (((i + 1) as f64 / n) - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic Kolmogorov coefficients `c(alpha)` for one-sample tests.
pub const KS_COEFF_5PCT: f64 = 1.3581;
pub const KS_COEFF_1PCT: f64 = 1.6276;

/// One-sample KS critical value with Stephens' finite-n correction,
/// `c(alpha) / (sqrt(n) + 0.12 + 0.11/sqrt(n))`.
pub fn ks_critical(coeff: f64, n: usize) -> f64 {
    let rn = (n as f64).sqrt();
    coeff / (rn + 0.12 + 0.11 / rn)
}

/// Pearson correlation matrix of the given columns. A constant column
/// correlates 0 with everything else.
pub fn correlation_matrix(columns: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = columns.len();
    let moments: Vec<Moments> = columns.iter().map(|c| c.iter().copied().collect()).collect();
    let mut out = vec![vec![0.0; k]; k];
    for a in 0..k {
        out[a][a] = 1.0;
        for b in (a + 1)..k {
            let (ma, mb) = (&moments[a], &moments[b]);
            let n = columns[a].len();
            let cov = columns[a]
                .iter()
                .zip(&columns[b])
                .map(|(x, y)| (x - ma.mean()) * (y - mb.mean()))
                .sum::<f64>()
                / (n as f64 - 1.0);
            let denom = ma.std() * mb.std();
            let r = if denom > 0.0 { (cov / denom).clamp(-1.0, 1.0) } else { 0.0 };
            out[a][b] = r;
            out[b][a] = r;
        }
    }
    out
}

pub fn normal_pdf(x: f64, mean: f64, std: f64) -> f64 {
    if std > 0.0 {
        Normal::new(mean, std).expect("positive std").pdf(x)
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_matches_two_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| 1e9 + (i as f64 * 0.37).sin()).collect();
        let m: Moments = xs.iter().copied().collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((m.mean() - mean).abs() < 1e-6);
        assert!((m.variance() - var).abs() < 1e-6 * var, "{} vs {var}", m.variance());
        assert_eq!(Moments::default().variance(), 0.0);
    }

    #[test]
    fn quantiles() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
        assert_eq!(quantile_sorted(&s, 0.5), 2.5);
    }

    #[test]
    fn histogram_counts_and_edges() {
        let xs: Vec<f64> = (0..5000).map(|i| ((i * 7919) % 1000) as f64 / 10.0).collect();
        let h = Histogram::freedman_diaconis(&xs);
        assert_eq!(h.total(), 5000);
        assert!(h.edges.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(h.edges.len(), h.counts.len() + 1);
        let flat = Histogram::freedman_diaconis(&[2.5; 10]);
        assert_eq!(flat.counts, vec![10]);
        assert!(flat.edges[1] > flat.edges[0]);
        let zero = Histogram::freedman_diaconis(&[0.0; 3]);
        assert!(zero.edges[1] > zero.edges[0]);
    }

    #[test]
    fn ks_against_exact_quantiles() {
        // sample at the (i - 0.5)/n quantiles has D = 1/(2n)
        let n = 200;
        let normal = Normal::new(1.0, 2.0).unwrap();
        let xs: Vec<f64> = (1..=n).map(|i| normal.inverse_cdf((i as f64 - 0.5) / n as f64)).collect();
        let d = ks_statistic_normal(&xs, 1.0, 2.0);
        assert!((d - 0.5 / n as f64).abs() < 1e-9, "{d}");
        assert_eq!(ks_statistic_normal(&[3.0; 5], 0.0, 1.0), normal_cdf_std(3.0));
    }

    fn normal_cdf_std(x: f64) -> f64 {
        Normal::standard().cdf(x)
    }

    #[test]
    fn ks_critical_values() {
        assert!((ks_critical(KS_COEFF_5PCT, 10_000) - 0.01358).abs() < 1e-4);
        assert!(ks_critical(KS_COEFF_1PCT, 100) > ks_critical(KS_COEFF_5PCT, 100));
    }

    #[test]
    fn correlation_properties() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let b: Vec<f64> = a.iter().map(|x| -2.0 * x + 1.0).collect();
        let c = vec![4.0; 100];
        let r = correlation_matrix(&[a, b, c]);
        assert!((r[0][1] + 1.0).abs() < 1e-12);
        assert_eq!(r[0][2], 0.0);
        for i in 0..3 {
            assert_eq!(r[i][i], 1.0);
            for j in 0..3 {
                assert_eq!(r[i][j], r[j][i]);
            }
        }
    }
}
