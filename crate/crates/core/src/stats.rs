//! Sample statistics shared across modules.

use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, Normal};

/// Arithmetic mean, accumulated as deviations from the first element so a
/// constant series returns that constant exactly.
pub fn mean(xs: &[f64]) -> f64 {
    let Some(&x0) = xs.first() else {
        return f64::NAN;
    };
    x0 + xs.iter().map(|x| x - x0).sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (n − 1 denominator).
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// Moment-ratio skewness m3 / m2^{3/2} and excess kurtosis m4 / m2² − 3,
/// using population central moments. Both are NaN for zero-variance input.
pub fn skew_kurtosis(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = mean(xs);
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - m;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    if m2 <= 0.0 {
        return (f64::NAN, f64::NAN);
    }
    (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
}

pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len();
    debug_assert_eq!(n, ys.len());
    let mx = mean(xs);
    let my = mean(ys);
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / (n - 1) as f64
}

/// Column means of a T×n matrix.
pub fn column_means(m: &DMatrix<f64>) -> Vec<f64> {
    let t = m.nrows() as f64;
    (0..m.ncols()).map(|j| m.column(j).sum() / t).collect()
}

/// Unbiased sample covariance of the columns of a T×n matrix.
pub fn covariance_matrix(m: &DMatrix<f64>) -> DMatrix<f64> {
    let t = m.nrows();
    let means = column_means(m);
    let mut centered = m.clone();
    for (j, mu) in means.iter().enumerate() {
        centered.column_mut(j).add_scalar_mut(-mu);
    }
    let mut cov = centered.transpose() * &centered / (t as f64 - 1.0);
    symmetrize(&mut cov);
    cov
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// The ⌈p·n⌉-th order statistic (1-based) of `xs`, no interpolation.
pub fn order_statistic_quantile(xs: &[f64], p: f64) -> f64 {
    let n = xs.len();
    let k = order_rank(n, p);
    let mut v = xs.to_vec();
    let (_, kth, _) = v.select_nth_unstable_by(k - 1, f64::total_cmp);
    *kth
}

/// 1-based rank ⌈p·n⌉ clamped to [1, n]. A relative slack absorbs
/// representation error so that e.g. 0.05·100 maps to rank 5, not 6.
pub(crate) fn order_rank(n: usize, p: f64) -> usize {
    let raw = p * n as f64;
    let k = (raw - 1e-9 * raw.max(1.0)).ceil() as usize;
    k.clamp(1, n.max(1))
}

/// Linearly interpolated sample quantile (Hyndman-Fan type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn normal_cdf(z: f64) -> f64 {
    standard_normal().cdf(z)
}

pub fn normal_quantile(p: f64) -> f64 {
    standard_normal().inverse_cdf(p)
}

fn standard_normal() -> Normal {
    Normal::standard()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn unbiased_variance_hand_values() {
        assert_relative_eq!(mean(&[0.01, 0.03]), 0.02, epsilon = 1e-15);
        assert_relative_eq!(std_dev(&[0.01, 0.03]), 0.014142135623730951, epsilon = 1e-12);
    }

    #[test]
    fn order_statistic_convention() {
        let xs = [0.03, -0.05, 0.01, -0.02];
        assert_eq!(order_statistic_quantile(&xs, 0.25), -0.05);
        assert_eq!(order_statistic_quantile(&xs, 0.26), -0.02);
        assert_eq!(order_rank(100, 0.05), 5);
        assert_eq!(order_rank(3, 0.0), 1);
    }

    #[test]
    fn normal_quantile_matches_table() {
        assert_relative_eq!(normal_quantile(0.05), -1.6448536269514722, epsilon = 1e-9);
        assert_relative_eq!(normal_cdf(normal_quantile(0.3)), 0.3, epsilon = 1e-12);
    }

    #[test]
    fn type7_quantile() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_relative_eq!(quantile_sorted(&s, 0.5), 2.5);
        assert_relative_eq!(quantile_sorted(&s, 0.0), 1.0);
        assert_relative_eq!(quantile_sorted(&s, 1.0), 4.0);
    }
}
