//! Guarded symmetric solves and ordinary least squares.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::stats;

/// Largest eigenvalue ratio accepted before a matrix is treated as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Spectral condition number of a symmetric matrix; infinite when the
/// smallest eigenvalue is not positive.
pub fn condition_number(sym: &DMatrix<f64>) -> f64 {
    if sym.nrows() == 0 {
        return f64::INFINITY;
    }
    let eig = SymmetricEigen::new(sym.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 0.0) || !max.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Cholesky factor of an SPD matrix whose condition number is below
/// [`CONDITION_LIMIT`].
pub struct SpdSolver {
    chol: Cholesky<f64, Dyn>,
    condition: f64,
}

impl SpdSolver {
    pub fn new(sym: &DMatrix<f64>) -> Result<Self> {
        if !sym.is_square() || sym.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "expected a non-empty square matrix, got {}x{}",
                sym.nrows(),
                sym.ncols()
            )));
        }
        if sym.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        let condition = condition_number(sym);
        if !(condition <= CONDITION_LIMIT) {
            return Err(Error::IllConditioned { condition });
        }
        let chol = Cholesky::new(sym.clone()).ok_or(Error::IllConditioned { condition })?;
        Ok(SpdSolver { chol, condition })
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// OLS fit of `y` on an intercept plus regressors.
#[derive(Debug, Clone)]
pub struct OlsFit {
    pub intercept: f64,
    pub slopes: Vec<f64>,
    /// Standard errors, intercept first.
    pub std_errors: Vec<f64>,
    /// Two-sided p-values of the t statistics, intercept first.
    pub p_values: Vec<f64>,
    pub residuals: Vec<f64>,
    pub rss: f64,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    /// Residual degrees of freedom T − k − 1.
    pub df_resid: usize,
}

impl OlsFit {
    /// Unbiased residual variance RSS / (T − k − 1).
    pub fn residual_variance(&self) -> f64 {
        self.rss / self.df_resid as f64
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.slopes.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }

    /// Gaussian log-likelihood at the ML variance RSS / T.
    pub fn log_likelihood(&self) -> f64 {
        let t = self.residuals.len() as f64;
        let s2 = (self.rss / t).max(f64::MIN_POSITIVE);
        -0.5 * t * ((2.0 * std::f64::consts::PI * s2).ln() + 1.0)
    }
}

/// Fits `y = a + Σ b_j x_j + e` by QR on the centred, scaled design.
///
/// Regressors with zero variance or a correlation matrix whose condition
/// number exceeds [`CONDITION_LIMIT`] are rejected, naming the most
/// correlated pair (or the constant column paired with "intercept").
pub fn ols(y: &[f64], regressors: &[&[f64]], names: &[&str]) -> Result<OlsFit> {
    let t = y.len();
    let k = regressors.len();
    if names.len() != k {
        return Err(Error::Dimension("one name per regressor required".into()));
    }
    if let Some(bad) = regressors.iter().position(|x| x.len() != t) {
        return Err(Error::Dimension(format!(
            "regressor '{}' has length {}, response has {}",
            names[bad],
            regressors[bad].len(),
            t
        )));
    }
    if t < k + 2 {
        return Err(Error::InvalidInput(format!(
            "need at least {} observations for {} regressors, got {}",
            k + 2,
            k,
            t
        )));
    }

    let means: Vec<f64> = regressors.iter().map(|x| stats::mean(x)).collect();
    let scales: Vec<f64> = regressors.iter().map(|x| stats::std_dev(x)).collect();
    for (j, s) in scales.iter().enumerate() {
        if !(*s > 0.0) || !s.is_finite() {
            return Err(Error::Collinear {
                first: names[j].to_string(),
                second: "intercept".to_string(),
                condition: f64::INFINITY,
            });
        }
    }

    let z = DMatrix::from_fn(t, k, |i, j| (regressors[j][i] - means[j]) / scales[j]);
    let y_mean = stats::mean(y);
    let yc = DVector::from_iterator(t, y.iter().map(|v| v - y_mean));

    let gram = z.transpose() * &z;
    if k > 1 {
        let corr = &gram / (t as f64 - 1.0);
        let condition = condition_number(&corr);
        if !(condition <= CONDITION_LIMIT) {
            let (a, b) = most_correlated_pair(&corr);
            return Err(Error::Collinear {
                first: names[a].to_string(),
                second: names[b].to_string(),
                condition,
            });
        }
    }

    let (beta_scaled, gram_inv) = if k == 0 {
        (DVector::zeros(0), DMatrix::zeros(0, 0))
    } else {
        let qr = z.clone().qr();
        let r = qr.r();
        let qty = qr.q().transpose() * &yc;
        let beta = r
            .solve_upper_triangular(&qty)
            .ok_or(Error::IllConditioned {
                condition: f64::INFINITY,
            })?;
        let r_inv = r
            .try_inverse()
            .ok_or(Error::IllConditioned {
                condition: f64::INFINITY,
            })?;
        (beta, &r_inv * r_inv.transpose())
    };

    let slopes: Vec<f64> = (0..k).map(|j| beta_scaled[j] / scales[j]).collect();
    let intercept = y_mean - slopes.iter().zip(&means).map(|(b, m)| b * m).sum::<f64>();

    let residuals: Vec<f64> = (0..t)
        .map(|i| {
            let fitted = intercept + (0..k).map(|j| slopes[j] * regressors[j][i]).sum::<f64>();
            y[i] - fitted
        })
        .collect();
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let tss: f64 = yc.iter().map(|v| v * v).sum();
    let df_resid = t - k - 1;

    let r_squared = if k == 0 {
        0.0
    } else if tss > 0.0 {
        1.0 - rss / tss
    } else if rss <= f64::EPSILON {
        1.0
    } else {
        0.0
    };
    let adj_r_squared = 1.0 - (1.0 - r_squared) * (t as f64 - 1.0) / df_resid as f64;

    let s2 = rss / df_resid as f64;
    let mut cov = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            cov[(a, b)] = s2 * gram_inv[(a, b)] / (scales[a] * scales[b]);
        }
    }
    let mut intercept_var = s2 / t as f64;
    for a in 0..k {
        for b in 0..k {
            intercept_var += means[a] * means[b] * cov[(a, b)];
        }
    }
    let mut std_errors = vec![intercept_var.max(0.0).sqrt()];
    std_errors.extend((0..k).map(|j| cov[(j, j)].max(0.0).sqrt()));

    let estimates: Vec<f64> = std::iter::once(intercept).chain(slopes.iter().copied()).collect();
    let p_values = estimates
        .iter()
        .zip(&std_errors)
        .map(|(b, se)| two_sided_p(*b, *se, df_resid))
        .collect();

    Ok(OlsFit {
        intercept,
        slopes,
        std_errors,
        p_values,
        residuals,
        rss,
        r_squared,
        adj_r_squared,
        df_resid,
    })
}

fn two_sided_p(estimate: f64, se: f64, df: usize) -> f64 {
    if se == 0.0 {
        return if estimate == 0.0 { 1.0 } else { 0.0 };
    }
    let t = (estimate / se).abs();
    match StudentsT::new(0.0, 1.0, df as f64) {
        Ok(dist) => (2.0 * dist.sf(t)).min(1.0),
        Err(_) => f64::NAN,
    }
}

fn most_correlated_pair(corr: &DMatrix<f64>) -> (usize, usize) {
    let n = corr.nrows();
    let mut best = (0, 1);
    let mut best_abs = -1.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let v = corr[(i, j)].abs();
            if v > best_abs {
                best_abs = v;
                best = (i, j);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_line_fit() {
        let x = [0.01, -0.02, 0.03, 0.005, -0.01];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let fit = ols(&y, &[&x], &["m"]).unwrap();
        assert_relative_eq!(fit.slopes[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(fit.intercept, 0.0, epsilon = 1e-14);
        assert!(fit.rss < 1e-28);
        assert_relative_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn five_point_fit_matches_normal_equations() {
        let x = [1.0, 2.0, 4.0, 5.0, 7.0];
        let y = [2.1, 2.9, 5.2, 5.8, 8.4];
        let fit = ols(&y, &[&x], &["x"]).unwrap();
        // Normal equations for [1 x]: [[n, Σx],[Σx, Σx²]] b = [Σy, Σxy].
        let n = 5.0;
        let sx: f64 = x.iter().sum();
        let sxx: f64 = x.iter().map(|v| v * v).sum();
        let sy: f64 = y.iter().sum();
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let det = n * sxx - sx * sx;
        let a = (sxx * sy - sx * sxy) / det;
        let b = (n * sxy - sx * sy) / det;
        assert!((fit.intercept - a).abs() < 1e-10);
        assert!((fit.slopes[0] - b).abs() < 1e-10);
    }

    #[test]
    fn collinear_regressors_are_named() {
        let x1 = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let x2: Vec<f64> = x1.iter().map(|v| 3.0 * v + 1.0).collect();
        let x3 = [0.3, -0.1, 0.2, 0.5, -0.4, 0.1];
        let y = [1.0, 0.0, 2.0, 1.0, 3.0, 2.0];
        match ols(&y, &[&x1, &x3, &x2], &["a", "c", "b"]) {
            Err(Error::Collinear { first, second, .. }) => {
                assert_eq!((first.as_str(), second.as_str()), ("a", "b"));
            }
            other => panic!("expected collinearity error, got {other:?}"),
        }
        let constant = [1.0; 6];
        assert!(matches!(
            ols(&y, &[&constant], &["k"]),
            Err(Error::Collinear { .. })
        ));
    }

    #[test]
    fn spd_solver_rejects_singular() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(SpdSolver::new(&m), Err(Error::IllConditioned { .. })));
        let ok = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]);
        let s = SpdSolver::new(&ok).unwrap();
        assert_relative_eq!(s.condition(), 4.0, epsilon = 1e-12);
    }

    #[test]
    fn adjusted_r_squared_not_above_r_squared() {
        let x = [0.1, 0.4, -0.2, 0.3, 0.0, 0.5, -0.3, 0.2];
        let y = [0.2, 0.5, -0.1, 0.2, 0.1, 0.7, -0.4, 0.1];
        let fit = ols(&y, &[&x], &["x"]).unwrap();
        assert!(fit.adj_r_squared <= fit.r_squared);
        let none = ols(&y, &[], &[]).unwrap();
        assert_eq!(none.r_squared, 0.0);
        assert_eq!(none.adj_r_squared, none.r_squared);
    }
}
