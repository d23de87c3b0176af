//! Mean-variance machinery: portfolio moments, global minimum-variance and
//! tangent portfolios, and the two-constraint efficient frontier.
//!
//! Short positions are allowed throughout. Every solve goes through
//! [`SpdSolver`], so an ill-conditioned covariance is reported as an error
//! instead of being regularized.

use std::io::Write;

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::SpdSolver;
use crate::moments::MomentEstimate;

/// Portfolio weights summing to one (within 1e−10).
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Weights(Vec<f64>);

impl Weights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::InvalidInput("weights must be non-empty".into()));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("weights must be finite".into()));
        }
        let sum: f64 = w.iter().sum();
        let scale = w.iter().map(|v| v.abs()).sum::<f64>().max(1.0);
        if (sum - 1.0).abs() > 1e-10 * scale {
            return Err(Error::InvalidInput(format!("weights sum to {sum}, not 1")));
        }
        Ok(Weights(w))
    }

    pub fn uniform(n: usize) -> Self {
        Weights(vec![1.0 / n as f64; n])
    }

    pub(crate) fn from_unchecked(w: Vec<f64>) -> Self {
        Weights(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.0.iter().zip(x).map(|(w, v)| w * v).sum()
    }
}

impl std::ops::Index<usize> for Weights {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PortfolioStats {
    pub mu_p: f64,
    pub sigma_p: f64,
    /// `None` when sigma_p is zero.
    pub sharpe: Option<f64>,
}

/// mu_p = wᵀμ, sigma_p = √(wᵀΣw), sharpe = (mu_p − rf) / sigma_p.
pub fn portfolio_stats(w: &Weights, m: &MomentEstimate, rf: f64) -> Result<PortfolioStats> {
    if w.len() != m.n() {
        return Err(Error::Dimension(format!(
            "{} weights for {} assets",
            w.len(),
            m.n()
        )));
    }
    let wv = DVector::from_column_slice(w.as_slice());
    let mu_p = w.dot(&m.mu);
    let variance = (wv.transpose() * &m.sigma * &wv)[(0, 0)].max(0.0);
    let sigma_p = variance.sqrt();
    let sharpe = (sigma_p > 0.0).then(|| (mu_p - rf) / sigma_p);
    Ok(PortfolioStats {
        mu_p,
        sigma_p,
        sharpe,
    })
}

/// Σ⁻¹1 / (1ᵀΣ⁻¹1).
pub fn min_variance_weights(m: &MomentEstimate) -> Result<Weights> {
    let solver = SpdSolver::new(&m.sigma)?;
    let z = solver.solve(&DVector::from_element(m.n(), 1.0));
    let sum = z.sum();
    Ok(Weights::from_unchecked(z.iter().map(|v| v / sum).collect()))
}

/// Σ⁻¹(μ − rf·1) normalized to sum to one.
///
/// When rf lies above the minimum-variance portfolio's mean the normalizing
/// sum is negative and the result is the lowest-Sharpe frontier point; a
/// sum that vanishes relative to the vector is reported as
/// [`Error::TangencyAtInfinity`].
pub fn tangent_weights(m: &MomentEstimate, rf: f64) -> Result<Weights> {
    let solver = SpdSolver::new(&m.sigma)?;
    let excess = DVector::from_iterator(m.n(), m.mu.iter().map(|v| v - rf));
    if excess.iter().all(|v| *v == 0.0) {
        return Err(Error::Degenerate("expected returns all equal the risk-free rate".into()));
    }
    let z = solver.solve(&excess);
    let sum = z.sum();
    let l1: f64 = z.iter().map(|v| v.abs()).sum();
    if !(sum.abs() > 1e-12 * l1) {
        return Err(Error::TangencyAtInfinity { sum });
    }
    Ok(Weights::from_unchecked(z.iter().map(|v| v / sum).collect()))
}

/// Scalars of the two-constraint problem:
/// A = 1ᵀΣ⁻¹1, B = 1ᵀΣ⁻¹μ, C = μᵀΣ⁻¹μ, D = AC − B².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontierCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl FrontierCoefficients {
    /// Minimum portfolio variance attainable at expected return `target`.
    pub fn variance_at(&self, target: f64) -> f64 {
        (self.a * target * target - 2.0 * self.b * target + self.c) / self.d
    }

    pub fn min_variance_mean(&self) -> f64 {
        self.b / self.a
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontierPoint {
    pub target_mu: f64,
    pub sigma_p: f64,
    pub weights: Weights,
}

struct FrontierSolve {
    coef: FrontierCoefficients,
    inv_ones: DVector<f64>,
    inv_mu: DVector<f64>,
}

fn frontier_solve(m: &MomentEstimate) -> Result<FrontierSolve> {
    let solver = SpdSolver::new(&m.sigma)?;
    let ones = DVector::from_element(m.n(), 1.0);
    let mu = DVector::from_column_slice(&m.mu);
    let inv_ones = solver.solve(&ones);
    let inv_mu = solver.solve(&mu);
    let a = ones.dot(&inv_ones);
    let b = ones.dot(&inv_mu);
    let c = mu.dot(&inv_mu);
    let d = a * c - b * b;
    if !(d > 1e-12 * a * c.abs()) {
        return Err(Error::Degenerate(
            "expected returns are collinear with the unit vector; frontier is a point".into(),
        ));
    }
    Ok(FrontierSolve {
        coef: FrontierCoefficients { a, b, c, d },
        inv_ones,
        inv_mu,
    })
}

pub fn frontier_coefficients(m: &MomentEstimate) -> Result<FrontierCoefficients> {
    frontier_solve(m).map(|s| s.coef)
}

/// Minimum-variance weights with wᵀμ = target and wᵀ1 = 1 for each target:
/// w = Σ⁻¹(λ1 + γμ), λ = (C − B·t)/D, γ = (A·t − B)/D.
pub fn efficient_frontier(m: &MomentEstimate, targets: &[f64]) -> Result<Vec<FrontierPoint>> {
    let s = frontier_solve(m)?;
    let FrontierCoefficients { a, b, c, d } = s.coef;
    Ok(targets
        .iter()
        .map(|&t| {
            let lambda = (c - b * t) / d;
            let gamma = (a * t - b) / d;
            let w = lambda * &s.inv_ones + gamma * &s.inv_mu;
            FrontierPoint {
                target_mu: t,
                sigma_p: s.coef.variance_at(t).max(0.0).sqrt(),
                weights: Weights::from_unchecked(w.iter().copied().collect()),
            }
        })
        .collect())
}

/// CSV with columns `target_mu, sigma_p, w_1..w_n`.
pub fn write_frontier_csv<W: Write>(out: W, points: &[FrontierPoint], assets: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["target_mu".to_string(), "sigma_p".to_string()];
    header.extend(assets.iter().map(|a| format!("w_{a}")));
    w.write_record(&header)?;
    for p in points {
        let mut rec = vec![p.target_mu.to_string(), p.sigma_p.to_string()];
        rec.extend(p.weights.as_slice().iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
