//! Expected-return and covariance estimators: sample (Markowitz), constant
//! correlation, single index and the three-factor model.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg;
use crate::market_data::{FactorKind, FactorPanel, ReturnFrame};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelTag {
    /// Sample moments.
    MM,
    /// Constant correlation.
    CCM,
    /// Single index.
    SIM,
    /// Market / size / value factor model.
    MFM,
}

impl ModelTag {
    pub const ALL: [ModelTag; 4] = [ModelTag::MM, ModelTag::CCM, ModelTag::SIM, ModelTag::MFM];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelTag::MM => "MM",
            ModelTag::CCM => "CCM",
            ModelTag::SIM => "SIM",
            ModelTag::MFM => "MFM",
        }
    }
}

impl fmt::Display for ModelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "MM" => Ok(ModelTag::MM),
            "CCM" => Ok(ModelTag::CCM),
            "SIM" => Ok(ModelTag::SIM),
            "MFM" => Ok(ModelTag::MFM),
            other => Err(Error::InvalidInput(format!("unknown model '{other}'"))),
        }
    }
}

/// Expected returns and covariance for n assets, per period.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    pub mu: Vec<f64>,
    pub sigma: DMatrix<f64>,
    pub model: ModelTag,
}

impl MomentEstimate {
    /// Checks shape, finiteness, symmetry and numerical positive
    /// semi-definiteness (smallest eigenvalue ≥ −1e−10 × largest).
    pub fn new(mu: Vec<f64>, sigma: DMatrix<f64>, model: ModelTag) -> Result<Self> {
        let n = mu.len();
        if sigma.nrows() != n || sigma.ncols() != n {
            return Err(Error::Dimension(format!(
                "mu has {n} entries but sigma is {}x{}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        if mu.iter().chain(sigma.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("moment estimate has non-finite entries".into()));
        }
        let scale = sigma.amax().max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in (i + 1)..n {
                if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidInput(format!("sigma is not symmetric at ({i}, {j})")));
                }
            }
        }
        if n > 0 {
            let eig = SymmetricEigen::new(sigma.clone()).eigenvalues;
            if eig.min() < -1e-10 * eig.max().max(0.0) {
                return Err(Error::InvalidInput(format!(
                    "sigma is not positive semi-definite (smallest eigenvalue {:.3e})",
                    eig.min()
                )));
            }
        }
        Ok(MomentEstimate { mu, sigma, model })
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }
}

impl Serialize for MomentEstimate {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..self.n())
            .map(|i| self.sigma.row(i).iter().copied().collect())
            .collect();
        let mut st = s.serialize_struct("MomentEstimate", 3)?;
        st.serialize_field("model_tag", &self.model)?;
        st.serialize_field("mu", &self.mu)?;
        st.serialize_field("sigma", &rows)?;
        st.end()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EstimatorOptions {
    /// Drop the idiosyncratic variance from the diagonal of the index and
    /// factor covariances, leaving only the factor-implied part.
    pub exclude_residual_diag: bool,
}

pub fn sample_moments(r: &ReturnFrame) -> Result<MomentEstimate> {
    if r.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "sample moments need at least 2 returns, got {}",
            r.len()
        )));
    }
    let mu = stats::column_means(r.returns());
    let sigma = stats::covariance_matrix(r.returns());
    MomentEstimate::new(mu, sigma, ModelTag::MM)
}

/// Mean of the n(n−1)/2 distinct off-diagonal sample correlations.
pub fn average_correlation(sigma: &DMatrix<f64>) -> f64 {
    let n = sigma.nrows();
    let mut sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            sum += sigma[(i, j)] / (sigma[(i, i)] * sigma[(j, j)]).sqrt();
        }
    }
    sum / (n * (n - 1) / 2) as f64
}

/// Replaces every pairwise correlation by their average, keeping sample
/// variances and means.
pub fn constant_correlation_moments(r: &ReturnFrame) -> Result<MomentEstimate> {
    let n = r.n_assets();
    if n < 2 {
        return Err(Error::InvalidInput("constant correlation needs at least 2 assets".into()));
    }
    let sample = sample_moments(r)?;
    if let Some(j) = (0..n).find(|&j| !(sample.sigma[(j, j)] > 0.0)) {
        return Err(Error::Degenerate(format!(
            "asset '{}' has zero sample variance",
            r.assets()[j]
        )));
    }
    let rho = average_correlation(&sample.sigma);
    let sd: Vec<f64> = (0..n).map(|i| sample.sigma[(i, i)].sqrt()).collect();
    let sigma = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            sample.sigma[(i, i)]
        } else {
            rho * (sd[i] * sd[j])
        }
    });
    MomentEstimate::new(sample.mu, sigma, ModelTag::CCM)
}

/// Per-asset regression on the market return.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexFit {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub residual_variance: Vec<f64>,
    pub market_variance: f64,
}

pub fn single_index_fit(r: &ReturnFrame, market: &[f64]) -> Result<IndexFit> {
    if market.len() != r.len() {
        return Err(Error::Dimension(format!(
            "market series has {} values for {} return rows",
            market.len(),
            r.len()
        )));
    }
    if r.len() < 3 {
        return Err(Error::InvalidInput("single index fit needs at least 3 returns".into()));
    }
    let market_variance = stats::variance(market);
    if !(market_variance > 0.0) {
        return Err(Error::Degenerate("market series has zero variance".into()));
    }
    let mut fit = IndexFit {
        alpha: Vec::with_capacity(r.n_assets()),
        beta: Vec::with_capacity(r.n_assets()),
        residual_variance: Vec::with_capacity(r.n_assets()),
        market_variance,
    };
    for j in 0..r.n_assets() {
        let y = r.asset(j);
        let ols = linalg::ols(&y, &[market], &[FactorKind::MarketReturn.as_str()])?;
        fit.alpha.push(ols.intercept);
        fit.beta.push(ols.slopes[0]);
        fit.residual_variance.push(ols.residual_variance());
    }
    Ok(fit)
}

pub fn single_index_moments(fit: &IndexFit, mu_market: f64) -> Result<MomentEstimate> {
    single_index_moments_with(fit, mu_market, EstimatorOptions::default())
}

/// μ_i = α_i + β_i μ_M; σ_ij = β_i β_j σ_M² plus residual variance on the
/// diagonal unless excluded.
pub fn single_index_moments_with(
    fit: &IndexFit,
    mu_market: f64,
    opts: EstimatorOptions,
) -> Result<MomentEstimate> {
    let n = fit.beta.len();
    let mu = (0..n).map(|i| fit.alpha[i] + fit.beta[i] * mu_market).collect();
    let sigma = DMatrix::from_fn(n, n, |i, j| {
        let systematic = fit.beta[i] * fit.beta[j] * fit.market_variance;
        if i == j && !opts.exclude_residual_diag {
            systematic + fit.residual_variance[i]
        } else {
            systematic
        }
    });
    MomentEstimate::new(mu, sigma, ModelTag::SIM)
}

/// Per-asset regression of excess returns on market excess, SMB and HML.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FfFit {
    pub alpha: Vec<f64>,
    pub beta_market: Vec<f64>,
    pub beta_smb: Vec<f64>,
    pub beta_hml: Vec<f64>,
    pub residual_variance: Vec<f64>,
    pub var_market_excess: f64,
    pub var_smb: f64,
    pub var_hml: f64,
    pub mean_market_excess: f64,
    pub mean_smb: f64,
    pub mean_hml: f64,
    pub mean_risk_free: f64,
}

impl FfFit {
    fn betas(&self, i: usize) -> [f64; 3] {
        [self.beta_market[i], self.beta_smb[i], self.beta_hml[i]]
    }
}

pub fn fama_french_moments(r: &ReturnFrame, f: &FactorPanel) -> Result<(FfFit, MomentEstimate)> {
    fama_french_moments_with(r, f, EstimatorOptions::default())
}

/// Fits the three-factor regression per asset and assembles
/// σ_ij = Σ_k β_ik β_jk σ_k² (factor cross-covariances omitted), with
/// residual variance on the diagonal unless excluded. μ_i is the mean
/// risk-free rate plus the fitted excess return at the factor means.
pub fn fama_french_moments_with(
    r: &ReturnFrame,
    f: &FactorPanel,
    opts: EstimatorOptions,
) -> Result<(FfFit, MomentEstimate)> {
    if f.len() != r.len() {
        return Err(Error::Dimension(format!(
            "factor panel has {} rows for {} return rows",
            f.len(),
            r.len()
        )));
    }
    let market = f.require(FactorKind::MarketReturn)?;
    let rf = f.require(FactorKind::RiskFree)?;
    let smb = f.require(FactorKind::Smb)?;
    let hml = f.require(FactorKind::Hml)?;
    let excess_market: Vec<f64> = market.iter().zip(rf).map(|(m, r)| m - r).collect();
    let names = ["market_excess", "smb", "hml"];

    let n = r.n_assets();
    let mut fit = FfFit {
        alpha: Vec::with_capacity(n),
        beta_market: Vec::with_capacity(n),
        beta_smb: Vec::with_capacity(n),
        beta_hml: Vec::with_capacity(n),
        residual_variance: Vec::with_capacity(n),
        var_market_excess: stats::variance(&excess_market),
        var_smb: stats::variance(smb),
        var_hml: stats::variance(hml),
        mean_market_excess: stats::mean(&excess_market),
        mean_smb: stats::mean(smb),
        mean_hml: stats::mean(hml),
        mean_risk_free: stats::mean(rf),
    };
    for j in 0..n {
        let y: Vec<f64> = r.asset(j).iter().zip(rf).map(|(v, r)| v - r).collect();
        let ols = linalg::ols(&y, &[&excess_market, smb, hml], &names)?;
        fit.alpha.push(ols.intercept);
        fit.beta_market.push(ols.slopes[0]);
        fit.beta_smb.push(ols.slopes[1]);
        fit.beta_hml.push(ols.slopes[2]);
        fit.residual_variance.push(ols.residual_variance());
    }
    let moments = fama_french_moments_from_fit(&fit, opts)?;
    Ok((fit, moments))
}

pub fn fama_french_moments_from_fit(fit: &FfFit, opts: EstimatorOptions) -> Result<MomentEstimate> {
    let n = fit.alpha.len();
    let factor_var = [fit.var_market_excess, fit.var_smb, fit.var_hml];
    let factor_mean = [fit.mean_market_excess, fit.mean_smb, fit.mean_hml];
    let mu = (0..n)
        .map(|i| {
            let b = fit.betas(i);
            fit.mean_risk_free + fit.alpha[i] + (0..3).map(|k| b[k] * factor_mean[k]).sum::<f64>()
        })
        .collect();
    let sigma = DMatrix::from_fn(n, n, |i, j| {
        let (bi, bj) = (fit.betas(i), fit.betas(j));
        let systematic: f64 = (0..3).map(|k| bi[k] * bj[k] * factor_var[k]).sum();
        if i == j && !opts.exclude_residual_diag {
            systematic + fit.residual_variance[i]
        } else {
            systematic
        }
    });
    MomentEstimate::new(mu, sigma, ModelTag::MFM)
}

/// Runs the estimator named by `model` on an aligned window.
pub fn estimate(
    model: ModelTag,
    r: &ReturnFrame,
    f: &FactorPanel,
    opts: EstimatorOptions,
) -> Result<MomentEstimate> {
    match model {
        ModelTag::MM => sample_moments(r),
        ModelTag::CCM => constant_correlation_moments(r),
        ModelTag::SIM => {
            let market = f.require(FactorKind::MarketReturn)?;
            if market.len() != r.len() {
                return Err(Error::Dimension("market series not aligned with returns".into()));
            }
            let fit = single_index_fit(r, market)?;
            single_index_moments_with(&fit, stats::mean(market), opts)
        }
        ModelTag::MFM => fama_french_moments_with(r, f, opts).map(|(_, m)| m),
    }
}
