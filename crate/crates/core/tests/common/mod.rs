#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal, StudentT};

use portfolio_analytics::market_data::{self, FactorKind, FactorPanel, ReturnFrame, ReturnKind};
use portfolio_analytics::moments::ModelTag;
use portfolio_analytics::rng;
use portfolio_analytics::synthetic;

/// Aligned simple returns and factors of the bundled fixture.
pub fn fixture_frames() -> (ReturnFrame, FactorPanel) {
    let (prices, factors) = synthetic::bundled_fixture().unwrap();
    let r = market_data::compute_returns(&prices, ReturnKind::Simple);
    market_data::align(&r, &factors).unwrap()
}

pub fn frame(rows: &[Vec<f64>]) -> ReturnFrame {
    ReturnFrame::from_rows(rows).unwrap()
}

/// GARCH(1,1) path with Gaussian innovations, started from the stationary
/// variance after a burn-in of 500 draws.
pub fn garch_path(seed: u64, n: usize, omega: f64, alpha: f64, beta: f64) -> Vec<f64> {
    let mut g = rng::stream(seed);
    let mut var = omega / (1.0 - alpha - beta);
    let mut out = Vec::with_capacity(n);
    let mut prev = 0.0;
    for k in 0..(n + 500) {
        var = omega + alpha * prev * prev + beta * var;
        let z: f64 = StandardNormal.sample(&mut g);
        prev = var.sqrt() * z;
        if k >= 500 {
            out.push(prev);
        }
    }
    out
}

pub fn t_sample(g: &mut rng::Rng, nu: f64, loc: f64, scale: f64, n: usize) -> Vec<f64> {
    let t = StudentT::new(nu).unwrap();
    (0..n).map(|_| loc + scale * t.sample(g)).collect()
}

pub fn normal_sample(g: &mut rng::Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(g)).collect()
}

pub fn random_spd(g: &mut rng::Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| g.random_range(-1.0..1.0));
    &a * a.transpose() / n as f64 + DMatrix::identity(n, n) * 0.05
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn cov(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (x.len() - 1) as f64
}

/// Residual variance and coefficients of y on [1, xs...] from the normal
/// equations.
fn regress(y: &[f64], xs: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let t = y.len();
    let k = xs.len() + 1;
    let x = DMatrix::from_fn(t, k, |i, j| if j == 0 { 1.0 } else { xs[j - 1][i] });
    let yv = DVector::from_column_slice(y);
    let xtx = x.transpose() * &x;
    let b = xtx.lu().solve(&(x.transpose() * &yv)).unwrap();
    let resid = &yv - &x * &b;
    (b.iter().copied().collect(), resid.norm_squared() / (t - k) as f64)
}

/// Moments of one estimation window computed directly from the model
/// definitions.
pub fn oracle_moments(model: ModelTag, cols: &[Vec<f64>], f: &FactorPanel, start: usize, end: usize) -> (Vec<f64>, DMatrix<f64>) {
    let n = cols.len();
    let w: Vec<Vec<f64>> = cols.iter().map(|c| c[start..end].to_vec()).collect();
    let factor = |k: FactorKind| f.get(k).map(|v| v[start..end].to_vec());
    match model {
        ModelTag::MM => {
            let mu = w.iter().map(|c| mean(c)).collect();
            (mu, DMatrix::from_fn(n, n, |i, j| cov(&w[i], &w[j])))
        }
        ModelTag::CCM => {
            let mu = w.iter().map(|c| mean(c)).collect();
            let sd: Vec<f64> = w.iter().map(|c| cov(c, c).sqrt()).collect();
            let mut total = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    total += cov(&w[i], &w[j]) / (sd[i] * sd[j]);
                }
            }
            let rho = total / (n * (n - 1) / 2) as f64;
            let sigma = DMatrix::from_fn(n, n, |i, j| if i == j { sd[i] * sd[i] } else { rho * sd[i] * sd[j] });
            (mu, sigma)
        }
        ModelTag::SIM => {
            let m = factor(FactorKind::MarketReturn).unwrap();
            let vm = cov(&m, &m);
            let fits: Vec<(Vec<f64>, f64)> = w.iter().map(|c| regress(c, &[m.clone()])).collect();
            let mu = fits.iter().map(|(b, _)| b[0] + b[1] * mean(&m)).collect();
            let sigma = DMatrix::from_fn(n, n, |i, j| {
                let s = fits[i].0[1] * fits[j].0[1] * vm;
                if i == j { s + fits[i].1 } else { s }
            });
            (mu, sigma)
        }
        ModelTag::MFM => {
            let m = factor(FactorKind::MarketReturn).unwrap();
            let rf = factor(FactorKind::RiskFree).unwrap();
            let xs = vec![
                m.iter().zip(&rf).map(|(a, b)| a - b).collect::<Vec<f64>>(),
                factor(FactorKind::Smb).unwrap(),
                factor(FactorKind::Hml).unwrap(),
            ];
            let fvar: Vec<f64> = xs.iter().map(|x| cov(x, x)).collect();
            let fmean: Vec<f64> = xs.iter().map(|x| mean(x)).collect();
            let fits: Vec<(Vec<f64>, f64)> = w
                .iter()
                .map(|c| {
                    let y: Vec<f64> = c.iter().zip(&rf).map(|(a, b)| a - b).collect();
                    regress(&y, &xs)
                })
                .collect();
            let mu = fits
                .iter()
                .map(|(b, _)| mean(&rf) + b[0] + (0..3).map(|k| b[k + 1] * fmean[k]).sum::<f64>())
                .collect();
            let sigma = DMatrix::from_fn(n, n, |i, j| {
                let s: f64 = (0..3).map(|k| fits[i].0[k + 1] * fits[j].0[k + 1] * fvar[k]).sum();
                if i == j { s + fits[i].1 } else { s }
            });
            (mu, sigma)
        }
    }
}

pub struct OraclePath {
    pub weights: Vec<Vec<f64>>,
    pub wealth: Vec<f64>,
    pub kept: usize,
}

/// Step-by-step rolling tangent strategy: rebalance every `every` periods
/// once a full window is available, keep the previous target when the
/// tangent is missing, inefficient (mean ≤ rf) or above 10× gross exposure,
/// and let holdings drift in between.
pub fn scripted_backtest(r: &ReturnFrame, f: &FactorPanel, model: ModelTag, window: usize, every: usize) -> OraclePath {
    let n = r.n_assets();
    let cols: Vec<Vec<f64>> = (0..n).map(|j| r.asset(j)).collect();
    let rf_col = f.get(FactorKind::RiskFree).map(|v| v.to_vec());
    let mut target = vec![1.0 / n as f64; n];
    let mut held = target.clone();
    let mut path = OraclePath {
        weights: Vec::new(),
        wealth: vec![1.0],
        kept: 0,
    };
    for t in 0..r.len() {
        if t % every == 0 {
            if t >= window {
                let (mu, sigma) = oracle_moments(model, &cols, f, t - window, t);
                let rf = rf_col.as_ref().map_or(0.0, |c| mean(&c[t - window..t]));
                match oracle_tangent(&mu, &sigma, rf) {
                    Some(w) => target = w,
                    None => path.kept += 1,
                }
            }
            held = target.clone();
        }
        let x = r.row(t);
        let ret: f64 = held.iter().zip(&x).map(|(a, b)| a * b).sum();
        let gross = 1.0 + ret;
        path.weights.push(held.clone());
        path.wealth.push(path.wealth[t] * gross);
        held = held.iter().zip(&x).map(|(a, b)| a * (1.0 + b) / gross).collect();
    }
    path
}

fn oracle_tangent(mu: &[f64], sigma: &DMatrix<f64>, rf: f64) -> Option<Vec<f64>> {
    let eig = SymmetricEigen::new(sigma.clone()).eigenvalues;
    if eig.min() <= 0.0 || eig.max() / eig.min() > 1e12 {
        return None;
    }
    let excess = DVector::from_iterator(mu.len(), mu.iter().map(|m| m - rf));
    let z = sigma.clone().lu().solve(&excess)?;
    let sum = z.sum();
    if sum.abs() <= 1e-12 * z.abs().sum() {
        return None;
    }
    let w: Vec<f64> = z.iter().map(|v| v / sum).collect();
    let mu_p: f64 = w.iter().zip(mu).map(|(a, b)| a * b).sum();
    let gross: f64 = w.iter().map(|v| v.abs()).sum();
    if mu_p <= rf || gross > 10.0 {
        return None;
    }
    Some(w)
}

/// Monte Carlo rows of a factor model: returns r_t = a + B f_t + e_t with
/// independent Gaussian factors and residuals.
pub fn factor_panel_rows(
    g: &mut rng::Rng,
    t: usize,
    alpha: &[f64],
    betas: &[Vec<f64>],
    factor_sd: &[f64],
    factor_mean: &[f64],
    resid_sd: &[f64],
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut rows = Vec::with_capacity(t);
    let mut factors = Vec::with_capacity(t);
    for _ in 0..t {
        let fv: Vec<f64> = factor_sd
            .iter()
            .zip(factor_mean)
            .map(|(s, m)| {
                let z: f64 = StandardNormal.sample(&mut *g);
                m + s * z
            })
            .collect();
        let row = (0..alpha.len())
            .map(|i| {
                let e: f64 = StandardNormal.sample(&mut *g);
                alpha[i] + betas[i].iter().zip(&fv).map(|(b, f)| b * f).sum::<f64>() + resid_sd[i] * e
            })
            .collect();
        rows.push(row);
        factors.push(fv);
    }
    (rows, factors)
}

pub fn frobenius_rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}
