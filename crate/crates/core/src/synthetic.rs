//! Seeded capitalization paths from constant-coefficient geometric Brownian
//! motion with `d` shared drivers, and the bundled 8-asset fixture.

use chrono::{Datelike, NaiveDate, Weekday};
use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::market_data::{FactorKind, FactorPanel, PriceFrame};
use crate::rng;

/// dX_i = X_i (r_i dt + Σ_ν σ_iν dW_ν) with constant coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct GbmSpec {
    /// Per-unit-time drift r_i.
    pub growth_rates: Vec<f64>,
    /// n×d loadings σ_iν on the independent drivers.
    pub vol_matrix: DMatrix<f64>,
    pub x0: Vec<f64>,
    pub steps: usize,
    pub seed: u64,
    /// Column labels; `S1..Sn` when empty.
    pub assets: Vec<String>,
}

impl GbmSpec {
    pub fn n(&self) -> usize {
        self.growth_rates.len()
    }

    pub fn drivers(&self) -> usize {
        self.vol_matrix.ncols()
    }

    fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(Error::InvalidInput("at least one asset required".into()));
        }
        if self.vol_matrix.nrows() != n || self.x0.len() != n {
            return Err(Error::Dimension(format!(
                "{} growth rates, {} vol rows, {} initial values",
                n,
                self.vol_matrix.nrows(),
                self.x0.len()
            )));
        }
        if self.drivers() == 0 {
            return Err(Error::InvalidInput("at least one driving noise required".into()));
        }
        if self.steps == 0 {
            return Err(Error::InvalidInput("at least one step required".into()));
        }
        if self.x0.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(Error::InvalidInput("initial capitalizations must be positive".into()));
        }
        if self.vol_matrix.iter().chain(&self.growth_rates).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("coefficients must be finite".into()));
        }
        if !self.assets.is_empty() && self.assets.len() != n {
            return Err(Error::Dimension("one label per asset required".into()));
        }
        Ok(())
    }
}

/// Weekdays starting 2011-01-03, one per row.
pub fn trading_dates(n: usize) -> Vec<NaiveDate> {
    let start = NaiveDate::from_ymd_opt(2011, 1, 3).expect("valid date");
    start
        .iter_days()
        .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
        .take(n)
        .collect()
}

/// Simulates `steps + 1` price rows with the exact log scheme
///
/// ln X(t+dt) = ln X(t) + (r − ½Σσ²) dt + Σ σ √dt Z
///
/// Each step draws the d normals in driver order from `rng::stream(seed)`.
pub fn simulate(spec: &GbmSpec, dt: f64) -> Result<PriceFrame> {
    spec.validate()?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
    }
    let n = spec.n();
    let d = spec.drivers();
    let sqrt_dt = dt.sqrt();
    let drift: Vec<f64> = (0..n)
        .map(|i| {
            let var: f64 = spec.vol_matrix.row(i).iter().map(|s| s * s).sum();
            (spec.growth_rates[i] - 0.5 * var) * dt
        })
        .collect();

    let mut rng = rng::stream(spec.seed);
    let mut log_growth = vec![0.0; n];
    let mut prices = DMatrix::zeros(spec.steps + 1, n);
    for (i, x) in spec.x0.iter().enumerate() {
        prices[(0, i)] = *x;
    }
    let mut z = vec![0.0; d];
    for t in 1..=spec.steps {
        for zv in z.iter_mut() {
            *zv = StandardNormal.sample(&mut rng);
        }
        for i in 0..n {
            let shock: f64 = (0..d).map(|v| spec.vol_matrix[(i, v)] * z[v]).sum();
            log_growth[i] += drift[i] + shock * sqrt_dt;
            prices[(t, i)] = spec.x0[i] * log_growth[i].exp();
        }
    }
    let assets = if spec.assets.is_empty() {
        (1..=n).map(|i| format!("S{i}")).collect()
    } else {
        spec.assets.clone()
    };
    PriceFrame::new(trading_dates(spec.steps + 1), assets, prices)
}

/// Seed of the fixture shipped under `fixtures/`.
pub const FIXTURE_SEED: u64 = 20_110_103;
pub const FIXTURE_STEPS: usize = 1259;
pub const FIXTURE_ASSETS: [&str; 8] = ["AMZN", "AAPL", "CAT", "DAL", "GOOG", "JPM", "TSLA", "XOM"];

/// Eight stocks driven by market, size and value drivers plus one
/// idiosyncratic driver each, together with a factor panel whose
/// market/SMB/HML columns are the returns of the driver portfolios.
///
/// Daily steps (dt = 1/252) with annualized coefficients. The macro columns
/// are seeded random walks from substreams of `seed`.
pub fn fixture(seed: u64, steps: usize) -> Result<(PriceFrame, FactorPanel)> {
    const BETA: [f64; 8] = [1.15, 1.05, 1.2, 1.3, 1.0, 1.1, 1.4, 0.85];
    const SIZE: [f64; 8] = [-0.2, -0.3, 0.1, 0.4, -0.25, -0.1, 0.5, -0.15];
    const VALUE: [f64; 8] = [-0.4, -0.2, 0.3, 0.2, -0.3, 0.5, -0.5, 0.6];
    const IDIO: [f64; 8] = [0.25, 0.2, 0.22, 0.3, 0.2, 0.18, 0.45, 0.17];
    const DRIFT: [f64; 8] = [0.18, 0.15, 0.06, 0.1, 0.14, 0.1, 0.25, 0.04];
    const MARKET_VOL: f64 = 0.15;
    const STYLE_VOL: f64 = 0.08;

    let n_stocks = 8;
    let drivers = 3 + n_stocks;
    let rows = n_stocks + 3;
    let mut vol = DMatrix::zeros(rows, drivers);
    let mut growth = vec![0.0; rows];
    for i in 0..n_stocks {
        vol[(i, 0)] = BETA[i] * MARKET_VOL;
        vol[(i, 1)] = SIZE[i] * STYLE_VOL;
        vol[(i, 2)] = VALUE[i] * STYLE_VOL;
        vol[(i, 3 + i)] = IDIO[i];
        growth[i] = DRIFT[i];
    }
    vol[(n_stocks, 0)] = MARKET_VOL;
    vol[(n_stocks + 1, 1)] = STYLE_VOL;
    vol[(n_stocks + 2, 2)] = STYLE_VOL;
    growth[n_stocks] = 0.08;
    growth[n_stocks + 1] = 0.02;
    growth[n_stocks + 2] = 0.01;

    let mut labels: Vec<String> = FIXTURE_ASSETS.iter().map(|s| s.to_string()).collect();
    labels.extend(["MKT", "SMB", "HML"].map(String::from));
    let spec = GbmSpec {
        growth_rates: growth,
        vol_matrix: vol,
        x0: vec![100.0; rows],
        steps,
        seed,
        assets: labels,
    };
    let all = simulate(&spec, 1.0 / 252.0)?;
    let p = all.prices();

    let stock_prices = p.columns(0, n_stocks).into_owned();
    let prices = PriceFrame::new(
        all.dates().to_vec(),
        FIXTURE_ASSETS.iter().map(|s| s.to_string()).collect(),
        stock_prices,
    )?;

    let simple = |col: usize| -> Vec<f64> {
        (1..p.nrows()).map(|t| p[(t, col)] / p[(t - 1, col)] - 1.0).collect()
    };
    let market = simple(n_stocks);
    let smb = simple(n_stocks + 1);
    let hml = simple(n_stocks + 2);

    let mut macro_rng = rng::substream(seed, 0);
    let mut normal = move || -> f64 { StandardNormal.sample(&mut macro_rng) };
    let mut risk_free = Vec::with_capacity(steps);
    let mut volume = Vec::with_capacity(steps);
    let mut inflation = Vec::with_capacity(steps);
    let mut gdp = Vec::with_capacity(steps);
    let mut cpi = Vec::with_capacity(steps);
    let mut unemployment = Vec::with_capacity(steps);
    let (mut rf, mut infl, mut g, mut c, mut u) = (0.0001, 0.02, 0.025, 230.0, 0.06);
    for m in &market {
        rf = (rf + 2e-6 * normal()).clamp(0.0, 0.0004);
        infl = 0.02 + 0.98 * (infl - 0.02) + 0.0005 * normal();
        g = 0.025 + 0.99 * (g - 0.025) + 0.0008 * normal();
        c *= 1.0 + infl / 252.0 + 0.0005 * normal();
        u = (0.06 + 0.995 * (u - 0.06) + 0.0004 * normal()).max(0.01);
        let vol_shock = 0.3 * normal() + 25.0 * m.abs();
        risk_free.push(rf);
        volume.push((16.0 + vol_shock).exp().round());
        inflation.push(infl);
        gdp.push(g);
        cpi.push(c);
        unemployment.push(u);
    }
    let factors = FactorPanel::new(
        all.dates()[1..].to_vec(),
        vec![
            FactorKind::MarketReturn,
            FactorKind::RiskFree,
            FactorKind::Smb,
            FactorKind::Hml,
            FactorKind::Volume,
            FactorKind::Inflation,
            FactorKind::Gdp,
            FactorKind::Cpi,
            FactorKind::Unemployment,
        ],
        vec![market, risk_free, smb, hml, volume, inflation, gdp, cpi, unemployment],
    )?;
    Ok((prices, factors))
}

/// The bundled fixture panel.
pub fn bundled_fixture() -> Result<(PriceFrame, FactorPanel)> {
    fixture(FIXTURE_SEED, FIXTURE_STEPS)
}
