//! Diversity-weighted portfolios π_i = μ_i^p / Σ_j μ_j^p over market
//! weights, scored by annualized Sharpe ratio or by final wealth in excess
//! of the equal-weight portfolio, and tuned by grid search over p ∈ [−1, 1].

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::market_data::{PriceFrame, ReturnFrame};
use crate::optimizer::Weights;
use crate::stats;
use crate::universal::{crp_schedule, wealth_of_schedule, WeightSchedule};

pub const TRADING_DAYS: f64 = 252.0;

/// Rows of market weights, one per price date.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketWeights {
    rows: Vec<Vec<f64>>,
}

impl MarketWeights {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        for (t, row) in rows.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidInput(format!(
                    "market weight row {t} is not a probability vector"
                )));
            }
        }
        Ok(MarketWeights { rows })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// μ_i(t) = shares_i·P_i(t) / Σ_j shares_j·P_j(t); unit shares when `None`.
pub fn market_weights_from_prices(pf: &PriceFrame, shares: Option<&[f64]>) -> Result<MarketWeights> {
    let n = pf.n_assets();
    let ones = vec![1.0; n];
    let shares = shares.unwrap_or(&ones);
    if shares.len() != n {
        return Err(Error::Dimension(format!("{} share counts for {n} assets", shares.len())));
    }
    if shares.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidInput("share counts must be positive".into()));
    }
    let p = pf.prices();
    let rows = (0..pf.len())
        .map(|t| {
            let caps: Vec<f64> = (0..n).map(|j| shares[j] * p[(t, j)]).collect();
            let total: f64 = caps.iter().sum();
            caps.into_iter().map(|c| c / total).collect()
        })
        .collect();
    Ok(MarketWeights { rows })
}

/// Diversity weights μ^p / Σ μ^p.
pub fn dwp_weights(mu_row: &[f64], p: f64) -> Result<Weights> {
    if !(-1.0..=1.0).contains(&p) {
        return Err(Error::InvalidInput(format!("p must lie in [-1, 1], got {p}")));
    }
    if mu_row.is_empty() {
        return Err(Error::InvalidInput("empty market weight row".into()));
    }
    if p <= 0.0 && mu_row.iter().any(|m| !(*m > 0.0)) {
        return Err(Error::InvalidInput(
            "zero market weight with non-positive exponent".into(),
        ));
    }
    let powered: Vec<f64> = mu_row.iter().map(|m| m.powf(p)).collect();
    let total: f64 = powered.iter().sum();
    Ok(Weights::from_unchecked(powered.into_iter().map(|v| v / total).collect()))
}

/// √252 × sample mean / sample sd; `None` for zero dispersion.
pub fn annualized_sharpe(portfolio_returns: &[f64]) -> Option<f64> {
    if portfolio_returns.len() < 2 {
        return None;
    }
    let sd = stats::std_dev(portfolio_returns);
    (sd > 0.0).then(|| TRADING_DAYS.sqrt() * stats::mean(portfolio_returns) / sd)
}

/// Final wealth of `schedule` minus that of the per-period equal-weight
/// portfolio over the same returns.
pub fn excess_return_vs_ewp(r: &ReturnFrame, schedule: &WeightSchedule) -> Result<f64> {
    let own = wealth_of_schedule(schedule, r)?.final_wealth();
    let ewp = wealth_of_schedule(&crp_schedule(&Weights::uniform(r.n_assets()), r.len()), r)?;
    Ok(own - ewp.final_wealth())
}

/// Return period k is traded with the weights computed from market weights
/// at the start of the period (price row k).
pub fn dwp_schedule(mw: &MarketWeights, periods: usize, p: f64) -> Result<WeightSchedule> {
    if mw.len() < periods {
        return Err(Error::Dimension(format!(
            "{} market weight rows for {periods} periods",
            mw.len()
        )));
    }
    let rows = mw.rows[..periods]
        .iter()
        .map(|row| dwp_weights(row, p))
        .collect::<Result<Vec<_>>>()?;
    WeightSchedule::new(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Sharpe,
    ExcessReturn,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRow {
    pub p: f64,
    pub sharpe: Option<f64>,
    pub excess_return: f64,
    pub final_wealth: f64,
}

impl GridRow {
    fn score(&self, objective: Objective) -> Option<f64> {
        match objective {
            Objective::Sharpe => self.sharpe,
            Objective::ExcessReturn => Some(self.excess_return),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PSearch {
    pub best_p: f64,
    pub objective: Objective,
    pub best_value: f64,
    pub grid: Vec<GridRow>,
}

/// Grid p_k = −1 + k·step for k = 0..⌊2/step⌋, with 1 appended when the
/// step does not land on it.
pub fn p_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::InvalidInput(format!("grid step must lie in (0, 1], got {step}")));
    }
    let count = (2.0 / step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=count).map(|k| (-1.0 + k as f64 * step).min(1.0)).collect();
    if (grid[count] - 1.0).abs() > 1e-9 {
        grid.push(1.0);
    } else {
        grid[count] = 1.0;
    }
    Ok(grid)
}

/// Evaluates every grid point and returns the argmax (smallest p on ties).
pub fn optimize_p(
    mw: &MarketWeights,
    r: &ReturnFrame,
    objective: Objective,
    grid_step: f64,
) -> Result<PSearch> {
    let grid_points = p_grid(grid_step)?;
    let ewp = wealth_of_schedule(&crp_schedule(&Weights::uniform(r.n_assets()), r.len()), r)?
        .final_wealth();
    let mut grid = Vec::with_capacity(grid_points.len());
    for p in grid_points {
        let schedule = dwp_schedule(mw, r.len(), p)?;
        let path = wealth_of_schedule(&schedule, r)?;
        let period_returns: Vec<f64> = path.wealth.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
        grid.push(GridRow {
            p,
            sharpe: annualized_sharpe(&period_returns),
            excess_return: path.final_wealth() - ewp,
            final_wealth: path.final_wealth(),
        });
    }
    let mut best: Option<(f64, f64)> = None;
    for row in &grid {
        if let Some(v) = row.score(objective) {
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((row.p, v));
            }
        }
    }
    let (best_p, best_value) = best.ok_or_else(|| {
        Error::Degenerate("objective undefined at every grid point".into())
    })?;
    Ok(PSearch {
        best_p,
        objective,
        best_value,
        grid,
    })
}

/// CSV with columns `p, sharpe, excess_return, final_wealth`.
pub fn write_grid_csv<W: Write>(out: W, search: &PSearch) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["p", "sharpe", "excess_return", "final_wealth"])?;
    for row in &search.grid {
        w.write_record([
            row.p.to_string(),
            crate::market_data::fmt_opt(row.sharpe),
            row.excess_return.to_string(),
            row.final_wealth.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}
