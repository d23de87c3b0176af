//! Portfolio analytics: moment estimators, mean-variance optimization,
//! universal portfolios, diversity-weighted portfolios, VaR/ES with
//! bootstrap intervals, and factor-regression plus ARMA-GARCH forecasting.

pub mod backtest;
pub mod error;
pub mod forecasting;
pub mod linalg;
pub mod market_data;
pub mod moments;
pub mod optim;
pub mod optimizer;
pub mod risk;
pub mod rng;
pub mod spt;
pub mod stats;
pub mod synthetic;
pub mod universal;

pub use error::{Error, Result};
