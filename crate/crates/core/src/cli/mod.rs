//! Command-line front end.

pub mod commands;
pub mod config;
pub mod manifest;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use portfolio_analytics::moments::ModelTag;

#[derive(Debug, Parser)]
#[command(name = "portfolio-analytics", version, about = "Portfolio analytics batch runner")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Load prices (and factors), write cleaned panels and summary statistics.
    Ingest,
    /// Write the seeded synthetic price and factor panels.
    Simulate,
    /// Full-sample moment estimates for each model.
    Estimate,
    /// Efficient frontier, minimum-variance and tangent portfolios per model.
    Frontier,
    /// Rolling tangent-portfolio backtest per model and comparison table.
    Backtest,
    /// Uniform, best, Cover, successive and wealth-averaged CRPs.
    Universal,
    /// VaR and ES with bootstrap intervals for each model's backtest returns.
    Risk,
    /// Diversity-weighted portfolio grid search over p.
    Fgp,
    /// Factor regression plus ARMA-GARCH forecasts of backtest returns.
    Forecast,
    /// Comparison table rebuilt from backtest outputs.
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Simulate => "simulate",
            Command::Estimate => "estimate",
            Command::Frontier => "frontier",
            Command::Backtest => "backtest",
            Command::Universal => "universal",
            Command::Risk => "risk",
            Command::Fgp => "fgp",
            Command::Forecast => "forecast",
            Command::Report => "report",
        }
    }

    /// Models this command estimates with factors, which user-supplied
    /// prices must then come with.
    fn factor_models(self) -> &'static [ModelTag] {
        match self {
            Command::Estimate | Command::Frontier | Command::Backtest | Command::Risk | Command::Forecast => {
                &[ModelTag::SIM, ModelTag::MFM]
            }
            _ => &[],
        }
    }
}

/// Values are kept as strings so that validation can report every bad
/// value at once.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Price CSV (date column plus one column per asset); bundled fixture when omitted.
    #[arg(long, global = true)]
    pub prices: Option<String>,
    /// Factor CSV (date column plus named factor columns).
    #[arg(long, global = true)]
    pub factors: Option<String>,
    /// Comma-separated models: MM, CCM, SIM, MFM.
    #[arg(long, global = true)]
    pub models: Option<String>,
    /// Estimation window in periods.
    #[arg(long, global = true)]
    pub window: Option<String>,
    /// Tail level for VaR/ES.
    #[arg(long, global = true)]
    pub alpha: Option<String>,
    /// Bootstrap replicates.
    #[arg(long = "bootstrap-b", global = true)]
    pub bootstrap_b: Option<String>,
    /// Root seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<String>,
    /// Flat key = value configuration file; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Grid step for the diversity-weighted p search.
    #[arg(long = "grid-step", global = true)]
    pub grid_step: Option<String>,
    /// Position value S for VaR/ES.
    #[arg(long, global = true)]
    pub position: Option<String>,
    /// Simulated periods.
    #[arg(long, global = true)]
    pub steps: Option<String>,
    /// Monte Carlo draws for Cover's portfolio.
    #[arg(long = "cover-samples", global = true)]
    pub cover_samples: Option<String>,
    /// AR order of the mean model.
    #[arg(long = "arma-p", global = true)]
    pub arma_p: Option<String>,
    /// MA order of the mean model.
    #[arg(long = "arma-q", global = true)]
    pub arma_q: Option<String>,
    /// Last training date (YYYY-MM-DD) for forecasts; 7/8 split when omitted.
    #[arg(long = "train-end", global = true)]
    pub train_end: Option<String>,
    /// Factor selection: pvalue or aic.
    #[arg(long, global = true)]
    pub selection: Option<String>,
    /// Significance level for p-value factor selection.
    #[arg(long = "selection-alpha", global = true)]
    pub selection_alpha: Option<String>,
    /// Name of the date column in the input CSVs.
    #[arg(long = "date-column", global = true)]
    pub date_column: Option<String>,
}

impl Flags {
    fn as_map(&self) -> BTreeMap<&'static str, String> {
        let pairs: [(&'static str, &Option<String>); 17] = [
            ("prices", &self.prices),
            ("factors", &self.factors),
            ("models", &self.models),
            ("window", &self.window),
            ("alpha", &self.alpha),
            ("bootstrap_b", &self.bootstrap_b),
            ("seed", &self.seed),
            ("out", &self.out),
            ("grid_step", &self.grid_step),
            ("position", &self.position),
            ("steps", &self.steps),
            ("cover_samples", &self.cover_samples),
            ("arma_p", &self.arma_p),
            ("arma_q", &self.arma_q),
            ("train_end", &self.train_end),
            ("selection", &self.selection),
            ("selection_alpha", &self.selection_alpha),
        ];
        let mut map: BTreeMap<&'static str, String> = pairs
            .into_iter()
            .filter_map(|(k, v)| v.clone().map(|v| (k, v)))
            .collect();
        if let Some(d) = &self.date_column {
            map.insert("date_column", d.clone());
        }
        map
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let started = Instant::now();
    let cfg = config::resolve(cli.flags.config.as_deref(), &cli.flags.as_map(), cli.command.factor_models())?;
    config::prepare_out(&cfg)?;
    let outputs = match cli.command {
        Command::Ingest => commands::ingest(&cfg),
        Command::Simulate => commands::simulate(&cfg),
        Command::Estimate => commands::estimate(&cfg),
        Command::Frontier => commands::frontier(&cfg),
        Command::Backtest => commands::backtest(&cfg),
        Command::Universal => commands::universal(&cfg),
        Command::Risk => commands::risk(&cfg),
        Command::Fgp => commands::fgp(&cfg),
        Command::Forecast => commands::forecast(&cfg),
        Command::Report => commands::report(&cfg),
    }?;
    // Timings stay off the artifacts so reruns are byte-identical.
    eprintln!(
        "{}: wrote {} files to {} in {:.2?}",
        cli.command.name(),
        outputs.len() + 1,
        cfg.out.display(),
        started.elapsed()
    );
    Ok(())
}
