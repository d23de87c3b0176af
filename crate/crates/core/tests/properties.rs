mod common;

use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::Rng as _;

use portfolio_analytics::backtest::{run_backtest, BacktestConfig, RiskFreeSource};
use portfolio_analytics::forecasting::{self, Selection};
use portfolio_analytics::market_data::{
    self, placeholder_dates, FactorKind, FactorPanel, PriceFrame, ReturnFrame, ReturnKind,
};
use portfolio_analytics::moments::{self, EstimatorOptions, MomentEstimate, ModelTag};
use portfolio_analytics::optimizer::{self, Weights};
use portfolio_analytics::risk::{self, RiskMethod};
use portfolio_analytics::rng;
use portfolio_analytics::spt;
use portfolio_analytics::synthetic::{self, GbmSpec};
use portfolio_analytics::universal::{self, WacrpWeighting, WeightSchedule};

use common::*;

fn random_rows(seed: u64, t: usize, n: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    let mut g = rng::stream(seed);
    (0..t).map(|_| (0..n).map(|_| g.random_range(lo..hi)).collect()).collect()
}

fn price_frame(rows: &[Vec<f64>]) -> PriceFrame {
    let n = rows[0].len();
    let m = DMatrix::from_fn(rows.len(), n, |t, j| rows[t][j]);
    let names = (0..n).map(|j| format!("p{j}")).collect();
    PriceFrame::new(placeholder_dates(rows.len()), names, m).unwrap()
}

fn prices_from_returns(rows: &[Vec<f64>]) -> PriceFrame {
    let mut p = vec![vec![10.0; rows[0].len()]];
    for row in rows {
        let last = p.last().unwrap().clone();
        p.push(last.iter().zip(row).map(|(a, x)| a * (1.0 + x)).collect());
    }
    price_frame(&p)
}

fn factor_panel(seed: u64, t: usize) -> FactorPanel {
    let mut g = rng::stream(seed);
    let mut col = |lo: f64, hi: f64| -> Vec<f64> { (0..t).map(|_| g.random_range(lo..hi)).collect() };
    let market = col(-0.03, 0.03);
    let rf = col(0.0, 0.0002);
    let smb = col(-0.01, 0.01);
    let hml = col(-0.01, 0.01);
    FactorPanel::new(
        placeholder_dates(t),
        vec![FactorKind::MarketReturn, FactorKind::RiskFree, FactorKind::Smb, FactorKind::Hml],
        vec![market, rf, smb, hml],
    )
    .unwrap()
}

fn min_eig_ok(s: &DMatrix<f64>) -> bool {
    let e = SymmetricEigen::new(s.clone()).eigenvalues;
    e.min() >= -1e-10 * e.max().max(0.0)
}

fn prefix_equal(a: &WeightSchedule, b: &WeightSchedule, k: usize) -> bool {
    (0..=k).all(|t| a.rows()[t].as_slice() == b.rows()[t].as_slice())
}

fn mutate_from(rows: &[Vec<f64>], k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut g = rng::stream(seed ^ 0x5eed);
    rows.iter()
        .enumerate()
        .map(|(t, r)| if t < k { r.clone() } else { r.iter().map(|_| g.random_range(-0.3..0.4)).collect() })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // market data

    #[test]
    fn simple_returns_reconstruct_prices(rows in prop::collection::vec(prop::collection::vec(0.5f64..200.0, 3), 2..40)) {
        let pf = price_frame(&rows);
        let r = market_data::compute_returns(&pf, ReturnKind::Simple);
        for j in 0..3 {
            let mut p = rows[0][j];
            for t in 0..r.len() {
                p *= 1.0 + r.returns()[(t, j)];
                prop_assert!((p - rows[t + 1][j]).abs() <= 1e-12 * rows[t + 1][j]);
            }
        }
    }

    #[test]
    fn log_and_simple_agree_to_first_order(a in 1.0f64..100.0, ratio in 0.51f64..1.49) {
        let pf = price_frame(&[vec![a], vec![a * ratio]]);
        let s = market_data::compute_returns(&pf, ReturnKind::Simple).returns()[(0, 0)];
        let l = market_data::compute_returns(&pf, ReturnKind::Log).returns()[(0, 0)];
        prop_assume!(s.abs() < 0.5);
        let gap = (l - s).abs();
        prop_assert!(gap <= s * s / (2.0 * (1.0 - s.abs())) + 1e-15);
        // The tighter form s²/2·(1+|s|) stops holding below s ≈ −0.4318.
        if s > -0.43 {
            prop_assert!(gap <= s * s / 2.0 * (1.0 + s.abs()) + 1e-15);
        }
    }

    #[test]
    fn correlation_matrix_is_valid(seed in any::<u64>(), n in 2usize..6) {
        let r = frame(&random_rows(seed, 30, n, -0.05, 0.05));
        let stats = market_data::summary_stats(&r).unwrap();
        for i in 0..n {
            prop_assert_eq!(stats.correlation[i][i], Some(1.0));
            for j in 0..n {
                let c = stats.correlation[i][j].unwrap();
                prop_assert!((-1.0..=1.0).contains(&c));
                prop_assert_eq!(stats.correlation[i][j], stats.correlation[j][i]);
            }
        }
    }

    #[test]
    fn price_csv_round_trip(rows in prop::collection::vec(prop::collection::vec(0.01f64..1e4, 2), 2..20)) {
        let pf = price_frame(&rows);
        let mut buf = Vec::new();
        pf.write_csv(&mut buf).unwrap();
        let back = market_data::read_prices(buf.as_slice(), "date").unwrap();
        prop_assert_eq!(back.prices(), pf.prices());
        prop_assert_eq!(back.assets(), pf.assets());
    }

    // synthetic market

    #[test]
    fn simulated_prices_positive_and_seeded(seed in any::<u64>(), vol in 0.01f64..2.0, drift in -1.0f64..1.0) {
        let spec = GbmSpec {
            growth_rates: vec![drift, -drift],
            vol_matrix: DMatrix::from_row_slice(2, 2, &[vol, 0.1, 0.0, vol]),
            x0: vec![1.0, 50.0],
            steps: 200,
            seed,
            assets: Vec::new(),
        };
        let a = synthetic::simulate(&spec, 1.0 / 252.0).unwrap();
        prop_assert!(a.prices().iter().all(|p| *p > 0.0));
        prop_assert_eq!(&a, &synthetic::simulate(&spec, 1.0 / 252.0).unwrap());
        let other = GbmSpec { seed: seed.wrapping_add(1), ..spec };
        let b = synthetic::simulate(&other, 1.0 / 252.0).unwrap();
        prop_assert_ne!(a.prices(), b.prices());
    }

    // moment estimators

    #[test]
    fn every_estimator_is_symmetric_psd(seed in any::<u64>(), n in 2usize..7) {
        let t = 40;
        let r = frame(&random_rows(seed, t, n, -0.05, 0.05));
        let f = factor_panel(seed.wrapping_add(7), t);
        for model in ModelTag::ALL {
            for exclude in [false, true] {
                let m = moments::estimate(model, &r, &f, EstimatorOptions { exclude_residual_diag: exclude }).unwrap();
                prop_assert!(min_eig_ok(&m.sigma));
                prop_assert_eq!(&m.sigma, &m.sigma.transpose());
            }
        }
    }

    #[test]
    fn ccm_with_two_assets_is_sample(seed in any::<u64>()) {
        let r = frame(&random_rows(seed, 25, 2, -0.05, 0.05));
        let ccm = moments::constant_correlation_moments(&r).unwrap();
        let mm = moments::sample_moments(&r).unwrap();
        prop_assert!(frobenius_rel(&ccm.sigma, &mm.sigma) <= 1e-14);
    }

    #[test]
    fn factor_model_mu_is_reparameterization_invariant(seed in any::<u64>(), c in -0.05f64..0.05) {
        let t = 50;
        let r = frame(&random_rows(seed, t, 3, -0.05, 0.05));
        let f = factor_panel(seed.wrapping_add(1), t);
        let market = f.get(FactorKind::MarketReturn).unwrap().to_vec();
        let shifted: Vec<f64> = market.iter().map(|m| m + c).collect();
        let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
        let a = moments::single_index_moments(&moments::single_index_fit(&r, &market).unwrap(), mean(&market)).unwrap();
        let b = moments::single_index_moments(&moments::single_index_fit(&r, &shifted).unwrap(), mean(&shifted)).unwrap();
        for i in 0..3 {
            prop_assert!((a.mu[i] - b.mu[i]).abs() <= 1e-12);
        }
        let cols: Vec<Vec<f64>> = [FactorKind::MarketReturn, FactorKind::RiskFree, FactorKind::Smb, FactorKind::Hml]
            .iter()
            .map(|k| {
                let v = f.get(*k).unwrap();
                if *k == FactorKind::Smb { v.iter().map(|x| x + c).collect() } else { v.to_vec() }
            })
            .collect();
        let g = FactorPanel::new(placeholder_dates(t), f.columns().to_vec(), cols).unwrap();
        let (_, ma) = moments::fama_french_moments(&r, &f).unwrap();
        let (_, mb) = moments::fama_french_moments(&r, &g).unwrap();
        for i in 0..3 {
            prop_assert!((ma.mu[i] - mb.mu[i]).abs() <= 1e-12);
        }
    }

    // optimizer

    #[test]
    fn tangent_direction_is_scale_invariant(seed in any::<u64>(), c in 1e-3f64..1e3) {
        let mut g = rng::stream(seed);
        let n = g.random_range(2..7);
        let sigma = random_spd(&mut g, n);
        let mu: Vec<f64> = (0..n).map(|_| g.random_range(-0.1..0.2)).collect();
        let m = MomentEstimate::new(mu.clone(), sigma.clone(), ModelTag::MM).unwrap();
        let ms = MomentEstimate::new(mu, sigma * c, ModelTag::MM).unwrap();
        if let (Ok(a), Ok(b)) = (optimizer::tangent_weights(&m, 0.01), optimizer::tangent_weights(&ms, 0.01)) {
            for i in 0..n {
                prop_assert!((a[i] - b[i]).abs() <= 1e-10 * a[i].abs().max(1.0));
            }
        }
    }

    #[test]
    fn tangent_lies_on_frontier(seed in any::<u64>()) {
        let mut g = rng::stream(seed);
        let n = g.random_range(2..7);
        let sigma = random_spd(&mut g, n);
        let mu: Vec<f64> = (0..n).map(|_| g.random_range(-0.1..0.2)).collect();
        let m = MomentEstimate::new(mu, sigma, ModelTag::MM).unwrap();
        let coef = optimizer::frontier_coefficients(&m).unwrap();
        let rf = coef.min_variance_mean() - g.random_range(0.001..0.1);
        let w = optimizer::tangent_weights(&m, rf).unwrap();
        prop_assert!((w.as_slice().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let s = optimizer::portfolio_stats(&w, &m, rf).unwrap();
        let frontier = coef.variance_at(s.mu_p);
        prop_assert!((s.sigma_p * s.sigma_p - frontier).abs() <= 1e-8 * frontier.max(1.0));
    }

    // universal portfolios

    #[test]
    fn universal_schedules_are_causal(seed in any::<u64>(), k in 0usize..30) {
        let rows = random_rows(seed, 30, 3, -0.1, 0.12);
        let mutated = mutate_from(&rows, k, seed);
        let (a, b) = (frame(&rows), frame(&mutated));
        prop_assert!(prefix_equal(&universal::cover_schedule(&a, 200, seed).unwrap(), &universal::cover_schedule(&b, 200, seed).unwrap(), k));
        prop_assert!(prefix_equal(&universal::scrp_schedule(&a).unwrap(), &universal::scrp_schedule(&b).unwrap(), k));
        for mode in [WacrpWeighting::RealizedWealth, WacrpWeighting::Uniform] {
            prop_assert!(prefix_equal(&universal::wacrp_schedule(&a, mode).unwrap(), &universal::wacrp_schedule(&b, mode).unwrap(), k));
        }
        let dwp = |rows: &[Vec<f64>]| {
            let mw = spt::market_weights_from_prices(&prices_from_returns(rows), None).unwrap();
            spt::dwp_schedule(&mw, rows.len(), -0.3).unwrap()
        };
        prop_assert!(prefix_equal(&dwp(&rows), &dwp(&mutated), k));
    }

    #[test]
    fn cover_wealth_between_worst_asset_and_best_crp(seed in any::<u64>()) {
        let rows = random_rows(seed, 25, 3, -0.08, 0.1);
        let r = frame(&rows);
        let cover = universal::wealth_of_schedule(&universal::cover_schedule(&r, 500, seed).unwrap(), &r).unwrap().final_wealth();
        let best = universal::best_crp(&r).unwrap();
        let best_w = universal::wealth_of_schedule(&universal::crp_schedule(&best, 25), &r).unwrap().final_wealth();
        let worst = (0..3)
            .map(|j| rows.iter().map(|x| 1.0 + x[j]).product::<f64>())
            .fold(f64::INFINITY, f64::min);
        prop_assert!(cover >= worst * (1.0 - 1e-12));
        prop_assert!(cover <= best_w * (1.0 + 1e-9));
    }

    #[test]
    fn best_crp_beats_every_line_search_point(seed in any::<u64>()) {
        let rows = random_rows(seed, 30, 3, -0.1, 0.12);
        let r = frame(&rows);
        let gross: Vec<Vec<f64>> = rows.iter().map(|x| x.iter().map(|v| 1.0 + v).collect()).collect();
        let best = universal::best_crp(&r).unwrap();
        let top = universal::mean_log_wealth(best.as_slice(), &gross);
        let mut g = rng::stream(seed);
        for _ in 0..20 {
            let e: Vec<f64> = (0..3).map(|_| -g.random_range(1e-9f64..1.0).ln()).collect();
            let s: f64 = e.iter().sum();
            let other: Vec<f64> = e.iter().map(|v| v / s).collect();
            for step in 0..=10 {
                let lam = step as f64 / 10.0;
                let mix: Vec<f64> = best.as_slice().iter().zip(&other).map(|(a, b)| (1.0 - lam) * a + lam * b).collect();
                prop_assert!(universal::mean_log_wealth(&mix, &gross) <= top + 1e-10);
            }
        }
    }

    #[test]
    fn unit_weight_schedule_is_buy_and_hold(rows in prop::collection::vec(prop::collection::vec(-0.5f64..0.5, 2), 1..30)) {
        let r = frame(&rows);
        let w = Weights::new(vec![1.0, 0.0]).unwrap();
        let path = universal::wealth_of_schedule(&universal::crp_schedule(&w, rows.len()), &r).unwrap();
        let bh: f64 = rows.iter().map(|x| 1.0 + x[0]).product();
        prop_assert!((path.final_wealth() - bh).abs() <= 1e-12 * bh);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // backtester

    #[test]
    fn backtest_is_causal_and_wealth_recomputes(seed in any::<u64>(), k in 20usize..60, every in 1usize..4) {
        let t = 60;
        let rows = random_rows(seed, t, 3, -0.04, 0.05);
        let mutated = mutate_from(&rows, k, seed);
        let f = factor_panel(seed.wrapping_add(3), t);
        for model in ModelTag::ALL {
            let mut cfg = BacktestConfig::new(model).with_window(15);
            cfg.rebalance_every = every;
            let (Ok(a), Ok(b)) = (run_backtest(&frame(&rows), &f, &cfg), run_backtest(&frame(&mutated), &f, &cfg)) else {
                continue;
            };
            for s in 0..=k.min(t - 1) {
                prop_assert_eq!(a.weights[s].as_slice(), b.weights[s].as_slice());
            }
            let mut wealth = 1.0;
            for (s, w) in a.weights.iter().enumerate() {
                wealth *= 1.0 + w.dot(&rows[s]);
                prop_assert!((wealth - a.wealth[s + 1]).abs() <= 1e-12 * wealth);
            }
        }
    }

    #[test]
    fn full_window_backtest_matches_tangent(seed in any::<u64>()) {
        let t = 41;
        let window = t - 1;
        let r = frame(&random_rows(seed, t, 3, -0.04, 0.06));
        let f = FactorPanel::empty(r.dates().to_vec()).unwrap();
        let mut cfg = BacktestConfig::new(ModelTag::MM).with_window(window);
        cfg.rebalance_every = window;
        cfg.efficient_only = false;
        cfg.max_leverage = None;
        cfg.rf_source = RiskFreeSource::Constant(0.0);
        let expected = optimizer::tangent_weights(&moments::sample_moments(&r.slice(0, window)).unwrap(), 0.0);
        let res = run_backtest(&r, &f, &cfg).unwrap();
        match expected {
            Ok(w) => prop_assert_eq!(res.weights[window].as_slice(), w.as_slice()),
            Err(_) => prop_assert_eq!(res.events.len(), 1),
        }
    }

    // risk

    #[test]
    fn risk_shift_and_homogeneity(seed in any::<u64>(), delta in -0.02f64..0.02, s in 0.5f64..1e6) {
        let mut g = rng::stream(seed);
        let x = t_sample(&mut g, 5.0, 0.0005, 0.01, 200);
        let shifted: Vec<f64> = x.iter().map(|v| v - delta).collect();
        for method in RiskMethod::ALL {
            let Ok(base) = risk::estimate(&x, s, 0.05, method) else { continue };
            let moved = risk::estimate(&shifted, s, 0.05, method).unwrap();
            let tol = 1e-9 * s;
            prop_assert!((moved.var - base.var - s * delta).abs() <= tol, "{method} var");
            prop_assert!((moved.es - base.es - s * delta).abs() <= tol, "{method} es");
            let doubled = risk::estimate(&x, 2.0 * s, 0.05, method).unwrap();
            prop_assert!((doubled.var - 2.0 * base.var).abs() <= 1e-12 * s);
            prop_assert!((doubled.es - 2.0 * base.es).abs() <= 1e-12 * s);
            prop_assert!(base.es >= base.var);
        }
    }

    #[test]
    fn bootstrap_is_bit_reproducible(seed in any::<u64>()) {
        let mut g = rng::stream(seed);
        let x = t_sample(&mut g, 4.0, 0.0, 0.02, 120);
        for method in [RiskMethod::Historical, RiskMethod::Gaussian, RiskMethod::CornishFisher] {
            // Heavy tails can make the Cornish-Fisher point estimate itself
            // inadmissible; the bootstrap then reports the same error.
            if risk::estimate(&x, 1.0, 0.05, method).is_err() {
                prop_assert!(risk::bootstrap_ci(&x, 1.0, 0.05, method, 100, seed).is_err());
                continue;
            }
            let a = risk::bootstrap_ci(&x, 1.0, 0.05, method, 100, seed).unwrap();
            let b = risk::bootstrap_ci(&x, 1.0, 0.05, method, 100, seed).unwrap();
            prop_assert_eq!(a.var_lower.to_bits(), b.var_lower.to_bits());
            prop_assert_eq!(a.es_upper.to_bits(), b.es_upper.to_bits());
            prop_assert!(a.var_lower <= a.var_upper && a.es_lower <= a.es_upper);
        }
    }

    // diversity-weighted portfolios

    #[test]
    fn dwp_sums_to_one_and_is_continuous(mu in prop::collection::vec(0.01f64..1.0, 2..8), p in -0.99f64..0.99) {
        let s: f64 = mu.iter().sum();
        let mu: Vec<f64> = mu.iter().map(|v| v / s).collect();
        let w = spt::dwp_weights(&mu, p).unwrap();
        prop_assert!((w.as_slice().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let h = 1e-6;
        let w2 = spt::dwp_weights(&mu, p + h).unwrap();
        for i in 0..mu.len() {
            prop_assert!((w2[i] - w[i]).abs() <= 1e-4);
        }
    }

    #[test]
    fn dwp_is_permutation_equivariant(mu in prop::collection::vec(0.01f64..1.0, 2..8), p in -1.0f64..1.0, rot in 0usize..8) {
        let s: f64 = mu.iter().sum();
        let mu: Vec<f64> = mu.iter().map(|v| v / s).collect();
        let n = mu.len();
        let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
        let permuted: Vec<f64> = perm.iter().map(|&i| mu[i]).collect();
        let a = spt::dwp_weights(&mu, p).unwrap();
        let b = spt::dwp_weights(&permuted, p).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            prop_assert!((b[k] - a[i]).abs() <= 1e-15);
        }
    }

    #[test]
    fn market_portfolio_is_buy_and_hold(seed in any::<u64>()) {
        let rows = random_rows(seed, 40, 4, -0.05, 0.06);
        let pf = prices_from_returns(&rows);
        let r = market_data::compute_returns(&pf, ReturnKind::Simple);
        let mw = spt::market_weights_from_prices(&pf, None).unwrap();
        let path = universal::wealth_of_schedule(&spt::dwp_schedule(&mw, r.len(), 1.0).unwrap(), &r).unwrap();
        let p = pf.prices();
        let bh = p.row(pf.len() - 1).sum() / p.row(0).sum();
        prop_assert!((path.final_wealth() - bh).abs() <= 1e-10);
    }

    // forecasting

    #[test]
    fn adjusted_r_squared_and_deterministic_selection(seed in any::<u64>()) {
        let t = 120;
        let f = factor_panel(seed, t);
        let mut g = rng::stream(seed.wrapping_add(5));
        let market = f.get(FactorKind::MarketReturn).unwrap();
        let y: Vec<f64> = market.iter().map(|m| 0.8 * m + g.random_range(-0.01..0.01)).collect();
        let cands = [FactorKind::MarketReturn, FactorKind::Smb, FactorKind::Hml];
        for sel in [Selection::PValue(0.05), Selection::Aic] {
            let a = forecasting::fit_factor_regression(&y, &f, &cands, sel).unwrap();
            let b = forecasting::fit_factor_regression(&y, &f, &cands, sel).unwrap();
            prop_assert_eq!(&a.factors, &b.factors);
            if a.factors.is_empty() {
                prop_assert!((a.adjusted_r_squared - a.r_squared).abs() <= 1e-15);
            } else {
                prop_assert!(a.adjusted_r_squared < a.r_squared);
            }
        }
    }

    #[test]
    fn acf_bounded_with_unit_lag_zero(xs in prop::collection::vec(-1.0f64..1.0, 12..80)) {
        prop_assume!(xs.iter().any(|v| (v - xs[0]).abs() > 1e-6));
        let a = forecasting::acf(&xs, 10).unwrap();
        prop_assert_eq!(a[0], 1.0);
        prop_assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn garch_filter_variances_positive(seed in any::<u64>()) {
        let x = garch_path(seed, 600, 2e-6, 0.08, 0.9);
        let fit = forecasting::fit_arma_garch(&x, 1, 1).unwrap();
        prop_assert!(fit.alpha + fit.beta < 1.0);
        prop_assert!(fit.conditional_variance.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn fitted_t_is_finite(seed in any::<u64>()) {
        let mut g = rng::stream(seed);
        let x = t_sample(&mut g, 6.0, 0.0, 0.01, 300);
        let fit = risk::fit_student_t(&x).unwrap();
        prop_assert!(fit.nu > 2.0 && fit.nu <= risk::NU_MAX && fit.scale > 0.0);
    }
}

#[test]
fn returns_frame_rejects_ruinous_rows() {
    let m = DMatrix::from_row_slice(1, 2, &[0.1, -1.0]);
    assert!(ReturnFrame::new(placeholder_dates(1), vec!["a".into(), "b".into()], m, ReturnKind::Simple).is_err());
}
