//! Cross-module workflows: prices through returns, standardization,
//! forecasting and backtesting.

use encvar_core::backtest::{AlignedSeries, BacktestReport, DEFAULT_SARMA_BETA};
use encvar_core::market_data::{
    destandardize, ewma_stats, log_returns, portfolio_return, read_price_csv, standardize, CsvSchema, Weights,
};
use encvar_core::sim::{factor_price_panel, garch11};
use encvar_core::vae::{init_params, train, TrainConfig, VaeArch};
use encvar_core::var_models::{benchmark_forecasts, encoded_var_multi, BenchmarkConfig, ModelKind, VarSeries};

fn quick_benchmarks() -> BenchmarkConfig {
    BenchmarkConfig {
        window: 100,
        fhs_window: 100,
        mc_paths: 2000,
        garch_restarts: 2,
        caviar_restarts: 2,
        caviar_candidates: 100,
        seed: 3,
    }
}

#[test]
fn price_csv_round_trip_preserves_panel() {
    let panel = factor_price_panel(6, 300, 5);
    let mut buf = Vec::new();
    panel.write_csv(&mut buf).unwrap();
    let loaded = read_price_csv(buf.as_slice(), &CsvSchema::default()).unwrap();
    assert!(loaded.dropped.is_empty());
    assert_eq!(loaded.leading_days_dropped, 0);
    assert_eq!(loaded.panel.dates(), panel.dates());
    assert_eq!(loaded.panel.assets(), panel.assets());
    for (a, b) in loaded.panel.prices().as_slice().iter().zip(panel.prices().as_slice()) {
        assert!((a - b).abs() <= 1e-12 * b.abs(), "{a} vs {b}");
    }
}

#[test]
fn standardize_then_destandardize_recovers_returns() {
    let returns = log_returns(&factor_price_panel(5, 500, 8));
    let stats = ewma_stats(&returns, 60, 0.94).unwrap();
    let std = standardize(&returns, &stats).unwrap();
    let back = destandardize(&std, &stats).unwrap();
    let first = std.first_day();
    assert_eq!(back.n_days(), returns.n_days() - first);
    for k in 0..back.n_days() {
        for (a, b) in back.returns().row(k).iter().zip(returns.returns().row(first + k)) {
            assert!((a - b).abs() < 1e-12, "day {}: {a} vs {b}", first + k);
        }
    }
}

#[test]
fn benchmarks_feed_a_consistent_backtest_report() {
    let r = garch11(1e-6, 0.08, 0.9, 1600, 500, 21);
    let (fit_end, start) = (1000, 1100);
    let alphas = [0.05, 0.01];
    let dates = encvar_core::sim::business_days(chrono::NaiveDate::from_ymd_opt(2010, 1, 4).unwrap(), r.len());
    let kinds: Vec<ModelKind> = ModelKind::ALL.into_iter().filter(|&k| k != ModelKind::Encoded).collect();
    let forecasts: Vec<Vec<Vec<f64>>> = kinds
        .iter()
        .map(|&k| benchmark_forecasts(k, &r, fit_end, start, &alphas, &quick_benchmarks()).unwrap())
        .collect();

    for (i, &alpha) in alphas.iter().enumerate() {
        let series: Vec<(String, AlignedSeries)> = kinds
            .iter()
            .zip(&forecasts)
            .map(|(k, f)| {
                assert_eq!(f[i].len(), r.len() - start, "{k}");
                assert!(f[i].iter().all(|v| v.is_finite() && *v < 0.0), "{k} at {alpha}");
                let vs = VarSeries::new(k.tag(), alpha, dates[start..].to_vec(), f[i].clone(), r[start..].to_vec())
                    .unwrap();
                (k.tag().to_string(), AlignedSeries::try_from(&vs).unwrap())
            })
            .collect();
        let report = BacktestReport::score(&series, DEFAULT_SARMA_BETA).unwrap();
        assert_eq!(report.models.len(), kinds.len());
        let total: f64 = report.models.iter().map(|m| m.pm_ratio).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let mut ranks: Vec<usize> = report.models.iter().map(|m| m.pm_rank).collect();
        ranks.sort();
        assert_eq!(ranks, (1..=kinds.len()).collect::<Vec<_>>());
    }
}

#[test]
fn encoded_forecasts_are_finite_and_ordered_in_alpha() {
    let returns = log_returns(&factor_price_panel(6, 700, 13));
    let stats = ewma_stats(&returns, 100, 0.94).unwrap();
    let std = standardize(&returns, &stats).unwrap();
    let rows = std.days(0, 400).values().clone();
    let init = init_params(&VaeArch::mirrored(6, &[12], 3).unwrap(), 1).unwrap();
    let cfg = TrainConfig {
        epochs: 20,
        ..TrainConfig::default()
    };
    let (params, history) = train(&init, &rows, &cfg).unwrap();
    assert!(history.epochs.last().unwrap().train_loss < history.epochs[0].train_loss);

    let weights = Weights::equal(6);
    let days: Vec<usize> = (600..returns.n_days()).collect();
    let var = encoded_var_multi(&params, &stats, &weights, &days, &[0.05, 0.01], 2000, 4).unwrap();
    let realized = portfolio_return(&returns, &weights).unwrap();
    assert_eq!(var[0].len(), days.len());
    for (j, &d) in days.iter().enumerate() {
        assert!(var[0][j].is_finite() && var[1][j].is_finite());
        assert!(var[1][j] <= var[0][j], "day {d}");
        assert!(realized[d].is_finite());
    }
}
