//! Acceptance suite. Each test prints one `PASS` / `FAIL` line with the
//! measured values before asserting, so
//! `cargo test --test acceptance -- --nocapture --test-threads=1`
//! shows a full scorecard.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use encvar_core::backtest::{
    angelidis_percentile, angelidis_quantile_loss, caporin_losses, linear_loss, lopez_rql, pm_ratio,
    quadratic_loss, sarma_loss, sener_pm, AlignedSeries,
};
use encvar_core::market_data::{ewma_stats, standardize, ReturnPanel, Weights};
use encvar_core::rmt::{correlation_matrix, correlation_spectrum, fit_mp_sigma2, mp_edges};
use encvar_core::sim::{business_days, equicorrelation, gaussian_panel, garch11};
use encvar_core::stats::{derive_seed, quantile, sample_variance};
use encvar_core::vae::{
    elbo_loss, grad, init_params, kl_gaussian, sample_standardized, train, LatentGaussian, TrainConfig,
    VaeArch, VaeParams,
};
use encvar_core::var_models::{
    caviar_fit, caviar_path, encoded_var, garch_fit, garch_var, historical_series, riskmetrics_var, tick_loss,
    variance_covariance_series, CaviarFitOptions, CaviarVariant,
};
use encvar_core::Matrix;

fn verdict(id: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "[criterion {id:>2}] {} {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

// ---------------------------------------------------------------- 1

#[test]
fn c01_kl_matches_monte_carlo() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let draws = 1_000_000;
    let mut worst = 0.0_f64;
    for _ in 0..50 {
        let q = rng.random_range(1..=3);
        let mu: Vec<f64> = (0..q).map(|_| rng.random_range(-2.0..2.0)).collect();
        let sigma: Vec<f64> = (0..q).map(|_| rng.random_range(0.3..2.5)).collect();
        let lat = LatentGaussian::new(mu.clone(), sigma.clone()).unwrap();
        let exact = kl_gaussian(&lat);
        // E_q[log q(z) - log p(z)] with z = mu + sigma e.
        let mut acc = 0.0;
        for _ in 0..draws {
            let mut log_ratio = 0.0;
            for k in 0..q {
                let e = normal(&mut rng);
                let z = mu[k] + sigma[k] * e;
                log_ratio += -sigma[k].ln() - 0.5 * e * e + 0.5 * z * z;
            }
            acc += log_ratio;
        }
        let mc = acc / draws as f64;
        worst = worst.max((mc - exact).abs() / exact);
    }
    let secs = started.elapsed().as_secs_f64();
    verdict(
        1,
        "KL oracle",
        worst < 0.01 && secs < 30.0,
        &format!("max relative error {worst:.2e} over 50 pairs (tol 1e-2), {secs:.1}s"),
    );
}

// ---------------------------------------------------------------- 2

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| normal(rng))
}

#[test]
fn c02_gradient_check() {
    let started = Instant::now();
    let arch = VaeArch::mirrored(4, &[8], 2).unwrap();
    let c = 100.0;
    let h = 1e-5;
    let mut worst = 0.0_f64;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let mut p = init_params(&arch, seed).unwrap();
        let x = random_matrix(&mut rng, 8, 4);
        let eps = random_matrix(&mut rng, 8, 2);
        let analytic = grad(&p, &x, &eps, c).unwrap().0.to_flat();
        let theta = p.to_flat();
        for i in 0..theta.len() {
            let mut t = theta.clone();
            t[i] = theta[i] + h;
            p.set_flat(&t).unwrap();
            let fp = elbo_loss(&p, &x, &eps, c).unwrap().total;
            t[i] = theta[i] - h;
            p.set_flat(&t).unwrap();
            let fm = elbo_loss(&p, &x, &eps, c).unwrap().total;
            let fd = (fp - fm) / (2.0 * h);
            let denom = fd.abs().max(analytic[i].abs()).max(1e-6);
            worst = worst.max((fd - analytic[i]).abs() / denom);
        }
        p.set_flat(&theta).unwrap();
    }
    let secs = started.elapsed().as_secs_f64();
    verdict(
        2,
        "gradient check",
        worst < 1e-4 && secs < 10.0,
        &format!("max relative error {worst:.2e} over 20 seeds, N=4 Q=2 M=8 (tol 1e-4), {secs:.1}s"),
    );
}

// ---------------------------------------------------------------- 3

fn train_vae(data: &Matrix, hidden: &[usize], latent: usize, cfg: &TrainConfig, seed: u64) -> VaeParams {
    let arch = VaeArch::mirrored(data.cols(), hidden, latent).unwrap();
    let init = init_params(&arch, seed).unwrap();
    train(&init, data, cfg).unwrap().0
}

/// Training settings shared by the generative checks.
fn fidelity_train_config() -> TrainConfig {
    TrainConfig {
        epochs: 300,
        batch_size: 64,
        learning_rate: 1e-3,
        seed: 17,
        ..TrainConfig::default()
    }
}

#[test]
fn c03_generative_fidelity() {
    let started = Instant::now();
    let n = 5;
    let rho = 0.6;
    let data = gaussian_panel(4000, &equicorrelation(n, rho), 303);
    let params = train_vae(&data, &[64], 4, &fidelity_train_config(), 304);
    let generated = sample_standardized(&params, 20_000, 305).unwrap();
    let c = correlation_matrix(&generated).unwrap();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                worst = worst.max((c[(i, j)] - rho).abs());
            }
        }
    }
    let top = correlation_spectrum(&generated).unwrap().vector(0);
    let factor = 1.0 / (n as f64).sqrt();
    let overlap: f64 = top.iter().map(|v| v * factor).sum::<f64>().abs();
    let secs = started.elapsed().as_secs_f64();
    verdict(
        3,
        "generative fidelity",
        worst <= 0.1 && overlap > 0.8 && secs < 300.0,
        &format!(
            "max |corr - 0.6| = {worst:.3} (tol 0.1), top-eigenvector overlap {overlap:.3} (> 0.8), {secs:.1}s"
        ),
    );
}

// ---------------------------------------------------------------- 4

#[test]
fn c04_marchenko_pastur_recovery() {
    let started = Instant::now();
    let (t, n) = (4000, 400);
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let noise = Matrix::from_fn(t, n, |_, _| normal(&mut rng));
    let spectrum = correlation_spectrum(&noise).unwrap();
    let fit = fit_mp_sigma2(&spectrum.eigenvalues, t, n).unwrap();
    let (lo, hi) = mp_edges(fit.sigma2, t, n).unwrap();
    let inside = spectrum.eigenvalues.iter().filter(|&&l| l >= lo && l <= hi).count() as f64 / n as f64;

    // One market factor loading on every series.
    let mut planted = Matrix::from_fn(t, n, |_, _| normal(&mut rng));
    for i in 0..t {
        let f = normal(&mut rng);
        planted.row_mut(i).iter_mut().for_each(|v| *v += 0.5 * f);
    }
    let spiked = correlation_spectrum(&planted).unwrap();
    let spike_fit = fit_mp_sigma2(&spiked.eigenvalues, t, n).unwrap();
    let ratio = spiked.eigenvalues[0] / spike_fit.lambda_plus;
    let secs = started.elapsed().as_secs_f64();
    let pass = (fit.sigma2 - 1.0).abs() <= 0.05
        && inside >= 0.99
        && spike_fit.signal_count >= 1
        && spiked.eigenvalues[0] > spike_fit.lambda_plus
        && secs < 60.0;
    verdict(
        4,
        "Marchenko-Pastur recovery",
        pass,
        &format!(
            "noise sigma2 {:.4} (1 +/- 0.05), {:.2}% inside fitted support (>= 99%), planted: {} signal eigenvalue(s), spike {:.1}x lambda_plus, {secs:.1}s",
            fit.sigma2,
            100.0 * inside,
            spike_fit.signal_count,
            ratio
        ),
    );
}

// ---------------------------------------------------------------- 5

/// Five assets with equicorrelated Gaussian shocks scaled by a common
/// GARCH(1, 1) volatility driven by the equal-weight portfolio shock, so the
/// equal-weight portfolio return is exactly GARCH(1, 1).
fn garch_panel(n_days: usize, seed: u64) -> ReturnPanel {
    let n = 5;
    let rho = 0.5;
    let shocks = gaussian_panel(n_days + 500, &equicorrelation(n, rho), seed);
    let scale = ((1.0 + (n as f64 - 1.0) * rho) / n as f64).sqrt();
    let (omega, alpha, beta) = (0.05e-4, 0.10, 0.85);
    let mut s2: f64 = omega / (1.0 - alpha - beta);
    let mut out = Matrix::zeros(n_days, n);
    for t in 0..n_days + 500 {
        let row = shocks.row(t);
        let u = row.iter().sum::<f64>() / n as f64 / scale;
        if t >= 500 {
            for j in 0..n {
                out[(t - 500, j)] = s2.sqrt() * row[j];
            }
        }
        s2 = omega + alpha * s2 * u * u + beta * s2;
    }
    let dates = business_days(chrono::NaiveDate::from_ymd_opt(2000, 1, 3).unwrap(), n_days);
    let assets = (0..n).map(|j| format!("G{j}")).collect();
    ReturnPanel::new(dates, assets, out).unwrap()
}

fn binomial_band(alpha: f64, n: usize) -> (f64, f64) {
    let half = 2.5758293035489 * (alpha * (1.0 - alpha) / n as f64).sqrt();
    (alpha - half, alpha + half)
}

fn violation_rate(r: &[f64], var: &[f64]) -> f64 {
    r.iter().zip(var).filter(|(x, v)| x < v).count() as f64 / r.len() as f64
}

#[test]
fn c05_coverage_calibration() {
    let started = Instant::now();
    let window = 250;
    let start = 10_000;
    let test_days = 5000;
    let panel = garch_panel(start + test_days, 505);
    let weights = Weights::equal(panel.n_assets());
    let r = encvar_core::market_data::portfolio_return(&panel, &weights).unwrap();
    let realized = &r[start..];

    let stats = ewma_stats(&panel, window, 0.94).unwrap();
    let std = standardize(&panel, &stats).unwrap();
    let train_rows = std.days(0, start).values().clone();
    let params = train_vae(&train_rows, &[64], 4, &fidelity_train_config(), 506);
    let fit = garch_fit(&r[..start], 1, 1, 5, 507).unwrap();
    let days: Vec<usize> = (start..r.len()).collect();

    let mut lines = Vec::new();
    let mut all_pass = true;
    for alpha in [0.05, 0.01] {
        let (lo, hi) = binomial_band(alpha, test_days);
        let forecasts: Vec<(&str, Vec<f64>)> = vec![
            ("historical", historical_series(&r, start, window, alpha).unwrap()),
            ("variance_covariance", variance_covariance_series(&r, start, window, alpha).unwrap()),
            ("riskmetrics", riskmetrics_var(&r, start, alpha).unwrap()),
            ("garch", garch_var(&fit.params, &r, fit.sigma2_0, start, alpha).unwrap()),
            (
                "encoded",
                encoded_var(&params, &stats, &weights, &days, alpha, 10_000, derive_seed(508, 0)).unwrap(),
            ),
        ];
        for (name, var) in forecasts {
            let rate = violation_rate(realized, &var);
            let ok = rate >= lo && rate <= hi;
            all_pass &= ok;
            lines.push(format!(
                "{name}@{alpha}: {rate:.4} [{lo:.4}, {hi:.4}] {}",
                if ok { "ok" } else { "OUT" }
            ));
        }
    }
    let secs = started.elapsed().as_secs_f64();
    verdict(
        5,
        "coverage calibration",
        all_pass && secs < 600.0,
        &format!("{}; {secs:.1}s", lines.join("; ")),
    );
}

// ---------------------------------------------------------------- 6

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn c06_garch_recovery() {
    let started = Instant::now();
    let vbar = 1e-4;
    let (omega, alpha, beta) = (0.05 * vbar, 0.10, 0.85);
    let mut omegas = Vec::new();
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    for seed in 0..10u64 {
        let r = garch11(omega, alpha, beta, 20_000, 1000, 600 + seed);
        let fit = garch_fit(&r, 1, 1, 5, 700 + seed).unwrap();
        // omega relative to the unconditional variance, so the tolerance is scale-free.
        omegas.push(fit.params.omega / vbar);
        alphas.push(fit.params.alpha[0]);
        betas.push(fit.params.beta[0]);
    }
    let (mo, ma, mb) = (median(omegas), median(alphas), median(betas));
    let secs = started.elapsed().as_secs_f64();
    let pass = (mo - 0.05).abs() <= 0.05 && (ma - alpha).abs() <= 0.05 && (mb - beta).abs() <= 0.05 && secs < 120.0;
    verdict(
        6,
        "GARCH recovery",
        pass,
        &format!(
            "median omega/vbar {mo:.4} (0.05), alpha {ma:.4} (0.10), beta {mb:.4} (0.85), tol 0.05, {secs:.1}s"
        ),
    );
}

// ---------------------------------------------------------------- 7

#[test]
fn c07_caviar_tick_loss() {
    let started = Instant::now();
    let theta = 0.05;
    let r = garch11(0.05e-4, 0.10, 0.85, 3000, 1000, 707);
    let opts = CaviarFitOptions {
        seed: 708,
        ..CaviarFitOptions::default()
    };
    let fit = caviar_fit(&r, CaviarVariant::Symmetric, theta, &opts).unwrap();
    let path = caviar_path(&fit.params, &r, fit.var0);
    let in_sample = &path[1..r.len()];
    let hit = violation_rate(&r[1..], in_sample);
    let loss = tick_loss(&r[1..], in_sample, theta);
    let q = quantile(&r, theta).unwrap();
    let baseline = tick_loss(&r[1..], &vec![q; r.len() - 1], theta);
    let secs = started.elapsed().as_secs_f64();
    let pass = (hit - theta).abs() <= 0.015 && loss <= baseline && secs < 300.0;
    verdict(
        7,
        "CAViaR tick loss",
        pass,
        &format!(
            "in-sample hit rate {hit:.4} (0.05 +/- 0.015), tick loss {loss:.6e} <= baseline {baseline:.6e}, {secs:.1}s"
        ),
    );
}

// ---------------------------------------------------------------- 8

/// Reference implementation: enumerate every pair of violation days, group
/// them by the cluster start found by walking backwards.
fn sener_brute_force(r: &[f64], v: &[f64], alpha: f64) -> (f64, f64, f64) {
    let n = r.len();
    let viol = |t: usize| r[t] < v[t];
    let cluster_start = |mut t: usize| {
        while t > 0 && viol(t - 1) {
            t -= 1;
        }
        t
    };
    let cluster_end = |mut t: usize| {
        while t + 1 < n && viol(t + 1) {
            t += 1;
        }
        t
    };
    let growth = |s: usize, e: usize| (s..=e).map(|t| 1.0 + (v[t] - r[t])).product::<f64>();
    let starts: Vec<usize> = (0..n).filter(|&t| viol(t) && cluster_start(t) == t).collect();
    let mut phi = 0.0;
    for (a, &sa) in starts.iter().enumerate() {
        for &sb in &starts[a + 1..] {
            let ea = cluster_end(sa);
            let eb = cluster_end(sb);
            phi += (growth(sa, ea) * growth(sb, eb) - 1.0) / (sb - ea) as f64;
        }
    }
    let psi: f64 = (0..n).filter(|&t| r[t] > v[t] && r[t] < 0.0).map(|t| r[t] - v[t]).sum();
    let theta = 1.0 - alpha;
    (phi, psi, ((1.0 - theta) * phi + theta * psi) / n as f64)
}

#[test]
fn c08_sener_oracle() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut worst = 0.0_f64;
    let mut pms = Vec::new();
    for _ in 0..1000 {
        let n = rng.random_range(1..=50);
        let r: Vec<f64> = (0..n).map(|_| 0.02 * normal(&mut rng)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-0.04..0.0)).collect();
        let alpha = if rng.random_bool(0.5) { 0.05 } else { 0.01 };
        let (phi, psi, pm) = sener_brute_force(&r, &v, alpha);
        let got = sener_pm(&AlignedSeries::from_values(r, v, alpha).unwrap());
        worst = worst.max((got.phi - phi).abs()).max((got.psi - psi).abs()).max((got.pm - pm).abs());
        pms.push(got.pm);
    }
    let positive: Vec<f64> = pms.iter().copied().filter(|&p| p > 0.0).take(12).collect();
    let ratio_sum: f64 = pm_ratio(&positive).unwrap().iter().sum();
    let secs = started.elapsed().as_secs_f64();
    verdict(
        8,
        "Sener oracle",
        worst < 1e-12 && (ratio_sum - 1.0).abs() < 1e-12 && secs < 10.0,
        &format!("max abs error {worst:.1e} over 1000 sequences (tol 1e-12), ratio sum {ratio_sum}, {secs:.2}s"),
    );
}

// ---------------------------------------------------------------- 9

#[test]
fn c09_loss_hand_values() {
    let started = Instant::now();
    let one = |r: f64, v: f64| AlignedSeries::from_values(vec![r], vec![v], 0.05).unwrap();
    let covered_percentile = AlignedSeries::from_values(vec![-0.02, -0.02, 0.05], vec![-0.04, -0.02, -0.02], 0.01).unwrap();
    let percentile_case =
        AlignedSeries::from_values(vec![-0.05, -0.02, 0.01, 0.03], vec![-0.03; 4], 0.25).unwrap();
    let no_viol = AlignedSeries::from_values(vec![0.01, -0.01], vec![-0.02, -0.02], 0.05).unwrap();
    let equal = one(0.02, -0.02);
    let cases: Vec<(&str, f64, f64)> = vec![
        ("lopez no violations", lopez_rql(&no_viol), 0.0),
        ("lopez r=-0.05 VaR=-0.03", lopez_rql(&one(-0.05, -0.03)), 1.0004),
        ("lopez r=VaR", lopez_rql(&one(-0.03, -0.03)), 0.0),
        ("linear r=VaR", linear_loss(&one(-0.03, -0.03)), 0.0),
        ("quadratic r=VaR", quadratic_loss(&one(-0.03, -0.03)), 0.0),
        ("linear r=0.01 VaR=-0.03", linear_loss(&one(0.01, -0.03)), 0.04),
        ("quadratic r=0.01 VaR=-0.03", quadratic_loss(&one(0.01, -0.03)), 0.0016),
        ("sarma violation", sarma_loss(&one(-0.05, -0.03), 0.01).unwrap(), 0.0004),
        ("sarma covered beta=0.01", sarma_loss(&one(0.01, -0.03), 0.01).unwrap(), 0.0003),
        ("sarma beta=0 no violations", sarma_loss(&no_viol, 0.0).unwrap(), 0.0),
        ("quantile percentile convention", angelidis_percentile(&percentile_case), -0.0275),
        ("quantile covered VaR=-0.04 P=-0.02", 3.0 * angelidis_quantile_loss(&covered_percentile), 0.0004),
        ("caporin cl1 |r|=|VaR|", caporin_losses(&equal).cl1, 0.0),
        ("caporin cl2 |r|=|VaR|", caporin_losses(&equal).cl2, 0.0),
        ("caporin cl2 r=-0.04 VaR=-0.02", caporin_losses(&one(-0.04, -0.02)).cl2, 0.02),
    ];
    let tol = 1e-12;
    let failures: Vec<String> = cases
        .iter()
        .filter(|(_, got, want)| (got - want).abs() > tol)
        .map(|(name, got, want)| format!("{name}: {got} vs {want}"))
        .collect();
    let worst = cases.iter().map(|(_, g, w)| (g - w).abs()).fold(0.0_f64, f64::max);
    let secs = started.elapsed().as_secs_f64();
    verdict(
        9,
        "loss hand values",
        failures.is_empty() && secs < 1.0,
        &format!(
            "{} cases, max abs deviation {worst:.1e} (tol {tol:.0e}, binary rounding of decimal inputs){}",
            cases.len(),
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    );
}

// ---------------------------------------------------------------- 10

fn files_under(root: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn c10_pipeline_determinism() {
    let started = Instant::now();
    let bin = env!("CARGO_BIN_EXE_encvar");
    let dir = tempfile::tempdir().unwrap();
    let prices = dir.path().join("prices.csv");
    let status = Command::new(bin)
        .args(["simulate", "--assets", "100", "--days", "3000", "--seed", "10", "--out"])
        .arg(&prices)
        .status()
        .unwrap();
    assert!(status.success());
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = Command::new(bin)
            .args(["all", "--seed", "10", "--prices"])
            .arg(&prices)
            .arg("--out")
            .arg(&out)
            .env("RUST_LOG", "warn")
            .status()
            .unwrap();
        assert!(status.success(), "pipeline run {name} failed");
        out
    };
    let a = run("a");
    let b = run("b");
    let files_a = files_under(&a);
    let files_b = files_under(&b);
    let forecasts = files_a.iter().filter(|p| p.starts_with("forecasts")).count();
    let reports = files_a.iter().filter(|p| p.starts_with("backtest")).count();
    let differing: Vec<String> = files_a
        .iter()
        .filter(|p| std::fs::read(a.join(p)).unwrap() != std::fs::read(b.join(p)).unwrap())
        .map(|p| p.display().to_string())
        .collect();
    let secs = started.elapsed().as_secs_f64();
    let pass = files_a == files_b && differing.is_empty() && forecasts == 24 && reports == 4 && secs < 900.0;
    verdict(
        10,
        "pipeline determinism",
        pass,
        &format!(
            "{} files per run ({forecasts} VaR series, {reports} report files), {} differ{}, two 100x3000 runs in {secs:.1}s",
            files_a.len(),
            differing.len(),
            if differing.is_empty() { String::new() } else { format!(": {}", differing.join(", ")) }
        ),
    );
}

#[test]
fn simulated_panel_sanity() {
    let p = garch_panel(20_000, 1);
    let w = Weights::equal(5);
    let r = encvar_core::market_data::portfolio_return(&p, &w).unwrap();
    let v = sample_variance(&r);
    // Portfolio unconditional variance: 1e-4 times the shock variance 0.6.
    assert!((v / 0.6e-4 - 1.0).abs() < 0.1, "{v}");
}
