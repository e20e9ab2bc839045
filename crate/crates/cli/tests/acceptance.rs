//! Acceptance suite. Each criterion prints one `[PASS]`/`[FAIL]` line.
//!
//! Run with `cargo test --release -p supermarket-cli --test acceptance -- --nocapture`.

use std::path::Path;
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use supermarket_cli::config::mm_spec;
use supermarket_cli::{run_cli, Experiment, ExperimentConfig, SamplingMode};
use supermarket_core::model::{example_map, random_params};
use supermarket_core::ode::default_truncation;
use supermarket_core::{
    build_params, check_upper_bound, closed_form, decay_rate, expected_sojourn, integrate_with,
    kurtz_convergence, poisson_ph_first, poisson_ph_second, residuals, simulate_replications,
    FixedPoint, FractionVector, IntegrateOptions, LyapunovSeries, MapProcess, ModelParams,
    PhDistribution, Sampling, SimConfig, Trajectory,
};

// Criteria run one at a time so runtime budgets are not skewed by contention.
static SERIAL: Mutex<()> = Mutex::new(());

const SIM_SEED: u64 = 2024;

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(id: u32, ok: bool, detail: String) {
    println!(
        "[{}] criterion {id}: {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {id} failed: {detail}");
}

fn mm(lambda: f64, mu: f64, d: u32) -> ModelParams {
    build_params(
        MapProcess::poisson(lambda).unwrap(),
        PhDistribution::exponential(mu).unwrap(),
        d,
    )
    .unwrap()
}

fn within(elapsed: Duration, budget_s: f64) -> bool {
    elapsed.as_secs_f64() < budget_s
}

#[test]
fn criterion_01_mm_reduction_exact() {
    let _g = serial();
    let start = Instant::now();
    let mut worst = 0.0f64;
    for rho in [0.3, 0.5, 0.9] {
        let fp = closed_form(&mm(rho, 1.0, 2), Some(10)).unwrap();
        for k in 0..=10usize {
            let expect_log = ((1u64 << k) - 1) as f64 * f64::ln(rho);
            let got_log = fp.log_level_sum(k);
            // |ln x - ln y| is the relative error to first order.
            let mut rel = (got_log - expect_log).abs();
            let direct = rho.powi((1i32 << k) - 1);
            if direct > f64::MIN_POSITIVE {
                rel = rel.max((fp.level_sum(k) - direct).abs() / direct);
            }
            worst = worst.max(rel);
        }
    }
    let elapsed = start.elapsed();
    verdict(
        1,
        worst <= 1e-12 && within(elapsed, 1.0),
        format!(
            "max relative error {worst:.3e} (tol 1e-12), {:.3}s (< 1s)",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_02_annihilation() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let m_a = rng.random_range(1..=4);
        let m_b = rng.random_range(1..=4);
        let d = rng.random_range(1..=4);
        let rho = rng.random_range(0.1..0.95);
        let params = random_params(&mut rng, m_a, m_b, rho, d).unwrap();
        let fp = closed_form(&params, None).unwrap();
        let r = residuals(&fp, &params, fp.k_max()).unwrap();
        worst = (
            worst.0.max(r.gamma_alpha_w),
            worst.1.max(r.gamma_alpha_r),
            worst.2.max(r.pi0_annihilation),
        );
    }
    let elapsed = start.elapsed();
    let max = worst.0.max(worst.1).max(worst.2);
    verdict(
        2,
        max <= 1e-11 && within(elapsed, 5.0),
        format!(
            "20 instances: |(γ⊗α)W| {:.2e}, |(γ⊗α)R| {:.2e}, |π0^d(C+D)| {:.2e} (tol 1e-11), {:.3}s (< 5s)",
            worst.0,
            worst.1,
            worst.2,
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_03_dual_solutions() {
    let _g = serial();
    let start = Instant::now();
    let mut ok = true;
    let mut lines = Vec::new();
    for m in [2usize, 3] {
        for d in [2u32, 3] {
            let params = build_params(
                MapProcess::poisson(0.5).unwrap(),
                PhDistribution::erlang(m, m as f64).unwrap(),
                d,
            )
            .unwrap();
            let first = poisson_ph_first(&params, Some(9)).unwrap();
            let second = poisson_ph_second(&params, Some(9)).unwrap();
            let r1 = residuals(&first, &params, 8).unwrap();
            let r2 = residuals(&second, &params, 8).unwrap();
            let mut ratio_err = 0.0f64;
            for k in 1..=8usize {
                let expect = ((d as f64).powi(k as i32 - 1) - 1.0) * (m as f64).ln();
                let got = first.log_level_sum(k) - second.log_level_sum(k);
                ratio_err = ratio_err.max((got - expect).abs());
            }
            let pass =
                r1.max_stationary() <= 1e-10 && r2.max_stationary() <= 1e-10 && ratio_err <= 1e-10;
            ok &= pass;
            lines.push(format!(
                "m={m} d={d}: first {:.2e} (π1·T0 balance {:.2e}, aggregate {:.2e}), second {:.2e} (aggregate {:.2e}), log-ratio err {:.2e}",
                r1.max_stationary(),
                r1.level0_balance,
                r1.max_aggregate(),
                r2.max_stationary(),
                r2.max_aggregate(),
                ratio_err
            ));
        }
    }
    let elapsed = start.elapsed();
    ok &= within(elapsed, 5.0);
    verdict(
        3,
        ok,
        format!(
            "residual tol 1e-10, {:.3}s (< 5s); {}",
            elapsed.as_secs_f64(),
            lines.join("; ")
        ),
    );
}

struct OdeRun {
    params: ModelParams,
    fp: FixedPoint,
    traj: Trajectory,
    elapsed: Duration,
}

fn ode_run() -> &'static OdeRun {
    static RUN: OnceLock<OdeRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let start = Instant::now();
        let params = mm(0.5, 1.0, 2);
        let fp = closed_form(&params, None).unwrap();
        let k = default_truncation(&fp);
        let opts = IntegrateOptions {
            t_end: 50.0,
            step: 1e-3,
            snapshot_every: 10,
            ..Default::default()
        };
        let traj =
            integrate_with(&FractionVector::empty(&params, k).unwrap(), &params, &opts).unwrap();
        OdeRun {
            params,
            fp,
            traj,
            elapsed: start.elapsed(),
        }
    })
}

#[test]
fn criterion_04_ode_converges() {
    let _g = serial();
    let run = ode_run();
    let last = run.traj.last();
    let rho = run.params.rho();
    let err = (0..=5usize)
        .map(|k| (last.level(k).sum() - rho.powi((1i32 << k) - 1)).abs())
        .fold(0.0, f64::max);
    verdict(
        4,
        err <= 1e-6 && within(run.elapsed, 10.0),
        format!(
            "K={}, max_k<=5 |S_k(50) - ρ^(2^k-1)| = {err:.3e} (tol 1e-6), {:.3}s (< 10s)",
            last.k_max(),
            run.elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_05_upper_bound() {
    let _g = serial();
    let run = ode_run();
    let exceed = check_upper_bound(&run.traj, &run.fp);
    verdict(
        5,
        exceed <= 1e-8,
        format!("max exceedance {exceed:.3e} (tol 1e-8)"),
    );
}

#[test]
fn criterion_06_lyapunov_decay() {
    let _g = serial();
    let run = ode_run();
    let start = Instant::now();
    let series = LyapunovSeries::unit(&run.traj, &run.fp);
    let rate = decay_rate(&run.traj, &run.fp);
    let elapsed = start.elapsed();
    let after: Vec<(f64, f64)> = series
        .times
        .iter()
        .zip(&series.phi_values)
        .filter(|(t, _)| **t >= 1.0)
        .map(|(&t, &p)| (t, p))
        .collect();
    let violation = after.windows(2).find(|w| w[1].1 >= w[0].1);
    let ok_rate = matches!(rate, Ok(r) if r > 0.0);
    let ok = violation.is_none() && ok_rate && within(elapsed, 1.0);
    let detail = match violation {
        Some(w) => format!(
            "Φ not decreasing at t={:.2}: {:.3e} -> {:.3e}",
            w[1].0, w[0].1, w[1].1
        ),
        None => format!(
            "Φ strictly decreasing over {} samples after t=1",
            after.len()
        ),
    };
    let slope = match &rate {
        Ok(r) => format!("{:.4}", -r),
        Err(e) => e.to_string(),
    };
    verdict(
        6,
        ok,
        format!(
            "{detail}; log Φ slope {slope}; {:.3}s (< 1s)",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_07_sojourn_oracle() {
    let _g = serial();
    let start = Instant::now();
    let mut worst = 0.0f64;
    for rho in [0.3, 0.5, 0.9] {
        let mu = 1.0;
        let one = expected_sojourn(&mm(rho * mu, mu, 1), 1e-14).unwrap();
        worst = worst.max((one - 1.0 / (mu - rho * mu)).abs());
        let two = expected_sojourn(&mm(rho * mu, mu, 2), 1e-14).unwrap();
        let oracle: f64 = (0..=6)
            .map(|k| rho.powi((1i32 << (k + 1)) - 2))
            .sum::<f64>()
            / mu;
        worst = worst.max((two - oracle).abs());
    }
    let elapsed = start.elapsed();
    verdict(
        7,
        worst <= 1e-10 && within(elapsed, 1.0),
        format!(
            "max |E[T] - oracle| {worst:.3e} (tol 1e-10), {:.3}s (< 1s)",
            elapsed.as_secs_f64()
        ),
    );
}

fn sim_config(seed: u64) -> SimConfig {
    SimConfig {
        n: 500,
        horizon: 1200.0,
        warmup: 200.0,
        seed,
        sampling: Sampling::WithReplacement,
    }
}

#[test]
fn criterion_08_simulation_matches_theory() {
    let _g = serial();
    let start = Instant::now();
    let rho: f64 = 0.5;
    let two = simulate_replications(&mm(0.5, 1.0, 2), &sim_config(SIM_SEED), 10).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for k in 1..=3usize {
        let expect = rho.powi((1i32 << k) - 1);
        let (m, se) = (two.tail_mean[k], two.tail_stderr[k]);
        let z = (m - expect) / se;
        ok &= z.abs() <= 3.0;
        parts.push(format!("k={k}: {m:.5} vs {expect:.5} (z={z:+.2})"));
    }
    let one = simulate_replications(&mm(0.5, 1.0, 1), &sim_config(SIM_SEED), 10).unwrap();
    let (m, se) = (one.sojourn_mean.unwrap(), one.sojourn_stderr.unwrap());
    let z = (m - 2.0) / se;
    ok &= z.abs() <= 3.0;
    parts.push(format!("d=1 sojourn {m:.4} vs 2 (z={z:+.2})"));
    let elapsed = start.elapsed();
    ok &= within(elapsed, 120.0);
    verdict(
        8,
        ok,
        format!(
            "seed {SIM_SEED}, |z| <= 3: {}; {:.1}s (< 120s)",
            parts.join(", "),
            elapsed.as_secs_f64()
        ),
    );
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let rank = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        for (pos, &i) in idx.iter().enumerate() {
            r[i] = pos as f64;
        }
        r
    };
    let (rx, ry) = (rank(x), rank(y));
    let n = x.len() as f64;
    let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

#[test]
fn criterion_09_kurtz_trend() {
    let _g = serial();
    let start = Instant::now();
    let params =
        build_params(example_map(), PhDistribution::exponential(10.0).unwrap(), 2).unwrap();
    let rows = kurtz_convergence(
        &params,
        &[50, 100, 200, 400],
        10.0,
        5,
        SIM_SEED,
        Sampling::WithReplacement,
    )
    .unwrap();
    let mut ok = true;
    for w in rows.windows(2) {
        let slack = (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
        ok &= w[1].mean_distance - w[0].mean_distance <= slack;
    }
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let ds: Vec<f64> = rows.iter().map(|r| r.mean_distance).collect();
    let elapsed = start.elapsed();
    ok &= within(elapsed, 300.0);
    let table: Vec<String> = rows
        .iter()
        .map(|r| format!("n={} {:.4}±{:.4}", r.n, r.mean_distance, r.stderr))
        .collect();
    verdict(
        9,
        ok,
        format!(
            "{}; spearman {:+.2}; {:.1}s (< 300s)",
            table.join(", "),
            spearman(&ns, &ds),
            elapsed.as_secs_f64()
        ),
    );
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn criterion_10_sojourn_curve() {
    let _g = serial();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("curve.csv");
    let start = Instant::now();
    let code = run_cli([
        "supermarket",
        "sojourn-curve",
        "--paper-defaults",
        "--out",
        out.to_str().unwrap(),
    ]);
    let elapsed = start.elapsed();
    let rows = read_csv(&out);
    let value = |d: u32, mu: f64| {
        rows.iter()
            .find(|r| r[0] == d.to_string() && r[1].parse::<f64>().unwrap() == mu)
            .and_then(|r| r[2].parse::<f64>().ok())
    };
    let mut ok = code == 0 && rows.len() == 15;
    for mu in [5.0, 10.0, 20.0] {
        for d in 1..5 {
            ok &= matches!((value(d, mu), value(d + 1, mu)), (Some(a), Some(b)) if b < a);
        }
    }
    for d in 1..=5 {
        ok &= matches!((value(d, 5.0), value(d, 10.0), value(d, 20.0)), (Some(a), Some(b), Some(c)) if b < a && c < b);
    }
    let grid: Vec<String> = [5.0, 10.0, 20.0]
        .iter()
        .map(|&mu| {
            let vs: Vec<String> = (1..=5)
                .map(|d| value(d, mu).map_or("-".into(), |v| format!("{v:.4}")))
                .collect();
            format!("μ={mu}: [{}]", vs.join(" "))
        })
        .collect();
    ok &= within(elapsed, 5.0);
    verdict(
        10,
        ok,
        format!(
            "exit {code}; {}; {:.3}s (< 5s)",
            grid.join(", "),
            elapsed.as_secs_f64()
        ),
    );
}

fn run_twice(cfg: &ExperimentConfig, sub: &str, dir: &Path) -> (bool, usize) {
    let config = dir.join(format!("{sub}.json"));
    std::fs::write(&config, serde_json::to_vec(cfg).unwrap()).unwrap();
    let mut outputs = Vec::new();
    for i in 0..2 {
        let out = dir.join(format!("{sub}_{i}.csv"));
        let code = run_cli([
            "supermarket",
            sub,
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "{sub} run {i} exited with {code}");
        let sidecar = std::fs::read(supermarket_cli::sidecar_path(&out)).unwrap();
        outputs.push((std::fs::read(&out).unwrap(), sidecar));
    }
    (outputs[0] == outputs[1], outputs[0].0.len())
}

#[test]
fn criterion_11_determinism() {
    let _g = serial();
    let dir = tempfile::tempdir().unwrap();
    let mut sim = ExperimentConfig::new(Experiment::Simulate);
    sim.model = Some(mm_spec(0.5, 1.0, 2));
    sim.params.n = Some(500);
    sim.params.horizon = Some(1200.0);
    sim.params.warmup = Some(200.0);
    sim.params.reps = Some(10);
    sim.params.seed = Some(SIM_SEED);
    sim.params.sampling = Some(SamplingMode::WithReplacement);
    let mut kurtz = ExperimentConfig::new(Experiment::Kurtz);
    kurtz.apply_example_defaults();
    kurtz.params.n_list = Some(vec![50, 100, 200, 400]);
    kurtz.params.t_end = Some(10.0);
    kurtz.params.reps = Some(5);
    kurtz.params.seed = Some(SIM_SEED);
    let (sim_same, sim_len) = run_twice(&sim, "simulate", dir.path());
    let (kurtz_same, kurtz_len) = run_twice(&kurtz, "kurtz", dir.path());
    verdict(
        11,
        sim_same && kurtz_same,
        format!(
            "simulate csv+sidecar identical: {sim_same} ({sim_len} bytes), kurtz identical: {kurtz_same} ({kurtz_len} bytes)"
        ),
    );
}
