//! Experiment dispatch. Every experiment renders its CSV in memory first so
//! that a failing run leaves no partial output behind.

use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use supermarket_core::fixed_point::{poisson_ph_first, poisson_ph_second};
use supermarket_core::ode::{default_truncation, DEFAULT_STEP};
use supermarket_core::report::{self, SojournPoint};
use supermarket_core::{
    build_params, check_upper_bound, closed_form, decay_rate, erlang_compare, expected_sojourn,
    integrate_with, kurtz_convergence, simulate_replications, Error as CoreError, FractionVector,
    IntegrateOptions, ModelSpec, Sampling, SimConfig,
};

use crate::config::{Experiment, ExperimentConfig, SamplingMode};
use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 1;

/// CSV bytes plus a machine-readable summary for the sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub csv: Vec<u8>,
    pub summary: Value,
}

fn sampling(mode: Option<SamplingMode>) -> Sampling {
    match mode.unwrap_or_default() {
        SamplingMode::WithReplacement => Sampling::WithReplacement,
        SamplingMode::WithoutReplacement => Sampling::WithoutReplacement,
    }
}

fn positive(name: &str, x: f64) -> Result<f64, CliError> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(CliError::Config(format!(
            "{name} must be positive, got {x}"
        )))
    }
}

/// Fills every defaulted parameter so the echoed config reruns identically.
pub fn resolve(cfg: &ExperimentConfig) -> ExperimentConfig {
    let mut out = cfg.clone();
    let p = &mut out.params;
    match cfg.experiment {
        Experiment::FixedPoint | Experiment::SojournCurve => {
            p.tol.get_or_insert(1e-14);
        }
        Experiment::Ode => {
            p.t_end.get_or_insert(50.0);
            p.step.get_or_insert(DEFAULT_STEP);
            p.thin.get_or_insert(100);
        }
        Experiment::Simulate => {
            p.n.get_or_insert(500);
            p.horizon.get_or_insert(1200.0);
            p.warmup.get_or_insert(200.0);
            p.reps.get_or_insert(10);
            p.seed.get_or_insert(DEFAULT_SEED);
            p.sampling.get_or_insert_default();
        }
        Experiment::Erlang => {
            let m = *p.m.get_or_insert(2);
            p.d.get_or_insert(2);
            let lambda = *p.lambda.get_or_insert(1.0);
            p.eta.get_or_insert(2.0 * m as f64 * lambda);
            p.k.get_or_insert(8);
        }
        Experiment::Kurtz => {
            p.n_list.get_or_insert_with(|| vec![50, 100, 200, 400]);
            p.t_end.get_or_insert(10.0);
            p.reps.get_or_insert(5);
            p.seed.get_or_insert(DEFAULT_SEED);
            p.sampling.get_or_insert_default();
        }
    }
    out
}

/// Runs a resolved configuration.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput, CliError> {
    let p = &cfg.params;
    let mut csv = Vec::new();
    let summary = match cfg.experiment {
        Experiment::FixedPoint => {
            let params = cfg.model()?.build()?;
            let mut fps = vec![closed_form(&params, p.k)?];
            if params.is_poisson() && !(params.m_a() == 1 && params.m_b() == 1) {
                fps.push(poisson_ph_first(&params, p.k)?);
                fps.push(poisson_ph_second(&params, p.k)?);
            }
            report::write_fixed_points(&mut csv, &fps)?;
            json!({
                "rho": params.rho(),
                "theta": params.theta(),
                "omega": params.omega(),
                "psi": params.psi(),
                "k": fps[0].k_max(),
                "tail_bound": fps[0].tail_bound(),
                "expected_sojourn": expected_sojourn(&params, p.tol.unwrap_or(1e-14))?,
            })
        }
        Experiment::Ode => {
            let params = cfg.model()?.build()?;
            let fp = closed_form(&params, None)?;
            let k = p.k.unwrap_or_else(|| default_truncation(&fp));
            let step = positive("step", p.step.unwrap_or(DEFAULT_STEP))?;
            let thin = p.thin.unwrap_or(1).max(1);
            let opts = IntegrateOptions {
                t_end: p.t_end.unwrap_or(50.0),
                step,
                snapshot_every: thin,
                ..Default::default()
            };
            let traj = integrate_with(&FractionVector::empty(&params, k)?, &params, &opts)?;
            report::write_trajectory(&mut csv, &traj, 1)?;
            let decay = match decay_rate(&traj, &fp) {
                Ok(r) => json!(r),
                Err(e) => json!(e.to_string()),
            };
            let last = traj.last();
            let distance = (1..=k)
                .map(|i| last.level(i).sub(&fp.level(i)).max_abs())
                .fold(0.0, f64::max);
            json!({
                "k": k,
                "max_drift": traj.max_drift(),
                "upper_bound_exceedance": check_upper_bound(&traj, &fp),
                "decay_rate": decay,
                "final_distance_to_fixed_point": distance,
            })
        }
        Experiment::Simulate => {
            let params = cfg.model()?.build()?;
            let sim = SimConfig {
                n: p.n.unwrap_or(500),
                horizon: p.horizon.unwrap_or(1200.0),
                warmup: p.warmup.unwrap_or(200.0),
                seed: p.seed.unwrap_or(DEFAULT_SEED),
                sampling: sampling(p.sampling),
            };
            let summary = simulate_replications(&params, &sim, p.reps.unwrap_or(10))?;
            report::write_tails(&mut csv, &summary)?;
            json!({
                "sojourn_mean": summary.sojourn_mean,
                "sojourn_stderr": summary.sojourn_stderr,
                "events": summary.runs.iter().map(|r| r.event_count).collect::<Vec<_>>(),
                "seeds": summary.runs.iter().map(|r| r.seed).collect::<Vec<_>>(),
            })
        }
        Experiment::SojournCurve => {
            let d_range = p.d_range.clone().unwrap_or_default();
            let spec = cfg.model()?;
            let mu_list = match &p.mu_list {
                Some(m) => m.clone(),
                None => vec![spec.build_ph()?.mu()],
            };
            let rows = sojourn_curve(spec, &d_range, &mu_list, p.tol.unwrap_or(1e-14))?;
            report::write_sojourn_curve(&mut csv, &rows)?;
            json!({ "rows": rows.len(), "unstable": rows.iter().filter(|r| r.value.is_none()).count() })
        }
        Experiment::Erlang => {
            let rows = erlang_compare(
                p.m.unwrap_or(2),
                p.d.unwrap_or(2),
                p.lambda.unwrap_or(1.0),
                p.eta.unwrap_or(4.0),
                p.k.unwrap_or(8),
            )?;
            report::write_erlang(&mut csv, &rows)?;
            json!({ "log_ratios": rows.iter().map(|r| r.log_ratio).collect::<Vec<_>>() })
        }
        Experiment::Kurtz => {
            let params = cfg.model()?.build()?;
            let rows = kurtz_convergence(
                &params,
                p.n_list.as_deref().unwrap_or(&[]),
                p.t_end.unwrap_or(10.0),
                p.reps.unwrap_or(5),
                p.seed.unwrap_or(DEFAULT_SEED),
                sampling(p.sampling),
            )?;
            report::write_kurtz(&mut csv, &rows)?;
            json!({ "distances": rows.iter().map(|r| r.distances.clone()).collect::<Vec<_>>() })
        }
    };
    Ok(RunOutput { csv, summary })
}

/// `E[T_d]` for every `d` in `d_range` and service rate in `mu_list`, the PH
/// shape of `spec` rescaled to each rate. Unstable pairs are kept and flagged.
pub fn sojourn_curve(
    spec: &ModelSpec,
    d_range: &[u32],
    mu_list: &[f64],
    tol: f64,
) -> Result<Vec<SojournPoint>, CliError> {
    if d_range.is_empty() {
        return Err(CliError::Config("d_range must not be empty".into()));
    }
    if mu_list.is_empty() {
        return Err(CliError::Config("mu_list must not be empty".into()));
    }
    let map = spec.build_map()?;
    let base = spec.build_ph()?;
    let mut rows = Vec::with_capacity(d_range.len() * mu_list.len());
    for &mu in mu_list {
        let ph = base.with_rate(positive("mu", mu)?)?;
        for &d in d_range {
            let row = match build_params(map.clone(), ph.clone(), d) {
                Ok(params) => SojournPoint {
                    d,
                    mu,
                    value: Some(expected_sojourn(&params, tol)?),
                    status: "ok".into(),
                },
                Err(CoreError::Stability { .. }) => SojournPoint {
                    d,
                    mu,
                    value: None,
                    status: "unstable".into(),
                },
                Err(e) => return Err(e.into()),
            };
            rows.push(row);
        }
    }
    Ok(rows)
}

/// `<out>.json`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Runs `cfg` and writes the CSV to `out` plus its JSON sidecar.
pub fn execute(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutput, CliError> {
    let resolved = resolve(cfg);
    let output = run_experiment(&resolved)?;
    let sidecar = json!({
        "tool": "supermarket",
        "version": env!("CARGO_PKG_VERSION"),
        "experiment": resolved.experiment.name(),
        "seed": resolved.params.seed,
        "config": resolved,
        "summary": output.summary,
    });
    let meta = serde_json::to_vec_pretty(&sidecar)?;
    let write = |path: &Path, bytes: &[u8]| {
        std::fs::write(path, bytes).map_err(|source| CliError::Write {
            path: path.to_path_buf(),
            source,
        })
    };
    write(out, &output.csv)?;
    write(&sidecar_path(out), &meta)?;
    Ok(output)
}
