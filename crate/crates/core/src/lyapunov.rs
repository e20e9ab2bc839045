//! Lyapunov diagnostics for convergence of the ODE towards a fixed point.
//!
//! `Φ(t) = Σ_k w_k (π_k - S_k(t)) e`, with weights built from the ratio
//! functionals `c_k(t)` and `d_k(t)` defined by
//! `S_k^{⊙d}((De) ⊗ e) = c_k (π_k - S_k) e` and `S_k (e ⊗ T⁰) = d_k (π_k - S_k) e`.

use crate::error::{Error, Result};
use crate::fixed_point::FixedPoint;
use crate::linalg::{hadamard_power, kron_vec, Vector};
use crate::model::ModelParams;
use crate::ode::{FractionVector, Trajectory};

/// Denominators `|(π_k - S_k) e|` below this are treated as zero.
pub const DEGENERATE_TOL: f64 = 1e-12;
/// Values of `Φ` at or below this end the decay-fit window.
pub const PHI_FLOOR: f64 = 1e-14;

/// Level-0 ratio `c_0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Level0Ratio {
    /// Denominator `(π_0 - S_0) e`, which vanishes whenever both sum to one.
    #[default]
    AsDefined,
    /// Denominator `Σ_i |π_0 - S_0|_i`.
    Entrywise,
}

/// `0.05 μ (1 - ρ)`.
pub fn default_delta(params: &ModelParams) -> f64 {
    0.05 * params.mu() * (1.0 - params.rho())
}

/// Ratio functionals at one state: `c_0..c_{K-1}` and `d_1..d_{K-1}` (index 0 of `d` unused).
#[derive(Debug, Clone, PartialEq)]
pub struct Ratios {
    pub c: Vec<f64>,
    pub d: Vec<f64>,
}

pub fn ratio_functionals(
    s: &FractionVector,
    pi: &FixedPoint,
    params: &ModelParams,
    level0: Level0Ratio,
) -> Result<Ratios> {
    let k_max = s.k_max();
    let de = params.map().d().row_sums();
    let de_e = kron_vec(&de, &Vector::ones(params.m_b()));
    let e_t0 = kron_vec(&Vector::ones(params.m_a()), params.ph().t0());
    let d = params.d();

    let diff0 = pi.pi0().sub(s.s0());
    let den0 = match level0 {
        Level0Ratio::AsDefined => diff0.sum(),
        Level0Ratio::Entrywise => diff0.iter().map(|x| x.abs()).sum(),
    };
    let mut c = Vec::with_capacity(k_max);
    let mut dk = vec![0.0];
    c.push(checked_ratio(hadamard_power(s.s0(), d).dot(&de), den0, 0)?);
    for k in 1..k_max {
        let sk = s.level(k);
        let den = pi.level(k).sub(&sk).sum();
        c.push(checked_ratio(hadamard_power(&sk, d).dot(&de_e), den, k)?);
        dk.push(sk.dot(&e_t0) / den);
    }
    Ok(Ratios { c, d: dk })
}

fn checked_ratio(num: f64, den: f64, level: usize) -> Result<f64> {
    if den.abs() < DEGENERATE_TOL {
        return Err(Error::DegenerateState {
            level,
            reason: format!(
                "|(π_k - S_k) e| = {:e} is below {DEGENERATE_TOL:e}",
                den.abs()
            ),
        });
    }
    let c = num / den;
    if c.is_nan() || c <= 0.0 {
        return Err(Error::DegenerateState {
            level,
            reason: format!("ratio c_k = {c} is not positive"),
        });
    }
    Ok(c)
}

/// Weights `w_0..w_K` and the ratios they were built from.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub w: Vec<f64>,
    pub ratios: Option<Ratios>,
}

/// `w_0 = 1`, `w_1 = 1 + δ/c_0`, `w_{k+1} = w_k + δ w_k / c_k + (d_k / c_k)(w_k - w_{k-1})`.
///
/// `delta = 0` collapses the recursion to unit weights without evaluating any ratio.
pub fn lyapunov_weights_with(
    s: &FractionVector,
    pi: &FixedPoint,
    params: &ModelParams,
    delta: f64,
    level0: Level0Ratio,
) -> Result<Weights> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(Error::Config(format!(
            "delta must be non-negative, got {delta}"
        )));
    }
    let k_max = s.k_max();
    if delta == 0.0 {
        return Ok(Weights {
            w: vec![1.0; k_max + 1],
            ratios: None,
        });
    }
    let r = ratio_functionals(s, pi, params, level0)?;
    let mut w = Vec::with_capacity(k_max + 1);
    w.push(1.0);
    w.push(1.0 + delta / r.c[0]);
    for k in 1..k_max {
        let next = w[k] + delta * w[k] / r.c[k] + (r.d[k] / r.c[k]) * (w[k] - w[k - 1]);
        w.push(next);
    }
    Ok(Weights { w, ratios: Some(r) })
}

pub fn lyapunov_weights(
    s: &FractionVector,
    pi: &FixedPoint,
    params: &ModelParams,
    delta: f64,
) -> Result<Vec<f64>> {
    lyapunov_weights_with(s, pi, params, delta, Level0Ratio::AsDefined).map(|w| w.w)
}

/// `Σ_{k=0}^{K} w_k (π_k - S_k) e`. The omitted tail is at most `π_{K+1} e`-sized.
pub fn lyapunov_phi(s: &FractionVector, pi: &FixedPoint, weights: &[f64]) -> Result<f64> {
    if weights.len() < s.k_max() + 1 {
        return Err(Error::Config(format!(
            "need {} weights, got {}",
            s.k_max() + 1,
            weights.len()
        )));
    }
    Ok((0..=s.k_max())
        .map(|k| weights[k] * pi.level(k).sub(&s.level(k)).sum())
        .sum())
}

fn unit_phi(s: &FractionVector, pi: &FixedPoint) -> f64 {
    (0..=s.k_max())
        .map(|k| pi.level(k).sub(&s.level(k)).sum())
        .sum()
}

/// `Φ` along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSeries {
    pub times: Vec<f64>,
    pub phi_values: Vec<f64>,
    /// Weights used at each snapshot.
    pub weights: Vec<Vec<f64>>,
    pub delta: f64,
    pub c_samples: Vec<Vec<f64>>,
    pub d_samples: Vec<Vec<f64>>,
}

impl LyapunovSeries {
    /// Weighted series; weights are recomputed at every snapshot.
    pub fn weighted(
        snapshots: &[FractionVector],
        pi: &FixedPoint,
        params: &ModelParams,
        delta: f64,
        level0: Level0Ratio,
    ) -> Result<Self> {
        let mut out = LyapunovSeries {
            times: Vec::new(),
            phi_values: Vec::new(),
            weights: Vec::new(),
            delta,
            c_samples: Vec::new(),
            d_samples: Vec::new(),
        };
        for s in snapshots {
            let w = lyapunov_weights_with(s, pi, params, delta, level0)?;
            out.times.push(s.t());
            out.phi_values.push(lyapunov_phi(s, pi, &w.w)?);
            if let Some(r) = w.ratios {
                out.c_samples.push(r.c);
                out.d_samples.push(r.d);
            }
            out.weights.push(w.w);
        }
        Ok(out)
    }

    /// Series with all weights equal to one.
    pub fn unit(traj: &Trajectory, pi: &FixedPoint) -> Self {
        let k = traj.last().k_max();
        let snaps = traj.snapshots();
        LyapunovSeries {
            times: snaps.iter().map(|s| s.t()).collect(),
            phi_values: snaps.iter().map(|s| unit_phi(s, pi)).collect(),
            weights: vec![vec![1.0; k + 1]; snaps.len()],
            delta: 0.0,
            c_samples: Vec::new(),
            d_samples: Vec::new(),
        }
    }
}

/// Least-squares slope of `ln Φ` (unit weights) over the second half of the
/// trajectory, returned with its sign flipped so that decay is positive.
///
/// The window ends at the first `Φ <= PHI_FLOOR`.
pub fn decay_rate(traj: &Trajectory, pi: &FixedPoint) -> Result<f64> {
    let series = LyapunovSeries::unit(traj, pi);
    let t_last = *series.times.last().expect("trajectory is never empty");
    let t_mid = series.times[0] + 0.5 * (t_last - series.times[0]);
    let points: Vec<(f64, f64)> = series
        .times
        .iter()
        .zip(&series.phi_values)
        .filter(|(t, _)| **t >= t_mid)
        .map(|(&t, &phi)| (t, phi))
        .take_while(|(_, phi)| *phi > PHI_FLOOR)
        .map(|(t, phi)| (t, phi.ln()))
        .collect();
    if points.len() < 2 {
        return Err(Error::Fit(format!(
            "only {} positive Φ samples in the fit window",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mt = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::Fit("fit window has zero time spread".into()));
    }
    Ok(-sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixed_point::closed_form;
    use crate::model::{build_params, example_map, MapProcess, PhDistribution};
    use crate::ode::{integrate_with, IntegrateOptions};

    fn mm(rho: f64, d: u32) -> ModelParams {
        build_params(
            MapProcess::poisson(rho).unwrap(),
            PhDistribution::exponential(1.0).unwrap(),
            d,
        )
        .unwrap()
    }

    fn run(p: &ModelParams, k: usize, t_end: f64) -> (Trajectory, FixedPoint) {
        let fp = closed_form(p, Some(k)).unwrap();
        let s = FractionVector::empty(p, k).unwrap();
        let opts = IntegrateOptions {
            t_end,
            step: 0.01,
            snapshot_every: 10,
            ..Default::default()
        };
        (integrate_with(&s, p, &opts).unwrap(), fp)
    }

    #[test]
    fn zero_delta_gives_unit_weights() {
        let p = mm(0.5, 2);
        let fp = closed_form(&p, Some(6)).unwrap();
        let s = FractionVector::empty(&p, 6).unwrap();
        assert_eq!(lyapunov_weights(&s, &fp, &p, 0.0).unwrap(), vec![1.0; 7]);
    }

    #[test]
    fn level_zero_is_degenerate_as_defined() {
        let p = mm(0.5, 2);
        let fp = closed_form(&p, Some(6)).unwrap();
        let s = FractionVector::empty(&p, 6).unwrap();
        match lyapunov_weights(&s, &fp, &p, 0.1) {
            Err(Error::DegenerateState { level: 0, .. }) => {}
            other => panic!("expected level-0 degeneracy, got {other:?}"),
        }
    }

    #[test]
    fn entrywise_weights_increase_for_map() {
        let p = build_params(example_map(), PhDistribution::exponential(10.0).unwrap(), 2).unwrap();
        let (tr, fp) = run(&p, 5, 0.2);
        let s = tr.last();
        let w = lyapunov_weights_with(s, &fp, &p, 0.1, Level0Ratio::Entrywise).unwrap();
        assert_eq!(w.w[0], 1.0);
        for k in 1..w.w.len() {
            assert!(w.w[k] > w.w[k - 1], "{:?}", w.w);
        }
    }

    #[test]
    fn empty_upper_levels_are_degenerate() {
        let p = build_params(example_map(), PhDistribution::exponential(10.0).unwrap(), 2).unwrap();
        let fp = closed_form(&p, Some(5)).unwrap();
        let s = FractionVector::empty(&p, 5).unwrap();
        let r = lyapunov_weights_with(&s, &fp, &p, 0.1, Level0Ratio::Entrywise);
        assert!(matches!(r, Err(Error::DegenerateState { level: 1, .. })));
    }

    #[test]
    fn phi_at_fixed_point_is_zero() {
        let p = mm(0.5, 2);
        let fp = closed_form(&p, Some(6)).unwrap();
        let s = FractionVector::from_fixed_point(&fp, 6).unwrap();
        assert_eq!(lyapunov_phi(&s, &fp, &[1.0; 7]).unwrap(), 0.0);
    }

    #[test]
    fn phi_empty_start_sums_levels() {
        let p = mm(0.5, 2);
        let fp = closed_form(&p, Some(8)).unwrap();
        let s = FractionVector::empty(&p, 8).unwrap();
        let phi = lyapunov_phi(&s, &fp, &[1.0; 9]).unwrap();
        let direct: f64 = (1..=8).map(|k| 0.5f64.powi((1 << k) - 1)).sum();
        assert!((phi - direct).abs() < 1e-15);
        assert!((phi - 0.632_843).abs() < 1e-6);
        assert!(lyapunov_phi(&s, &fp, &[1.0; 3]).is_err());
    }

    #[test]
    fn decay_positive_for_one_and_two_choices() {
        for d in [1, 2] {
            let p = mm(0.5, d);
            let k = if d == 1 { 40 } else { 6 };
            let (tr, fp) = run(&p, k, 20.0);
            let rate = decay_rate(&tr, &fp).unwrap();
            assert!(rate > 0.0, "d={d} rate={rate}");
        }
    }

    #[test]
    fn stationary_start_cannot_be_fitted() {
        let p = mm(0.5, 2);
        let fp = closed_form(&p, Some(6)).unwrap();
        let s = FractionVector::from_fixed_point(&fp, 6).unwrap();
        let opts = IntegrateOptions {
            t_end: 2.0,
            step: 0.01,
            snapshot_every: 10,
            ..Default::default()
        };
        let tr = integrate_with(&s, &p, &opts).unwrap();
        assert!(matches!(decay_rate(&tr, &fp), Err(Error::Fit(_))));
    }

    #[test]
    fn weighted_series_records_samples() {
        let p = build_params(example_map(), PhDistribution::exponential(10.0).unwrap(), 2).unwrap();
        let (tr, fp) = run(&p, 5, 0.2);
        let snaps = &tr.snapshots()[1..];
        let series =
            LyapunovSeries::weighted(snaps, &fp, &p, 0.05, Level0Ratio::Entrywise).unwrap();
        assert_eq!(series.phi_values.len(), snaps.len());
        assert_eq!(series.c_samples.len(), series.times.len());
        assert!(series.phi_values[0] > 0.0);
    }
}
