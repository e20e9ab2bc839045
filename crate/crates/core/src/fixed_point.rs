//! Doubly exponential fixed points of the mean-field system.
//!
//! Every family here has the shape `π_k = r(k) · b` for a fixed base vector
//! `b` and a scalar `r(k)` whose logarithm is a combination of `d^k`,
//! `g(k) = (d^k - 1)/(d - 1)` and `g(k - 1)`. Levels are evaluated in log
//! space, so tails far below `f64::MIN_POSITIVE` still carry exact decay
//! information through [`FixedPoint::log_level_sum`].

use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::{hadamard_power, kron, kron_vec, Matrix, Vector};
use crate::model::{build_params, MapProcess, ModelParams, PhDistribution};

/// Smallest tail mass accepted by the automatic truncation.
pub const DEFAULT_TAIL_TOL: f64 = 1e-14;
/// Hard cap on the automatic truncation level.
pub const MAX_LEVELS: usize = 64;
const MAX_SERIES_TERMS: usize = 100_000;

/// Which construction produced a fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// `π_k = θ^{d^k}(θωρ)^{g(k)} γ^{⊙1/d} ⊗ α^{⊙1/d}`.
    GeneralClosedForm,
    /// Poisson arrivals, `π_k = (ωρ)^{g(k)} α^{⊙1/d}`.
    PoissonPhFirst,
    /// Poisson arrivals, `π_k = ψ^{g(k-1)} ρ^{g(k)} τ`.
    PoissonPhSecond,
    /// Poisson arrivals and exponential service: `π_k = ρ^{g(k)}`.
    MmReduction,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::GeneralClosedForm => "general",
            Variant::PoissonPhFirst => "poisson_first",
            Variant::PoissonPhSecond => "poisson_second",
            Variant::MmReduction => "mm_reduction",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `(d^k - 1)/(d - 1)`, with the `d = 1` limit `k`.
pub fn geometric_exponent(d: u32, k: usize) -> f64 {
    if d == 1 {
        k as f64
    } else {
        let dk = (d as f64).powi(k as i32);
        (dk - 1.0) / (d as f64 - 1.0)
    }
}

// `coef * x` with the convention 0 * inf = 0.
fn weighted(coef: f64, x: f64) -> f64 {
    if coef == 0.0 {
        0.0
    } else {
        coef * x
    }
}

/// `ln r(k) = pow_coef·d^k + geo_coef·g(k) + prev_geo_coef·g(k-1)` for `k >= 1`.
#[derive(Debug, Clone, PartialEq)]
struct LevelLaw {
    d: u32,
    pow_coef: f64,
    geo_coef: f64,
    prev_geo_coef: f64,
    base: Vector,
    log_base_sum: f64,
}

impl LevelLaw {
    fn new(d: u32, pow_coef: f64, geo_coef: f64, prev_geo_coef: f64, base: Vector) -> Self {
        let log_base_sum = base.sum().ln();
        LevelLaw {
            d,
            pow_coef,
            geo_coef,
            prev_geo_coef,
            base,
            log_base_sum,
        }
    }

    fn log_scale(&self, k: usize) -> f64 {
        debug_assert!(k >= 1);
        let dk = (self.d as f64).powi(k as i32);
        weighted(self.pow_coef, dk)
            + weighted(self.geo_coef, geometric_exponent(self.d, k))
            + weighted(self.prev_geo_coef, geometric_exponent(self.d, k - 1))
    }

    fn level(&self, k: usize) -> Vector {
        let s = self.log_scale(k).exp();
        self.base.scale(s)
    }
}

/// A truncated fixed point `(π_0, π_1, …, π_K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    variant: Variant,
    pi0: Vector,
    levels: Vec<Vector>,
    tail_bound: f64,
    law: LevelLaw,
}

impl FixedPoint {
    fn build(variant: Variant, pi0: Vector, law: LevelLaw, k_max: usize) -> Result<Self> {
        if k_max == 0 {
            return Err(Error::Config("truncation level K must be >= 1".into()));
        }
        let levels: Vec<Vector> = (1..=k_max).map(|k| law.level(k)).collect();
        let tail_bound = levels[k_max - 1].sum();
        Ok(FixedPoint {
            variant,
            pi0,
            levels,
            tail_bound,
            law,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn pi0(&self) -> &Vector {
        &self.pi0
    }

    /// Stored levels `π_1..π_K`.
    pub fn levels(&self) -> &[Vector] {
        &self.levels
    }

    /// Truncation level `K`.
    pub fn k_max(&self) -> usize {
        self.levels.len()
    }

    /// `π_K e`.
    pub fn tail_bound(&self) -> f64 {
        self.tail_bound
    }

    /// `π_k` for any `k >= 0`, evaluated from the closed form beyond `K`.
    pub fn level(&self, k: usize) -> Vector {
        match k {
            0 => self.pi0.clone(),
            k if k <= self.levels.len() => self.levels[k - 1].clone(),
            k => self.law.level(k),
        }
    }

    /// `π_k e`.
    pub fn level_sum(&self, k: usize) -> f64 {
        self.level(k).sum()
    }

    /// `ln(π_k e)`; finite even where `π_k` underflows.
    pub fn log_level_sum(&self, k: usize) -> f64 {
        if k == 0 {
            self.pi0.sum().ln()
        } else {
            self.law.log_scale(k) + self.law.log_base_sum
        }
    }

    /// Same fixed point re-truncated at `k_max`.
    pub fn truncated(&self, k_max: usize) -> Result<Self> {
        FixedPoint::build(self.variant, self.pi0.clone(), self.law.clone(), k_max)
    }

    /// Smallest `K` with `π_K e < tol`, capped at [`MAX_LEVELS`].
    pub fn certified_truncation(&self, tol: f64) -> usize {
        let log_tol = tol.ln();
        (1..=MAX_LEVELS)
            .find(|&k| self.log_level_sum(k) < log_tol)
            .unwrap_or(MAX_LEVELS)
    }
}

fn resolve_levels(fp: FixedPoint, k_max: Option<usize>) -> Result<FixedPoint> {
    let k = k_max.unwrap_or_else(|| fp.certified_truncation(DEFAULT_TAIL_TOL));
    fp.truncated(k)
}

/// General closed form for MAP arrivals and PH service.
///
/// `π_0 = θ γ^{⊙1/d}` and `π_k = θ^{d^k}(θωρ)^{g(k)} γ^{⊙1/d} ⊗ α^{⊙1/d}`.
/// With `m_A = m_B = 1` the result is tagged [`Variant::MmReduction`].
/// Only that case solves the stationary equations exactly; otherwise the
/// annihilation identities hold but [`residuals`] reports the gap.
/// `None` picks the certified truncation for [`DEFAULT_TAIL_TOL`].
pub fn closed_form(params: &ModelParams, k_max: Option<usize>) -> Result<FixedPoint> {
    let theta = params.theta();
    let pi0 = params.gamma_root().scale(theta);
    let base = kron_vec(params.gamma_root(), params.alpha_root());
    let law = LevelLaw::new(
        params.d(),
        theta.ln(),
        (theta * params.omega() * params.rho()).ln(),
        0.0,
        base,
    );
    let variant = if params.m_a() == 1 && params.m_b() == 1 {
        Variant::MmReduction
    } else {
        Variant::GeneralClosedForm
    };
    let seed = FixedPoint::build(variant, pi0, law, 1)?;
    resolve_levels(seed, k_max)
}

/// Arrival and service factors of level `k`; their Kronecker product is
/// `π_k` of [`closed_form`] for `k >= 1`.
pub fn decomposition(params: &ModelParams, k: usize) -> (Vector, Vector) {
    let d = params.d();
    let g = geometric_exponent(d, k);
    let g_next = geometric_exponent(d, k + 1);
    let arrival_log = weighted(g_next, params.theta().ln()) + weighted(g, params.lambda().ln());
    let service_log = weighted(g, (params.omega() / params.mu()).ln());
    (
        params.gamma_root().scale(arrival_log.exp()),
        params.alpha_root().scale(service_log.exp()),
    )
}

fn require_poisson(params: &ModelParams) -> Result<()> {
    if !params.is_poisson() {
        return Err(Error::Precondition(format!(
            "Poisson-arrival fixed point needs m_A = 1, got m_A = {}",
            params.m_a()
        )));
    }
    Ok(())
}

/// First Poisson/PH solution: `π_0 = 1`, `π_k = (ωρ)^{g(k)} α^{⊙1/d}`.
pub fn poisson_ph_first(params: &ModelParams, k_max: Option<usize>) -> Result<FixedPoint> {
    require_poisson(params)?;
    let law = LevelLaw::new(
        params.d(),
        0.0,
        (params.omega() * params.rho()).ln(),
        0.0,
        params.alpha_root().clone(),
    );
    let seed = FixedPoint::build(Variant::PoissonPhFirst, Vector::ones(1), law, 1)?;
    resolve_levels(seed, k_max)
}

/// Second Poisson/PH solution: `π_0 = 1`, `π_k = ψ^{g(k-1)} ρ^{g(k)} τ`.
pub fn poisson_ph_second(params: &ModelParams, k_max: Option<usize>) -> Result<FixedPoint> {
    require_poisson(params)?;
    let law = LevelLaw::new(
        params.d(),
        0.0,
        params.rho().ln(),
        params.psi().ln(),
        params.ph().tau().clone(),
    );
    let seed = FixedPoint::build(Variant::PoissonPhSecond, Vector::ones(1), law, 1)?;
    resolve_levels(seed, k_max)
}

/// Max-absolute residuals of a candidate fixed point.
///
/// `normalization` and the `*_balance` fields are the stationary equations of
/// the mean-field system itself; the `*_transformed` fields are the same
/// system after multiplying through by `-A^{-1}`. The `aggregate_*` fields
/// are the scalar projections (each vector equation multiplied by `e`).
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    /// `|π_0 e - 1|`.
    pub normalization: f64,
    /// `π_0^{⊙d} C + π_1 (I ⊗ T⁰)`.
    pub level0_balance: f64,
    /// `π_0^{⊙d}(D ⊗ α) + π_1^{⊙d}(C ⊗ I) + π_1(I ⊗ T) + π_2(I ⊗ T⁰α)`.
    pub level1_balance: f64,
    /// Max over `k = 2..K` of the level-`k` balance.
    pub higher_balance: f64,
    pub level1_transformed: f64,
    pub higher_transformed: f64,
    pub aggregate_level0: f64,
    pub aggregate_level1: f64,
    pub aggregate_higher: f64,
    /// `‖(γ ⊗ α) W‖`.
    pub gamma_alpha_w: f64,
    /// `‖(γ ⊗ α) R‖`.
    pub gamma_alpha_r: f64,
    /// `‖π_0^{⊙d}(C + D)‖`.
    pub pi0_annihilation: f64,
}

impl ResidualReport {
    /// Largest of the untransformed stationary-equation residuals.
    pub fn max_stationary(&self) -> f64 {
        self.normalization
            .max(self.level0_balance)
            .max(self.level1_balance)
            .max(self.higher_balance)
    }

    pub fn max_aggregate(&self) -> f64 {
        self.normalization
            .max(self.aggregate_level0)
            .max(self.aggregate_level1)
            .max(self.aggregate_higher)
    }

    pub fn max_annihilation(&self) -> f64 {
        self.gamma_alpha_w
            .max(self.gamma_alpha_r)
            .max(self.pi0_annihilation)
    }
}

/// Block matrices of the level equations, built once per model.
struct LevelOperators {
    c_i: Matrix,
    d_i: Matrix,
    d_alpha: Matrix,
    i_t: Matrix,
    i_t0: Matrix,
    i_t0_alpha: Matrix,
    v: Matrix,
    w: Matrix,
    r: Matrix,
    alpha_n: Vector,
}

impl LevelOperators {
    fn new(params: &ModelParams) -> Self {
        let map = params.map();
        let ph = params.ph();
        let ia = Matrix::identity(params.m_a());
        let ib = Matrix::identity(params.m_b());
        let t0_col = Matrix::column_matrix(ph.t0());
        let alpha_row = Matrix::row_matrix(ph.alpha());
        let n = ph.neg_inv();
        let alpha_n = ph.alpha().mul_mat(n);
        let e_alpha_n = kron(
            &Matrix::column_matrix(&Vector::ones(params.m_b())),
            &Matrix::row_matrix(&alpha_n),
        );
        LevelOperators {
            c_i: kron(map.c(), &ib),
            d_i: kron(map.d(), &ib),
            d_alpha: kron(map.d(), &alpha_row),
            i_t: kron(&ia, ph.t()),
            i_t0: kron(&ia, &t0_col),
            i_t0_alpha: kron(&ia, &t0_col.mul(&alpha_row)),
            v: kron(map.d(), n),
            w: kron(&map.generator(), &e_alpha_n),
            r: kron(map.c(), n).add(&kron(map.d(), &e_alpha_n)),
            alpha_n,
        }
    }
}

/// Evaluates the stationary equations at `fp`, using levels up to `K + 1`.
pub fn residuals(fp: &FixedPoint, params: &ModelParams, k_max: usize) -> Result<ResidualReport> {
    let (m_a, m_b) = (params.m_a(), params.m_b());
    if fp.pi0().len() != m_a || fp.level(1).len() != m_a * m_b {
        return Err(Error::Structural(format!(
            "fixed point has |π_0| = {}, |π_1| = {}; model needs {} and {}",
            fp.pi0().len(),
            fp.level(1).len(),
            m_a,
            m_a * m_b
        )));
    }
    let k_max = k_max.max(1);
    let d = params.d();
    let ops = LevelOperators::new(params);
    let pow = |v: &Vector| hadamard_power(v, d);

    let pi0d = pow(fp.pi0());
    let pi1 = fp.level(1);
    let pi2 = fp.level(2);

    let normalization = (fp.pi0().sum() - 1.0).abs();
    let r_level0 = pi0d.mul_mat(params.map().c()).add(&pi1.mul_mat(&ops.i_t0));
    let r_level1 = pi0d
        .mul_mat(&ops.d_alpha)
        .add(&pow(&pi1).mul_mat(&ops.c_i))
        .add(&pi1.mul_mat(&ops.i_t))
        .add(&pi2.mul_mat(&ops.i_t0_alpha));
    let mut higher_balance = 0.0f64;
    let mut agg10 = 0.0f64;
    for k in 2..=k_max {
        let prev = fp.level(k - 1);
        let cur = fp.level(k);
        let next = fp.level(k + 1);
        let r = pow(&prev)
            .mul_mat(&ops.d_i)
            .add(&pow(&cur).mul_mat(&ops.c_i))
            .add(&cur.mul_mat(&ops.i_t))
            .add(&next.mul_mat(&ops.i_t0_alpha));
        higher_balance = higher_balance.max(r.max_abs());
        agg10 = agg10.max(r.sum().abs());
    }

    // Suffix sums Σ_{j > k} π_j^{⊙d}, far enough out that the remainder is negligible.
    let first_mass = fp.level_sum(1).max(f64::MIN_POSITIVE);
    let mut j_end = k_max + 1;
    while j_end < k_max + 1 + MAX_SERIES_TERMS && fp.level_sum(j_end) > 1e-18 * first_mass {
        j_end += 1;
    }
    let mut suffix = vec![Vector::zeros(m_a * m_b); j_end + 2];
    for j in (1..=j_end).rev() {
        suffix[j] = suffix[j + 1].add(&pow(&fp.level(j)));
    }
    let tail_after = |k: usize| &suffix[(k + 1).min(j_end + 1)];

    let head = kron_vec(&pi0d.mul_mat(params.map().d()), &ops.alpha_n);
    let r_transformed = pi1
        .sub(&head)
        .sub(&pow(&pi1).mul_mat(&ops.r))
        .sub(&tail_after(1).mul_mat(&ops.w));
    let mut higher_transformed = 0.0f64;
    for k in 2..=k_max {
        let cur = fp.level(k);
        let r = cur
            .sub(&pow(&fp.level(k - 1)).mul_mat(&ops.v))
            .sub(&pow(&cur).mul_mat(&ops.r))
            .sub(&tail_after(k).mul_mat(&ops.w));
        higher_transformed = higher_transformed.max(r.max_abs());
    }

    let gamma_alpha = kron_vec(params.map().gamma(), params.ph().alpha());
    Ok(ResidualReport {
        normalization,
        level0_balance: r_level0.max_abs(),
        level1_balance: r_level1.max_abs(),
        higher_balance,
        level1_transformed: r_transformed.max_abs(),
        higher_transformed,
        aggregate_level0: r_level0.sum().abs(),
        aggregate_level1: r_level1.sum().abs(),
        aggregate_higher: agg10,
        gamma_alpha_w: gamma_alpha.mul_mat(&ops.w).max_abs(),
        gamma_alpha_r: gamma_alpha.mul_mat(&ops.r).max_abs(),
        pi0_annihilation: pi0d.mul_mat(&params.map().generator()).max_abs(),
    })
}

/// Expected sojourn time of a tagged arrival at the closed-form fixed point:
///
/// `E[T_d] = θ^{d²}(θωρ)^d (τ - α)(-T)^{-1}e + (1/μ) Σ_{k≥0} θ^{d^{k+1}}(θωρ)^{d·g(k)}`.
///
/// The series stops at the first term below `tol`.
pub fn expected_sojourn(params: &ModelParams, tol: f64) -> Result<f64> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::Config(format!(
            "series tolerance must be positive, got {tol}"
        )));
    }
    let d = params.d();
    let df = d as f64;
    let ln_theta = params.theta().ln();
    let ln_base = (params.theta() * params.omega() * params.rho()).ln();
    let ph = params.ph();

    let residual_gap = ph.tau().sub(ph.alpha()).mul_mat(ph.neg_inv()).sum();
    let lead = (weighted(df * df, ln_theta) + weighted(df, ln_base)).exp() * residual_gap;

    let mut series = 0.0;
    for k in 0..MAX_SERIES_TERMS {
        let dk1 = df.powi(k as i32 + 1);
        let ln_term = weighted(dk1, ln_theta) + weighted(df * geometric_exponent(d, k), ln_base);
        let term = ln_term.exp();
        series += term;
        if term < tol {
            return Ok(lead + series / params.mu());
        }
    }
    Err(Error::Numeric(format!(
        "sojourn series did not reach tolerance {tol:e} within {MAX_SERIES_TERMS} terms"
    )))
}

/// One row of the Erlang comparison between the two Poisson/PH solutions.
#[derive(Debug, Clone, PartialEq)]
pub struct ErlangRow {
    pub k: usize,
    pub first_sum: f64,
    pub second_sum: f64,
    pub ratio: f64,
    /// `ln(first_sum / second_sum)`, exact where the sums underflow.
    pub log_ratio: f64,
}

/// Level sums of both Poisson/PH solutions for Erlang(`m`, `eta`) service,
/// checking the ratio `m^{d^{k-1} - 1}` at every level.
pub fn erlang_compare(
    m: usize,
    d: u32,
    lambda: f64,
    eta: f64,
    k_max: usize,
) -> Result<Vec<ErlangRow>> {
    if k_max == 0 {
        return Err(Error::Config("truncation level K must be >= 1".into()));
    }
    let params = build_params(
        MapProcess::poisson(lambda)?,
        PhDistribution::erlang(m, eta)?,
        d,
    )?;
    let first = poisson_ph_first(&params, Some(k_max))?;
    let second = poisson_ph_second(&params, Some(k_max))?;
    let ln_m = (m as f64).ln();
    (1..=k_max)
        .map(|k| {
            let log_ratio = first.log_level_sum(k) - second.log_level_sum(k);
            let expected = weighted((d as f64).powi(k as i32 - 1) - 1.0, ln_m);
            let scale = expected.abs().max(1.0);
            if (log_ratio - expected).abs() > 1e-9 * scale {
                return Err(Error::Numeric(format!(
                    "level {k}: log ratio {log_ratio} differs from (d^(k-1) - 1) ln m = {expected}"
                )));
            }
            Ok(ErlangRow {
                k,
                first_sum: first.level_sum(k),
                second_sum: second.level_sum(k),
                ratio: log_ratio.exp(),
                log_ratio,
            })
        })
        .collect()
}
