//! Validated MAP and PH descriptors and the derived scalars the mean-field
//! formulas consume.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    hadamard_power, hadamard_root, kron, neg_inverse, stationary_vector, validate_subgenerator,
    Matrix, Vector, STRUCTURAL_TOL,
};

/// Largest supported choice count. Tail exponents grow like `d^k`.
pub const MAX_CHOICES: u32 = 32;

/// Markovian arrival process with descriptor `(C, D)` normalised per server.
#[derive(Debug, Clone, PartialEq)]
pub struct MapProcess {
    c: Matrix,
    d: Matrix,
    gamma: Vector,
    lambda: f64,
}

impl MapProcess {
    /// Hidden-transition rates.
    pub fn c(&self) -> &Matrix {
        &self.c
    }

    /// Arrival-marking transition rates.
    pub fn d(&self) -> &Matrix {
        &self.d
    }

    /// Stationary phase vector of `C + D`.
    pub fn gamma(&self) -> &Vector {
        &self.gamma
    }

    /// Stationary arrival rate `γ D e`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn order(&self) -> usize {
        self.c.rows()
    }

    pub fn generator(&self) -> Matrix {
        self.c.add(&self.d)
    }

    /// Poisson arrivals: `C = [-λ]`, `D = [λ]`.
    pub fn poisson(lambda: f64) -> Result<Self> {
        build_map(
            &Matrix::from_rows(&[[-lambda]])?,
            &Matrix::from_rows(&[[lambda]])?,
        )
    }
}

/// Builds and validates a MAP from its descriptor.
pub fn build_map(c: &Matrix, d: &Matrix) -> Result<MapProcess> {
    if !c.is_square() || !d.is_square() || c.rows() != d.rows() {
        return Err(Error::Structural(format!(
            "C ({}x{}) and D ({}x{}) must be square and of equal size",
            c.rows(),
            c.cols(),
            d.rows(),
            d.cols()
        )));
    }
    let m = c.rows();
    for i in 0..m {
        for j in 0..m {
            if d.get(i, j) < 0.0 {
                return Err(Error::Validation(format!(
                    "D has negative entry ({i}, {j}) = {}",
                    d.get(i, j)
                )));
            }
            if i != j && c.get(i, j) < 0.0 {
                return Err(Error::Validation(format!(
                    "C has negative off-diagonal entry ({i}, {j}) = {}",
                    c.get(i, j)
                )));
            }
        }
        if c.get(i, i) >= 0.0 {
            return Err(Error::Validation(format!(
                "C diagonal entry ({i}, {i}) = {} must be negative",
                c.get(i, i)
            )));
        }
    }
    let q = c.add(d);
    let scale = q.max_abs().max(1.0);
    for (i, s) in q.row_sums().iter().enumerate() {
        if s.abs() > STRUCTURAL_TOL * scale {
            return Err(Error::Validation(format!(
                "(C + D) row {i} sums to {s}, expected 0"
            )));
        }
    }
    let gamma = stationary_vector(&q)?;
    let lambda = gamma.mul_mat(d).sum();
    if lambda <= 0.0 {
        return Err(Error::Validation(
            "MAP has zero arrival rate (D = 0)".into(),
        ));
    }
    Ok(MapProcess {
        c: c.clone(),
        d: d.clone(),
        gamma,
        lambda,
    })
}

/// Phase-type distribution with representation `(α, T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhDistribution {
    alpha: Vector,
    t: Matrix,
    t0: Vector,
    neg_inv: Matrix,
    mu: f64,
    tau: Vector,
    residual_mean: f64,
}

impl PhDistribution {
    pub fn alpha(&self) -> &Vector {
        &self.alpha
    }

    pub fn t(&self) -> &Matrix {
        &self.t
    }

    /// Exit-rate vector `T⁰ = -Te`.
    pub fn t0(&self) -> &Vector {
        &self.t0
    }

    /// `(-T)^{-1}`.
    pub fn neg_inv(&self) -> &Matrix {
        &self.neg_inv
    }

    /// Service rate, the reciprocal of the mean `α(-T)^{-1}e`.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn mean(&self) -> f64 {
        1.0 / self.mu
    }

    /// Stationary vector of `T + T⁰α`; initial vector of the residual service time.
    pub fn tau(&self) -> &Vector {
        &self.tau
    }

    /// Mean residual service time `τ(-T)^{-1}e`.
    pub fn residual_mean(&self) -> f64 {
        self.residual_mean
    }

    pub fn order(&self) -> usize {
        self.t.rows()
    }

    /// `T + T⁰α`.
    pub fn renewal_generator(&self) -> Matrix {
        self.t.add(&kron(
            &Matrix::column_matrix(&self.t0),
            &Matrix::row_matrix(&self.alpha),
        ))
    }

    pub fn exponential(mu: f64) -> Result<Self> {
        build_ph(&Vector::from(vec![1.0]), &Matrix::from_rows(&[[-mu]])?)
    }

    /// `m`-phase Erlang with per-phase rate `eta` (mean `m / eta`).
    pub fn erlang(m: usize, eta: f64) -> Result<Self> {
        if m == 0 {
            return Err(Error::Validation("Erlang order must be >= 1".into()));
        }
        let mut t = Matrix::zeros(m, m);
        for i in 0..m {
            t.set(i, i, -eta);
            if i + 1 < m {
                t.set(i, i + 1, eta);
            }
        }
        build_ph(&Vector::unit(0, m), &t)
    }

    /// Same shape, time rescaled so the service rate becomes `mu`.
    pub fn with_rate(&self, mu: f64) -> Result<Self> {
        build_ph(&self.alpha, &self.t.scale(mu / self.mu))
    }
}

/// Builds and validates a PH distribution.
pub fn build_ph(alpha: &Vector, t: &Matrix) -> Result<PhDistribution> {
    if !t.is_square() || alpha.len() != t.rows() {
        return Err(Error::Structural(format!(
            "alpha has length {} but T is {}x{}",
            alpha.len(),
            t.rows(),
            t.cols()
        )));
    }
    if let Some(i) = alpha.iter().position(|&a| a < 0.0 || !a.is_finite()) {
        return Err(Error::Validation(format!(
            "alpha entry {i} = {} is not a probability",
            alpha[i]
        )));
    }
    if (alpha.sum() - 1.0).abs() > STRUCTURAL_TOL {
        return Err(Error::Validation(format!(
            "alpha sums to {}, expected 1",
            alpha.sum()
        )));
    }
    validate_subgenerator(t)?;
    let t0 = t.row_sums().scale(-1.0);
    let scale = t.max_abs().max(1.0);
    let mut t0v = t0.into_vec();
    for (i, v) in t0v.iter_mut().enumerate() {
        if *v < -STRUCTURAL_TOL * scale {
            return Err(Error::Validation(format!(
                "exit rate T0[{i}] = {v} is negative"
            )));
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let t0 = Vector::from(t0v);
    if t0.iter().all(|&v| v <= 0.0) {
        return Err(Error::Validation(
            "exit vector T0 is identically zero".into(),
        ));
    }
    let neg_inv = neg_inverse(t)?;
    let mean = alpha.mul_mat(&neg_inv).sum();
    let renewal = t.add(&kron(
        &Matrix::column_matrix(&t0),
        &Matrix::row_matrix(alpha),
    ));
    let tau = stationary_vector(&renewal).map_err(|e| match e {
        Error::Structural(_) => Error::Structural("T + T0 alpha is reducible".into()),
        other => other,
    })?;
    let residual_mean = tau.mul_mat(&neg_inv).sum();
    Ok(PhDistribution {
        alpha: alpha.clone(),
        t: t.clone(),
        t0,
        neg_inv,
        mu: 1.0 / mean,
        tau,
        residual_mean,
    })
}

/// Full parameter bundle of a supermarket model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    map: MapProcess,
    ph: PhDistribution,
    d: u32,
    rho: f64,
    theta: f64,
    omega: f64,
    psi: f64,
    gamma_root: Vector,
    alpha_root: Vector,
}

impl ModelParams {
    pub fn map(&self) -> &MapProcess {
        &self.map
    }

    pub fn ph(&self) -> &PhDistribution {
        &self.ph
    }

    /// Number of sampled servers per arrival.
    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// `1 / (γ^{⊙1/d} e)`.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// `1 / (α^{⊙1/d} e)`.
    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// `τ^{⊙d} e`.
    pub fn psi(&self) -> f64 {
        self.psi
    }

    pub fn lambda(&self) -> f64 {
        self.map.lambda
    }

    pub fn mu(&self) -> f64 {
        self.ph.mu
    }

    /// `γ^{⊙1/d}`.
    pub fn gamma_root(&self) -> &Vector {
        &self.gamma_root
    }

    /// `α^{⊙1/d}`.
    pub fn alpha_root(&self) -> &Vector {
        &self.alpha_root
    }

    /// MAP order `m_A`.
    pub fn m_a(&self) -> usize {
        self.map.order()
    }

    /// PH order `m_B`.
    pub fn m_b(&self) -> usize {
        self.ph.order()
    }

    pub fn is_poisson(&self) -> bool {
        self.m_a() == 1
    }

    /// Same arrivals and service, different choice count.
    pub fn with_d(&self, d: u32) -> Result<Self> {
        build_params(self.map.clone(), self.ph.clone(), d)
    }
}

/// Derives `ρ, θ, ω, ψ`; rejects unstable models.
pub fn build_params(map: MapProcess, ph: PhDistribution, d: u32) -> Result<ModelParams> {
    if d == 0 || d > MAX_CHOICES {
        return Err(Error::Validation(format!(
            "d = {d} must lie in 1..={MAX_CHOICES}"
        )));
    }
    let rho = map.lambda / ph.mu;
    if rho.is_nan() || rho >= 1.0 {
        return Err(Error::Stability { rho });
    }
    let gamma_root = hadamard_root(&map.gamma, d)?;
    let alpha_root = hadamard_root(&ph.alpha, d)?;
    let theta = 1.0 / gamma_root.sum();
    let omega = 1.0 / alpha_root.sum();
    let psi = hadamard_power(&ph.tau, d).sum();
    Ok(ModelParams {
        map,
        ph,
        d,
        rho,
        theta,
        omega,
        psi,
        gamma_root,
        alpha_root,
    })
}

/// The two-phase MAP used as the worked example throughout: `C = [[-10, 7], [4, -9]]`,
/// `D = [[1, 2], [3, 2]]`, with `γ = (7/16, 9/16)` and `λ = 33/8`.
/// Random irreducible MAP of order `m_a` and PH of order `m_b` with all
/// rates in `[0.1, 2]`, rescaled so that the load equals `rho`.
pub fn random_params<R: rand::Rng>(
    rng: &mut R,
    m_a: usize,
    m_b: usize,
    rho: f64,
    d: u32,
) -> Result<ModelParams> {
    let mut c = Matrix::zeros(m_a, m_a);
    let mut dm = Matrix::zeros(m_a, m_a);
    for i in 0..m_a {
        let mut out = 0.0;
        for l in 0..m_a {
            let x = rng.random_range(0.1..2.0);
            dm.set(i, l, x);
            out += x;
            if l != i {
                let y = rng.random_range(0.1..2.0);
                c.set(i, l, y);
                out += y;
            }
        }
        c.set(i, i, -out);
    }
    let map = build_map(&c, &dm)?;

    let weights: Vec<f64> = (0..m_b).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let alpha = Vector::from(weights.iter().map(|w| w / total).collect::<Vec<_>>());
    let mut t = Matrix::zeros(m_b, m_b);
    for j in 0..m_b {
        let mut out = rng.random_range(0.1..2.0);
        for l in 0..m_b {
            if l != j {
                let y = rng.random_range(0.1..2.0);
                t.set(j, l, y);
                out += y;
            }
        }
        t.set(j, j, -out);
    }
    let ph = build_ph(&alpha, &t)?.with_rate(map.lambda() / rho)?;
    build_params(map, ph, d)
}

pub fn example_map() -> MapProcess {
    build_map(
        &Matrix::from_rows(&[[-10.0, 7.0], [4.0, -9.0]]).unwrap(),
        &Matrix::from_rows(&[[1.0, 2.0], [3.0, 2.0]]).unwrap(),
    )
    .expect("example MAP is valid")
}

/// JSON model schema: `{"map": {"C": [[..]], "D": [[..]]}, "ph": {"alpha": [..], "T": [[..]]}, "d": 2}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub map: MapSpec,
    pub ph: PhSpec,
    pub d: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    pub d: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhSpec {
    pub alpha: Vec<f64>,
    #[serde(rename = "T")]
    pub t: Vec<Vec<f64>>,
}

impl ModelSpec {
    pub fn build_map(&self) -> Result<MapProcess> {
        build_map(
            &Matrix::from_rows(&self.map.c)?,
            &Matrix::from_rows(&self.map.d)?,
        )
    }

    pub fn build_ph(&self) -> Result<PhDistribution> {
        build_ph(
            &Vector::try_new(self.ph.alpha.clone())?,
            &Matrix::from_rows(&self.ph.t)?,
        )
    }

    pub fn build(&self) -> Result<ModelParams> {
        build_params(self.build_map()?, self.build_ph()?, self.d)
    }

    pub fn from_parts(map: &MapProcess, ph: &PhDistribution, d: u32) -> Self {
        ModelSpec {
            map: MapSpec {
                c: map.c.to_rows(),
                d: map.d.to_rows(),
            },
            ph: PhSpec {
                alpha: ph.alpha.as_slice().to_vec(),
                t: ph.t.to_rows(),
            },
            d,
        }
    }
}
