//! Truncated mean-field ODE for the fraction vector `S(t) = (S_0, S_1, …, S_K)`.

use crate::error::{Error, Result};
use crate::fixed_point::FixedPoint;
use crate::linalg::{hadamard_power, kron, Matrix, Vector};
use crate::model::ModelParams;

/// Default RK4 step in service-time units.
pub const DEFAULT_STEP: f64 = 1e-3;
/// Overshoots outside `[0, 1]` smaller than this are clamped; larger ones abort.
pub const CLAMP_TOL: f64 = 1e-9;
/// Tail mass used to pick the default truncation level.
pub const DEFAULT_ODE_TAIL: f64 = 1e-12;

/// Fraction of queues with at least `k` customers, split by MAP phase
/// (level 0) or by MAP phase and service phase (levels `1..=K`).
#[derive(Debug, Clone, PartialEq)]
pub struct FractionVector {
    s0: Vector,
    levels: Vec<Vector>,
    t: f64,
}

impl FractionVector {
    pub fn new(s0: Vector, levels: Vec<Vector>, t: f64) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Config(
                "fraction vector needs at least one level".into(),
            ));
        }
        let width = levels[0].len();
        if width == 0
            || !width.is_multiple_of(s0.len().max(1))
            || levels.iter().any(|l| l.len() != width)
        {
            return Err(Error::Structural(format!(
                "level widths must all be a multiple of |S_0| = {}",
                s0.len()
            )));
        }
        Ok(FractionVector { s0, levels, t })
    }

    /// No customers: `S_0 = γ`, every other level zero.
    pub fn empty(params: &ModelParams, k_max: usize) -> Result<Self> {
        let width = params.m_a() * params.m_b();
        FractionVector::new(
            params.map().gamma().clone(),
            vec![Vector::zeros(width); k_max],
            0.0,
        )
    }

    /// The first `k_max + 1` levels of a fixed point.
    pub fn from_fixed_point(fp: &FixedPoint, k_max: usize) -> Result<Self> {
        FractionVector::new(
            fp.pi0().clone(),
            (1..=k_max).map(|k| fp.level(k)).collect(),
            0.0,
        )
    }

    pub fn s0(&self) -> &Vector {
        &self.s0
    }

    pub fn levels(&self) -> &[Vector] {
        &self.levels
    }

    /// `S_k` for `0 <= k <= K`; zero beyond `K`.
    pub fn level(&self, k: usize) -> Vector {
        match k {
            0 => self.s0.clone(),
            k if k <= self.levels.len() => self.levels[k - 1].clone(),
            _ => Vector::zeros(self.width()),
        }
    }

    pub fn k_max(&self) -> usize {
        self.levels.len()
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.t = t;
        self
    }

    /// `m_A · m_B`.
    pub fn width(&self) -> usize {
        self.levels[0].len()
    }

    /// `|S_0 e - 1|`.
    pub fn drift(&self) -> f64 {
        (self.s0.sum() - 1.0).abs()
    }

    /// Largest entry of `|self - other|` over all levels.
    pub fn max_abs_diff(&self, other: &FractionVector) -> f64 {
        let k = self.k_max().max(other.k_max());
        (0..=k)
            .map(|i| self.level(i).sub(&other.level(i)).max_abs())
            .fold(0.0, f64::max)
    }

    fn zip_blocks(&self, other: &Self, f: impl Fn(&Vector, &Vector) -> Vector) -> Self {
        FractionVector {
            s0: f(&self.s0, &other.s0),
            levels: self
                .levels
                .iter()
                .zip(&other.levels)
                .map(|(a, b)| f(a, b))
                .collect(),
            t: self.t,
        }
    }

    fn axpy(&self, a: f64, dir: &Self) -> Self {
        self.zip_blocks(dir, |x, y| lin(x, a, y))
    }
}

fn lin(x: &Vector, a: f64, y: &Vector) -> Vector {
    let mut out = x.clone();
    out.axpy(a, y);
    out
}

/// How the level-0 equation is closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum S0Closure {
    /// `dS_0/dt` with its mass component removed: `f - (f e) S_0`.
    #[default]
    Projected,
    /// `dS_0/dt = S_0^{⊙d} C + S_1 (I ⊗ T⁰)` literally.
    AsWritten,
}

/// Block operators of the vector field, built once per model.
#[derive(Debug, Clone)]
pub struct OdeSystem {
    d: u32,
    c: Matrix,
    c_i: Matrix,
    d_i: Matrix,
    d_alpha: Matrix,
    i_t: Matrix,
    i_t0: Matrix,
    i_t0_alpha: Matrix,
    closure: S0Closure,
}

impl OdeSystem {
    pub fn new(params: &ModelParams, closure: S0Closure) -> Self {
        let map = params.map();
        let ph = params.ph();
        let ia = Matrix::identity(params.m_a());
        let ib = Matrix::identity(params.m_b());
        let t0 = Matrix::column_matrix(ph.t0());
        let alpha = Matrix::row_matrix(ph.alpha());
        OdeSystem {
            d: params.d(),
            c: map.c().clone(),
            c_i: kron(map.c(), &ib),
            d_i: kron(map.d(), &ib),
            d_alpha: kron(map.d(), &alpha),
            i_t: kron(&ia, ph.t()),
            i_t0: kron(&ia, &t0),
            i_t0_alpha: kron(&ia, &t0.mul(&alpha)),
            closure,
        }
    }

    pub fn closure(&self) -> S0Closure {
        self.closure
    }

    fn check_shape(&self, s: &FractionVector) -> Result<()> {
        if s.s0.len() != self.c.rows() || s.width() != self.c_i.rows() {
            return Err(Error::Structural(format!(
                "state has |S_0| = {}, width {}; model needs {} and {}",
                s.s0.len(),
                s.width(),
                self.c.rows(),
                self.c_i.rows()
            )));
        }
        Ok(())
    }

    /// Right-hand side with closure `S_{K+1} = 0`.
    pub fn derivative(&self, s: &FractionVector) -> FractionVector {
        let k_max = s.k_max();
        let powd: Vec<Vector> = s.levels.iter().map(|l| hadamard_power(l, self.d)).collect();
        let s0d = hadamard_power(&s.s0, self.d);

        let mut ds0 = s0d.mul_mat(&self.c).add(&s.levels[0].mul_mat(&self.i_t0));
        if self.closure == S0Closure::Projected {
            let mass = ds0.sum();
            ds0.axpy(-mass, &s.s0);
        }

        let mut out = Vec::with_capacity(k_max);
        for k in 1..=k_max {
            let cur = &s.levels[k - 1];
            let inflow = if k == 1 {
                s0d.mul_mat(&self.d_alpha)
            } else {
                powd[k - 2].mul_mat(&self.d_i)
            };
            let mut dk = inflow
                .add(&powd[k - 1].mul_mat(&self.c_i))
                .add(&cur.mul_mat(&self.i_t));
            if k < k_max {
                dk = dk.add(&s.levels[k].mul_mat(&self.i_t0_alpha));
            }
            out.push(dk);
        }
        FractionVector {
            s0: ds0,
            levels: out,
            t: s.t,
        }
    }

    fn rk4_step(&self, s: &FractionVector, h: f64) -> FractionVector {
        let k1 = self.derivative(s);
        let k2 = self.derivative(&s.axpy(h / 2.0, &k1));
        let k3 = self.derivative(&s.axpy(h / 2.0, &k2));
        let k4 = self.derivative(&s.axpy(h, &k3));
        let incr = k1
            .zip_blocks(&k2, |a, b| lin(a, 2.0, b))
            .zip_blocks(&k3, |a, b| lin(a, 2.0, b))
            .zip_blocks(&k4, |a, b| a.add(b));
        s.axpy(h / 6.0, &incr)
    }
}

/// Vector field at `s` under the default [`S0Closure::Projected`] closure.
pub fn derivative(s: &FractionVector, params: &ModelParams) -> Result<FractionVector> {
    let sys = OdeSystem::new(params, S0Closure::default());
    sys.check_shape(s)?;
    Ok(sys.derivative(s))
}

/// Levels needed so that the closed-form tail is below [`DEFAULT_ODE_TAIL`].
pub fn default_truncation(fp: &FixedPoint) -> usize {
    fp.certified_truncation(DEFAULT_ODE_TAIL).max(2)
}

/// Time-ordered snapshots of an integration run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    snapshots: Vec<FractionVector>,
    step: f64,
    drift_log: Vec<f64>,
}

impl Trajectory {
    pub fn snapshots(&self) -> &[FractionVector] {
        &self.snapshots
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// `|S_0 e - 1|` per snapshot.
    pub fn drift_log(&self) -> &[f64] {
        &self.drift_log
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> &FractionVector {
        self.snapshots.last().expect("trajectory is never empty")
    }

    pub fn max_drift(&self) -> f64 {
        self.drift_log.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    pub t_end: f64,
    pub step: f64,
    /// Record every this many steps; the final state is always recorded.
    pub snapshot_every: usize,
    pub closure: S0Closure,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            t_end: 10.0,
            step: DEFAULT_STEP,
            snapshot_every: 1,
            closure: S0Closure::Projected,
        }
    }
}

fn clamp_unit(s: &mut FractionVector, t: f64) -> Result<()> {
    let fix = |v: &mut Vector, what: &str| -> Result<()> {
        for (i, x) in v.as_mut_slice().iter_mut().enumerate() {
            if !x.is_finite() {
                return Err(Error::IntegrationBlowUp {
                    t,
                    reason: format!("{what}[{i}] is {x}"),
                });
            }
            if *x < 0.0 {
                if *x < -CLAMP_TOL {
                    return Err(Error::IntegrationBlowUp {
                        t,
                        reason: format!("{what}[{i}] = {x} < 0"),
                    });
                }
                *x = 0.0;
            } else if *x > 1.0 {
                if *x > 1.0 + CLAMP_TOL {
                    return Err(Error::IntegrationBlowUp {
                        t,
                        reason: format!("{what}[{i}] = {x} > 1"),
                    });
                }
                *x = 1.0;
            }
        }
        Ok(())
    };
    fix(&mut s.s0, "S_0")?;
    for (k, l) in s.levels.iter_mut().enumerate() {
        fix(l, &format!("S_{}", k + 1))?;
    }
    Ok(())
}

/// Classical RK4 from `start` to `t_end` with fixed `step`, snapshotting every step.
pub fn integrate(
    start: &FractionVector,
    params: &ModelParams,
    t_end: f64,
    step: f64,
) -> Result<Trajectory> {
    integrate_with(
        start,
        params,
        &IntegrateOptions {
            t_end,
            step,
            ..IntegrateOptions::default()
        },
    )
}

pub fn integrate_with(
    start: &FractionVector,
    params: &ModelParams,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    if !(opts.step > 0.0 && opts.step.is_finite()) {
        return Err(Error::Config(format!(
            "step must be positive, got {}",
            opts.step
        )));
    }
    if !(opts.t_end >= 0.0 && opts.t_end.is_finite()) {
        return Err(Error::Config(format!(
            "t_end must be non-negative, got {}",
            opts.t_end
        )));
    }
    if opts.snapshot_every == 0 {
        return Err(Error::Config("snapshot_every must be >= 1".into()));
    }
    let sys = OdeSystem::new(params, opts.closure);
    sys.check_shape(start)?;

    let t0 = start.t;
    let full_steps = (opts.t_end / opts.step * (1.0 + 1e-12)).floor() as usize;
    let remainder = opts.t_end - full_steps as f64 * opts.step;
    let total = full_steps + usize::from(remainder > 1e-12 * opts.step);

    let mut state = start.clone();
    let mut snapshots = vec![state.clone()];
    let mut drift_log = vec![state.drift()];
    for i in 1..=total {
        let (h, t) = if i <= full_steps {
            (opts.step, t0 + i as f64 * opts.step)
        } else {
            (remainder, t0 + opts.t_end)
        };
        state = sys.rk4_step(&state, h);
        state.t = t;
        clamp_unit(&mut state, t)?;
        if i % opts.snapshot_every == 0 || i == total {
            drift_log.push(state.drift());
            snapshots.push(state.clone());
        }
    }
    Ok(Trajectory {
        snapshots,
        step: opts.step,
        drift_log,
    })
}

/// Largest positive part of `S_k(t) - π_k` over all snapshots and levels `k >= 1`.
pub fn check_upper_bound(traj: &Trajectory, pi: &FixedPoint) -> f64 {
    traj.snapshots
        .iter()
        .flat_map(|s| {
            s.levels.iter().enumerate().map(move |(i, l)| {
                let bound = pi.level(i + 1);
                l.iter()
                    .zip(bound.iter())
                    .map(|(x, b)| x - b)
                    .fold(0.0, f64::max)
            })
        })
        .fold(0.0, f64::max)
}
