//! Discrete-event simulation of the finite-`n` supermarket system.
//!
//! One global MAP drives arrivals at rates `(nC, nD)`; each busy server
//! runs its own PH clock. Every clock is exponential, so the next event is
//! drawn from a single rate race.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fixed_point::closed_form;
use crate::model::ModelParams;
use crate::ode::{
    default_truncation, integrate_with, FractionVector, IntegrateOptions, DEFAULT_STEP,
};

/// Number of batches used for the within-run sojourn confidence interval.
pub const SOJOURN_BATCHES: usize = 20;
// Two-sided 97.5% Student t quantile with 19 degrees of freedom.
const T_975_19: f64 = 2.093;

/// How the `d` candidate servers are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sampling {
    #[default]
    WithReplacement,
    WithoutReplacement,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub horizon: f64,
    pub warmup: f64,
    pub seed: u64,
    pub sampling: Sampling,
}

impl SimConfig {
    fn validate(&self, d: u32) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be >= 1".into()));
        }
        if !(self.warmup >= 0.0 && self.warmup.is_finite()) {
            return Err(Error::Config(format!(
                "warmup must be non-negative, got {}",
                self.warmup
            )));
        }
        if !(self.horizon > self.warmup && self.horizon.is_finite()) {
            return Err(Error::Config(format!(
                "horizon {} must exceed warmup {}",
                self.horizon, self.warmup
            )));
        }
        if self.sampling == Sampling::WithoutReplacement && d as usize > self.n {
            return Err(Error::Config(format!(
                "cannot sample {d} distinct servers out of {}",
                self.n
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum Move {
    To(usize),
    Arrive(usize),
    Complete,
}

#[derive(Debug, Clone, Default)]
struct SojournStats {
    sum: f64,
    count: u64,
    batch_sum: Vec<f64>,
    batch_count: Vec<u64>,
}

/// Event-driven state machine for one replication.
#[derive(Debug, Clone)]
pub struct Simulator {
    n: usize,
    d: u32,
    m_b: usize,
    sampling: Sampling,
    rng: ChaCha8Rng,
    clock: f64,
    pending: Option<f64>,
    map_phase: usize,
    queue: Vec<u32>,
    phase: Vec<usize>,
    slot: Vec<usize>,
    busy: Vec<Vec<usize>>,
    // counts[k-1][j]: servers with at least k customers in service phase j
    counts: Vec<Vec<u64>>,
    waiting: Vec<VecDeque<f64>>,
    window: (f64, f64),
    acc: Vec<Vec<f64>>,
    phase_time: Vec<f64>,
    sojourn: SojournStats,
    arrivals: u64,
    departures: u64,
    events: u64,
    map_out: Vec<f64>,
    map_moves: Vec<Vec<(f64, Move)>>,
    ph_out: Vec<f64>,
    ph_moves: Vec<Vec<(f64, Move)>>,
    alpha: Vec<f64>,
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, moves: &[(f64, T)], total: f64) -> T {
    let mut u = rng.random::<f64>() * total;
    for &(w, m) in moves {
        if u < w {
            return m;
        }
        u -= w;
    }
    moves
        .iter()
        .rev()
        .find(|(w, _)| *w > 0.0)
        .expect("positive total rate")
        .1
}

impl Simulator {
    /// Empty system at time 0 with the MAP phase drawn from its stationary law.
    /// Statistics are collected over `[warmup, horizon]`.
    pub fn new(params: &ModelParams, cfg: &SimConfig) -> Result<Self> {
        cfg.validate(params.d())?;
        if params.rho() >= 1.0 {
            return Err(Error::Stability { rho: params.rho() });
        }
        let map = params.map();
        let ph = params.ph();
        let (m_a, m_b) = (params.m_a(), params.m_b());

        let mut map_out = Vec::with_capacity(m_a);
        let mut map_moves = Vec::with_capacity(m_a);
        for i in 0..m_a {
            map_out.push(-map.c().get(i, i));
            let mut mv = Vec::new();
            for l in 0..m_a {
                if l != i && map.c().get(i, l) > 0.0 {
                    mv.push((map.c().get(i, l), Move::To(l)));
                }
                if map.d().get(i, l) > 0.0 {
                    mv.push((map.d().get(i, l), Move::Arrive(l)));
                }
            }
            map_moves.push(mv);
        }
        let mut ph_out = Vec::with_capacity(m_b);
        let mut ph_moves = Vec::with_capacity(m_b);
        for j in 0..m_b {
            ph_out.push(-ph.t().get(j, j));
            let mut mv = Vec::new();
            for l in 0..m_b {
                if l != j && ph.t().get(j, l) > 0.0 {
                    mv.push((ph.t().get(j, l), Move::To(l)));
                }
            }
            if ph.t0()[j] > 0.0 {
                mv.push((ph.t0()[j], Move::Complete));
            }
            ph_moves.push(mv);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let gamma: Vec<(f64, usize)> = map.gamma().iter().copied().zip(0..).collect();
        let map_phase = pick(&mut rng, &gamma, 1.0);

        Ok(Simulator {
            n: cfg.n,
            d: params.d(),
            m_b,
            sampling: cfg.sampling,
            rng,
            clock: 0.0,
            pending: None,
            map_phase,
            queue: vec![0; cfg.n],
            phase: vec![0; cfg.n],
            slot: vec![0; cfg.n],
            busy: vec![Vec::new(); m_b],
            counts: Vec::new(),
            waiting: vec![VecDeque::new(); cfg.n],
            window: (cfg.warmup, cfg.horizon),
            acc: Vec::new(),
            phase_time: vec![0.0; m_a],
            sojourn: SojournStats {
                batch_sum: vec![0.0; SOJOURN_BATCHES],
                batch_count: vec![0; SOJOURN_BATCHES],
                ..SojournStats::default()
            },
            arrivals: 0,
            departures: 0,
            events: 0,
            map_out,
            map_moves,
            ph_out,
            ph_moves,
            alpha: ph.alpha().as_slice().to_vec(),
        })
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn map_phase(&self) -> usize {
        self.map_phase
    }

    pub fn queue_lengths(&self) -> &[u32] {
        &self.queue
    }

    pub fn arrivals(&self) -> u64 {
        self.arrivals
    }

    pub fn departures(&self) -> u64 {
        self.departures
    }

    pub fn in_system(&self) -> u64 {
        self.queue.iter().map(|&q| q as u64).sum()
    }

    /// Fraction of servers with at least `k` customers in service phase `j`,
    /// as `[k-1][j]` for `k = 1..=max queue length`.
    pub fn service_phase_fractions(&self) -> Vec<Vec<f64>> {
        let n = self.n as f64;
        self.counts
            .iter()
            .map(|row| row.iter().map(|&c| c as f64 / n).collect())
            .collect()
    }

    fn map_rate(&self) -> f64 {
        self.n as f64 * self.map_out[self.map_phase]
    }

    fn service_rate(&self) -> f64 {
        self.busy
            .iter()
            .zip(&self.ph_out)
            .map(|(b, r)| b.len() as f64 * r)
            .sum()
    }

    /// Runs events up to and including time `target`; the pending event time
    /// is kept, so the event sequence does not depend on the targets used.
    pub fn advance_to(&mut self, target: f64) {
        loop {
            let next = match self.pending {
                Some(t) => t,
                None => {
                    let rate = self.map_rate() + self.service_rate();
                    let e: f64 = self.rng.sample(Exp1);
                    let t = self.clock + e / rate;
                    self.pending = Some(t);
                    t
                }
            };
            if next > target {
                self.accumulate(target);
                self.clock = target;
                return;
            }
            self.accumulate(next);
            self.clock = next;
            self.pending = None;
            self.fire();
        }
    }

    fn accumulate(&mut self, to: f64) {
        let lo = self.clock.max(self.window.0);
        let hi = to.min(self.window.1);
        if hi <= lo {
            return;
        }
        let dt = hi - lo;
        self.phase_time[self.map_phase] += dt;
        let base = self.map_phase * self.m_b;
        let width = self.phase_time.len() * self.m_b;
        while self.acc.len() < self.counts.len() {
            self.acc.push(vec![0.0; width]);
        }
        for (row, acc) in self.counts.iter().zip(self.acc.iter_mut()) {
            for (j, &c) in row.iter().enumerate() {
                if c > 0 {
                    acc[base + j] += c as f64 * dt;
                }
            }
        }
    }

    fn fire(&mut self) {
        self.events += 1;
        let map_rate = self.map_rate();
        let total = map_rate + self.service_rate();
        if self.rng.random::<f64>() * total < map_rate {
            let i = self.map_phase;
            match pick(&mut self.rng, &self.map_moves[i], self.map_out[i]) {
                Move::To(l) => self.map_phase = l,
                Move::Arrive(l) => {
                    self.arrive();
                    self.map_phase = l;
                }
                Move::Complete => unreachable!("MAP has no completions"),
            }
        } else {
            let weights: Vec<(f64, usize)> = self
                .busy
                .iter()
                .zip(&self.ph_out)
                .enumerate()
                .map(|(j, (b, r))| (b.len() as f64 * r, j))
                .collect();
            let svc = weights.iter().map(|w| w.0).sum();
            let j = pick(&mut self.rng, &weights, svc);
            let server = self.busy[j][self.rng.random_range(0..self.busy[j].len())];
            match pick(&mut self.rng, &self.ph_moves[j], self.ph_out[j]) {
                Move::To(l) => self.shift_phase(server, l),
                Move::Complete => self.complete(server),
                Move::Arrive(_) => unreachable!("PH has no arrivals"),
            }
        }
    }

    fn choose_server(&mut self) -> usize {
        let d = self.d as usize;
        let mut candidates: Vec<usize> = Vec::with_capacity(d);
        match self.sampling {
            Sampling::WithReplacement => {
                for _ in 0..d {
                    candidates.push(self.rng.random_range(0..self.n));
                }
                candidates.sort_unstable();
                candidates.dedup();
            }
            Sampling::WithoutReplacement => {
                candidates = rand::seq::index::sample(&mut self.rng, self.n, d).into_vec();
                candidates.sort_unstable();
            }
        }
        let shortest = candidates
            .iter()
            .map(|&s| self.queue[s])
            .min()
            .expect("d >= 1");
        candidates.retain(|&s| self.queue[s] == shortest);
        candidates[self.rng.random_range(0..candidates.len())]
    }

    fn draw_alpha(&mut self) -> usize {
        let alpha: Vec<(f64, usize)> = self.alpha.iter().copied().zip(0..).collect();
        pick(&mut self.rng, &alpha, 1.0)
    }

    fn count_mut(&mut self, k: usize) -> &mut Vec<u64> {
        while self.counts.len() < k {
            self.counts.push(vec![0; self.m_b]);
        }
        &mut self.counts[k - 1]
    }

    fn arrive(&mut self) {
        self.arrivals += 1;
        let s = self.choose_server();
        let q = self.queue[s] as usize;
        if q == 0 {
            let j = self.draw_alpha();
            self.phase[s] = j;
            self.slot[s] = self.busy[j].len();
            self.busy[j].push(s);
        }
        let j = self.phase[s];
        self.count_mut(q + 1)[j] += 1;
        self.queue[s] += 1;
        self.waiting[s].push_back(self.clock);
    }

    fn remove_busy(&mut self, s: usize) {
        let j = self.phase[s];
        let at = self.slot[s];
        self.busy[j].swap_remove(at);
        if let Some(&moved) = self.busy[j].get(at) {
            self.slot[moved] = at;
        }
    }

    fn shift_phase(&mut self, s: usize, l: usize) {
        let j = self.phase[s];
        for k in 1..=self.queue[s] as usize {
            self.counts[k - 1][j] -= 1;
            self.counts[k - 1][l] += 1;
        }
        self.remove_busy(s);
        self.phase[s] = l;
        self.slot[s] = self.busy[l].len();
        self.busy[l].push(s);
    }

    fn complete(&mut self, s: usize) {
        self.departures += 1;
        let arrived = self.waiting[s]
            .pop_front()
            .expect("busy server has a customer");
        self.record_sojourn(arrived);
        let q = self.queue[s] as usize;
        let j = self.phase[s];
        for k in 1..=q {
            self.counts[k - 1][j] -= 1;
        }
        self.remove_busy(s);
        self.queue[s] -= 1;
        if q > 1 {
            let l = self.draw_alpha();
            for k in 1..q {
                self.counts[k - 1][l] += 1;
            }
            self.phase[s] = l;
            self.slot[s] = self.busy[l].len();
            self.busy[l].push(s);
        }
    }

    fn record_sojourn(&mut self, arrived: f64) {
        let (lo, hi) = self.window;
        if arrived < lo || self.clock > hi {
            return;
        }
        let x = self.clock - arrived;
        self.sojourn.sum += x;
        self.sojourn.count += 1;
        let b = (((self.clock - lo) / (hi - lo)) * SOJOURN_BATCHES as f64) as usize;
        let b = b.min(SOJOURN_BATCHES - 1);
        self.sojourn.batch_sum[b] += x;
        self.sojourn.batch_count[b] += 1;
    }

    /// Runs to the horizon and summarizes the measurement window.
    pub fn finish(mut self, seed: u64) -> SimResult {
        let horizon = self.window.1;
        self.advance_to(horizon);
        let span = horizon - self.window.0;
        let n = self.n as f64;
        let tails: Vec<Vec<f64>> = self
            .acc
            .iter()
            .map(|row| row.iter().map(|x| x / (span * n)).collect())
            .collect();
        let phase_occupancy = self.phase_time.iter().map(|x| x / span).collect();

        let batch_means: Vec<f64> = self
            .sojourn
            .batch_sum
            .iter()
            .zip(&self.sojourn.batch_count)
            .filter(|(_, &c)| c > 0)
            .map(|(s, &c)| s / c as f64)
            .collect();
        let half_width = if batch_means.len() >= 2 {
            let b = batch_means.len() as f64;
            let m = batch_means.iter().sum::<f64>() / b;
            let var = batch_means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (b - 1.0);
            Some(T_975_19 * (var / b).sqrt())
        } else {
            None
        };
        SimResult {
            tails,
            phase_occupancy,
            m_b: self.m_b,
            sojourn_mean: (self.sojourn.count > 0)
                .then(|| self.sojourn.sum / self.sojourn.count as f64),
            sojourn_half_width: half_width,
            sojourn_count: self.sojourn.count,
            event_count: self.events,
            arrivals: self.arrivals,
            departures: self.departures,
            in_system: self.in_system(),
            seed,
            n: self.n,
            d: self.d,
        }
    }
}

/// Time-averaged statistics of one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// `[k-1][i·m_B + j]`: time average of `1{MAP phase = i}` times the
    /// fraction of servers with at least `k` customers in service phase `j`.
    pub tails: Vec<Vec<f64>>,
    /// Time fraction spent in each MAP phase (the level-0 entries).
    pub phase_occupancy: Vec<f64>,
    pub m_b: usize,
    pub sojourn_mean: Option<f64>,
    /// Batch-means 95% half width.
    pub sojourn_half_width: Option<f64>,
    pub sojourn_count: u64,
    pub event_count: u64,
    pub arrivals: u64,
    pub departures: u64,
    pub in_system: u64,
    pub seed: u64,
    pub n: usize,
    pub d: u32,
}

impl SimResult {
    /// Time-averaged fraction of servers with at least `k` customers.
    pub fn tail(&self, k: usize) -> f64 {
        match k {
            0 => 1.0,
            k if k <= self.tails.len() => self.tails[k - 1].iter().sum(),
            _ => 0.0,
        }
    }

    pub fn max_level(&self) -> usize {
        self.tails.len()
    }
}

/// One replication.
pub fn simulate(params: &ModelParams, cfg: &SimConfig) -> Result<SimResult> {
    Ok(Simulator::new(params, cfg)?.finish(cfg.seed))
}

/// Across-replication summary.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationSummary {
    pub runs: Vec<SimResult>,
    /// Mean of `tail(k)` over runs, `k = 0..=max_level`.
    pub tail_mean: Vec<f64>,
    pub tail_stderr: Vec<f64>,
    pub sojourn_mean: Option<f64>,
    pub sojourn_stderr: Option<f64>,
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// `reps` independent replications with seeds `cfg.seed + r`, run in parallel.
pub fn simulate_replications(
    params: &ModelParams,
    cfg: &SimConfig,
    reps: usize,
) -> Result<ReplicationSummary> {
    if reps == 0 {
        return Err(Error::Config("reps must be >= 1".into()));
    }
    cfg.validate(params.d())?;
    let runs: Vec<SimResult> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            simulate(
                params,
                &SimConfig {
                    seed: cfg.seed.wrapping_add(r),
                    ..*cfg
                },
            )
        })
        .collect::<Result<_>>()?;
    let levels = runs.iter().map(|r| r.max_level()).max().unwrap_or(0);
    let (mut tail_mean, mut tail_stderr) = (Vec::new(), Vec::new());
    for k in 0..=levels {
        let xs: Vec<f64> = runs.iter().map(|r| r.tail(k)).collect();
        let (m, se) = mean_stderr(&xs);
        tail_mean.push(m);
        tail_stderr.push(se);
    }
    let soj: Vec<f64> = runs.iter().filter_map(|r| r.sojourn_mean).collect();
    let (sojourn_mean, sojourn_stderr) = if soj.len() == runs.len() {
        let (m, se) = mean_stderr(&soj);
        (Some(m), Some(se))
    } else {
        (None, None)
    };
    Ok(ReplicationSummary {
        runs,
        tail_mean,
        tail_stderr,
        sojourn_mean,
        sojourn_stderr,
    })
}

/// Spacing of the time grid on which the simulated and ODE paths are compared.
pub const KURTZ_GRID: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct KurtzRow {
    pub n: usize,
    pub mean_distance: f64,
    pub stderr: f64,
    pub distances: Vec<f64>,
}

// Σ_i over the MAP phase of each level, as [k-1][j].
fn ode_marginals(s: &FractionVector, m_b: usize) -> Vec<Vec<f64>> {
    s.levels()
        .iter()
        .map(|l| {
            let mut out = vec![0.0; m_b];
            for (idx, x) in l.iter().enumerate() {
                out[idx % m_b] += x;
            }
            out
        })
        .collect()
}

fn marginal_distance(sim: &[Vec<f64>], ode: &[Vec<f64>], m_b: usize) -> f64 {
    let levels = sim.len().max(ode.len());
    let zero = vec![0.0; m_b];
    (0..levels)
        .flat_map(|k| {
            let a = sim.get(k).unwrap_or(&zero);
            let b = ode.get(k).unwrap_or(&zero);
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .collect::<Vec<_>>()
        })
        .fold(0.0, f64::max)
}

/// For each `n`, the mean over `reps` of `sup_{u <= t}` of the max-norm
/// distance between the simulated and ODE fractions of queues with at least
/// `k >= 1` customers per service phase, both started empty. The MAP phase is
/// summed out on both sides. Replication `r` uses seed `seed + r`.
pub fn kurtz_convergence(
    params: &ModelParams,
    n_list: &[usize],
    t: f64,
    reps: usize,
    seed: u64,
    sampling: Sampling,
) -> Result<Vec<KurtzRow>> {
    if reps == 0 {
        return Err(Error::Config("reps must be >= 1".into()));
    }
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) || n_list[0] == 0 {
        return Err(Error::Config(
            "n_list must be non-empty, positive and strictly increasing".into(),
        ));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Config(format!("t must be positive, got {t}")));
    }
    let m_b = params.m_b();
    let k_ode = default_truncation(&closed_form(params, None)?);
    let grid = (t / KURTZ_GRID).round() as usize;
    let every = (KURTZ_GRID / DEFAULT_STEP).round() as usize;
    let opts = IntegrateOptions {
        t_end: grid as f64 * KURTZ_GRID,
        step: DEFAULT_STEP,
        snapshot_every: every,
        ..Default::default()
    };
    let traj = integrate_with(&FractionVector::empty(params, k_ode)?, params, &opts)?;
    let ode: Vec<Vec<Vec<f64>>> = traj
        .snapshots()
        .iter()
        .map(|s| ode_marginals(s, m_b))
        .collect();

    let jobs: Vec<(usize, u64)> = n_list
        .iter()
        .flat_map(|&n| (0..reps as u64).map(move |r| (n, r)))
        .collect();
    let dists: Vec<f64> = jobs
        .par_iter()
        .map(|&(n, r)| {
            let cfg = SimConfig {
                n,
                horizon: t.max(f64::MIN_POSITIVE),
                warmup: 0.0,
                seed: seed.wrapping_add(r),
                sampling,
            };
            let mut sim = Simulator::new(params, &cfg)?;
            let mut sup = marginal_distance(&sim.service_phase_fractions(), &ode[0], m_b);
            for (g, target) in ode.iter().enumerate().skip(1) {
                sim.advance_to(g as f64 * KURTZ_GRID);
                sup = sup.max(marginal_distance(
                    &sim.service_phase_fractions(),
                    target,
                    m_b,
                ));
            }
            Ok(sup)
        })
        .collect::<Result<_>>()?;

    Ok(n_list
        .iter()
        .zip(dists.chunks(reps))
        .map(|(&n, ds)| {
            let (m, se) = mean_stderr(ds);
            KurtzRow {
                n,
                mean_distance: m,
                stderr: se,
                distances: ds.to_vec(),
            }
        })
        .collect())
}
