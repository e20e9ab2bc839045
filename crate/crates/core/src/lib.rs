//! Mean-field analysis of the join-shortest-of-d supermarket model with
//! MAP arrivals and phase-type service.

pub mod error;
pub mod fixed_point;
pub mod linalg;
pub mod lyapunov;
pub mod model;
pub mod ode;
pub mod report;
pub mod sim;

pub use error::{Error, Result};
pub use fixed_point::{
    closed_form, decomposition, erlang_compare, expected_sojourn, poisson_ph_first,
    poisson_ph_second, residuals, ErlangRow, FixedPoint, ResidualReport, Variant,
};
pub use linalg::{Matrix, Vector};
pub use lyapunov::{decay_rate, lyapunov_phi, lyapunov_weights, Level0Ratio, LyapunovSeries};
pub use model::{
    build_map, build_params, build_ph, MapProcess, ModelParams, ModelSpec, PhDistribution,
};
pub use ode::{
    check_upper_bound, derivative, integrate, integrate_with, FractionVector, IntegrateOptions,
    S0Closure, Trajectory,
};
pub use sim::{
    kurtz_convergence, simulate, simulate_replications, KurtzRow, ReplicationSummary, Sampling,
    SimConfig, SimResult,
};
