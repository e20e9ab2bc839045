//! Benchmark fixtures.

use supermarket_core::model::example_map;
use supermarket_core::{build_params, ModelParams, PhDistribution};

/// Example MAP with Erlang-`m` service at rate `mu` and `d` choices.
pub fn example_params(m: usize, mu: f64, d: u32) -> ModelParams {
    let ph = PhDistribution::erlang(m, m as f64 * mu).expect("valid Erlang");
    build_params(example_map(), ph, d).expect("stable example")
}
