//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use supermarket_core::model::{example_map, MapSpec, PhSpec};
use supermarket_core::{ModelSpec, PhDistribution};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    FixedPoint,
    Ode,
    Simulate,
    SojournCurve,
    Erlang,
    Kurtz,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::FixedPoint => "fixed_point",
            Experiment::Ode => "ode",
            Experiment::Simulate => "simulate",
            Experiment::SojournCurve => "sojourn_curve",
            Experiment::Erlang => "erlang",
            Experiment::Kurtz => "kurtz",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    #[default]
    WithReplacement,
    WithoutReplacement,
}

/// Experiment-specific parameters; unused fields are ignored by the other experiments.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// Truncation level.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    /// Keep every `thin`-th ODE snapshot in the CSV.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thin: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warmup: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_range: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_list: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampling: Option<SamplingMode>,
    /// Erlang order.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Erlang phase rate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Poisson arrival rate for the Erlang comparison.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Number of choices for the Erlang comparison.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub params: Params,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        ExperimentConfig {
            experiment,
            model: None,
            params: Params::default(),
            output_path: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn model(&self) -> Result<&ModelSpec, CliError> {
        self.model.as_ref().ok_or_else(|| {
            CliError::Config(format!(
                "experiment {} needs a model",
                self.experiment.name()
            ))
        })
    }

    /// Fills in the worked example: the two-phase MAP with exponential
    /// service, and for the sojourn curve `μ ∈ {5, 10, 20}`, `d = 1..=5`.
    pub fn apply_example_defaults(&mut self) {
        let mu = if self.experiment == Experiment::SojournCurve {
            5.0
        } else {
            10.0
        };
        let ph = PhDistribution::exponential(mu).expect("positive rate");
        let d = self.model.as_ref().map_or(2, |m| m.d);
        self.model = Some(ModelSpec::from_parts(&example_map(), &ph, d));
        if self.experiment == Experiment::SojournCurve {
            self.params
                .mu_list
                .get_or_insert_with(|| vec![5.0, 10.0, 20.0]);
            self.params.d_range.get_or_insert_with(|| (1..=5).collect());
        }
    }
}

/// Model spec for Poisson(`lambda`) arrivals and exponential(`mu`) service.
pub fn mm_spec(lambda: f64, mu: f64, d: u32) -> ModelSpec {
    ModelSpec {
        map: MapSpec {
            c: vec![vec![-lambda]],
            d: vec![vec![lambda]],
        },
        ph: PhSpec {
            alpha: vec![1.0],
            t: vec![vec![-mu]],
        },
        d,
    }
}
