//! Experiment configuration: schema-validated TOML in, resolved JSON echo
//! out. Unknown keys are rejected; flags override config values, which
//! override defaults.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use qdspace::engine::{Algorithm, EngineConfig};
use qdspace::problems::ProblemParams;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Registry name: rastrigin | int-rastrigin | sk | labs.
    pub problem: String,
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub problem_params: ProblemSection,
    pub engine: EngineSection,
}

fn default_output() -> PathBuf {
    PathBuf::from("run")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemSection {
    pub dimension: usize,
    pub amplitude: f64,
    pub domain: [f64; 2],
    pub lambda: u32,
    /// Coupling seed for `sk`; defaults to the run seed.
    pub instance_seed: Option<u64>,
}

impl Default for ProblemSection {
    fn default() -> Self {
        Self {
            dimension: 2,
            amplitude: 10.0,
            domain: [-2.0, 3.0],
            lambda: 100,
            instance_seed: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSection {
    pub landmarks: usize,
    /// Defaults to `ceil(L ln L)`.
    #[serde(default)]
    pub initial_states: Option<usize>,
    pub rank_cutoff: usize,
    pub eval_budget: usize,
    pub max_effort: usize,
    #[serde(default = "default_algorithm")]
    pub algorithm: String,
    #[serde(default)]
    pub baseline_bandwidth: Option<f64>,
    #[serde(default = "default_true")]
    pub metric_is_euclidean: bool,
    #[serde(default)]
    pub variance_normalization: bool,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_algorithm() -> String {
    "full".to_string()
}

fn default_true() -> bool {
    true
}

fn default_workers() -> usize {
    1
}

impl ExperimentConfig {
    pub fn parse_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    /// Fills derived defaults in place so the echoed config is complete.
    pub fn resolve(&mut self) {
        if self.engine.initial_states.is_none() {
            self.engine.initial_states =
                Some(EngineConfig::default_initial_states(self.engine.landmarks));
        }
        if self.problem_params.instance_seed.is_none() {
            self.problem_params.instance_seed = Some(self.seed);
        }
    }

    pub fn engine_config(&self) -> Result<EngineConfig, String> {
        let algorithm = match self.engine.algorithm.as_str() {
            "full" => Algorithm::Full,
            "baseline" => Algorithm::Baseline,
            other => return Err(format!("unknown algorithm '{other}' (full | baseline)")),
        };
        let initial_states = self
            .engine
            .initial_states
            .unwrap_or_else(|| EngineConfig::default_initial_states(self.engine.landmarks));
        Ok(EngineConfig {
            landmark_count: self.engine.landmarks,
            initial_states,
            rank_cutoff: self.engine.rank_cutoff,
            eval_budget: self.engine.eval_budget,
            max_effort: self.engine.max_effort,
            seed: self.seed,
            metric_is_euclidean: self.engine.metric_is_euclidean,
            algorithm,
            baseline_bandwidth: self.engine.baseline_bandwidth,
            variance_normalization: self.engine.variance_normalization,
            workers: self.engine.workers,
        })
    }

    pub fn problem_params(&self) -> ProblemParams {
        ProblemParams {
            dimension: self.problem_params.dimension,
            amplitude: self.problem_params.amplitude,
            domain: (self.problem_params.domain[0], self.problem_params.domain[1]),
            lambda: self.problem_params.lambda,
            instance_seed: self.problem_params.instance_seed.unwrap_or(self.seed),
        }
    }
}
