//! Experiment orchestration: phase configs, the interaction loop, metrics
//! and the cross-validation, masking and sweep experiments.

pub mod config;
pub mod experiments;
pub mod metrics;
pub mod runner;

use thiserror::Error;

use crate::agent::AgentError;
use crate::corpus::CorpusError;
use crate::render::RenderError;
use crate::world::WorldError;

pub use config::{DataSource, Phase, PhaseConfig};
pub use experiments::{
    derive_seed, evaluate_config, features_csv, parse_tap, run_losocv, run_losocv_dir, run_mask_experiment, run_phase,
    run_sweep, starting_agent, sweep_csv, tap_token, FoldReport, LosocvReport, MaskReport, PhaseOutcome, SweepCell,
    SweepRow, SWEEP_HEADER,
};
pub use metrics::{metrics_csv, Confusion, Metrics, MetricsRow, METRICS_HEADER};
pub use runner::{evaluate, row_from, run_loop, EvalReport, LoopOutcome, LoopPlan};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
