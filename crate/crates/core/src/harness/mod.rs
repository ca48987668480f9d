//! Experiment plumbing: configuration, scenarios, closed-loop rollouts and
//! the experiment suite.

pub mod config;
pub mod experiments;
pub mod model;
pub mod rollout;
pub mod scenario;

pub use config::{ExperimentConfig, NetConfig, PathsConfig, PriceConfig, ScenarioKind, TrainingConfig};
pub use rollout::{
    evaluate_agent, evaluate_agent_traced, run_day, run_growing_batch, BauAgent, Controller, DailyRow, DayLog, Episode,
    GrowingRun, MpcAgent, Planner, QAgent, RunResult,
};
pub use scenario::Scenario;
pub use experiments::{
    evaluate_ladders, experiment1, fixed_batch_study, make_fixed_batches, mean_std, parse_experiments, reference_runs, run_experiment_suite, CostSummary,
    Failure, SuiteOutput,
};
pub use model::SavedModel;
