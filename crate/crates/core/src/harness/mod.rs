//! Experiment orchestration and reporting.

mod config;
mod discriminator;
mod pipeline;
mod report;
mod run;

pub use config::{EnvKind, ExperimentConfig, Method, Profile, ProfileSettings, SEED_ENV_VAR};
pub use discriminator::{discriminator_similarity, DiscriminatorConfig, SimilarityCurves};
pub use pipeline::{
    dataset_source, method_rng, prepare_task, random_baseline, run_method, sample_observed_states, train_expert,
    train_state_encoder, MethodOutcome, PreparedTask,
};
pub use report::{export_report, ReportFormat, RunReport, SeedResult, REPORT_SCHEMA_VERSION};
pub use run::{gridworld_deep_config, gridworld_parity_suite, is_continuous, run_experiment, run_gridworld_method, GridworldOutcome, ParityCase};
