//! Co-optimization of robot design and control from scratch.
//!
//! Designs are mass-spring graphs simulated in a deterministic 2D world.
//! Every candidate design gets a freshly trained controller before it is
//! scored, and the library compares schedules that split a fixed step budget
//! between design search and controller retraining.

pub mod analysis;
pub mod budget;
pub mod controller;
pub mod engine;
pub mod error;
pub mod genome;
pub mod optimizers;
pub mod physics;
pub mod rng;

pub use analysis::{bootstrap_ci, BootstrapSettings, CurveBundle, Interval};
pub use budget::{effective_budget, BudgetLedger, ChargeCategory, ReductionConfig};
pub use controller::{train_controller, ControllerAlgorithm, ControllerParams, TrainingBudget, TrainingOutcome};
pub use engine::{
    improvement_probability, run_retrain_end, run_retrain_every_new_best, run_schedule, run_single_phase, EventKind,
    RunLog, RunRow, Schedule, ScheduleConfig,
};
pub use error::{Error, Result};
pub use genome::{complexity, mutate, random_genome, GenomeId, MorphologyGenome};
pub use optimizers::{CmaState, EsConfig};
pub use physics::{
    control_dim, simulate_episode, DeskEnvironment, Environment, EpisodeResult, MorphologyGraph, DEFAULT_DT,
};
pub use rng::{SeedTree, StreamKind};
