//! Frank-Wolfe policy optimization over rate-critic feasible sets, and the
//! training driver shared with the comparison methods.

pub mod agent;
pub mod ops;
pub mod run;
pub mod trainer;

pub use agent::{ActorRule, Agent};
pub use ops::{
    actor_loss_and_gradient, actor_update, direction_for_gradient, feasible_set, fw_direction,
    project, projection_layer_gradient, reference_action, zero_gradient_probe, DeltaGrid,
    FeasibleSet,
};
pub use run::{
    train_nfwpo, train_with_rule, write_metrics_csv, RunOptions, TrainingReport, TrainingRun,
    DIVERGED_CHECKPOINT, FINAL_CHECKPOINT, METRICS_COLUMNS, METRICS_SCHEMA, REPORT_SCHEMA,
};
pub use trainer::{EpisodeMetrics, FwUpdate, InvariantCounters, TrainEvent, Trainer};
