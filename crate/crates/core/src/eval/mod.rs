//! Ground truth and metrics: the brute-force allocation oracle, rate
//! deviation statistics, BD-rate and R-D curve assembly.

pub mod bdrate;
pub mod oracle;
pub mod policy;
pub mod stats;

pub use bdrate::{bd_rate, Pchip, RdPoint};
pub use oracle::{
    brute_force_allocate, evaluate_allocation, oracle_check, OracleReport, OracleSolution,
    TinyInstance, ORACLE_BOUND, ORACLE_REPORT_SCHEMA, ORACLE_STEP,
};
pub use policy::{build_rd_curve, evaluate_policy, EvalSummary, Evaluation, Policy, RD_QP_LEVELS};
pub use stats::{rate_deviation_stats, DeviationStats, RATE_TOLERANCE};
