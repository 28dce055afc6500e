//! Error metrics, experiment runner and report serialization.

pub mod metrics;
pub mod report;
pub mod runner;
pub mod sweep;

pub use metrics::{delta_vs_oracle, mae, mean_std, optimal_neighbor_rank, rank_of, rmse, RankRecord};
pub use report::{AggregateRow, Deltas, EvalReport, HorizonRow, RunRow, ScalableStats, Setting, CSV_HEADER};
pub use runner::{
    cluster_variables, ideal_member, ideal_neighbor_mrr, mean_reciprocal_rank, run_experiment, DrawOutcome,
    Experiment, ScalableIndex,
};
pub use sweep::{run_sweep, SweepGrid, SweepReport, SweepRow, SWEEP_CSV_HEADER};
