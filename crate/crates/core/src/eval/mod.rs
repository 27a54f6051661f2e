//! Membership games, ROC metrics and per-seed report aggregation.

pub mod games;
pub mod roc;
pub mod summary;

pub use games::{run_record_game, run_user_game, sample_record_game, sample_user_game, RecordGame, UserGame};
pub use roc::{auc, roc_curve, tpr_at_fpr, RocCurve, RocPoint};
pub use summary::{aggregate_runs, AttackMetrics, MetricSummary, RunReport, Summary};
