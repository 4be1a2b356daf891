//! Training loop, evaluation metrics, binary one-vs-all mode, the
//! pair-baseline mode, multi-seed ensembling, length-bucket reports,
//! configuration, and the verification suite backing the CLI.

pub mod check;
pub mod config;
pub mod ensemble;
pub mod metrics;
pub mod report;
pub mod train;

pub use check::{run_verification_suite, verification_error, CheckOutcome};
pub use config::TrainConfig;
pub use ensemble::{ensemble_vote, run_ensemble, EnsembleReport};
pub use metrics::{evaluate, metrics_from_labels, predict_split, BucketMetrics, ClassScore, Metrics, SlotMetrics};
pub use report::{bucket_csv, emit_report, read_metrics, read_run_report, write_bucket_csv, write_metrics, write_run_report};
pub use train::{binary_mode_train, binary_positive_f1, prepare_embeddings, train, EpochRecord, RunReport};
