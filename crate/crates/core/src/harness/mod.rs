//! Experiment driver: configs, seeded runs, checkpoints, transfer
//! evaluation, sweeps and reports.

pub mod checkpoint;
pub mod config;
pub mod experiment;
pub mod record;
pub mod report;
pub mod sweep;
pub mod transfer;

pub use checkpoint::{Checkpoint, RngState, CHECKPOINT_VERSION};
pub use config::{split_assignment, ExperimentConfig, PolicyKind};
pub use experiment::{
    aggregate, build_actor, mean_stderr, run_experiment, run_seed, seed_dir, worker_cap, AggregateRow, ExperimentResult,
    SeedOutcome, Trainer, THREADS_ENV,
};
pub use record::{code_version, final_window, RunRecord, UpdateRow, RECORD_HEADER};
pub use report::{export_report, load_runs, parse_report_csv, report_csv, report_svg, smooth, ReportFormat, Series, SMOOTHING_WINDOW};
pub use sweep::{expand, run_sweep, SummaryRow, SweepAxis, SweepPoint, SweepResult};
pub use transfer::{transfer_eval, TransferRow};
