//! Config-driven experiment runner: training loops, warm-up sweeps, target
//! loss ablations, smoothness diagnostics, schedule previews, and the
//! built-in verification suite.

mod config;
mod experiments;
mod policy;
mod run;
pub mod verify;

pub use config::{
    BatchIndexing, PreviewConfig, PreviewProfile, RunConfig, RunSection, SchedulerConfig,
    SchedulerKind,
};
pub use experiments::{
    diagnose, initial_gap, run_fstar_ablation, run_sweep, schedule_preview, write_ablation_csv,
    write_diagnosis_csv, write_preview_csv, write_sweep_csv, AblationRow, Diagnosis, PreviewRow,
    SweepRow, SweepSchedule, THREADS_ENV,
};
pub use run::{
    run_on, run_training, run_training_with, Outcome, RunOptions, RunTrace, TraceHeader, TraceRow,
    DIVERGENCE_THRESHOLD,
};
