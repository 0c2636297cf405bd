//! Experiment harness: scenario configuration, the commands behind the
//! CLI subcommands, and result consolidation.

mod commands;
mod config;
mod report;

pub use commands::{
    cmd_fit_transform, cmd_injection_sweep, cmd_patchify, cmd_perfect_knowledge, cmd_synth,
    cmd_train, cmd_transform_sweep, cmd_zero_knowledge, InjectionSweepRow, OutputLock,
    PatchifySummary, RunPaths, Scenario, ScenarioConfig, TrainedFamily, TransformSource,
    TransformSweepRow, FAMILIES, INJECTION_SWEEP_HEADER, LOCK_FILE, PK_HEADER, REPORT_HEADER,
    TRANSFORM_SWEEP_HEADER,
};
pub use config::{
    fnv1a64, CliOverrides, ConfigFile, RunConfig, DEFAULT_INJECTION_FRACTIONS, DEFAULT_N_SUBSETS,
    DEFAULT_TRANSFORM_FRACTIONS,
};
pub use report::{cmd_eval, cmd_report, ReportSummary};
