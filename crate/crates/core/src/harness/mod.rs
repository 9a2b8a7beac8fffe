//! Configuration, run directories and the experiment pipelines shared by the
//! command-line tool and the acceptance suite.
//!
//! Every run writes into its own directory: the merged configuration, the
//! CSV/JSON artifacts, a `summary.json` with one entry per check, and a
//! `manifest.json` listing the files together with the input hash.

pub mod config;
pub mod pipelines;
pub mod run;
pub mod validation;

pub use config::{Preset, RunConfig, SolverKind};
pub use pipelines::{
    far_edge, heat_kernel_rows, nu_convergence, run_counterexample, run_heatkernel, run_simulate, run_stochastic,
    run_sweep, stochastic_rows, OriginField, ZeroReport, INVISCID_DIAGNOSTIC,
};
pub use run::{input_hash, Check, RunDir, Summary};
pub use validation::run_validation;

use crate::error::Error;

/// Process exit status for a finished run.
pub fn exit_code(summary: &Summary) -> i32 {
    if summary.passed {
        0
    } else {
        2
    }
}

/// Process exit status for an error: 3 for bad configuration, 1 otherwise.
pub fn error_exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidParameter(_) | Error::Stability { .. } => 3,
        _ => 1,
    }
}
