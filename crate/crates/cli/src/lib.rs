//! Command-line pipeline around `dmt-core`: image codec, manifests, run
//! configuration, the per-verb commands and the synthetic demo task.

pub mod codec;
pub mod commands;
pub mod config;
pub mod demo;
pub mod manifest;

use dmt_core::Error;

/// Process exit status for an error: 3 for numerical failure, 2 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NumericalFailure { .. } => 3,
        _ => 2,
    }
}
