//! Library side of the `certabs` command-line tool: configuration, the
//! decision pipeline, and the subcommands.

// Negated float comparisons are how NaN gets rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod pipeline;

pub use commands::{run, Cli};
