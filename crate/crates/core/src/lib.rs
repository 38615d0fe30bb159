//! Robustly complete finite abstractions of sampled-data control systems.
//!
//! The pipeline: a [`system::SystemSpec`] and its constants fix a transition
//! radius; [`abstraction`] turns that into a grid transition system;
//! [`synthesis`] solves fixed-point games on it and refines the result to a
//! sampled-data controller; [`logic`] monitors the resulting runs.

// Negated float comparisons are how NaN gets rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Per-axis loops index several parallel slices at once.
#![allow(clippy::needless_range_loop)]

pub mod abstraction;
pub mod expr;
pub mod geometry;
pub mod labelling;
pub mod logic;
pub mod par;
pub mod synthesis;
pub mod system;

pub use par::Exec;
