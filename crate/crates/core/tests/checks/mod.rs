//! Measurements shared by the integration tests and the acceptance runner.
//! Each returns a one-line summary, or the first violation found.
#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod entropy;
pub mod gradients;
pub mod graph;
pub mod infusion;
pub mod paths;
pub mod retrieval;
