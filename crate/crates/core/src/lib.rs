//! Energy-aware selection of video representations.
//!
//! A video is encoded once at a cheap anchor representation. Learned
//! predictors map that measurement to the encode energy, decode energy and
//! quality of every (resolution, QP) cell, and the selector picks the
//! cheapest cell whose predicted quality stays within a fraction `rho` of
//! the best. [`harness`] produces measurements (synthetic or from external
//! commands), [`predictors`] trains and persists the models, [`selector`]
//! makes and scores choices, [`analysis`] studies anchor choice and
//! [`pipeline`] wires the stages together for the `greenladder` binary.

// `!(x > 0.0)` guards are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod predictors;
pub mod report;
pub mod seed;
pub mod selector;
