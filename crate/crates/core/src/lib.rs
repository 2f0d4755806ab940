//! Numerical toolkit for removing multiplicative Gamma (speckle) noise from
//! grayscale images by evolving a coupled local/nonlocal total-variation flow,
//! together with the studies and audits that exercise the flow's structural
//! properties (mass conservation, maximum principle, decay to the mean,
//! kernel rescaling limit, p -> 1 limit).

// Parameter checks are written as `!(x > 0.0)` on purpose: the negation also
// rejects NaN, which `x <= 0.0` would silently accept.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod graph;
pub mod grid;
pub mod indicator;
pub mod io;
pub mod kernel;
pub mod metrics;
pub mod noise;
pub mod pflow;
pub mod pipeline;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
pub use grid::{Grid, GridStats};
