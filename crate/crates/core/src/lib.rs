//! Homotopy continuation for one implicit time step of the Buckley-Leverett
//! equation, with three auxiliary problems and curve-traceability metrics.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod continuation;
pub mod discretization;
pub mod experiment;
pub mod metrics;
pub mod oracle;
pub mod physics;
pub mod scenario;
pub mod solver;
