//! Diagnostic studies: the Bernoulli-mixture dimensionality demo, oracle
//! clustering convergence, and static identifiability checks on `G`.

pub mod gcheck;
pub mod mixture;
pub mod oracle;
