//! Multi-target tracking with a factored labeled multi-Bernoulli mixture.
//!
//! The multitarget density is kept as a product of independent factors.
//! Factors whose tracks compete for the same measurements are merged into
//! product hypotheses; a merged factor is split again once its halves are
//! independent up to a tolerance.

pub mod assignment;
pub mod glmb;
pub mod io;
pub mod kinematics;
pub mod merge_split;
pub mod model;
pub mod sim;
