//! Influence estimation and budget-constrained seed allocation in
//! continuous-time diffusion networks.
//!
//! The estimation side samples per-edge transmission times and summarizes
//! reachability with least-label-list sketches, giving near-linear-time
//! influence estimates for arbitrary source sets and horizons. The
//! maximization side allocates multiple products to users under per-user
//! slot limits (partition or laminar matroids) and per-product budgets
//! (group knapsacks) with an adaptive-threshold greedy.

// `!(x > 0.0)` guards are deliberate: they reject NaN along with the
// out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod budgetmax;
pub mod constraints;
pub mod continest;
pub mod error;
pub mod lll;
pub mod netmodel;
pub mod oracle;
pub mod rngs;

pub use error::{Error, Result};
