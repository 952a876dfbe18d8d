//! Generalized Nash equilibria with a shared budget: variational and normalized
//! equilibria, fairness-based equilibrium selection, comparability audits and
//! the electric-vehicle charging case study.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b): (f64, f64) = ($a, $b);
        assert!((a - b).abs() <= $tol, "{a} vs {b} (tol {:e})", $tol);
    }};
}

pub mod error;
pub mod model;
pub mod equilibria;
pub mod evgame;
pub mod cli;
pub mod fairness;
pub mod vi;

pub use error::{GneError, Result};
