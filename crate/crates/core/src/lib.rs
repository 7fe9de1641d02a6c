// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod belief;
pub mod calibration;
pub mod chain;
pub mod compare;
pub mod error;
pub mod experiment;
pub mod optimal;
pub mod sim;
pub mod solver;
pub mod state;
pub mod threshold;
pub mod transition;

pub use error::{Error, Result};
