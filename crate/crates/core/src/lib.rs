//! Simulation toolkit for the environmental-rate trigger attack chain on a
//! grid-tied photovoltaic inverter: sensor front end, Trojan trigger, power
//! stages, device pipeline and feeder-level consequences.

// Validation uses negated comparisons on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dcac;
pub mod dcdc;
pub mod error;
pub mod grid;
pub mod pipeline;
pub mod sensor;
pub mod signal;
pub mod trojan;

pub use error::{Error, Result};
