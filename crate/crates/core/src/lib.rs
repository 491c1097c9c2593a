//! Simulation of spatially entangled photon pairs sent through a few-mode
//! hollow-core fiber and analyzed with step phase plates and single-mode
//! fiber detection.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analyzer;
pub mod bell;
pub mod calibration;
pub mod channel;
pub mod dispersion;
pub mod error;
pub mod experiments;
pub mod field;
pub mod measurement;
pub mod modes;
pub mod optimize;
pub mod quadrature;
pub mod state;

pub use error::{Error, Result};
