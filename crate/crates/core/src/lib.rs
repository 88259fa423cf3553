//! Camera calibration with axially asymmetric ("geometric") lens distortion.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod dataset;
pub mod distortion;
pub mod error;
pub mod geometry;
pub mod model;
pub mod piecewise;
pub mod report;
pub mod synthetic;
pub mod undistort;

pub use error::{Error, Result};
