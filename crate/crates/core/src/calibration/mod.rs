//! Planar calibration: homographies, closed-form initialization and
//! nonlinear refinement of the reprojection error.

pub mod closed_form;
pub mod homography;
pub mod lm;
pub mod params;
pub mod refine;

pub use closed_form::{extrinsics_from_homography, intrinsics_from_homographies};
pub use homography::estimate_homography;
pub use lm::{LmOptions, Termination};
pub use params::ParameterVector;
pub use refine::{calibrate, compute_j, initialize, refine, RefineOptions};
