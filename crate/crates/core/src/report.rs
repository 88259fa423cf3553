//! Calibration results and their file format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibration::lm::Termination;
use crate::error::Result;
use crate::geometry::{Extrinsics, Intrinsics};
use crate::model::{LensModel, ModelSpec};

/// Reprojection residual `observed - predicted` of one feature, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointResidual {
    pub view: usize,
    pub id: usize,
    pub du: f64,
    pub dv: f64,
}

impl PointResidual {
    pub fn norm(&self) -> f64 {
        self.du.hypot(self.dv)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub spec: ModelSpec,
    pub intrinsics: Intrinsics,
    pub extrinsics: Vec<Extrinsics>,
    pub model: LensModel,
    /// Objective at the starting parameters (pixels squared).
    pub j_initial: f64,
    /// Objective at the returned parameters (pixels squared).
    pub j_final: f64,
    /// `sqrt(J / point count)`: per-point reprojection distance.
    pub rms: f64,
    /// `sqrt(J / (2 point count))`: per-coordinate residual, comparable to
    /// the standard deviation of isotropic pixel noise.
    pub rms_per_axis: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    #[serde(default)]
    pub fix_skew: bool,
    /// Largest undistorted normalized feature radius under the returned
    /// parameters.
    pub r_max: f64,
    /// Largest normalized feature radius at the start of every iteration
    /// (piecewise models only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub r_max_trace: Vec<f64>,
    pub residuals: Vec<PointResidual>,
}

impl CalibrationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Distortion coefficients in parameter-vector order.
    pub fn coeffs(&self) -> Result<Vec<f64>> {
        self.spec.coeffs_of(&self.model)
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().map(PointResidual::norm).fold(0.0, f64::max)
    }

    pub fn summary(&self) -> String {
        format!(
            "model={} J={:.6e} rms={:.6} rms_axis={:.6} iterations={} termination={:?}",
            self.spec, self.j_final, self.rms, self.rms_per_axis, self.iterations, self.termination
        )
    }
}
