//! Pinhole camera algebra: intrinsics, rigid poses, projection and the
//! pixel/normalized coordinate conversions.
//!
//! The camera matrix is the usual upper-triangular
//!
//! ```text
//!     | alpha  gamma  u0 |
//! A = |   0    beta   v0 |
//!     |   0     0      1 |
//! ```
//!
//! and a world point `P` projects to `A (R P + t) / z_c`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distortion-free or distorted image point, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn distance(&self, other: &PixelPoint) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

/// Point on the normalized image plane, `[x, y, 1] = A^-1 [u, v, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedPoint {
    pub x: f64,
    pub y: f64,
}

impl NormalizedPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn radius(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(&self, other: &NormalizedPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl std::ops::Neg for NormalizedPoint {
    type Output = NormalizedPoint;

    fn neg(self) -> Self::Output {
        NormalizedPoint::new(-self.x, -self.y)
    }
}

/// Point in the world frame. Planar calibration targets use `z = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl WorldPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn planar(x: f64, y: f64) -> Self {
        Self { x, y, z: 0.0 }
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }
}

/// The five intrinsic parameters of the camera matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub u0: f64,
    pub v0: f64,
}

impl Intrinsics {
    /// Builds intrinsics, rejecting non-positive focal scales.
    pub fn new(alpha: f64, gamma: f64, beta: f64, u0: f64, v0: f64) -> Result<Self> {
        let intr = Self {
            alpha,
            beta,
            gamma,
            u0,
            v0,
        };
        if !(alpha > 0.0 && beta > 0.0) || ![alpha, beta, gamma, u0, v0].iter().all(|v| v.is_finite()) {
            return Err(Error::SingularIntrinsics { alpha, beta });
        }
        Ok(intr)
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.alpha, self.gamma, self.u0, //
            0.0, self.beta, self.v0, //
            0.0, 0.0, 1.0,
        )
    }

    /// Closed-form inverse of the upper-triangular camera matrix.
    pub fn inverse_matrix(&self) -> Result<Matrix3<f64>> {
        self.check_invertible()?;
        let (a, b, g) = (self.alpha, self.beta, self.gamma);
        Ok(Matrix3::new(
            1.0 / a,
            -g / (a * b),
            (g * self.v0 - b * self.u0) / (a * b),
            0.0,
            1.0 / b,
            -self.v0 / b,
            0.0,
            0.0,
            1.0,
        ))
    }

    fn check_invertible(&self) -> Result<()> {
        if self.alpha == 0.0 || self.beta == 0.0 {
            return Err(Error::SingularIntrinsics {
                alpha: self.alpha,
                beta: self.beta,
            });
        }
        Ok(())
    }

    /// `[x, y, 1] = A^-1 [u, v, 1]`, evaluated by back-substitution.
    pub fn pixel_to_normalized(&self, p: PixelPoint) -> Result<NormalizedPoint> {
        self.check_invertible()?;
        let y = (p.v - self.v0) / self.beta;
        let x = (p.u - self.u0 - self.gamma * y) / self.alpha;
        Ok(NormalizedPoint::new(x, y))
    }

    /// `u = alpha x + gamma y + u0`, `v = beta y + v0`.
    pub fn normalized_to_pixel(&self, p: NormalizedPoint) -> PixelPoint {
        PixelPoint::new(
            self.alpha * p.x + self.gamma * p.y + self.u0,
            self.beta * p.y + self.v0,
        )
    }

    pub fn principal_point(&self) -> PixelPoint {
        PixelPoint::new(self.u0, self.v0)
    }

    /// Packing order used by the optimizer: `(alpha, gamma, beta, u0, v0)`.
    pub fn to_array(&self) -> [f64; 5] {
        [self.alpha, self.gamma, self.beta, self.u0, self.v0]
    }

    pub fn from_array(v: [f64; 5]) -> Self {
        Self {
            alpha: v[0],
            gamma: v[1],
            beta: v[2],
            u0: v[3],
            v0: v[4],
        }
    }
}

/// Skew-symmetric cross-product matrix of `w`.
pub fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Rodrigues formula: axis-angle vector to rotation matrix.
pub fn rotation_from_vector(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = w.norm_squared();
    let theta = theta2.sqrt();
    // sin(t)/t and (1 - cos(t))/t^2, with series expansions near zero.
    let (a, b) = if theta < 1e-4 {
        (
            1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0,
            0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0,
        )
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let k = skew(w);
    Matrix3::identity() + k * a + k * k * b
}

/// Inverse Rodrigues map, returning the axis-angle vector with `|w| <= pi`.
pub fn vector_from_rotation(r: &Matrix3<f64>) -> Vector3<f64> {
    // sin(theta) * axis
    let s = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]) * 0.5;
    let cos_theta = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let sin_theta = s.norm();
    let theta = sin_theta.atan2(cos_theta);

    if cos_theta > -0.99 {
        let scale = if sin_theta < 1e-7 {
            1.0 + theta * theta / 6.0
        } else {
            theta / sin_theta
        };
        return s * scale;
    }

    // Near pi the antisymmetric part carries little information; recover the
    // axis from the symmetric part R + R^T = 2 cos(t) I + 2 (1 - cos(t)) a a^T.
    let m = (r + r.transpose()) * 0.5 - Matrix3::identity() * cos_theta;
    let col = (0..3)
        .max_by(|&i, &j| m[(i, i)].partial_cmp(&m[(j, j)]).unwrap())
        .unwrap();
    let mut axis = m.column(col).into_owned();
    axis /= axis.norm();
    if axis.dot(&s) < 0.0 {
        axis = -axis;
    }
    axis * theta
}

/// Rigid world-to-camera transform of one calibration view.
///
/// The matrix and axis-angle forms are kept in sync: the matrix is always
/// derived from `rotation_vec`, so serializing the vector alone is lossless.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "PoseRecord", into = "PoseRecord")]
pub struct Extrinsics {
    pub rotation: Matrix3<f64>,
    pub rotation_vec: Vector3<f64>,
    pub translation: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct PoseRecord {
    rotation_vec: [f64; 3],
    translation: [f64; 3],
}

impl From<PoseRecord> for Extrinsics {
    fn from(p: PoseRecord) -> Self {
        Extrinsics::new(Vector3::from(p.rotation_vec), Vector3::from(p.translation))
    }
}

impl From<Extrinsics> for PoseRecord {
    fn from(e: Extrinsics) -> Self {
        PoseRecord {
            rotation_vec: e.rotation_vec.into(),
            translation: e.translation.into(),
        }
    }
}

impl Extrinsics {
    pub fn new(rotation_vec: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: rotation_from_vector(&rotation_vec),
            rotation_vec,
            translation,
        }
    }

    /// Builds a pose from a rotation matrix (assumed orthonormal).
    pub fn from_matrix(rotation: &Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self::new(vector_from_rotation(rotation), translation)
    }

    pub fn identity_at(translation: Vector3<f64>) -> Self {
        Self::new(Vector3::zeros(), translation)
    }

    pub fn to_camera(&self, p: &WorldPoint) -> Vector3<f64> {
        self.rotation * p.to_vector() + self.translation
    }

    pub fn to_array(&self) -> [f64; 6] {
        let w = &self.rotation_vec;
        let t = &self.translation;
        [w.x, w.y, w.z, t.x, t.y, t.z]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self::new(Vector3::new(v[0], v[1], v[2]), Vector3::new(v[3], v[4], v[5]))
    }
}

/// Divides a camera-frame point by its depth.
pub fn camera_to_normalized(pc: &Vector3<f64>) -> Result<NormalizedPoint> {
    if !(pc.z > 0.0) {
        return Err(Error::NonPositiveDepth { depth: pc.z });
    }
    Ok(NormalizedPoint::new(pc.x / pc.z, pc.y / pc.z))
}

/// Undistorted normalized projection of a world point.
pub fn project_normalized(point: &WorldPoint, extr: &Extrinsics) -> Result<NormalizedPoint> {
    camera_to_normalized(&extr.to_camera(point))
}

/// Distortion-free pinhole projection to pixels.
pub fn project(point: &WorldPoint, intr: &Intrinsics, extr: &Extrinsics) -> Result<PixelPoint> {
    Ok(intr.normalized_to_pixel(project_normalized(point, extr)?))
}
