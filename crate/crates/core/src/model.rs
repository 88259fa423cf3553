//! Unified lens model used by the calibration pipeline and the CLI.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::distortion::{
    distort_decentering_with, distort_geometric, FnKind, Formulation, GeometricModel, RadiusUnit,
};
use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, NormalizedPoint, PixelPoint};
use crate::piecewise::{GeometricPiecewiseModel, MAX_SEGMENTS};
use crate::undistort::{undistort_analytic, undistort_approx, undistort_iterative, NEWTON_MAX_ITER};

/// What to fit: the model family and its shape, without coefficient values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ModelSpec {
    /// Plain pinhole, no distortion.
    None,
    /// One coefficient vector shared by both axes.
    Radial { kind: FnKind, formulation: Formulation },
    /// Independent coefficient vectors for x and y.
    Geometric { kind: FnKind, formulation: Formulation },
    /// Piecewise profiles; `radial` shares one knot vector between the axes.
    Piecewise { base: FnKind, segments: usize, radial: bool },
    /// Radial polynomial plus decentering terms in pixel form.
    Decentering { radius: RadiusUnit },
}

impl ModelSpec {
    pub fn radial(kind: FnKind) -> Self {
        ModelSpec::Radial {
            kind,
            formulation: Formulation::UdNormalized,
        }
    }

    pub fn geometric(kind: FnKind) -> Self {
        ModelSpec::Geometric {
            kind,
            formulation: Formulation::UdNormalized,
        }
    }

    pub fn piecewise(base: FnKind, segments: usize) -> Self {
        ModelSpec::Piecewise {
            base,
            segments,
            radial: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ModelSpec::Radial { kind, .. } | ModelSpec::Geometric { kind, .. } => {
                if kind == FnKind::Decentering {
                    return Err(Error::InvalidModel("the decentering model has its own mode".into()));
                }
                if let FnKind::PolyEven(0) = kind {
                    return Err(Error::InvalidModel("even polynomial needs at least one coefficient".into()));
                }
                Ok(())
            }
            ModelSpec::Piecewise { base, segments, .. } => {
                if !matches!(base, FnKind::InverseLinear | FnKind::InverseQuadratic) {
                    return Err(Error::InvalidModel(format!(
                        "piecewise profiles need kind 5 or 6, got {base}"
                    )));
                }
                if !(1..=MAX_SEGMENTS).contains(&segments) {
                    return Err(Error::InvalidModel(format!(
                        "piecewise segment count must be 1 to {MAX_SEGMENTS}, got {segments}"
                    )));
                }
                Ok(())
            }
            ModelSpec::None | ModelSpec::Decentering { .. } => Ok(()),
        }
    }

    /// Number of distortion coefficients in the parameter vector.
    pub fn coeff_count(&self) -> usize {
        match *self {
            ModelSpec::None => 0,
            ModelSpec::Radial { kind, .. } => kind.coeff_count(),
            ModelSpec::Geometric { kind, .. } => 2 * kind.coeff_count(),
            ModelSpec::Piecewise { segments, radial, .. } => {
                if radial {
                    segments
                } else {
                    2 * segments
                }
            }
            ModelSpec::Decentering { .. } => 6,
        }
    }

    /// Starting coefficients: zeros, or unit knots for piecewise profiles.
    pub fn initial_coeffs(&self) -> Vec<f64> {
        let fill = if matches!(self, ModelSpec::Piecewise { .. }) { 1.0 } else { 0.0 };
        vec![fill; self.coeff_count()]
    }

    /// Whether building the model needs the current largest feature radius.
    pub fn needs_r_max(&self) -> bool {
        matches!(self, ModelSpec::Piecewise { .. })
    }

    /// Instantiates the model from a coefficient slice of length
    /// [`Self::coeff_count`].
    pub fn build(&self, coeffs: &[f64], r_max: f64) -> Result<LensModel> {
        if coeffs.len() != self.coeff_count() {
            return Err(Error::CoefficientCount {
                kind: self.to_string(),
                expected: self.coeff_count(),
                got: coeffs.len(),
            });
        }
        match *self {
            ModelSpec::None => Ok(LensModel::None),
            ModelSpec::Radial { kind, formulation } => Ok(LensModel::Axial(GeometricModel::new(
                kind,
                coeffs.to_vec(),
                coeffs.to_vec(),
                formulation,
            )?)),
            ModelSpec::Geometric { kind, formulation } => {
                let (k1, k2) = coeffs.split_at(kind.coeff_count());
                Ok(LensModel::Axial(GeometricModel::new(kind, k1.to_vec(), k2.to_vec(), formulation)?))
            }
            ModelSpec::Piecewise { base, radial, .. } => {
                let (gx, gy) = if radial {
                    (coeffs.to_vec(), coeffs.to_vec())
                } else {
                    let (a, b) = coeffs.split_at(coeffs.len() / 2);
                    (a.to_vec(), b.to_vec())
                };
                Ok(LensModel::Piecewise(GeometricPiecewiseModel::from_knots(base, gx, gy, r_max)?))
            }
            ModelSpec::Decentering { radius } => {
                let mut c = [0.0; 6];
                c.copy_from_slice(coeffs);
                Ok(LensModel::Decentering { coeffs: c, radius })
            }
        }
    }

    /// Extracts this spec's coefficient vector from a model built by it.
    pub fn coeffs_of(&self, model: &LensModel) -> Result<Vec<f64>> {
        let mismatch = || Error::InvalidModel(format!("model does not match spec {self}"));
        match (self, model) {
            (ModelSpec::None, LensModel::None) => Ok(Vec::new()),
            (ModelSpec::Radial { .. }, LensModel::Axial(m)) => Ok(m.k1.clone()),
            (ModelSpec::Geometric { .. }, LensModel::Axial(m)) => Ok([m.k1.as_slice(), m.k2.as_slice()].concat()),
            (ModelSpec::Piecewise { radial, .. }, LensModel::Piecewise(m)) => {
                if *radial {
                    Ok(m.profile_x.knot_values().to_vec())
                } else {
                    Ok([m.profile_x.knot_values(), m.profile_y.knot_values()].concat())
                }
            }
            (ModelSpec::Decentering { .. }, LensModel::Decentering { coeffs, .. }) => Ok(coeffs.to_vec()),
            _ => Err(mismatch()),
        }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::None => write!(f, "none"),
            ModelSpec::Radial { kind, formulation } => write!(f, "radial {kind} ({formulation})"),
            ModelSpec::Geometric { kind, formulation } => write!(f, "geometric {kind} ({formulation})"),
            ModelSpec::Piecewise { base, segments, radial } => write!(
                f,
                "{} piecewise {base} x{segments}",
                if *radial { "radial" } else { "geometric" }
            ),
            ModelSpec::Decentering { radius } => write!(f, "decentering ({radius:?} radius)"),
        }
    }
}

/// How to invert the forward distortion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UndistortMethod {
    Analytic,
    Iterative,
    Approx,
}

impl fmt::Display for UndistortMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UndistortMethod::Analytic => "analytic",
            UndistortMethod::Iterative => "iterative",
            UndistortMethod::Approx => "approx",
        })
    }
}

impl FromStr for UndistortMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(UndistortMethod::Analytic),
            "iterative" => Ok(UndistortMethod::Iterative),
            "approx" => Ok(UndistortMethod::Approx),
            _ => Err(Error::Parse(format!("unknown undistortion method '{s}'"))),
        }
    }
}

/// A fitted lens model with concrete coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum LensModel {
    None,
    Axial(GeometricModel),
    Piecewise(GeometricPiecewiseModel),
    Decentering { coeffs: [f64; 6], radius: RadiusUnit },
}

impl LensModel {
    /// Distorted pixel position of an undistorted normalized point.
    pub fn distort_to_pixel(&self, p: NormalizedPoint, intr: &Intrinsics) -> Result<PixelPoint> {
        match self {
            LensModel::None => Ok(intr.normalized_to_pixel(p)),
            LensModel::Axial(m) => Ok(intr.normalized_to_pixel(distort_geometric(p, m, intr)?)),
            LensModel::Piecewise(m) => Ok(intr.normalized_to_pixel(m.distort(p)?)),
            LensModel::Decentering { coeffs, radius } => {
                distort_decentering_with(intr.normalized_to_pixel(p), coeffs, intr, *radius)
            }
        }
    }

    /// Distorted normalized position of an undistorted normalized point.
    pub fn distort_normalized(&self, p: NormalizedPoint, intr: &Intrinsics) -> Result<NormalizedPoint> {
        match self {
            LensModel::None => Ok(p),
            LensModel::Axial(m) => distort_geometric(p, m, intr),
            LensModel::Piecewise(m) => m.distort(p),
            LensModel::Decentering { .. } => intr.pixel_to_normalized(self.distort_to_pixel(p, intr)?),
        }
    }

    /// Undistorted normalized point for an observed pixel position.
    pub fn undistort_pixel(&self, p_d: PixelPoint, intr: &Intrinsics, method: UndistortMethod) -> Result<NormalizedPoint> {
        let n_d = intr.pixel_to_normalized(p_d)?;
        match (self, method) {
            (LensModel::None, _) => Ok(n_d),
            (LensModel::Axial(m), UndistortMethod::Analytic) => undistort_analytic(n_d, m),
            (LensModel::Axial(m), UndistortMethod::Iterative) => undistort_iterative(n_d, m, intr),
            (LensModel::Axial(m), UndistortMethod::Approx) => undistort_approx(n_d, m),
            (LensModel::Piecewise(m), UndistortMethod::Analytic) => m.undistort(n_d),
            (LensModel::Piecewise(_), UndistortMethod::Iterative)
            | (LensModel::Decentering { .. }, UndistortMethod::Iterative) => {
                newton_2d(n_d, |q| self.distort_normalized(q, intr))
            }
            (_, m) => Err(Error::Unsupported(format!("{m} undistortion of a {} model", self.family()))),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            LensModel::None => "distortion-free",
            LensModel::Axial(m) if m.is_radial() => "radial",
            LensModel::Axial(_) => "geometric",
            LensModel::Piecewise(_) => "piecewise",
            LensModel::Decentering { .. } => "decentering",
        }
    }

    /// Largest feature radius the piecewise breakpoints were built on.
    pub fn r_max(&self) -> Option<f64> {
        match self {
            LensModel::Piecewise(m) => Some(m.r_max()),
            _ => None,
        }
    }

    /// Axis scale factors `(f_x(r), f_y(r))` of radially separable models.
    pub fn axis_factors(&self, r: f64) -> Result<(f64, f64)> {
        match self {
            LensModel::None => Ok((1.0, 1.0)),
            LensModel::Axial(m) => m.eval(r),
            LensModel::Piecewise(m) => m.eval(r),
            LensModel::Decentering { .. } => Err(Error::Unsupported(
                "axis factors of a decentering model depend on direction".into(),
            )),
        }
    }
}

/// Solves `forward(q) = target` by Newton's method with a forward-difference
/// Jacobian, starting from `q = target`.
fn newton_2d<F>(target: NormalizedPoint, forward: F) -> Result<NormalizedPoint>
where
    F: Fn(NormalizedPoint) -> Result<NormalizedPoint>,
{
    let tol = 1e-14 * (1.0 + target.radius());
    let mut q = target;
    let mut res = f64::INFINITY;
    for _ in 0..NEWTON_MAX_ITER {
        let f = forward(q)?;
        let e = Vector2::new(f.x - target.x, f.y - target.y);
        res = e.norm();
        if res <= tol {
            return Ok(q);
        }
        let h = 1e-7 * (1.0 + q.radius());
        let fx = forward(NormalizedPoint::new(q.x + h, q.y))?;
        let fy = forward(NormalizedPoint::new(q.x, q.y + h))?;
        let jac = Matrix2::new((fx.x - f.x) / h, (fy.x - f.x) / h, (fx.y - f.y) / h, (fy.y - f.y) / h);
        let step = jac
            .lu()
            .solve(&e)
            .ok_or_else(|| Error::IllConditioned("singular distortion Jacobian".into()))?;
        q = NormalizedPoint::new(q.x - step.x, q.y - step.y);
        if step.norm() <= 1e-15 * (1.0 + q.radius()) {
            return Ok(q);
        }
    }
    Err(Error::NoConvergence {
        iterations: NEWTON_MAX_ITER,
        residual: res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intr() -> Intrinsics {
        Intrinsics::new(400.0, 0.4, 395.0, 322.0, 241.0).unwrap()
    }

    #[test]
    fn coefficient_counts() {
        assert_eq!(ModelSpec::radial(FnKind::LinearQuadratic).coeff_count(), 2);
        assert_eq!(ModelSpec::geometric(FnKind::LinearOverFull).coeff_count(), 6);
        assert_eq!(ModelSpec::piecewise(FnKind::InverseQuadratic, 3).coeff_count(), 6);
        assert_eq!(ModelSpec::Decentering { radius: RadiusUnit::Normalized }.coeff_count(), 6);
        assert_eq!(ModelSpec::piecewise(FnKind::InverseLinear, 2).initial_coeffs(), vec![1.0; 4]);
        assert_eq!(ModelSpec::geometric(FnKind::Linear).initial_coeffs(), vec![0.0; 2]);
    }

    #[test]
    fn invalid_specs() {
        assert!(ModelSpec::piecewise(FnKind::Linear, 2).validate().is_err());
        assert!(ModelSpec::piecewise(FnKind::InverseLinear, 4).validate().is_err());
        assert!(ModelSpec::radial(FnKind::Decentering).validate().is_err());
        assert!(matches!(
            ModelSpec::radial(FnKind::Linear).build(&[0.1, 0.2], 0.0),
            Err(Error::CoefficientCount { .. })
        ));
    }

    #[test]
    fn build_and_extract_round_trip() {
        let specs = [
            (ModelSpec::None, vec![]),
            (ModelSpec::radial(FnKind::LinearQuadratic), vec![-0.1, 0.02]),
            (ModelSpec::geometric(FnKind::LinearOverFull), vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]),
            (ModelSpec::piecewise(FnKind::InverseLinear, 2), vec![0.95, 0.9, 0.96, 0.91]),
            (
                ModelSpec::Piecewise { base: FnKind::InverseQuadratic, segments: 3, radial: true },
                vec![0.97, 0.92, 0.85],
            ),
            (ModelSpec::Decentering { radius: RadiusUnit::Pixel }, vec![1e-7, 0.0, 0.0, 1e-6, 2e-6, 0.0]),
        ];
        for (spec, c) in specs {
            let m = spec.build(&c, 0.8).unwrap();
            assert_eq!(spec.coeffs_of(&m).unwrap(), c);
            let json = serde_json::to_string(&m).unwrap();
            let back: LensModel = serde_json::from_str(&json).unwrap();
            assert_eq!(back, m);
            let sj = serde_json::to_string(&spec).unwrap();
            assert_eq!(serde_json::from_str::<ModelSpec>(&sj).unwrap(), spec);
        }
    }

    #[test]
    fn undistort_inverts_distort_for_every_family() {
        let intr = intr();
        let models = [
            ModelSpec::geometric(FnKind::LinearQuadratic).build(&[-0.11, -0.13, -0.12, -0.145], 0.0).unwrap(),
            ModelSpec::piecewise(FnKind::InverseQuadratic, 3)
                .build(&[0.97, 0.91, 0.83, 0.96, 0.9, 0.82], 0.82)
                .unwrap(),
            ModelSpec::Decentering { radius: RadiusUnit::Normalized }
                .build(&[-0.2, 0.05, 0.0, 1e-5, -2e-5, 0.1], 0.0)
                .unwrap(),
        ];
        for m in &models {
            for i in 0..50 {
                let a = i as f64 * 0.37;
                let r = 0.01 * i as f64;
                let p = NormalizedPoint::new(r * a.cos(), r * a.sin());
                let pd = m.distort_to_pixel(p, &intr).unwrap();
                let q = m.undistort_pixel(pd, &intr, UndistortMethod::Iterative).unwrap();
                assert!(q.distance(&p) < 1e-10, "{} {:?} {:?}", m.family(), p, q);
            }
        }
    }

    #[test]
    fn unsupported_method_combinations() {
        let intr = intr();
        let m = ModelSpec::Decentering { radius: RadiusUnit::Normalized }.build(&[0.0; 6], 0.0).unwrap();
        assert!(matches!(
            m.undistort_pixel(PixelPoint::new(10.0, 10.0), &intr, UndistortMethod::Analytic),
            Err(Error::Unsupported(_))
        ));
        let m = ModelSpec::geometric(FnKind::Quadratic).build(&[0.1, 0.1], 0.0).unwrap();
        assert!(matches!(
            m.undistort_pixel(PixelPoint::new(10.0, 10.0), &intr, UndistortMethod::Analytic),
            Err(Error::Unsupported(_))
        ));
    }
}
