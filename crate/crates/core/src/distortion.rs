//! Distortion function catalog and forward distortion maps.
//!
//! Every catalog function `f(r, k)` scales a normalized point by a factor that
//! depends only on its radius, with `f(0, k) = 1`. The radial model applies
//! one coefficient vector to both axes; the two-axis geometric model applies
//! the same functional form with independent coefficients on `x` and `y`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, NormalizedPoint, PixelPoint};

/// Denominator magnitudes below this are treated as poles.
pub const POLE_EPS: f64 = 1e-14;

/// Functional form of a distortion function.
///
/// The first ten variants are the polynomial and rational catalog, in catalog
/// order (`1 + k1 r` is number 1, `(1 + k1 r^2)/(1 + k2 r + k3 r^2)` is
/// number 10).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum FnKind {
    /// `1 + k1 r`
    Linear,
    /// `1 + k1 r^2`
    Quadratic,
    /// `1 + k1 r + k2 r^2`
    LinearQuadratic,
    /// `1 + k1 r^2 + k2 r^4`
    EvenQuartic,
    /// `1 / (1 + k1 r)`
    InverseLinear,
    /// `1 / (1 + k1 r^2)`
    InverseQuadratic,
    /// `(1 + k1 r) / (1 + k2 r^2)`
    LinearOverQuadratic,
    /// `1 / (1 + k1 r + k2 r^2)`
    InverseLinearQuadratic,
    /// `(1 + k1 r) / (1 + k2 r + k3 r^2)`
    LinearOverFull,
    /// `(1 + k1 r^2) / (1 + k2 r + k3 r^2)`
    QuadraticOverFull,
    /// `1 + k1 r^2 + k2 r^4 + ... + km r^(2m)`
    PolyEven(usize),
    /// `(1 + c1 r + c2 r^2) / (1 + c3 r + c4 r^2 + c5 r^3)`, the analytically
    /// invertible superset of catalog entries 1-3 and 5-10.
    GeneralRational,
    /// Radial polynomial plus decentering terms, coefficients
    /// `(k1, k2, k3, p1, p2, p3)`. As a scalar function only the radial
    /// part `1 + k1 r^2 + k2 r^4 + k3 r^6` is evaluated.
    Decentering,
}

impl FnKind {
    /// The ten catalog functions in catalog order.
    pub const CATALOG: [FnKind; 10] = [
        FnKind::Linear,
        FnKind::Quadratic,
        FnKind::LinearQuadratic,
        FnKind::EvenQuartic,
        FnKind::InverseLinear,
        FnKind::InverseQuadratic,
        FnKind::LinearOverQuadratic,
        FnKind::InverseLinearQuadratic,
        FnKind::LinearOverFull,
        FnKind::QuadraticOverFull,
    ];

    /// Catalog entry `n` (1-based).
    pub fn catalog(n: usize) -> Option<FnKind> {
        (1..=10).contains(&n).then(|| Self::CATALOG[n - 1])
    }

    pub fn catalog_number(&self) -> Option<usize> {
        Self::CATALOG.iter().position(|k| k == self).map(|i| i + 1)
    }

    pub fn coeff_count(&self) -> usize {
        match self {
            FnKind::Linear | FnKind::Quadratic | FnKind::InverseLinear | FnKind::InverseQuadratic => 1,
            FnKind::LinearQuadratic
            | FnKind::EvenQuartic
            | FnKind::LinearOverQuadratic
            | FnKind::InverseLinearQuadratic => 2,
            FnKind::LinearOverFull | FnKind::QuadraticOverFull => 3,
            FnKind::PolyEven(m) => *m,
            FnKind::GeneralRational => 5,
            FnKind::Decentering => 6,
        }
    }

    /// True for the two kinds with a closed-form geometric inverse.
    pub fn has_analytic_inverse(&self) -> bool {
        matches!(self, FnKind::InverseLinear | FnKind::InverseQuadratic)
    }
}

impl fmt::Display for FnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FnKind::PolyEven(m) => write!(f, "poly-even-{m}"),
            FnKind::GeneralRational => f.write_str("general-rational"),
            FnKind::Decentering => f.write_str("decentering"),
            k => write!(f, "{}", k.catalog_number().unwrap()),
        }
    }
}

impl FromStr for FnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(n) = s.parse::<usize>() {
            return FnKind::catalog(n)
                .ok_or_else(|| Error::InvalidModel(format!("catalog function {n} does not exist")));
        }
        match s {
            "general-rational" => Ok(FnKind::GeneralRational),
            "decentering" | "heikkila" => Ok(FnKind::Decentering),
            _ => match s.strip_prefix("poly-even-").map(str::parse::<usize>) {
                Some(Ok(m)) if m > 0 => Ok(FnKind::PolyEven(m)),
                _ => Err(Error::InvalidModel(format!("unknown distortion function '{s}'"))),
            },
        }
    }
}

impl From<FnKind> for String {
    fn from(k: FnKind) -> String {
        k.to_string()
    }
}

impl TryFrom<String> for FnKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

fn poly_even(k: &[f64], r: f64) -> (f64, f64) {
    let r2 = r * r;
    let mut value = 1.0;
    let mut deriv = 0.0;
    // r^(2i) and d/dr r^(2i) = 2i r^(2i-1)
    let mut pow = r2;
    let mut dpow = 2.0 * r;
    for (i, c) in k.iter().enumerate() {
        value += c * pow;
        deriv += c * dpow;
        dpow = (2 * i + 4) as f64 * pow * r;
        pow *= r2;
    }
    (value, deriv)
}

/// Numerator, denominator and their derivatives at `r`.
fn parts(kind: FnKind, k: &[f64], r: f64) -> [f64; 4] {
    let r2 = r * r;
    match kind {
        FnKind::Linear => [1.0 + k[0] * r, 1.0, k[0], 0.0],
        FnKind::Quadratic | FnKind::EvenQuartic | FnKind::PolyEven(_) => {
            let (n, dn) = poly_even(k, r);
            [n, 1.0, dn, 0.0]
        }
        FnKind::LinearQuadratic => [1.0 + k[0] * r + k[1] * r2, 1.0, k[0] + 2.0 * k[1] * r, 0.0],
        FnKind::InverseLinear => [1.0, 1.0 + k[0] * r, 0.0, k[0]],
        FnKind::InverseQuadratic => [1.0, 1.0 + k[0] * r2, 0.0, 2.0 * k[0] * r],
        FnKind::LinearOverQuadratic => [1.0 + k[0] * r, 1.0 + k[1] * r2, k[0], 2.0 * k[1] * r],
        FnKind::InverseLinearQuadratic => {
            [1.0, 1.0 + k[0] * r + k[1] * r2, 0.0, k[0] + 2.0 * k[1] * r]
        }
        FnKind::LinearOverFull => [
            1.0 + k[0] * r,
            1.0 + k[1] * r + k[2] * r2,
            k[0],
            k[1] + 2.0 * k[2] * r,
        ],
        FnKind::QuadraticOverFull => [
            1.0 + k[0] * r2,
            1.0 + k[1] * r + k[2] * r2,
            2.0 * k[0] * r,
            k[1] + 2.0 * k[2] * r,
        ],
        FnKind::GeneralRational => [
            1.0 + k[0] * r + k[1] * r2,
            1.0 + k[2] * r + k[3] * r2 + k[4] * r2 * r,
            k[0] + 2.0 * k[1] * r,
            k[2] + 2.0 * k[3] * r + 3.0 * k[4] * r2,
        ],
        FnKind::Decentering => {
            let (n, dn) = poly_even(&k[..3], r);
            [n, 1.0, dn, 0.0]
        }
    }
}

/// `f(r, k)` for a kind and raw coefficient slice (length is not checked).
pub(crate) fn eval_raw(kind: FnKind, k: &[f64], r: f64) -> Result<f64> {
    let [n, d, _, _] = parts(kind, k, r);
    if d.abs() < POLE_EPS {
        return Err(Error::PoleAtRadius { radius: r });
    }
    Ok(n / d)
}

/// `(f(r, k), df/dr)`.
pub(crate) fn eval_raw_with_derivative(kind: FnKind, k: &[f64], r: f64) -> Result<(f64, f64)> {
    let [n, d, dn, dd] = parts(kind, k, r);
    if d.abs() < POLE_EPS {
        return Err(Error::PoleAtRadius { radius: r });
    }
    Ok((n / d, (dn * d - n * dd) / (d * d)))
}

fn check_len(kind: FnKind, len: usize) -> Result<()> {
    if kind.coeff_count() != len {
        return Err(Error::CoefficientCount {
            kind: kind.to_string(),
            expected: kind.coeff_count(),
            got: len,
        });
    }
    Ok(())
}

/// A distortion function together with its coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionFn {
    pub kind: FnKind,
    pub coeffs: Vec<f64>,
}

impl DistortionFn {
    pub fn new(kind: FnKind, coeffs: Vec<f64>) -> Result<Self> {
        check_len(kind, coeffs.len())?;
        Ok(Self { kind, coeffs })
    }

    /// All-zero coefficients, i.e. the identity scaling.
    pub fn zero(kind: FnKind) -> Self {
        Self {
            kind,
            coeffs: vec![0.0; kind.coeff_count()],
        }
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        eval_raw(self.kind, &self.coeffs, r)
    }

    pub fn eval_with_derivative(&self, r: f64) -> Result<(f64, f64)> {
        eval_raw_with_derivative(self.kind, &self.coeffs, r)
    }

    /// Same function with every coefficient negated.
    pub fn negated(&self) -> Self {
        Self {
            kind: self.kind,
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
        }
    }

    /// Embeds this function in the five-coefficient general rational form.
    /// Returns `None` for kinds outside that family.
    pub fn to_general_rational(&self) -> Option<DistortionFn> {
        let k = &self.coeffs;
        let c = match self.kind {
            FnKind::Linear => [k[0], 0.0, 0.0, 0.0, 0.0],
            FnKind::Quadratic => [0.0, k[0], 0.0, 0.0, 0.0],
            FnKind::LinearQuadratic => [k[0], k[1], 0.0, 0.0, 0.0],
            FnKind::InverseLinear => [0.0, 0.0, k[0], 0.0, 0.0],
            FnKind::InverseQuadratic => [0.0, 0.0, 0.0, k[0], 0.0],
            FnKind::LinearOverQuadratic => [k[0], 0.0, 0.0, k[1], 0.0],
            FnKind::InverseLinearQuadratic => [0.0, 0.0, k[0], k[1], 0.0],
            FnKind::LinearOverFull => [k[0], 0.0, k[1], k[2], 0.0],
            FnKind::QuadraticOverFull => [0.0, k[0], k[1], k[2], 0.0],
            FnKind::GeneralRational => [k[0], k[1], k[2], k[3], k[4]],
            _ => return None,
        };
        Some(DistortionFn {
            kind: FnKind::GeneralRational,
            coeffs: c.to_vec(),
        })
    }
}

/// `f(r, k)`; fails with [`Error::PoleAtRadius`] when a denominator vanishes.
pub fn eval_fn(f: &DistortionFn, r: f64) -> Result<f64> {
    f.eval(r)
}

/// Radial distortion: both coordinates scaled by `f(r, k)`.
pub fn distort_radial(p: NormalizedPoint, f: &DistortionFn) -> Result<NormalizedPoint> {
    let s = f.eval(p.radius())?;
    Ok(NormalizedPoint::new(p.x * s, p.y * s))
}

/// Where the two-axis scaling is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Formulation {
    /// Undistorted-to-distorted, scaling normalized coordinates per axis.
    #[default]
    UdNormalized,
    /// Undistorted-to-distorted, scaling pixel offsets from the principal
    /// point per axis.
    UdPixel,
    /// Distorted-to-undistorted: `x = x_d f(r_d, k1)`, `y = y_d f(r_d, k2)`.
    Du,
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Formulation::UdNormalized => "ud-normalized",
            Formulation::UdPixel => "ud-pixel",
            Formulation::Du => "du",
        })
    }
}

impl FromStr for Formulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ud-normalized" | "ud" | "normalized" => Ok(Formulation::UdNormalized),
            "ud-pixel" | "pixel" => Ok(Formulation::UdPixel),
            "du" => Ok(Formulation::Du),
            _ => Err(Error::InvalidModel(format!("unknown formulation '{s}'"))),
        }
    }
}

/// Two-axis distortion model: the same functional form on both axes with
/// coefficients `k1` (x) and `k2` (y). With `k1 == k2` it is the radial model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricModel {
    pub kind: FnKind,
    pub k1: Vec<f64>,
    pub k2: Vec<f64>,
    #[serde(default)]
    pub formulation: Formulation,
}

impl GeometricModel {
    pub fn new(kind: FnKind, k1: Vec<f64>, k2: Vec<f64>, formulation: Formulation) -> Result<Self> {
        check_len(kind, k1.len())?;
        check_len(kind, k2.len())?;
        Ok(Self {
            kind,
            k1,
            k2,
            formulation,
        })
    }

    /// The radial model `k1 = k2 = k`.
    pub fn radial(f: &DistortionFn, formulation: Formulation) -> Self {
        Self {
            kind: f.kind,
            k1: f.coeffs.clone(),
            k2: f.coeffs.clone(),
            formulation,
        }
    }

    pub fn identity(kind: FnKind, formulation: Formulation) -> Self {
        Self::radial(&DistortionFn::zero(kind), formulation)
    }

    pub fn is_radial(&self) -> bool {
        self.k1 == self.k2
    }

    pub fn fn_x(&self) -> DistortionFn {
        DistortionFn {
            kind: self.kind,
            coeffs: self.k1.clone(),
        }
    }

    pub fn fn_y(&self) -> DistortionFn {
        DistortionFn {
            kind: self.kind,
            coeffs: self.k2.clone(),
        }
    }

    /// `(f(r, k1), f(r, k2))`.
    pub fn eval(&self, r: f64) -> Result<(f64, f64)> {
        Ok((eval_raw(self.kind, &self.k1, r)?, eval_raw(self.kind, &self.k2, r)?))
    }

    pub(crate) fn eval_with_derivative(&self, r: f64) -> Result<((f64, f64), (f64, f64))> {
        Ok((
            eval_raw_with_derivative(self.kind, &self.k1, r)?,
            eval_raw_with_derivative(self.kind, &self.k2, r)?,
        ))
    }

    pub fn with_formulation(mut self, formulation: Formulation) -> Self {
        self.formulation = formulation;
        self
    }
}

/// Forward (undistorted to distorted) two-axis distortion in normalized
/// coordinates.
///
/// For the D-U formulation the model is defined in the opposite direction,
/// so this solves `distort_du(p_d) = p` for `p_d` numerically.
pub fn distort_geometric(
    p: NormalizedPoint,
    model: &GeometricModel,
    intr: &Intrinsics,
) -> Result<NormalizedPoint> {
    match model.formulation {
        Formulation::UdNormalized => {
            let (f1, f2) = model.eval(p.radius())?;
            Ok(NormalizedPoint::new(p.x * f1, p.y * f2))
        }
        Formulation::UdPixel => {
            let (f1, f2) = model.eval(p.radius())?;
            let mut xd = p.x * f1;
            if f1 != f2 {
                xd += intr.gamma / intr.alpha * p.y * (f1 - f2);
            }
            Ok(NormalizedPoint::new(xd, p.y * f2))
        }
        Formulation::Du => crate::undistort::invert_du(p, model),
    }
}

/// Forward two-axis distortion applied directly to pixel coordinates. The
/// radius is that of the normalized counterpart of `p`.
pub fn distort_geometric_pixel(
    p: PixelPoint,
    model: &GeometricModel,
    intr: &Intrinsics,
) -> Result<PixelPoint> {
    let n = intr.pixel_to_normalized(p)?;
    let du = p.u - intr.u0;
    let dv = p.v - intr.v0;
    match model.formulation {
        Formulation::UdNormalized => {
            let (f1, f2) = model.eval(n.radius())?;
            let mut ud = du * f1;
            if f1 != f2 {
                ud += intr.gamma / intr.beta * dv * (f2 - f1);
            }
            Ok(PixelPoint::new(ud + intr.u0, dv * f2 + intr.v0))
        }
        Formulation::UdPixel => {
            let (f1, f2) = model.eval(n.radius())?;
            Ok(PixelPoint::new(du * f1 + intr.u0, dv * f2 + intr.v0))
        }
        Formulation::Du => Ok(intr.normalized_to_pixel(distort_geometric(n, model, intr)?)),
    }
}

/// D-U map: distorted normalized point to undistorted, evaluated at the
/// distorted radius.
pub fn distort_du(p_d: NormalizedPoint, model: &GeometricModel) -> Result<NormalizedPoint> {
    let (f1, f2) = model.eval(p_d.radius())?;
    Ok(NormalizedPoint::new(p_d.x * f1, p_d.y * f2))
}

/// Which radius enters the decentering model alongside pixel offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RadiusUnit {
    /// Radius of the normalized counterpart of the point.
    #[default]
    Normalized,
    /// Euclidean length of the pixel offset from the principal point.
    Pixel,
}

/// Radial-plus-decentering distortion in pixel form. `coeffs` are
/// `(k1, k2, k3, p1, p2, p3)`; offsets are taken from the principal point and
/// `r` is the normalized radius of `p`.
pub fn distort_decentering(p: PixelPoint, coeffs: &[f64; 6], intr: &Intrinsics) -> Result<PixelPoint> {
    distort_decentering_with(p, coeffs, intr, RadiusUnit::Normalized)
}

pub fn distort_decentering_with(
    p: PixelPoint,
    coeffs: &[f64; 6],
    intr: &Intrinsics,
    unit: RadiusUnit,
) -> Result<PixelPoint> {
    let [k1, k2, k3, p1, p2, p3] = *coeffs;
    let ub = p.u - intr.u0;
    let vb = p.v - intr.v0;
    let r2 = match unit {
        RadiusUnit::Normalized => {
            let n = intr.pixel_to_normalized(p)?;
            n.x * n.x + n.y * n.y
        }
        RadiusUnit::Pixel => ub * ub + vb * vb,
    };
    let radial = 1.0 + k1 * r2 + k2 * r2 * r2 + k3 * r2 * r2 * r2;
    let tail = 1.0 + p3 * r2;
    let du = (2.0 * p1 * ub * vb + p2 * (r2 + 2.0 * ub * ub)) * tail;
    let dv = (p1 * (r2 + 2.0 * vb * vb) + 2.0 * p2 * ub * vb) * tail;
    Ok(PixelPoint::new(ub * radial + intr.u0 + du, vb * radial + intr.v0 + dv))
}
