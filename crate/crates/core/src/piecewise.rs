//! Piecewise distortion profiles built from `1/(a + k r)` or `1/(a + k r^2)`
//! segments on uniform breakpoints `r_i = i r_max / s`.
//!
//! The free parameters are the profile values `g_i` at the breakpoints. Each
//! segment's coefficients follow from continuity and the knot values:
//!
//! ```text
//! segment 1:  1 / (1 + k_1 t)          with 1 / (1 + k_1 t_1) = g_1
//! segment i:  1 / (a_i + k_i t)        through (t_{i-1}, g_{i-1}) and (t_i, g_i)
//! ```
//!
//! where `t = r` for the inverse-linear base and `t = r^2` for the
//! inverse-quadratic base. Each segment stays invertible in closed form.

use serde::{Deserialize, Serialize};

use crate::distortion::{FnKind, POLE_EPS};
use crate::error::{Error, Result};
use crate::geometry::NormalizedPoint;
use crate::undistort::{axis_quadratic_roots, closest_root};

pub const MAX_SEGMENTS: usize = 3;

/// One segment `1 / (constant + slope t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub constant: f64,
    pub slope: f64,
}

fn squared_base(base: FnKind) -> Result<bool> {
    match base {
        FnKind::InverseLinear => Ok(false),
        FnKind::InverseQuadratic => Ok(true),
        k => Err(Error::InvalidModel(format!(
            "piecewise profiles use the 1/(1 + k r) or 1/(1 + k r^2) kind, not {k}"
        ))),
    }
}

/// Uniform breakpoints `i r_max / s`, `i = 1..=s`.
pub fn breakpoints(r_max: f64, segments: usize) -> Vec<f64> {
    (1..=segments).map(|i| i as f64 * r_max / segments as f64).collect()
}

/// Largest radius over all feature points.
pub fn update_r_max(radii: &[f64]) -> Result<f64> {
    radii
        .iter()
        .copied()
        .reduce(f64::max)
        .ok_or(Error::EmptyDataset)
}

/// Segment coefficients from knot values and breakpoints.
pub fn coeffs_from_knots(knot_values: &[f64], breakpoints: &[f64], base: FnKind) -> Result<Vec<Segment>> {
    let squared = squared_base(base)?;
    if knot_values.len() != breakpoints.len() || knot_values.is_empty() {
        return Err(Error::InvalidKnot(format!(
            "{} knot values for {} breakpoints",
            knot_values.len(),
            breakpoints.len()
        )));
    }
    if let Some(g) = knot_values.iter().find(|g| !(**g > 0.0) || !g.is_finite()) {
        return Err(Error::InvalidKnot(format!("knot value {g} is not positive")));
    }
    let mut prev = 0.0;
    for &b in breakpoints {
        if !(b > prev) {
            return Err(Error::InvalidKnot(format!("breakpoints must increase strictly from 0 (got {b} after {prev})")));
        }
        prev = b;
    }

    let t: Vec<f64> = breakpoints.iter().map(|&r| if squared { r * r } else { r }).collect();
    let inv: Vec<f64> = knot_values.iter().map(|g| 1.0 / g).collect();
    let mut segs = Vec::with_capacity(t.len());
    segs.push(Segment {
        constant: 1.0,
        slope: (inv[0] - 1.0) / t[0],
    });
    for i in 1..t.len() {
        let slope = (inv[i] - inv[i - 1]) / (t[i] - t[i - 1]);
        segs.push(Segment {
            constant: inv[i - 1] - slope * t[i - 1],
            slope,
        });
    }
    Ok(segs)
}

/// A piecewise-continuous distortion function of the radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProfileRecord", into = "ProfileRecord")]
pub struct PiecewiseProfile {
    base_kind: FnKind,
    knot_values: Vec<f64>,
    r_max: f64,
    breakpoints: Vec<f64>,
    segments: Vec<Segment>,
}

#[derive(Serialize, Deserialize)]
struct ProfileRecord {
    base_kind: FnKind,
    s: usize,
    g: Vec<f64>,
    r_max: f64,
}

impl TryFrom<ProfileRecord> for PiecewiseProfile {
    type Error = Error;

    fn try_from(r: ProfileRecord) -> Result<Self> {
        if r.s != r.g.len() {
            return Err(Error::InvalidKnot(format!("{} segments but {} knot values", r.s, r.g.len())));
        }
        PiecewiseProfile::new(r.base_kind, r.g, r.r_max)
    }
}

impl From<PiecewiseProfile> for ProfileRecord {
    fn from(p: PiecewiseProfile) -> Self {
        ProfileRecord {
            base_kind: p.base_kind,
            s: p.knot_values.len(),
            g: p.knot_values,
            r_max: p.r_max,
        }
    }
}

impl PiecewiseProfile {
    pub fn new(base_kind: FnKind, knot_values: Vec<f64>, r_max: f64) -> Result<Self> {
        let s = knot_values.len();
        if !(1..=MAX_SEGMENTS).contains(&s) {
            return Err(Error::InvalidKnot(format!("{s} segments (1 to {MAX_SEGMENTS} supported)")));
        }
        let bps = breakpoints(r_max, s);
        let segments = coeffs_from_knots(&knot_values, &bps, base_kind)?;
        Ok(Self {
            base_kind,
            knot_values,
            r_max,
            breakpoints: bps,
            segments,
        })
    }

    /// Unit knots: the identity profile.
    pub fn identity(base_kind: FnKind, segments: usize, r_max: f64) -> Result<Self> {
        Self::new(base_kind, vec![1.0; segments], r_max)
    }

    /// Same knot values on breakpoints rescaled to a new `r_max`.
    pub fn with_r_max(&self, r_max: f64) -> Result<Self> {
        Self::new(self.base_kind, self.knot_values.clone(), r_max)
    }

    pub fn base_kind(&self) -> FnKind {
        self.base_kind
    }

    pub fn knot_values(&self) -> &[f64] {
        &self.knot_values
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    fn squared(&self) -> bool {
        self.base_kind == FnKind::InverseQuadratic
    }

    /// Segment covering `r`; radii past `r_max` use the last segment.
    pub fn segment_index(&self, r: f64) -> usize {
        self.breakpoints
            .iter()
            .position(|&b| r <= b)
            .unwrap_or(self.segments.len() - 1)
    }

    /// Evaluates segment `i` at `r` regardless of whether `r` lies in it.
    pub fn eval_segment(&self, i: usize, r: f64) -> Result<f64> {
        let seg = self.segments[i];
        let t = if self.squared() { r * r } else { r };
        let d = seg.constant + seg.slope * t;
        if d.abs() < POLE_EPS {
            return Err(Error::PoleAtRadius { radius: r });
        }
        Ok(1.0 / d)
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        self.eval_segment(self.segment_index(r), r)
    }

    /// `[lo, hi]` radius interval of segment `i`; the last one is unbounded.
    fn interval(&self, i: usize) -> (f64, f64) {
        let lo = if i == 0 { 0.0 } else { self.breakpoints[i - 1] };
        let hi = if i + 1 == self.segments.len() {
            f64::INFINITY
        } else {
            self.breakpoints[i]
        };
        (lo, hi)
    }
}

/// `profile value at r`, the free-function form of [`PiecewiseProfile::eval`].
pub fn eval_profile(profile: &PiecewiseProfile, r: f64) -> Result<f64> {
    profile.eval(r)
}

/// Two-axis piecewise model: `x_d = x g_x(r)`, `y_d = y g_y(r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PiecewisePair")]
pub struct GeometricPiecewiseModel {
    pub profile_x: PiecewiseProfile,
    pub profile_y: PiecewiseProfile,
}

#[derive(Deserialize)]
struct PiecewisePair {
    profile_x: PiecewiseProfile,
    profile_y: PiecewiseProfile,
}

impl TryFrom<PiecewisePair> for GeometricPiecewiseModel {
    type Error = Error;

    fn try_from(p: PiecewisePair) -> Result<Self> {
        GeometricPiecewiseModel::new(p.profile_x, p.profile_y)
    }
}

impl GeometricPiecewiseModel {
    pub fn new(profile_x: PiecewiseProfile, profile_y: PiecewiseProfile) -> Result<Self> {
        if profile_x.base_kind != profile_y.base_kind
            || profile_x.segment_count() != profile_y.segment_count()
            || profile_x.breakpoints != profile_y.breakpoints
        {
            return Err(Error::InvalidModel(
                "x and y profiles must share base kind, segment count and breakpoints".into(),
            ));
        }
        Ok(Self { profile_x, profile_y })
    }

    pub fn from_knots(base: FnKind, gx: Vec<f64>, gy: Vec<f64>, r_max: f64) -> Result<Self> {
        Self::new(PiecewiseProfile::new(base, gx, r_max)?, PiecewiseProfile::new(base, gy, r_max)?)
    }

    pub fn with_r_max(&self, r_max: f64) -> Result<Self> {
        Self::new(self.profile_x.with_r_max(r_max)?, self.profile_y.with_r_max(r_max)?)
    }

    pub fn r_max(&self) -> f64 {
        self.profile_x.r_max
    }

    pub fn segment_count(&self) -> usize {
        self.profile_x.segment_count()
    }

    pub fn base_kind(&self) -> FnKind {
        self.profile_x.base_kind
    }

    pub fn eval(&self, r: f64) -> Result<(f64, f64)> {
        Ok((self.profile_x.eval(r)?, self.profile_y.eval(r)?))
    }

    pub fn distort(&self, p: NormalizedPoint) -> Result<NormalizedPoint> {
        let (fx, fy) = self.eval(p.radius())?;
        Ok(NormalizedPoint::new(p.x * fx, p.y * fy))
    }

    /// Closed-form undistortion with segment identification: every segment's
    /// quadratic is solved, roots outside that segment's interval are
    /// dropped, and the survivor nearest `r_d` wins.
    pub fn undistort(&self, p_d: NormalizedPoint) -> Result<NormalizedPoint> {
        Ok(self.undistort_with_segment(p_d)?.0)
    }

    /// Like [`Self::undistort`], also returning the segment the root came from.
    pub fn undistort_with_segment(&self, p_d: NormalizedPoint) -> Result<(NormalizedPoint, usize)> {
        let r_d = p_d.radius();
        if r_d == 0.0 {
            return Ok((p_d, 0));
        }
        let squared = self.profile_x.squared();
        let (xd2, yd2) = (p_d.x * p_d.x, p_d.y * p_d.y);
        let mut candidates: Vec<(f64, usize)> = Vec::new();
        for i in 0..self.segment_count() {
            let sx = self.profile_x.segments[i];
            let sy = self.profile_y.segments[i];
            let roots = match axis_quadratic_roots(xd2, yd2, (sx.constant, sx.slope), (sy.constant, sy.slope), squared) {
                Ok(r) => r,
                Err(Error::DegenerateQuadratic) => continue,
                Err(e) => return Err(e),
            };
            let (lo, hi) = self.profile_x.interval(i);
            let slack = 1e-12 * (1.0 + lo);
            candidates.extend(
                roots
                    .into_iter()
                    .filter(|&r| r >= 0.0 && r >= lo - slack && r <= hi + slack)
                    .map(|r| (r, i)),
            );
        }
        let radii: Vec<f64> = candidates.iter().map(|c| c.0).collect();
        let r = closest_root(&radii, r_d).ok_or(Error::NoRealRoot { r_d })?;
        let seg = candidates.iter().find(|c| c.0 == r).unwrap().1;
        let t = if squared { r * r } else { r };
        let sx = self.profile_x.segments[seg];
        let sy = self.profile_y.segments[seg];
        Ok((
            NormalizedPoint::new(p_d.x * (sx.constant + sx.slope * t), p_d.y * (sy.constant + sy.slope * t)),
            seg,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unit_knots_give_identity_coefficients() {
        for base in [FnKind::InverseLinear, FnKind::InverseQuadratic] {
            let segs = coeffs_from_knots(&[1.0, 1.0], &[0.3, 0.6], base).unwrap();
            assert_eq!(segs[0], Segment { constant: 1.0, slope: 0.0 });
            assert_eq!(segs[1], Segment { constant: 1.0, slope: 0.0 });
        }
    }

    #[test]
    fn two_segment_worked_example() {
        let segs = coeffs_from_knots(&[0.9, 0.8], &[0.4, 0.8], FnKind::InverseLinear).unwrap();
        let round6 = |v: f64| (v * 1e6).round() / 1e6;
        assert_eq!(round6(segs[0].slope), 0.277778);
        assert_eq!(round6(segs[1].slope), 0.347222);
        assert_eq!(round6(segs[1].constant), 0.972222);

        let p = PiecewiseProfile::new(FnKind::InverseLinear, vec![0.9, 0.8], 0.8).unwrap();
        assert!((p.eval(0.4).unwrap() - 0.9).abs() < 1e-12);
        assert!((p.eval(0.8).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(p.eval(0.0).unwrap(), 1.0);
    }

    #[test]
    fn invalid_knots_are_rejected() {
        assert!(matches!(
            coeffs_from_knots(&[0.0, 0.8], &[0.4, 0.8], FnKind::InverseLinear),
            Err(Error::InvalidKnot(_))
        ));
        assert!(matches!(
            coeffs_from_knots(&[0.9, 0.8], &[0.4, 0.4], FnKind::InverseLinear),
            Err(Error::InvalidKnot(_))
        ));
        assert!(coeffs_from_knots(&[0.9], &[0.4], FnKind::Quadratic).is_err());
        assert!(PiecewiseProfile::new(FnKind::InverseLinear, vec![1.0; 4], 0.5).is_err());
    }

    #[test]
    fn r_max_is_the_largest_radius() {
        assert_eq!(update_r_max(&[0.1, 0.5, 0.3]).unwrap(), 0.5);
        assert!(matches!(update_r_max(&[]), Err(Error::EmptyDataset)));
        let zero = update_r_max(&[0.0]).unwrap();
        assert_eq!(zero, 0.0);
        assert!(matches!(
            PiecewiseProfile::identity(FnKind::InverseLinear, 2, zero),
            Err(Error::InvalidKnot(_))
        ));
    }

    #[test]
    fn fitted_three_segment_profile_reproduces_knots() {
        let g = vec![0.9709, 0.9084, 0.8327];
        let p = PiecewiseProfile::new(FnKind::InverseQuadratic, g.clone(), 0.8182).unwrap();
        for (b, gi) in p.breakpoints().iter().zip(&g) {
            assert!((p.eval(*b).unwrap() - gi).abs() < 1e-12);
        }
    }

    #[test]
    fn single_segment_matches_plain_function() {
        use crate::distortion::DistortionFn;
        for base in [FnKind::InverseLinear, FnKind::InverseQuadratic] {
            let p = PiecewiseProfile::new(base, vec![0.83], 0.79).unwrap();
            let f = DistortionFn::new(base, vec![p.segments()[0].slope]).unwrap();
            for i in 0..=100 {
                let r = i as f64 * 0.01;
                assert_eq!(p.eval(r).unwrap(), f.eval(r).unwrap());
            }
        }
    }

    #[test]
    fn profile_serializes_compactly() {
        let p = PiecewiseProfile::new(FnKind::InverseQuadratic, vec![0.97, 0.9], 0.81).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"base_kind":"6","s":2,"g":[0.97,0.9],"r_max":0.81}"#);
        let back: PiecewiseProfile = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn mismatched_axes_are_rejected() {
        let a = PiecewiseProfile::new(FnKind::InverseLinear, vec![0.9, 0.8], 0.8).unwrap();
        let b = PiecewiseProfile::new(FnKind::InverseLinear, vec![0.9, 0.8], 0.7).unwrap();
        assert!(GeometricPiecewiseModel::new(a, b).is_err());
    }

    fn knots() -> impl Strategy<Value = (Vec<f64>, bool)> {
        (proptest::collection::vec(0.75f64..1.0, 1..=3), any::<bool>())
    }

    proptest! {
        #[test]
        fn continuous_and_interpolating((g, sq) in knots(), r_max in 0.3f64..1.2) {
            let base = if sq { FnKind::InverseQuadratic } else { FnKind::InverseLinear };
            let p = PiecewiseProfile::new(base, g.clone(), r_max).unwrap();
            prop_assert_eq!(p.eval(0.0).unwrap(), 1.0);
            for (i, (&b, gi)) in p.breakpoints().iter().zip(&g).enumerate() {
                prop_assert!((p.eval(b).unwrap() - gi).abs() < 1e-12);
                if i + 1 < g.len() {
                    let left = p.eval_segment(i, b).unwrap();
                    let right = p.eval_segment(i + 1, b).unwrap();
                    prop_assert!((left - right).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn undistortion_inverts_each_segment(
            (gx, sq) in knots(),
            dy in proptest::collection::vec(-0.02f64..0.02, 3),
            r_frac in 0.0f64..1.0,
            theta in 0.0f64..std::f64::consts::TAU,
        ) {
            let base = if sq { FnKind::InverseQuadratic } else { FnKind::InverseLinear };
            // Gently decreasing knots keep r g(r) monotone on the working range.
            let mut gx = gx;
            gx.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let gy: Vec<f64> = gx.iter().zip(&dy).map(|(g, d)| (g + d).min(1.0)).collect();
            let r_max = 0.8;
            let m = GeometricPiecewiseModel::from_knots(base, gx, gy, r_max).unwrap();
            let r = r_frac * r_max;
            let p = NormalizedPoint::new(r * theta.cos(), r * theta.sin());
            let pd = m.distort(p).unwrap();
            let (q, seg) = m.undistort_with_segment(pd).unwrap();
            prop_assert!(m.distort(q).unwrap().distance(&pd) < 1e-10);
            prop_assert!(p.distance(&q) < 1e-10, "{:?} vs {:?}", p, q);
            let (lo, hi) = m.profile_x.interval(seg);
            prop_assert!(q.radius() >= lo - 1e-10 && q.radius() <= hi + 1e-10);
        }
    }
}
