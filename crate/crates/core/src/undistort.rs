//! Inverse distortion: closed-form for the two inverse-rational kinds,
//! safeguarded Newton for everything else, and the one-shot approximation
//! `r = r_d f(r_d, -k)`.

use crate::distortion::{distort_du, Formulation, FnKind, GeometricModel, POLE_EPS};
use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, NormalizedPoint};

/// Residual tolerance of the Newton radius solver.
pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITER: usize = 100;

/// Real roots `r` of
/// `xd2 (a1 + k1 t)^2 + yd2 (a2 + k2 t)^2 = r^2` where `t = r`, or `t = r^2`
/// when `squared` is set (negative `r^2` roots are dropped in that case).
///
/// `xd2`, `yd2` are the squared distorted coordinates. The plain inverse-linear
/// and inverse-quadratic kinds use `a1 = a2 = 1`; piecewise segments carry
/// their own constant term.
pub(crate) fn axis_quadratic_roots(
    xd2: f64,
    yd2: f64,
    (a1, k1): (f64, f64),
    (a2, k2): (f64, f64),
    squared: bool,
) -> Result<Vec<f64>> {
    let mut qa = xd2 * k1 * k1 + yd2 * k2 * k2;
    let mut qb = 2.0 * (xd2 * a1 * k1 + yd2 * a2 * k2);
    let qc = xd2 * a1 * a1 + yd2 * a2 * a2;
    if squared {
        qb -= 1.0;
    } else {
        qa -= 1.0;
    }

    let mut roots = Vec::with_capacity(2);
    if qa.abs() < 1e-14 {
        if qb.abs() < 1e-14 {
            return Err(Error::DegenerateQuadratic);
        }
        roots.push(-qc / qb);
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            return Ok(Vec::new());
        }
        let q = -0.5 * (qb + qb.signum() * disc.sqrt());
        roots.push(q / qa);
        if q != 0.0 {
            roots.push(qc / q);
        }
    }

    if squared {
        Ok(roots.into_iter().filter(|s| *s >= 0.0).map(f64::sqrt).collect())
    } else {
        Ok(roots)
    }
}

/// Picks the candidate closest to `r_d`, preferring a nonnegative root on ties.
pub(crate) fn closest_root(candidates: &[f64], r_d: f64) -> Option<f64> {
    candidates.iter().copied().fold(None, |best: Option<f64>, r| match best {
        None => Some(r),
        Some(b) => {
            let (db, dr) = ((b - r_d).abs(), (r - r_d).abs());
            if dr < db || (dr == db && b < 0.0 && r >= 0.0) {
                Some(r)
            } else {
                Some(b)
            }
        }
    })
}

fn require_analytic(model: &GeometricModel) -> Result<bool> {
    let squared = match model.kind {
        FnKind::InverseLinear => false,
        FnKind::InverseQuadratic => true,
        k => {
            return Err(Error::Unsupported(format!(
                "closed-form undistortion needs the 1/(1 + k r) or 1/(1 + k r^2) kind, not {k}"
            )))
        }
    };
    if model.formulation == Formulation::UdPixel {
        return Err(Error::Unsupported(
            "closed-form undistortion is implemented for the normalized-coordinate formulation".into(),
        ));
    }
    Ok(squared)
}

/// All real radius candidates of the closed-form undistortion of `p_d`.
pub fn analytic_radius_candidates(p_d: NormalizedPoint, model: &GeometricModel) -> Result<Vec<f64>> {
    let squared = require_analytic(model)?;
    axis_quadratic_roots(
        p_d.x * p_d.x,
        p_d.y * p_d.y,
        (1.0, model.k1[0]),
        (1.0, model.k2[0]),
        squared,
    )
}

/// Closed-form undistortion for the inverse-linear and inverse-quadratic
/// kinds. Solves one quadratic in `r` (or `r^2`) and keeps the root nearest
/// the distorted radius. No iteration is performed.
///
/// D-U models are undistorted by direct evaluation.
pub fn undistort_analytic(p_d: NormalizedPoint, model: &GeometricModel) -> Result<NormalizedPoint> {
    if model.formulation == Formulation::Du {
        return distort_du(p_d, model);
    }
    let squared = require_analytic(model)?;
    let r_d = p_d.radius();
    if r_d == 0.0 {
        return Ok(p_d);
    }
    let roots = analytic_radius_candidates(p_d, model)?;
    let r = closest_root(&roots, r_d).ok_or(Error::NoRealRoot { r_d })?;
    let t = if squared { r * r } else { r };
    Ok(NormalizedPoint::new(
        p_d.x * (1.0 + model.k1[0] * t),
        p_d.y * (1.0 + model.k2[0] * t),
    ))
}

/// Safeguarded Newton iteration on `h(r) = 0` starting at `r0 > 0`, where
/// `eval` returns `(h(r), h'(r))` and `h(0) > 0`. Falls back to bisection on
/// `[0, 4 r0 + 1]` whenever a Newton step leaves the bracket.
pub(crate) fn solve_radius<F>(r0: f64, eval: F) -> Result<f64>
where
    F: Fn(f64) -> Result<(f64, f64)>,
{
    let mut lo = 0.0;
    let mut hi = 4.0 * r0 + 1.0;
    let bracketed = matches!(eval(hi), Ok((h, _)) if h < 0.0);
    let mut r = r0;
    let mut last = f64::INFINITY;

    for _ in 0..NEWTON_MAX_ITER {
        match eval(r) {
            Ok((h, dh)) => {
                last = h.abs();
                if last <= NEWTON_TOL {
                    return Ok(r);
                }
                if bracketed {
                    if h > 0.0 {
                        lo = r;
                    } else {
                        hi = r;
                    }
                    if hi - lo <= 4.0 * f64::EPSILON * hi {
                        return Ok(r);
                    }
                }
                let mut next = r - h / dh;
                if bracketed {
                    if !(next > lo && next < hi) {
                        next = 0.5 * (lo + hi);
                    }
                } else if !next.is_finite() || next < 0.0 {
                    next = 0.5 * r;
                }
                r = next;
            }
            Err(e) => {
                if !bracketed {
                    return Err(e);
                }
                hi = r;
                r = 0.5 * (lo + hi);
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: NEWTON_MAX_ITER,
        residual: last,
    })
}

fn nonzero(f: f64, r: f64) -> Result<f64> {
    if f.abs() < POLE_EPS {
        return Err(Error::PoleAtRadius { radius: r });
    }
    Ok(f)
}

/// Solves `p = (q.x / f(rho, k1), q.y / f(rho, k2))` with `rho = |p|`, the
/// shared structure of undistorting a normalized U-D model and of distorting
/// through a D-U model.
fn invert_axis_scaling(q: NormalizedPoint, model: &GeometricModel) -> Result<NormalizedPoint> {
    let rq = q.radius();
    if rq == 0.0 {
        return Ok(q);
    }
    let rho = solve_radius(rq, |r| {
        let ((f1, d1), (f2, d2)) = model.eval_with_derivative(r)?;
        let (f1, f2) = (nonzero(f1, r)?, nonzero(f2, r)?);
        let x = q.x / f1;
        let y = q.y / f2;
        let dx = -q.x * d1 / (f1 * f1);
        let dy = -q.y * d2 / (f2 * f2);
        let n = x.hypot(y);
        Ok((n - r, (x * dx + y * dy) / n - 1.0))
    })?;
    let (f1, f2) = model.eval(rho)?;
    Ok(NormalizedPoint::new(q.x / f1, q.y / f2))
}

/// Distorted point of a D-U model: solves `distort_du(p_d) = p` for `p_d`.
pub(crate) fn invert_du(p: NormalizedPoint, model: &GeometricModel) -> Result<NormalizedPoint> {
    invert_axis_scaling(p, model)
}

/// Numerical undistortion for any kind: finds the undistorted radius by
/// safeguarded Newton iteration from `r = r_d`, then divides out the axis
/// scalings. D-U models are undistorted by direct evaluation.
pub fn undistort_iterative(
    p_d: NormalizedPoint,
    model: &GeometricModel,
    intr: &Intrinsics,
) -> Result<NormalizedPoint> {
    match model.formulation {
        Formulation::Du => distort_du(p_d, model),
        Formulation::UdNormalized => invert_axis_scaling(p_d, model),
        Formulation::UdPixel => {
            let r_d = p_d.radius();
            if r_d == 0.0 {
                return Ok(p_d);
            }
            let c = intr.gamma / intr.alpha;
            // y = y_d / f2, x = (x_d - c y (f1 - f2)) / f1
            let point_at = |r: f64| -> Result<(f64, f64, f64, f64)> {
                let ((f1, d1), (f2, d2)) = model.eval_with_derivative(r)?;
                let (f1, f2) = (nonzero(f1, r)?, nonzero(f2, r)?);
                let y = p_d.y / f2;
                let dy = -p_d.y * d2 / (f2 * f2);
                let n = p_d.x - c * y * (f1 - f2);
                let dn = -c * (dy * (f1 - f2) + y * (d1 - d2));
                let x = n / f1;
                let dx = (dn * f1 - n * d1) / (f1 * f1);
                Ok((x, y, dx, dy))
            };
            let r = solve_radius(r_d, |r| {
                let (x, y, dx, dy) = point_at(r)?;
                let n = x.hypot(y);
                Ok((n - r, (x * dx + y * dy) / n - 1.0))
            })?;
            let (x, y, _, _) = point_at(r)?;
            Ok(NormalizedPoint::new(x, y))
        }
    }
}

/// One-shot approximate undistortion `x = x_d f(r_d, -k1)`,
/// `y = y_d f(r_d, -k2)`. Accurate only for small coefficients.
pub fn undistort_approx(p_d: NormalizedPoint, model: &GeometricModel) -> Result<NormalizedPoint> {
    if model.formulation == Formulation::Du {
        return distort_du(p_d, model);
    }
    let r_d = p_d.radius();
    let fx = model.fn_x().negated().eval(r_d)?;
    let fy = model.fn_y().negated().eval(r_d)?;
    Ok(NormalizedPoint::new(p_d.x * fx, p_d.y * fy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distortion::{distort_geometric, DistortionFn};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cam() -> Intrinsics {
        Intrinsics::new(500.0, 10.0, 480.0, 320.0, 240.0).unwrap()
    }

    fn geo(kind: FnKind, k1: Vec<f64>, k2: Vec<f64>) -> GeometricModel {
        GeometricModel::new(kind, k1, k2, Formulation::UdNormalized).unwrap()
    }

    #[test]
    fn origin_is_fixed() {
        let m = geo(FnKind::InverseLinear, vec![0.2], vec![-0.1]);
        let z = NormalizedPoint::new(0.0, 0.0);
        assert_eq!(undistort_analytic(z, &m).unwrap(), z);
        assert_eq!(undistort_iterative(z, &m, &cam()).unwrap(), z);
    }

    #[test]
    fn inverse_linear_worked_example() {
        // (3, 4) has r = 5 and distorts to (3, 4) / 1.5 under k = 0.1.
        let m = geo(FnKind::InverseLinear, vec![0.1], vec![0.1]);
        let pd = distort_geometric(NormalizedPoint::new(3.0, 4.0), &m, &cam()).unwrap();
        assert!((pd.x - 2.0).abs() < 1e-15 && (pd.y - 8.0 / 3.0).abs() < 1e-15);
        let p = undistort_analytic(NormalizedPoint::new(2.0, 8.0 / 3.0), &m).unwrap();
        assert!((p.x - 3.0).abs() < 1e-12 && (p.y - 4.0).abs() < 1e-12, "{p:?}");
    }

    #[test]
    fn zero_inverse_quadratic_is_identity_over_grid() {
        let m = geo(FnKind::InverseQuadratic, vec![0.0], vec![0.0]);
        for i in 0..50 {
            for j in 0..50 {
                let p = NormalizedPoint::new(i as f64 / 25.0 - 1.0, j as f64 / 25.0 - 1.0);
                let q = undistort_analytic(p, &m).unwrap();
                assert!(p.distance(&q) < 1e-15, "{p:?} -> {q:?}");
            }
        }
    }

    #[test]
    fn no_real_root_beyond_the_fold() {
        // r / (1 + 0.3 r^2) never exceeds ~0.913
        let m = geo(FnKind::InverseQuadratic, vec![0.3], vec![0.3]);
        assert!(matches!(
            undistort_analytic(NormalizedPoint::new(1.0, 0.0), &m),
            Err(Error::NoRealRoot { .. })
        ));
    }

    #[test]
    fn analytic_rejects_other_kinds() {
        let m = geo(FnKind::Quadratic, vec![0.1], vec![0.1]);
        assert!(matches!(undistort_analytic(NormalizedPoint::new(0.1, 0.1), &m), Err(Error::Unsupported(_))));
    }

    #[test]
    fn degenerate_quadratic_without_linear_term() {
        assert!(matches!(
            axis_quadratic_roots(1.0, 0.0, (0.0, 1.0), (1.0, 0.0), false),
            Err(Error::DegenerateQuadratic)
        ));
    }

    #[test]
    fn chosen_root_is_nearest_distorted_radius() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let kind = if rng.random_bool(0.5) { FnKind::InverseLinear } else { FnKind::InverseQuadratic };
            let m = geo(kind, vec![rng.random_range(-0.3..0.3)], vec![rng.random_range(-0.3..0.3)]);
            let p = NormalizedPoint::new(rng.random_range(-0.7..0.7), rng.random_range(-0.7..0.7));
            let pd = distort_geometric(p, &m, &cam()).unwrap();
            let r_d = pd.radius();
            let roots = analytic_radius_candidates(pd, &m).unwrap();
            let chosen = undistort_analytic(pd, &m).unwrap().radius();
            for alt in roots {
                assert!((chosen - r_d).abs() <= (alt - r_d).abs() + 1e-12);
            }
        }
    }

    #[test]
    fn iterative_agrees_with_analytic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let kind = if rng.random_bool(0.5) { FnKind::InverseLinear } else { FnKind::InverseQuadratic };
            let m = geo(kind, vec![rng.random_range(-0.3..0.3)], vec![rng.random_range(-0.3..0.3)]);
            let p = NormalizedPoint::new(rng.random_range(-0.7..0.7), rng.random_range(-0.7..0.7));
            let pd = distort_geometric(p, &m, &cam()).unwrap();
            let a = undistort_analytic(pd, &m).unwrap();
            let b = undistort_iterative(pd, &m, &cam()).unwrap();
            assert!(a.distance(&b) < 1e-10, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn iterative_identity_for_zero_coefficients() {
        for kind in FnKind::CATALOG {
            let m = GeometricModel::identity(kind, Formulation::UdNormalized);
            let p = NormalizedPoint::new(0.37, -0.52);
            assert!(undistort_iterative(p, &m, &cam()).unwrap().distance(&p) < 1e-12);
        }
    }

    #[test]
    fn even_quartic_roundtrip_within_working_radius() {
        let f = DistortionFn::new(FnKind::EvenQuartic, vec![-0.3554, 0.1633]).unwrap();
        let m = GeometricModel::radial(&f, Formulation::UdNormalized);
        for i in 0..=40 {
            for j in 0..16 {
                let r = 0.8 * i as f64 / 40.0;
                let t = j as f64 * std::f64::consts::TAU / 16.0;
                let p = NormalizedPoint::new(r * t.cos(), r * t.sin());
                let pd = distort_geometric(p, &m, &cam()).unwrap();
                let q = undistort_iterative(pd, &m, &cam()).unwrap();
                assert!(p.distance(&q) < 1e-10);
                // radius consistency: r f(r) = r_d at the recovered radius
                let rq = q.radius();
                assert!((rq * f.eval(rq).unwrap() - pd.radius()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn iterative_inverts_every_formulation() {
        let intr = cam();
        for form in [Formulation::UdNormalized, Formulation::UdPixel, Formulation::Du] {
            for kind in FnKind::CATALOG {
                let k1: Vec<f64> = [-0.12, 0.05, 0.08][..kind.coeff_count()].to_vec();
                let k2: Vec<f64> = k1.iter().map(|c| c * 1.3).collect();
                let m = GeometricModel::new(kind, k1, k2, form).unwrap();
                let p = NormalizedPoint::new(0.41, -0.33);
                let pd = distort_geometric(p, &m, &intr).unwrap();
                let q = undistort_iterative(pd, &m, &intr).unwrap();
                assert!(p.distance(&q) < 1e-10, "{form} {kind}: {p:?} vs {q:?}");
            }
        }
    }

    #[test]
    fn approximation_degrades_with_coefficient_size() {
        let err = |k: f64, r_d: f64| {
            let f = DistortionFn::new(FnKind::Quadratic, vec![k]).unwrap();
            let m = GeometricModel::radial(&f, Formulation::UdNormalized);
            let pd = NormalizedPoint::new(r_d, 0.0);
            let a = undistort_approx(pd, &m).unwrap();
            let b = undistort_iterative(pd, &m, &cam()).unwrap();
            a.distance(&b)
        };
        let small = err(-0.05, 0.2);
        let large = err(-0.5, 0.8);
        assert!(small < 1e-3, "{small}");
        assert!(large > small, "{large} vs {small}");

        let id = GeometricModel::identity(FnKind::LinearOverFull, Formulation::UdNormalized);
        let p = NormalizedPoint::new(0.2, 0.6);
        assert_eq!(undistort_approx(p, &id).unwrap(), p);
    }
}
