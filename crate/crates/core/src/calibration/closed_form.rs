//! Closed-form intrinsics and poses from plane homographies.

use nalgebra::{DMatrix, Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{Extrinsics, Intrinsics};

/// Row `v_ij` of the absolute-conic constraint system for homography columns
/// `i` and `j`, over `b = (B11, B12, B22, B13, B23, B33)`.
fn v_row(h: &Matrix3<f64>, i: usize, j: usize) -> [f64; 6] {
    let hi = h.column(i);
    let hj = h.column(j);
    [
        hi[0] * hj[0],
        hi[0] * hj[1] + hi[1] * hj[0],
        hi[1] * hj[1],
        hi[2] * hj[0] + hi[0] * hj[2],
        hi[2] * hj[1] + hi[1] * hj[2],
        hi[2] * hj[2],
    ]
}

/// Image-side conditioning: shift and scale so that the images of the world
/// origin are centered with unit spread.
fn conditioning(hs: &[Matrix3<f64>]) -> Matrix3<f64> {
    let n = hs.len() as f64;
    let origins: Vec<(f64, f64)> = hs.iter().map(|h| (h[(0, 2)] / h[(2, 2)], h[(1, 2)] / h[(2, 2)])).collect();
    let (cx, cy) = origins.iter().fold((0.0, 0.0), |(a, b), o| (a + o.0 / n, b + o.1 / n));
    let spread = origins.iter().map(|o| (o.0 - cx).hypot(o.1 - cy)).sum::<f64>() / n;
    let scale = origins.iter().map(|o| o.0.hypot(o.1)).sum::<f64>() / n;
    let s = 1.0 / spread.max(scale).max(1.0);
    if !s.is_finite() {
        return Matrix3::identity();
    }
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

/// Solves the two-constraints-per-view linear system on the image of the
/// absolute conic and extracts `(alpha, gamma, beta, u0, v0)`. With
/// `fix_skew` the constraint `B12 = 0` is added, forcing `gamma = 0` and
/// allowing two views.
pub fn intrinsics_from_homographies(hs: &[Matrix3<f64>], fix_skew: bool) -> Result<Intrinsics> {
    let needed = if fix_skew { 2 } else { 3 };
    if hs.len() < needed {
        return Err(Error::InsufficientViews { needed, got: hs.len() });
    }
    let nm = conditioning(hs);
    let conditioned: Vec<Matrix3<f64>> = hs.iter().map(|h| {
        let c = nm * h;
        c / c.norm()
    }).collect();

    let eq_rows = 2 * hs.len() + usize::from(fix_skew);
    let mut v = DMatrix::<f64>::zeros(eq_rows.max(6), 6);
    for (k, h) in conditioned.iter().enumerate() {
        let v12 = v_row(h, 0, 1);
        let v11 = v_row(h, 0, 0);
        let v22 = v_row(h, 1, 1);
        let diff: Vec<f64> = v11.iter().zip(&v22).map(|(a, b)| a - b).collect();
        let n12 = v12.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nd = diff.iter().map(|x| x * x).sum::<f64>().sqrt();
        for c in 0..6 {
            v[(2 * k, c)] = v12[c] / n12.max(f64::MIN_POSITIVE);
            v[(2 * k + 1, c)] = diff[c] / nd.max(f64::MIN_POSITIVE);
        }
    }
    if fix_skew {
        v[(2 * hs.len(), 1)] = 1.0;
    }

    let svd = v.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let min = (0..6)
        .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
        .unwrap();
    let mut b: Vec<f64> = v_t.row(min).iter().copied().collect();
    if b[0] < 0.0 {
        b.iter_mut().for_each(|x| *x = -*x);
    }
    let [b11, b12, b22, b13, b23, b33] = [b[0], b[1], b[2], b[3], b[4], b[5]];

    let denom = b11 * b22 - b12 * b12;
    if !(denom > 0.0) || !(b11 > 0.0) {
        return Err(Error::IllConditioned("conic matrix is not positive definite".into()));
    }
    let v0 = (b12 * b13 - b11 * b23) / denom;
    let lambda = b33 - (b13 * b13 + v0 * (b12 * b13 - b11 * b23)) / b11;
    if !(lambda / b11 > 0.0) {
        return Err(Error::IllConditioned("conic matrix is not positive definite".into()));
    }
    let alpha = (lambda / b11).sqrt();
    let beta = (lambda * b11 / denom).sqrt();
    let gamma = if fix_skew { 0.0 } else { -b12 * alpha * alpha * beta / lambda };
    let u0 = gamma * v0 / beta - b13 * alpha * alpha / lambda;

    // Undo the conditioning: A = N^-1 A'.
    let a_cond = Matrix3::new(alpha, gamma, u0, 0.0, beta, v0, 0.0, 0.0, 1.0);
    let a = nm.try_inverse().expect("conditioning is invertible") * a_cond;
    Intrinsics::new(a[(0, 0)], a[(0, 1)], a[(1, 1)], a[(0, 2)], a[(1, 2)])
        .map_err(|e| Error::IllConditioned(e.to_string()))
}

/// Pose of the plane from its homography and known intrinsics, with the
/// rotation projected onto the nearest orthonormal matrix and the sign chosen
/// so that the plane lies in front of the camera.
pub fn extrinsics_from_homography(h: &Matrix3<f64>, intr: &Intrinsics) -> Result<Extrinsics> {
    let a_inv = intr.inverse_matrix()?;
    let h1 = a_inv * h.column(0);
    let h2 = a_inv * h.column(1);
    let h3 = a_inv * h.column(2);
    let mut lambda = 1.0 / h1.norm();
    if h3.z * lambda < 0.0 {
        lambda = -lambda;
    }
    let r1: Vector3<f64> = h1 * lambda;
    let r2: Vector3<f64> = h2 * lambda;
    let r3 = r1.cross(&r2);
    let t = h3 * lambda;

    let q = Matrix3::from_columns(&[r1, r2, r3]);
    let svd = q.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    Ok(Extrinsics::from_matrix(&r, t))
}
