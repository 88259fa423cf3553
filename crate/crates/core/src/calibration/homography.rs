//! Plane-to-image homography by the normalized direct linear transform.

use nalgebra::{DMatrix, Matrix3};

use crate::error::{Error, Result};

/// Similarity moving the centroid to the origin with mean distance sqrt(2).
fn normalizing_transform(pts: &[[f64; 2]]) -> Result<Matrix3<f64>> {
    let n = pts.len() as f64;
    let (cx, cy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p[0] / n, b + p[1] / n));
    let mean_dist = pts.iter().map(|p| (p[0] - cx).hypot(p[1] - cy)).sum::<f64>() / n;
    if !(mean_dist > 0.0) || !mean_dist.is_finite() {
        return Err(Error::DegenerateConfiguration("all points coincide".into()));
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Ok(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

fn apply(t: &Matrix3<f64>, p: &[f64; 2]) -> [f64; 2] {
    [t[(0, 0)] * p[0] + t[(0, 2)], t[(1, 1)] * p[1] + t[(1, 2)]]
}

/// Estimates `H` with `(u, v, 1) ~ H (X, Y, 1)`, minimizing algebraic error
/// after isotropic normalization of both point sets. The result is scaled
/// so that `h33 = 1` whenever `|h33| > 1e-12`.
pub fn estimate_homography(world: &[[f64; 2]], image: &[[f64; 2]]) -> Result<Matrix3<f64>> {
    if world.len() != image.len() {
        return Err(Error::InvalidDataset(format!(
            "{} world points but {} image points",
            world.len(),
            image.len()
        )));
    }
    if world.len() < 4 {
        return Err(Error::DegenerateConfiguration(format!(
            "{} correspondences, need at least 4",
            world.len()
        )));
    }
    let tw = normalizing_transform(world)?;
    let ti = normalizing_transform(image)?;

    // Padded with zero rows so the SVD always exposes all nine right
    // singular vectors.
    let rows = (2 * world.len()).max(9);
    let mut m = DMatrix::<f64>::zeros(rows, 9);
    for (i, (w, p)) in world.iter().zip(image).enumerate() {
        let [x, y] = apply(&tw, w);
        let [u, v] = apply(&ti, p);
        let r = 2 * i;
        m.row_mut(r)
            .copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u]);
        m.row_mut(r + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, -v]);
    }

    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv = |k: usize| svd.singular_values[order[k]];
    if sv(0) == 0.0 || sv(7) <= 1e-10 * sv(0) {
        return Err(Error::DegenerateConfiguration(
            "homography design matrix is rank-deficient".into(),
        ));
    }
    let h = v_t.row(order[8]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);

    let ti_inv = ti
        .try_inverse()
        .ok_or_else(|| Error::DegenerateConfiguration("normalization is singular".into()))?;
    let mut hm = ti_inv * hn * tw;
    let h33 = hm[(2, 2)];
    if h33.abs() > 1e-12 {
        hm /= h33;
    } else {
        hm /= hm.norm();
    }
    Ok(hm)
}

/// Maps a planar world point through `H`.
pub fn apply_homography(h: &Matrix3<f64>, p: [f64; 2]) -> [f64; 2] {
    let q = h * nalgebra::Vector3::new(p[0], p[1], 1.0);
    [q.x / q.z, q.y / q.z]
}
