//! Reprojection objective, closed-form initialization and full refinement.

use std::cell::RefCell;

use rayon::prelude::*;

use super::closed_form::{extrinsics_from_homography, intrinsics_from_homographies};
use super::homography::estimate_homography;
use super::lm::{minimize, LmOptions, Termination};
use super::params::{ParameterVector, SKEW_INDEX};
use crate::dataset::CalibrationDataset;
use crate::error::{Error, Result};
use crate::geometry::{project_normalized, Extrinsics, Intrinsics, NormalizedPoint};
use crate::model::{LensModel, ModelSpec};
use crate::piecewise::update_r_max;
use crate::report::{CalibrationReport, PointResidual};

/// Residual assigned to each coordinate of a point the model cannot map.
pub const PENALTY: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineOptions {
    pub max_iter: usize,
    pub x_tol: f64,
    pub f_tol: f64,
    pub fd_step: f64,
    /// Hold the skew at zero.
    pub fix_skew: bool,
}

impl Default for RefineOptions {
    fn default() -> Self {
        let lm = LmOptions::default();
        Self {
            max_iter: lm.max_iter,
            x_tol: lm.x_tol,
            f_tol: lm.f_tol,
            fd_step: lm.fd_step,
            fix_skew: false,
        }
    }
}

impl RefineOptions {
    fn lm(&self) -> LmOptions {
        LmOptions {
            max_iter: self.max_iter,
            x_tol: self.x_tol,
            f_tol: self.f_tol,
            fd_step: self.fd_step,
        }
    }
}

/// Undistorted normalized projections of every world point, view by view.
fn normalized_projections(params: &ParameterVector, dataset: &CalibrationDataset) -> Result<Vec<Vec<NormalizedPoint>>> {
    dataset
        .views
        .iter()
        .enumerate()
        .map(|(i, view)| {
            let e = params.extrinsics(i);
            view.points
                .iter()
                .map(|c| project_normalized(&c.world_point(), &e))
                .collect()
        })
        .collect()
}

/// Largest undistorted normalized radius over all features under `params`.
pub fn current_r_max(params: &ParameterVector, dataset: &CalibrationDataset) -> Result<f64> {
    let radii: Vec<f64> = normalized_projections(params, dataset)?
        .iter()
        .flatten()
        .map(NormalizedPoint::radius)
        .collect();
    update_r_max(&radii)
}

/// Builds the lens model for `params`, deriving `r_max` from the current
/// poses when the model needs it.
pub fn model_at(params: &ParameterVector, dataset: &CalibrationDataset, spec: &ModelSpec) -> Result<LensModel> {
    let r_max = if spec.needs_r_max() {
        current_r_max(params, dataset)?
    } else {
        0.0
    };
    spec.build(params.coeffs(), r_max)
}

fn check_shape(params: &ParameterVector, dataset: &CalibrationDataset, spec: &ModelSpec) -> Result<()> {
    if params.n_views != dataset.num_views() {
        return Err(Error::InvalidDataset(format!(
            "parameters describe {} views, dataset has {}",
            params.n_views,
            dataset.num_views()
        )));
    }
    if params.n_coeffs != spec.coeff_count() {
        return Err(Error::CoefficientCount {
            kind: spec.to_string(),
            expected: spec.coeff_count(),
            got: params.n_coeffs,
        });
    }
    Ok(())
}

/// Residual vector `observed - predicted` (length `2 * point count`, ordered
/// view by view, `(du, dv)` per point) and its squared norm `J`.
pub fn compute_j(params: &ParameterVector, dataset: &CalibrationDataset, spec: &ModelSpec) -> Result<(f64, Vec<f64>)> {
    check_shape(params, dataset, spec)?;
    let intr = params.intrinsics();
    let model = model_at(params, dataset, spec)?;
    let proj = normalized_projections(params, dataset)?;
    let mut res = Vec::with_capacity(2 * dataset.num_points());
    for (view, pts) in dataset.views.iter().zip(&proj) {
        for (c, p) in view.points.iter().zip(pts) {
            let m = model.distort_to_pixel(*p, &intr)?;
            res.push(c.image[0] - m.u);
            res.push(c.image[1] - m.v);
        }
    }
    let j = res.iter().map(|r| r * r).sum();
    Ok((j, res))
}

/// Total version of [`compute_j`] for the optimizer: points the model cannot
/// map get a large residual, whole-model failures penalize every point.
fn penalized_residuals(params: &ParameterVector, dataset: &CalibrationDataset, spec: &ModelSpec) -> Vec<f64> {
    let total = 2 * dataset.num_points();
    let intr = params.intrinsics();
    let model = match model_at(params, dataset, spec) {
        Ok(m) => m,
        Err(_) => return vec![PENALTY; total],
    };
    let mut res = Vec::with_capacity(total);
    for (i, view) in dataset.views.iter().enumerate() {
        let e = params.extrinsics(i);
        for c in &view.points {
            let m = project_normalized(&c.world_point(), &e).and_then(|p| model.distort_to_pixel(p, &intr));
            match m {
                Ok(m) if m.u.is_finite() && m.v.is_finite() => {
                    res.push(c.image[0] - m.u);
                    res.push(c.image[1] - m.v);
                }
                _ => {
                    res.push(PENALTY);
                    res.push(PENALTY);
                }
            }
        }
    }
    res
}

/// Closed-form intrinsics and poses from per-view homographies.
pub fn initialize(dataset: &CalibrationDataset, fix_skew: bool) -> Result<(Intrinsics, Vec<Extrinsics>)> {
    dataset.validate(fix_skew)?;
    let hs = dataset
        .views
        .par_iter()
        .map(|v| {
            let world: Vec<[f64; 2]> = v.points.iter().map(|c| c.world).collect();
            let image: Vec<[f64; 2]> = v.points.iter().map(|c| c.image).collect();
            estimate_homography(&world, &image)
        })
        .collect::<Result<Vec<_>>>()?;
    let intr = intrinsics_from_homographies(&hs, fix_skew)?;
    let extr = hs
        .iter()
        .map(|h| extrinsics_from_homography(h, &intr))
        .collect::<Result<Vec<_>>>()?;
    Ok((intr, extr))
}

/// Assembles a report for fixed parameters.
#[allow(clippy::too_many_arguments)]
pub fn report_at(
    params: &ParameterVector,
    dataset: &CalibrationDataset,
    spec: &ModelSpec,
    j_initial: f64,
    iterations: usize,
    termination: Termination,
    fix_skew: bool,
    r_max_trace: Vec<f64>,
) -> Result<CalibrationReport> {
    let (j, res) = compute_j(params, dataset, spec)?;
    let n = dataset.num_points() as f64;
    let mut residuals = Vec::with_capacity(dataset.num_points());
    let mut k = 0;
    for (vi, view) in dataset.views.iter().enumerate() {
        for c in &view.points {
            residuals.push(PointResidual {
                view: vi,
                id: c.id,
                du: res[k],
                dv: res[k + 1],
            });
            k += 2;
        }
    }
    Ok(CalibrationReport {
        spec: *spec,
        intrinsics: params.intrinsics(),
        extrinsics: params.all_extrinsics(),
        model: model_at(params, dataset, spec)?,
        j_initial,
        j_final: j,
        rms: (j / n).sqrt(),
        rms_per_axis: (j / (2.0 * n)).sqrt(),
        iterations,
        converged: termination.converged(),
        termination,
        fix_skew,
        r_max: current_r_max(params, dataset)?,
        r_max_trace,
        residuals,
    })
}

/// Minimizes the total squared reprojection error over intrinsics, poses and
/// distortion coefficients, starting from `init`.
pub fn refine(
    dataset: &CalibrationDataset,
    spec: &ModelSpec,
    init: &ParameterVector,
    opts: &RefineOptions,
) -> Result<CalibrationReport> {
    spec.validate()?;
    dataset.validate(opts.fix_skew)?;
    check_shape(init, dataset, spec)?;

    let mut x0 = init.values.clone();
    let mut free = vec![true; x0.len()];
    if opts.fix_skew {
        x0[SKEW_INDEX] = 0.0;
        free[SKEW_INDEX] = false;
    }
    let (n_views, n_coeffs) = (init.n_views, init.n_coeffs);
    let start = ParameterVector::from_values(x0.clone(), n_views, n_coeffs);
    let (j_initial, _) = compute_j(&start, dataset, spec)?;

    let trace = RefCell::new(Vec::new());
    let outcome = minimize(
        x0,
        &free,
        |x| penalized_residuals(&ParameterVector::from_values(x.to_vec(), n_views, n_coeffs), dataset, spec),
        &opts.lm(),
        |x| {
            if spec.needs_r_max() {
                let pv = ParameterVector::from_values(x.to_vec(), n_views, n_coeffs);
                if let Ok(r) = current_r_max(&pv, dataset) {
                    trace.borrow_mut().push(r);
                }
            }
        },
    );
    let fin = ParameterVector::from_values(outcome.x, n_views, n_coeffs);
    report_at(
        &fin,
        dataset,
        spec,
        j_initial,
        outcome.iterations,
        outcome.termination,
        opts.fix_skew,
        trace.into_inner(),
    )
}

/// Closed-form initialization followed by refinement with distortion
/// coefficients at their neutral values.
pub fn calibrate(dataset: &CalibrationDataset, spec: &ModelSpec, opts: &RefineOptions) -> Result<CalibrationReport> {
    spec.validate()?;
    let (intr, extr) = initialize(dataset, opts.fix_skew)?;
    let init = ParameterVector::pack(&intr, &extr, &spec.initial_coeffs());
    refine(dataset, spec, &init, opts)
}

/// Parameter vector of an existing report, for warm starts.
pub fn params_of(report: &CalibrationReport) -> Result<ParameterVector> {
    Ok(ParameterVector::pack(&report.intrinsics, &report.extrinsics, &report.coeffs()?))
}
