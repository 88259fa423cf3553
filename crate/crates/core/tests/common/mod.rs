//! Ground-truth models shared by the integration tests.
#![allow(dead_code)]

use geocalib::calibration::{calibrate, RefineOptions};
use geocalib::dataset::CalibrationDataset;
use geocalib::distortion::{FnKind, Formulation};
use geocalib::model::ModelSpec;
use geocalib::report::CalibrationReport;
use geocalib::synthetic::{simulate, SimConfig};

/// Per-axis truth coefficients `(x, y)` for each catalog kind, close to the
/// magnitudes fitted on a real wide-angle camera. Kinds 9 and 10 use milder
/// values: the fitted ones nearly cancel numerator against denominator.
pub fn geometric_truth(kind: FnKind) -> (Vec<f64>, Vec<f64>) {
    let (x, y): (&[f64], &[f64]) = match kind.catalog_number().expect("catalog kind") {
        1 => (&[-0.2232], &[-0.2413]),
        2 => (&[-0.2624], &[-0.2890]),
        3 => (&[-0.1150, -0.1305], &[-0.1206, -0.1454]),
        4 => (&[-0.3386, 0.1512], &[-0.3718, 0.1756]),
        5 => (&[0.2679], &[0.2968]),
        6 => (&[0.3039], &[0.3348]),
        7 => (&[-0.0826, 0.1964], &[-0.0768, 0.2320]),
        8 => (&[0.0736, 0.2259], &[0.0685, 0.2608]),
        9 => (&[0.05, 0.15, 0.2], &[0.04, 0.17, 0.25]),
        10 => (&[0.05, 0.02, 0.3], &[0.06, 0.01, 0.36]),
        _ => unreachable!(),
    };
    (x.to_vec(), y.to_vec())
}

/// Truth coefficients in the parameter order of `spec`. D-U truths flip the
/// sign so that both directions describe barrel distortion.
pub fn truth_coeffs(spec: &ModelSpec) -> Vec<f64> {
    match *spec {
        ModelSpec::Radial { kind, formulation } => {
            let (x, _) = geometric_truth(kind);
            flip(x, formulation)
        }
        ModelSpec::Geometric { kind, formulation } => {
            let (x, y) = geometric_truth(kind);
            flip([x, y].concat(), formulation)
        }
        ModelSpec::Piecewise { base, segments, radial } => {
            let (x, y) = piecewise_truth(base, segments);
            if radial { x } else { [x, y].concat() }
        }
        ModelSpec::Decentering { .. } => vec![-0.32, 0.12, 0.0, 2e-5, -1.5e-5, 0.0],
        ModelSpec::None => vec![],
    }
}

fn flip(c: Vec<f64>, formulation: Formulation) -> Vec<f64> {
    if formulation == Formulation::Du {
        c.into_iter().map(|v| -v).collect()
    } else {
        c
    }
}

/// Knot values of piecewise profiles fitted on a real wide-angle camera.
pub fn piecewise_truth(base: FnKind, segments: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, y): (&[f64], &[f64]) = match (base, segments) {
        (FnKind::InverseLinear, 1) => (&[0.8261], &[0.8109]),
        (FnKind::InverseQuadratic, 1) => (&[0.8331], &[0.8191]),
        (FnKind::InverseLinear, 2) => (&[0.9249, 0.8242], &[0.9197, 0.8107]),
        (FnKind::InverseQuadratic, 2) => (&[0.9449, 0.8313], &[0.9405, 0.8182]),
        (FnKind::InverseLinear, 3) => (&[0.9657, 0.9035, 0.8284], &[0.9720, 0.9022, 0.8234]),
        (FnKind::InverseQuadratic, 3) => (&[0.9709, 0.9084, 0.8327], &[0.9741, 0.9044, 0.8253]),
        _ => panic!("no piecewise truth for {base} x{segments}"),
    };
    (x.to_vec(), y.to_vec())
}

pub fn scene(spec: ModelSpec, sigma: f64, seed: u64) -> (CalibrationDataset, CalibrationReport) {
    let cfg = SimConfig::default().with_truth(spec, truth_coeffs(&spec)).with_noise(sigma, seed);
    simulate(&cfg).expect("synthetic scene")
}

pub fn fit(ds: &CalibrationDataset, spec: ModelSpec) -> CalibrationReport {
    calibrate(ds, &spec, &RefineOptions::default()).expect("calibration")
}

pub fn max_rel_intrinsics_error(fit: &CalibrationReport, truth: &CalibrationReport) -> f64 {
    let t = truth.intrinsics;
    let f = fit.intrinsics;
    [
        (f.alpha - t.alpha).abs() / t.alpha,
        (f.beta - t.beta).abs() / t.beta,
        (f.u0 - t.u0).abs() / t.u0,
        (f.v0 - t.v0).abs() / t.v0,
        // skew is near zero: measure it against the focal length
        (f.gamma - t.gamma).abs() / t.alpha,
    ]
    .into_iter()
    .fold(0.0, f64::max)
}
