//! Acceptance suite. Runs every criterion, prints one PASS/FAIL/SKIP line per
//! criterion and exits non-zero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use geocalib::calibration::{calibrate, RefineOptions};
use geocalib::dataset::CalibrationDataset;
use geocalib::distortion::{distort_geometric, FnKind, Formulation, GeometricModel};
use geocalib::geometry::{Intrinsics, NormalizedPoint};
use geocalib::model::ModelSpec;
use geocalib::piecewise::{breakpoints, coeffs_from_knots};
use geocalib::synthetic::{simulate, SimConfig};
use geocalib::undistort::{undistort_analytic, undistort_iterative};

const DATA_ENV: &str = "GEOCALIB_PUBLIC_DATA";
const SIZE_ENV: &str = "GEOCALIB_PUBLIC_IMAGE_SIZE";

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

struct Outcome {
    id: usize,
    name: &'static str,
    verdict: Verdict,
    elapsed: Duration,
    limit: Option<Duration>,
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn run(id: usize, name: &'static str, limit: Option<Duration>, f: impl FnOnce() -> Verdict) -> Outcome {
    let t = Instant::now();
    let verdict = f();
    Outcome {
        id,
        name,
        verdict,
        elapsed: t.elapsed(),
        limit,
    }
}

/// Intrinsics used where the undistortion path needs them; skew is
/// irrelevant for the normalized formulation.
fn unit_intrinsics() -> Intrinsics {
    Intrinsics::new(400.0, 0.0, 400.0, 320.0, 240.0).unwrap()
}

/// Random inverse-rational geometric models and distorted points with
/// `r_d <= 1` drawn as images of undistorted points on the monotone branch.
fn inverse_draws(count: usize, seed: u64) -> Vec<(GeometricModel, NormalizedPoint)> {
    let intr = unit_intrinsics();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let kind = if rng.random_bool(0.5) {
            FnKind::InverseLinear
        } else {
            FnKind::InverseQuadratic
        };
        let k1 = rng.random_range(-0.3..=0.3);
        let k2 = rng.random_range(-0.3..=0.3);
        let model = GeometricModel::new(kind, vec![k1], vec![k2], Formulation::UdNormalized).unwrap();
        let r = 1.5 * rng.random::<f64>().sqrt();
        let th = rng.random_range(0.0..std::f64::consts::TAU);
        let p = NormalizedPoint::new(r * th.cos(), r * th.sin());
        let Ok(pd) = distort_geometric(p, &model, &intr) else {
            continue;
        };
        if pd.radius() <= 1.0 {
            out.push((model, pd));
        }
    }
    out
}

fn analytic_exactness() -> Verdict {
    let intr = unit_intrinsics();
    let mut worst = 0.0f64;
    for (model, pd) in inverse_draws(10_000, 1) {
        let err = undistort_analytic(pd, &model)
            .and_then(|q| distort_geometric(q, &model, &intr))
            .map(|back| back.distance(&pd))
            .unwrap_or(f64::INFINITY);
        worst = worst.max(err);
    }
    check(worst < 1e-12, format!("max forward error {worst:.3e} (< 1e-12)"))
}

fn dual_inverse_agreement() -> Verdict {
    let intr = unit_intrinsics();
    let mut worst = 0.0f64;
    for (model, pd) in inverse_draws(10_000, 1) {
        let d = match (undistort_analytic(pd, &model), undistort_iterative(pd, &model, &intr)) {
            (Ok(a), Ok(b)) => a.distance(&b),
            _ => f64::INFINITY,
        };
        worst = worst.max(d);
    }
    check(worst < 1e-10, format!("max disagreement {worst:.3e} (< 1e-10)"))
}

fn oracle_closure() -> Verdict {
    let mut specs = Vec::new();
    for kind in FnKind::CATALOG {
        for formulation in [Formulation::UdNormalized, Formulation::Du] {
            specs.push(ModelSpec::Radial { kind, formulation });
            specs.push(ModelSpec::Geometric { kind, formulation });
        }
    }
    for base in [FnKind::InverseLinear, FnKind::InverseQuadratic] {
        for s in 1..=3 {
            specs.push(ModelSpec::piecewise(base, s));
        }
    }
    let mut worst_j = 0.0f64;
    let mut worst_intr = 0.0f64;
    let mut failures = Vec::new();
    for spec in &specs {
        let (ds, truth) = scene(*spec, 0.0, 0);
        let r = fit(&ds, *spec);
        let e = max_rel_intrinsics_error(&r, &truth);
        worst_j = worst_j.max(r.j_final);
        worst_intr = worst_intr.max(e);
        if !(r.j_final < 1e-10 && e < 1e-3) {
            failures.push(format!("{spec}: J={:.3e} intr={e:.2e}", r.j_final));
        }
    }
    check(
        failures.is_empty(),
        format!(
            "{} models, max J {worst_j:.3e} (< 1e-10), max intrinsics error {worst_intr:.2e} (< 1e-3){}",
            specs.len(),
            if failures.is_empty() { String::new() } else { format!("; failing: {}", failures.join(", ")) }
        ),
    )
}

/// Geometric T3 truth with the y coefficients 30% larger than x.
fn asymmetric_truth() -> (ModelSpec, Vec<f64>) {
    let (x, _) = geometric_truth(FnKind::LinearQuadratic);
    let y: Vec<f64> = x.iter().map(|v| 1.3 * v).collect();
    assert!(x.iter().zip(&y).all(|(a, b)| (b - a).abs() >= 0.25 * a.abs()));
    (ModelSpec::geometric(FnKind::LinearQuadratic), [x, y].concat())
}

fn noisy_scene(spec: ModelSpec, coeffs: Vec<f64>, seed: u64) -> CalibrationDataset {
    let cfg = SimConfig::default().with_truth(spec, coeffs).with_noise(0.1, seed);
    simulate(&cfg).expect("synthetic scene").0
}

fn nesting() -> Verdict {
    let (spec, coeffs) = asymmetric_truth();
    let seeds = 20;
    let mut violations = Vec::new();
    let mut strict = [0usize; 10];
    for seed in 0..seeds {
        let ds = noisy_scene(spec, coeffs.clone(), seed);
        for (i, kind) in FnKind::CATALOG.iter().enumerate() {
            let jr = fit(&ds, ModelSpec::radial(*kind)).j_final;
            let jg = fit(&ds, ModelSpec::geometric(*kind)).j_final;
            if jg > jr {
                violations.push(format!("kind {} seed {seed}: {jg:.6} > {jr:.6}", i + 1));
            }
            if jg <= 0.99 * jr {
                strict[i] += 1;
            }
        }
    }
    let min_strict = *strict.iter().min().unwrap();
    check(
        violations.is_empty() && min_strict >= 15,
        format!(
            "violations {} ; strict improvements per kind {strict:?} (>= 15/{seeds}){}",
            violations.len(),
            if violations.is_empty() { String::new() } else { format!("; {}", violations.join(", ")) }
        ),
    )
}

fn piecewise_monotonicity() -> Verdict {
    let spec = ModelSpec::geometric(FnKind::EvenQuartic);
    let (x, y) = geometric_truth(FnKind::EvenQuartic);
    let coeffs = [x, y].concat();
    let mut failures = Vec::new();
    let mut checked = 0;
    for seed in 0..10 {
        let ds = noisy_scene(spec, coeffs.clone(), 200 + seed);
        for base in [FnKind::InverseLinear, FnKind::InverseQuadratic] {
            let j: Vec<f64> = (1..=3).map(|s| fit(&ds, ModelSpec::piecewise(base, s)).j_final).collect();
            checked += 1;
            if !(j[2] <= j[1] && j[1] <= j[0] + 1e-6 * j[0]) {
                failures.push(format!("seed {seed} base {base}: {j:?}"));
            }
        }
    }
    check(
        failures.is_empty(),
        format!(
            "{}/{checked} orderings hold{}",
            checked - failures.len(),
            if failures.is_empty() { String::new() } else { format!("; failing: {}", failures.join(", ")) }
        ),
    )
}

/// Knot values reproduced by evaluating each segment at its end, and
/// adjacent segments agreeing at shared knots.
fn back_substitution_error(g: &[f64], r_max: f64, base: FnKind) -> f64 {
    let squared = base == FnKind::InverseQuadratic;
    let bps = breakpoints(r_max, g.len());
    let segs = coeffs_from_knots(g, &bps, base).unwrap();
    let t = |r: f64| if squared { r * r } else { r };
    let mut worst = (1.0 / segs[0].constant - 1.0).abs();
    for (i, s) in segs.iter().enumerate() {
        worst = worst.max((1.0 / (s.constant + s.slope * t(bps[i])) - g[i]).abs());
        if i > 0 {
            worst = worst.max((1.0 / (s.constant + s.slope * t(bps[i - 1])) - g[i - 1]).abs());
        }
    }
    worst
}

fn piecewise_algebra() -> Verdict {
    let segs = coeffs_from_knots(&[0.9, 0.8], &[0.4, 0.8], FnKind::InverseLinear).unwrap();
    let round6 = |v: f64| (v * 1e6).round() / 1e6;
    let got = (round6(segs[0].slope), round6(segs[1].slope), round6(segs[1].constant));
    let example_ok = got == (0.277778, 0.347222, 0.972222);

    let mut worst = back_substitution_error(&[0.9, 0.8], 0.8, FnKind::InverseLinear);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..1000 {
        let base = if rng.random_bool(0.5) {
            FnKind::InverseLinear
        } else {
            FnKind::InverseQuadratic
        };
        let s = rng.random_range(1..=3);
        let g: Vec<f64> = (0..s).map(|_| rng.random_range(0.5..1.5)).collect();
        let r_max = rng.random_range(0.2..1.5);
        worst = worst.max(back_substitution_error(&g, r_max, base));
    }
    check(
        example_ok && worst < 1e-12,
        format!("worked example {got:?}, max back-substitution error {worst:.3e} (< 1e-12)"),
    )
}

fn noise_floor() -> Verdict {
    let (spec, coeffs) = asymmetric_truth();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    let (mut lo_pt, mut hi_pt) = (f64::INFINITY, 0.0f64);
    for seed in 0..50 {
        let r = fit(&noisy_scene(spec, coeffs.clone(), 1000 + seed), spec);
        lo = lo.min(r.rms_per_axis);
        hi = hi.max(r.rms_per_axis);
        lo_pt = lo_pt.min(r.rms);
        hi_pt = hi_pt.max(r.rms);
    }
    check(
        lo >= 0.07 && hi <= 0.13,
        format!(
            "per-coordinate rms in [{lo:.4}, {hi:.4}] (within [0.07, 0.13]); per-point rms in [{lo_pt:.4}, {hi_pt:.4}]"
        ),
    )
}

fn public_data() -> Verdict {
    let Ok(path) = std::env::var(DATA_ENV) else {
        return Verdict::Skip(format!("set {DATA_ENV} to a corner file to run"));
    };
    let size = std::env::var(SIZE_ENV).unwrap_or_else(|_| "640x480".into());
    let parsed: Option<[u32; 2]> = size
        .split_once('x')
        .and_then(|(w, h)| Some([w.parse().ok()?, h.parse().ok()?]));
    let Some(size) = parsed else {
        return Verdict::Fail(format!("{SIZE_ENV}='{size}' is not WIDTHxHEIGHT"));
    };
    let ds = if path.ends_with(".csv") {
        std::fs::File::open(&path)
            .map_err(geocalib::Error::from)
            .and_then(|f| CalibrationDataset::from_csv(f, size))
    } else {
        CalibrationDataset::load(path.as_ref())
    };
    let ds = match ds {
        Ok(ds) => ds,
        Err(e) => return Verdict::Fail(format!("{path}: {e}")),
    };
    let targets = [
        (ModelSpec::radial(FnKind::EvenQuartic), 144.8802),
        (ModelSpec::geometric(FnKind::EvenQuartic), 144.8226),
        (ModelSpec::radial(FnKind::PolyEven(6)), 144.8179),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (spec, want) in targets {
        match calibrate(&ds, &spec, &RefineOptions::default()) {
            Ok(r) => {
                let rel = (r.j_final - want).abs() / want;
                ok &= rel <= 0.01;
                parts.push(format!("{spec}: J={:.4} vs {want} ({:.2}%)", r.j_final, 100.0 * rel));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{spec}: {e}"));
            }
        }
    }
    check(ok, parts.join("; "))
}

fn formulation_equivalence() -> Verdict {
    let (spec, coeffs) = asymmetric_truth();
    let pixel = ModelSpec::Geometric {
        kind: FnKind::LinearQuadratic,
        formulation: Formulation::UdPixel,
    };
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let ds = noisy_scene(spec, coeffs.clone(), 1000 + seed);
        let jn = fit(&ds, spec).j_final;
        let jp = fit(&ds, pixel).j_final;
        worst = worst.max((jn - jp).abs() / jn.min(jp));
    }
    check(worst <= 1e-3, format!("max relative J difference {worst:.3e} (<= 1e-3)"))
}

fn main() {
    let secs = |s| Some(Duration::from_secs(s));
    let outcomes = [
        run(1, "analytic inverse exactness", secs(1), analytic_exactness),
        run(2, "analytic and iterative inverses agree", secs(5), dual_inverse_agreement),
        run(3, "oracle closure", secs(120), oracle_closure),
        run(4, "geometric never worse than radial", secs(300), nesting),
        run(5, "piecewise monotone in segment count", secs(180), piecewise_monotonicity),
        run(6, "piecewise coefficient algebra", secs(1), piecewise_algebra),
        run(7, "noise floor", secs(300), noise_floor),
        run(8, "public data reproduction", None, public_data),
        run(9, "formulation equivalence", secs(120), formulation_equivalence),
    ];

    let mut failed = 0;
    for o in &outcomes {
        let over = o.limit.is_some_and(|l| o.elapsed > l);
        let (tag, detail) = match &o.verdict {
            Verdict::Pass(d) if !over => ("PASS", d.clone()),
            Verdict::Pass(d) => ("FAIL", format!("{d}; runtime over limit")),
            Verdict::Fail(d) => ("FAIL", d.clone()),
            Verdict::Skip(d) => ("SKIP", d.clone()),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        let limit = o.limit.map(|l| format!(" / {:.0?}", l)).unwrap_or_default();
        println!(
            "criterion {} {tag} {}: {detail} [{:.2?}{limit}]",
            o.id, o.name, o.elapsed
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
