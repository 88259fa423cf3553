use std::path::Path;

use serde::Deserialize;

use geocalib::calibration::calibrate as run_calibration;
use geocalib::geometry::{NormalizedPoint, PixelPoint};
use geocalib::model::UndistortMethod;
use geocalib::report::CalibrationReport;
use geocalib::synthetic::{simulate as run_simulation, SimConfig};

use crate::{load_dataset, model_spec, write_file, CalibrateArgs, CurvesArgs, Outcome, SimulateArgs, UndistortArgs};

/// Re-distortion error above which an undistorted point is flagged (pixels).
const CONSISTENCY_TOL: f64 = 1e-6;

fn csv_bytes<F>(header: &[&str], fill: F) -> Result<Vec<u8>, String>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> Result<(), csv::Error>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| e.to_string())?;
    fill(&mut w).map_err(|e| e.to_string())?;
    w.into_inner().map_err(|e| e.to_string())
}

fn load_report(path: &Path) -> Result<CalibrationReport, String> {
    CalibrationReport::load(path).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn calibrate(args: &CalibrateArgs) -> Result<Outcome, String> {
    let spec = model_spec(
        args.mode,
        &args.function,
        args.segments,
        args.formulation.as_deref(),
        &args.radius,
    )?;
    let dataset = load_dataset(&args.input)?;
    let report = run_calibration(&dataset, &spec, &args.refine.options()).map_err(|e| e.to_string())?;
    let json = report.to_json().map_err(|e| e.to_string())?;
    write_file(&args.output, (json + "\n").as_bytes())?;
    println!("{}", report.summary());
    Ok(if report.converged {
        Outcome::Ok
    } else {
        Outcome::NotConverged
    })
}

pub fn undistort(args: &UndistortArgs) -> Result<Outcome, String> {
    #[derive(Deserialize)]
    struct Row {
        id: Option<String>,
        u: f64,
        v: f64,
    }

    let report = load_report(&args.report)?;
    let method: UndistortMethod = args.method.into();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(&args.points)
        .map_err(|e| format!("{}: {e}", args.points.display()))?;
    let rows: Vec<Row> = rdr
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| format!("{}: {e}", args.points.display()))?;

    let intr = report.intrinsics;
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let pd = PixelPoint::new(row.u, row.v);
        let q = report
            .model
            .undistort_pixel(pd, &intr, method)
            .map_err(|e| format!("point {i}: {e}"))?;
        let redistorted = report.model.distort_to_pixel(q, &intr).map_err(|e| format!("point {i}: {e}"))?;
        let pu = intr.normalized_to_pixel(q);
        let id = row.id.clone().unwrap_or_else(|| i.to_string());
        out.push((id, pd, q, pu, redistorted.distance(&pd)));
    }

    let bytes = csv_bytes(
        &["id", "u_d", "v_d", "x", "y", "u", "v", "redistortion_error"],
        |w| {
            for (id, pd, q, pu, err) in &out {
                w.write_record(&[
                    id.clone(),
                    pd.u.to_string(),
                    pd.v.to_string(),
                    q.x.to_string(),
                    q.y.to_string(),
                    pu.u.to_string(),
                    pu.v.to_string(),
                    err.to_string(),
                ])?;
            }
            Ok(())
        },
    )?;
    write_file(&args.output, &bytes)?;

    let max_err = out.iter().map(|o| o.4).fold(0.0, f64::max);
    let flagged = out.iter().filter(|o| o.4 > CONSISTENCY_TOL).count();
    println!(
        "points={} method={method} max_redistortion_error={max_err:.3e} inconsistent={flagged}",
        out.len()
    );
    if flagged > 0 {
        println!(
            "warning: {flagged} points re-distort more than {CONSISTENCY_TOL:e} px away from their input"
        );
    }
    Ok(Outcome::Ok)
}

pub fn curves(args: &CurvesArgs) -> Result<Outcome, String> {
    if args.samples == 0 {
        return Err("--samples must be positive".into());
    }
    let report = load_report(&args.report)?;
    let companion = args.radial.as_deref().map(load_report).transpose()?;
    let r_max = report.r_max;

    let mut rows = Vec::with_capacity(args.samples);
    for i in 0..args.samples {
        let r = if args.samples == 1 {
            0.0
        } else {
            r_max * i as f64 / (args.samples - 1) as f64
        };
        let (fx, fy) = report.model.axis_factors(r).map_err(|e| e.to_string())?;
        let mut row = vec![r.to_string(), fx.to_string(), fy.to_string()];
        if let Some(c) = &companion {
            row.push(c.model.axis_factors(r).map_err(|e| e.to_string())?.0.to_string());
        }
        rows.push(row);
    }
    let mut header = vec!["r", "f_x", "f_y"];
    if companion.is_some() {
        header.push("f_radial");
    }
    let bytes = csv_bytes(&header, |w| rows.iter().try_for_each(|r| w.write_record(r)))?;

    let ellipse = match &args.ellipse {
        Some(path) => {
            let n = args.ellipse_points.max(1);
            let mut pts = Vec::with_capacity(n);
            for i in 0..n {
                let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                let p = NormalizedPoint::new(args.ellipse_radius * t.cos(), args.ellipse_radius * t.sin());
                let d = report
                    .model
                    .distort_normalized(p, &report.intrinsics)
                    .map_err(|e| e.to_string())?;
                pts.push([t, p.x, p.y, d.x, d.y].map(|v| v.to_string()));
            }
            let bytes = csv_bytes(&["theta", "x", "y", "x_d", "y_d"], |w| {
                pts.iter().try_for_each(|r| w.write_record(r))
            })?;
            Some((path, bytes))
        }
        None => None,
    };

    write_file(&args.output, &bytes)?;
    if let Some((path, bytes)) = ellipse {
        write_file(path, &bytes)?;
    }
    println!("samples={} r_max={r_max}", args.samples);
    Ok(Outcome::Ok)
}

pub fn simulate(args: &SimulateArgs) -> Result<Outcome, String> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            SimConfig::from_json(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => SimConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let (dataset, truth) = run_simulation(&config).map_err(|e| e.to_string())?;
    let truth_path = args
        .truth
        .clone()
        .unwrap_or_else(|| args.output.with_extension("truth.json"));
    let ds = dataset.to_json().map_err(|e| e.to_string())? + "\n";
    let tr = truth.to_json().map_err(|e| e.to_string())? + "\n";
    write_file(&args.output, ds.as_bytes())?;
    write_file(&truth_path, tr.as_bytes())?;
    println!(
        "views={} points={} truth={}",
        dataset.num_views(),
        dataset.num_points(),
        truth_path.display()
    );
    Ok(Outcome::Ok)
}
