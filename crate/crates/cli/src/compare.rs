//! Radial versus geometric fits of every catalog function on one dataset.

use rayon::prelude::*;

use geocalib::calibration::calibrate;
use geocalib::distortion::{FnKind, RadiusUnit};
use geocalib::model::ModelSpec;
use geocalib::report::CalibrationReport;

use crate::{load_dataset, write_file, CompareArgs, Outcome};

/// Radii sampled when checking whether the radial curve lies between the
/// two geometric curves.
const ENVELOPE_SAMPLES: usize = 64;
const ENVELOPE_SLACK: f64 = 1e-9;

struct Row {
    label: String,
    model: String,
    radial: ModelSpec,
    geometric: ModelSpec,
}

fn rows() -> Vec<Row> {
    let mut rows: Vec<Row> = FnKind::CATALOG
        .iter()
        .enumerate()
        .map(|(i, &k)| Row {
            label: (i + 1).to_string(),
            model: k.to_string(),
            radial: ModelSpec::radial(k),
            geometric: ModelSpec::geometric(k),
        })
        .collect();
    // Same parameter budget on both sides: six radial coefficients against
    // three per axis.
    rows.push(Row {
        label: "poly6".into(),
        model: "even polynomial".into(),
        radial: ModelSpec::radial(FnKind::PolyEven(6)),
        geometric: ModelSpec::geometric(FnKind::PolyEven(3)),
    });
    rows.push(Row {
        label: "heikkila".into(),
        model: "radial + decentering".into(),
        radial: ModelSpec::radial(FnKind::PolyEven(3)),
        geometric: ModelSpec::Decentering {
            radius: RadiusUnit::Normalized,
        },
    });
    rows
}

/// Fraction of sampled radii where the radial curve lies within the band
/// spanned by the two geometric curves.
fn radial_between(radial: &CalibrationReport, geometric: &CalibrationReport) -> Option<f64> {
    let r_max = geometric.r_max.min(radial.r_max);
    let mut inside = 0;
    for i in 0..ENVELOPE_SAMPLES {
        let r = r_max * i as f64 / (ENVELOPE_SAMPLES - 1) as f64;
        let (fr, _) = radial.model.axis_factors(r).ok()?;
        let (fx, fy) = geometric.model.axis_factors(r).ok()?;
        let slack = ENVELOPE_SLACK * (1.0 + fx.abs().max(fy.abs()));
        if fr >= fx.min(fy) - slack && fr <= fx.max(fy) + slack {
            inside += 1;
        }
    }
    Some(inside as f64 / ENVELOPE_SAMPLES as f64)
}

/// Rank of each value, 1 for the largest. Missing values get no rank.
fn ranks(values: &[Option<f64>]) -> Vec<Option<usize>> {
    values
        .iter()
        .map(|v| v.map(|v| 1 + values.iter().flatten().filter(|&&o| o > v).count()))
        .collect()
}

fn cell(v: &Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn run(args: &CompareArgs) -> Result<Outcome, String> {
    let dataset = load_dataset(&args.input)?;
    let opts = args.refine.options();
    let rows = rows();

    let fits: Vec<(Result<CalibrationReport, String>, Result<CalibrationReport, String>)> = rows
        .par_iter()
        .map(|row| {
            let fit = |spec: &ModelSpec| calibrate(&dataset, spec, &opts).map_err(|e| e.to_string());
            rayon::join(|| fit(&row.radial), || fit(&row.geometric))
        })
        .collect();

    let j = |r: &Result<CalibrationReport, String>| r.as_ref().ok().map(|r| r.j_final);
    let j_radial: Vec<Option<f64>> = fits.iter().map(|f| j(&f.0)).collect();
    let j_geometric: Vec<Option<f64>> = fits.iter().map(|f| j(&f.1)).collect();
    let rank_radial = ranks(&j_radial);
    let rank_geometric = ranks(&j_geometric);

    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| e.to_string();
    w.write_record([
        "row",
        "model",
        "j_radial",
        "j_geometric",
        "improvement",
        "rank_radial",
        "rank_geometric",
        "radial_between",
    ])
    .map_err(io)?;

    let mut not_converged = 0;
    for (i, (row, (rad, geo))) in rows.iter().zip(&fits).enumerate() {
        let show = |r: &Result<CalibrationReport, String>| match r {
            Ok(r) => r.j_final.to_string(),
            Err(e) => format!("ERR:{e}"),
        };
        not_converged += [rad, geo]
            .iter()
            .filter(|r| r.as_ref().is_ok_and(|r| !r.converged))
            .count();
        let improvement = match (j_radial[i], j_geometric[i]) {
            (Some(a), Some(b)) if a > 0.0 => Some((a - b) / a),
            _ => None,
        };
        let between = match (rad, geo) {
            (Ok(a), Ok(b)) if !matches!(row.geometric, ModelSpec::Decentering { .. }) => radial_between(a, b),
            _ => None,
        };
        w.write_record([
            row.label.clone(),
            row.model.clone(),
            show(rad),
            show(geo),
            cell(&improvement),
            rank_radial[i].map(|r| r.to_string()).unwrap_or_default(),
            rank_geometric[i].map(|r| r.to_string()).unwrap_or_default(),
            cell(&between),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| e.to_string())?;
    write_file(&args.output, &bytes)?;

    let failed = fits
        .iter()
        .map(|(a, b)| a.is_err() as usize + b.is_err() as usize)
        .sum::<usize>();
    println!(
        "rows={} failed_fits={failed} unconverged_fits={not_converged}",
        rows.len()
    );
    Ok(Outcome::Ok)
}
