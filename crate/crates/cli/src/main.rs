use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use geocalib::calibration::RefineOptions;
use geocalib::dataset::CalibrationDataset;
use geocalib::distortion::{FnKind, Formulation, RadiusUnit};
use geocalib::model::{ModelSpec, UndistortMethod};

mod commands;
mod compare;

#[derive(Parser)]
#[command(name = "geocalib", version, about = "Planar camera calibration with radial, geometric and piecewise lens distortion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate a dataset and write a report.
    Calibrate(CalibrateArgs),
    /// Fit every catalog function as radial and geometric model and tabulate J.
    Compare(CompareArgs),
    /// Undistort a list of pixel positions with a calibrated model.
    Undistort(UndistortArgs),
    /// Sample the per-axis distortion curves of a report.
    Curves(CurvesArgs),
    /// Generate a synthetic dataset and its ground truth.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Radial,
    Geometric,
    /// Geometric model in the distorted-to-undistorted direction.
    Du,
}

#[derive(Args, Clone)]
pub struct InputArgs {
    /// Dataset file: JSON, or CSV with columns `[view,]id,X,Y,u,v`.
    pub input: PathBuf,
    /// Image size for CSV input, as WIDTHxHEIGHT.
    #[arg(long, default_value = "640x480")]
    pub image_size: String,
}

#[derive(Args, Clone, Copy)]
pub struct RefineArgs {
    /// Hold the skew at zero.
    #[arg(long)]
    pub fix_skew: bool,
    #[arg(long, default_value_t = 120)]
    pub max_iter: usize,
    /// Step-size and relative cost-decrease tolerance.
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
}

impl RefineArgs {
    pub fn options(&self) -> RefineOptions {
        RefineOptions {
            max_iter: self.max_iter,
            x_tol: self.tol,
            f_tol: self.tol,
            fix_skew: self.fix_skew,
            ..RefineOptions::default()
        }
    }
}

#[derive(Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Report output path.
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value = "geometric")]
    pub mode: Mode,
    /// Distortion function: 1..10, poly6 or heikkila.
    #[arg(long = "fn", default_value = "4")]
    pub function: String,
    /// Piecewise profile with this many segments (requires --fn 5 or 6).
    #[arg(long)]
    pub segments: Option<usize>,
    /// ud-normalized, ud-pixel or du.
    #[arg(long)]
    pub formulation: Option<String>,
    /// Radius entering the decentering model: normalized or pixel.
    #[arg(long, default_value = "normalized")]
    pub radius: String,
    #[command(flatten)]
    pub refine: RefineArgs,
}

#[derive(Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Table output path (CSV).
    #[arg(short, long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub refine: RefineArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Analytic,
    Iterative,
    Approx,
}

impl From<MethodArg> for UndistortMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Analytic => UndistortMethod::Analytic,
            MethodArg::Iterative => UndistortMethod::Iterative,
            MethodArg::Approx => UndistortMethod::Approx,
        }
    }
}

#[derive(Args)]
pub struct UndistortArgs {
    pub report: PathBuf,
    /// CSV with columns `u,v` and an optional `id`.
    pub points: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value = "iterative")]
    pub method: MethodArg,
}

#[derive(Args)]
pub struct CurvesArgs {
    pub report: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Number of radii sampled uniformly over [0, r_max].
    #[arg(long, default_value_t = 101)]
    pub samples: usize,
    /// Radial report whose single curve is added as a column.
    #[arg(long)]
    pub radial: Option<PathBuf>,
    /// Also write the image of a circle through the model to this file.
    #[arg(long)]
    pub ellipse: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub ellipse_radius: f64,
    #[arg(long, default_value_t = 360)]
    pub ellipse_points: usize,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Scene configuration (JSON); defaults apply to omitted fields.
    pub config: Option<PathBuf>,
    /// Dataset output path.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Truth report path; defaults to the output path with `.truth.json`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Outcome of a command that ran to completion.
pub enum Outcome {
    Ok,
    NotConverged,
}

pub fn parse_image_size(s: &str) -> Result<[u32; 2], String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("image size '{s}' is not WIDTHxHEIGHT"))?;
    let parse = |v: &str| v.trim().parse::<u32>().map_err(|e| format!("image size '{s}': {e}"));
    Ok([parse(w)?, parse(h)?])
}

pub fn load_dataset(args: &InputArgs) -> Result<CalibrationDataset, String> {
    let path = &args.input;
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let res = if is_csv {
        let size = parse_image_size(&args.image_size)?;
        std::fs::File::open(path)
            .map_err(geocalib::Error::from)
            .and_then(|f| CalibrationDataset::from_csv(f, size))
    } else {
        CalibrationDataset::load(path)
    };
    res.map_err(|e| format!("{}: {e}", path.display()))
}

/// Translates the model flags into a model spec.
pub fn model_spec(
    mode: Mode,
    function: &str,
    segments: Option<usize>,
    formulation: Option<&str>,
    radius: &str,
) -> Result<ModelSpec, String> {
    let formulation = formulation
        .map(|f| f.parse::<Formulation>().map_err(|e| e.to_string()))
        .transpose()?;
    let radius = match radius {
        "normalized" => RadiusUnit::Normalized,
        "pixel" => RadiusUnit::Pixel,
        r => return Err(format!("unknown radius unit '{r}' (normalized or pixel)")),
    };

    let kind = match function {
        "poly6" => FnKind::PolyEven(6),
        "heikkila" | "decentering" => {
            if segments.is_some() {
                return Err("--segments requires --fn 5 or 6".into());
            }
            if mode == Mode::Du || formulation.is_some() {
                return Err("the decentering model has no D-U or formulation variant".into());
            }
            return Ok(ModelSpec::Decentering { radius });
        }
        f => f.parse::<FnKind>().map_err(|e| e.to_string())?,
    };

    if let Some(s) = segments {
        if !matches!(kind, FnKind::InverseLinear | FnKind::InverseQuadratic) {
            return Err("--segments requires --fn 5 or 6".into());
        }
        if mode == Mode::Du || formulation.is_some_and(|f| f != Formulation::UdNormalized) {
            return Err("piecewise profiles support only the ud-normalized formulation".into());
        }
        let spec = ModelSpec::Piecewise {
            base: kind,
            segments: s,
            radial: mode == Mode::Radial,
        };
        spec.validate().map_err(|e| e.to_string())?;
        return Ok(spec);
    }

    let spec = match mode {
        Mode::Radial => ModelSpec::Radial {
            kind,
            formulation: formulation.unwrap_or_default(),
        },
        Mode::Geometric => ModelSpec::Geometric {
            kind,
            formulation: formulation.unwrap_or_default(),
        },
        Mode::Du => {
            if formulation.is_some_and(|f| f != Formulation::Du) {
                return Err("--mode du conflicts with --formulation".into());
            }
            ModelSpec::Geometric {
                kind,
                formulation: Formulation::Du,
            }
        }
    };
    spec.validate().map_err(|e| e.to_string())?;
    Ok(spec)
}

/// Writes `contents` to `path`, creating parent directories.
pub fn write_file(path: &Path, contents: &[u8]) -> Result<(), String> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    std::fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Calibrate(a) => commands::calibrate(&a),
        Command::Compare(a) => compare::run(&a),
        Command::Undistort(a) => commands::undistort(&a),
        Command::Curves(a) => commands::curves(&a),
        Command::Simulate(a) => commands::simulate(&a),
    };
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => ExitCode::from(2),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
