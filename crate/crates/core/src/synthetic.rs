//! Synthetic planar-target scenes with known camera, poses and distortion.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::calibration::lm::Termination;
use crate::calibration::params::ParameterVector;
use crate::calibration::refine::report_at;
use crate::dataset::{CalibrationDataset, Correspondence, View};
use crate::error::{Error, Result};
use crate::geometry::{project_normalized, rotation_from_vector, Extrinsics, Intrinsics, WorldPoint};
use crate::model::ModelSpec;
use crate::piecewise::update_r_max;
use crate::report::CalibrationReport;

/// Planar grid of `rows x cols` points spaced `square` apart, starting at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub square: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            rows: 8,
            cols: 8,
            square: 1.0,
        }
    }
}

impl GridSpec {
    pub fn points(&self) -> Vec<[f64; 2]> {
        let mut pts = Vec::with_capacity(self.rows * self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                pts.push([c as f64 * self.square, r as f64 * self.square]);
            }
        }
        pts
    }

    pub fn center(&self) -> Vector3<f64> {
        Vector3::new(
            (self.cols - 1) as f64 * self.square / 2.0,
            (self.rows - 1) as f64 * self.square / 2.0,
            0.0,
        )
    }

    /// Pose placing the grid center at `center_cam` in camera coordinates
    /// with the given rotation.
    pub fn pose(&self, rotation_vec: Vector3<f64>, center_cam: Vector3<f64>) -> Extrinsics {
        let r = rotation_from_vector(&rotation_vec);
        Extrinsics::new(rotation_vec, center_cam - r * self.center())
    }
}

/// Ranges for randomly drawn poses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomPoses {
    pub count: usize,
    /// Largest tilt of the grid plane away from fronto-parallel (radians).
    pub max_tilt: f64,
    /// Largest in-plane rotation (radians).
    pub max_roll: f64,
    /// Depth range of the grid center.
    pub depth: [f64; 2],
    /// Largest lateral offset of the grid center, as a fraction of its depth.
    pub max_offset: f64,
    /// Draws per view before giving up on fitting the grid in the frame.
    pub max_attempts: usize,
}

impl Default for RandomPoses {
    fn default() -> Self {
        Self {
            count: 5,
            max_tilt: PI / 4.0,
            max_roll: 0.3,
            depth: [8.0, 10.0],
            max_offset: 0.1,
            max_attempts: 200,
        }
    }
}

/// Ground-truth distortion: a model spec and its coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthModel {
    pub spec: ModelSpec,
    pub coeffs: Vec<f64>,
}

impl Default for TruthModel {
    fn default() -> Self {
        Self {
            spec: ModelSpec::None,
            coeffs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub grid: GridSpec,
    /// Explicit poses; ignored when `random_poses` is set.
    pub poses: Vec<Extrinsics>,
    pub random_poses: Option<RandomPoses>,
    pub intrinsics: Intrinsics,
    pub truth: TruthModel,
    /// Standard deviation of the Gaussian noise added to each pixel coordinate.
    pub noise_sigma: f64,
    pub seed: u64,
    pub image_size: [u32; 2],
    /// Generated points must stay this many pixels inside the image border.
    pub margin: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        let grid = GridSpec::default();
        Self {
            grid,
            poses: default_poses(&grid),
            random_poses: None,
            intrinsics: Intrinsics::new(400.0, 0.4, 395.0, 322.0, 241.0).expect("valid default intrinsics"),
            truth: TruthModel::default(),
            noise_sigma: 0.0,
            seed: 0,
            image_size: [640, 480],
            margin: 5.0,
        }
    }
}

/// Five views: one near-frontal and four tilted about different axes.
pub fn default_poses(grid: &GridSpec) -> Vec<Extrinsics> {
    let views = [
        ([0.05, -0.08, 0.02], [0.0, 0.0, 8.6]),
        ([0.45, 0.05, 0.1], [0.15, 0.1, 8.8]),
        ([-0.42, 0.12, -0.1], [-0.15, -0.1, 8.8]),
        ([0.1, 0.45, 0.2], [0.1, 0.05, 8.6]),
        ([0.15, -0.45, -0.25], [-0.1, 0.0, 8.6]),
    ];
    views
        .iter()
        .map(|(w, c)| grid.pose(Vector3::new(w[0], w[1], w[2]), Vector3::new(c[0], c[1], c[2])))
        .collect()
}

impl SimConfig {
    pub fn with_truth(mut self, spec: ModelSpec, coeffs: Vec<f64>) -> Self {
        self.truth = TruthModel { spec, coeffs };
        self
    }

    pub fn with_noise(mut self, sigma: f64, seed: u64) -> Self {
        self.noise_sigma = sigma;
        self.seed = seed;
        self
    }

    /// Checks every field, listing all offending ones in a single error.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.grid.rows < 2 || self.grid.cols < 2 {
            bad.push("grid: needs at least 2 rows and 2 columns".to_string());
        }
        if !(self.grid.square > 0.0) || !self.grid.square.is_finite() {
            bad.push("grid.square: must be positive".into());
        }
        if self.random_poses.is_none() && self.poses.is_empty() {
            bad.push("poses: at least one view is required".into());
        }
        if let Some(rp) = &self.random_poses {
            if rp.count == 0 {
                bad.push("random_poses.count: must be positive".into());
            }
            if !(rp.depth[0] > 0.0 && rp.depth[1] >= rp.depth[0]) {
                bad.push("random_poses.depth: must be an increasing positive range".into());
            }
            if !(0.0..PI / 2.0).contains(&rp.max_tilt) {
                bad.push("random_poses.max_tilt: must lie in [0, pi/2)".into());
            }
        }
        let a = self.intrinsics.to_array();
        if !(self.intrinsics.alpha > 0.0 && self.intrinsics.beta > 0.0) || a.iter().any(|v| !v.is_finite()) {
            bad.push("intrinsics: alpha and beta must be positive and all entries finite".into());
        }
        if let Err(e) = self.truth.spec.validate() {
            bad.push(format!("truth.spec: {e}"));
        }
        if self.truth.coeffs.len() != self.truth.spec.coeff_count() {
            bad.push(format!(
                "truth.coeffs: expected {} values, got {}",
                self.truth.spec.coeff_count(),
                self.truth.coeffs.len()
            ));
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            bad.push("noise_sigma: must be nonnegative".into());
        }
        if self.image_size[0] == 0 || self.image_size[1] == 0 {
            bad.push("image_size: must be positive".into());
        }
        if !(self.margin >= 0.0) {
            bad.push("margin: must be nonnegative".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(bad.join("; ")))
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Independent random stream for one purpose of one view.
fn view_rng(seed: u64, view: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * view as u64 + purpose);
    rng
}

fn draw_pose(grid: &GridSpec, rp: &RandomPoses, rng: &mut ChaCha8Rng) -> Extrinsics {
    let tilt = rng.random_range(0.0..=rp.max_tilt);
    let dir = rng.random_range(0.0..2.0 * PI);
    let roll = rng.random_range(-rp.max_roll..=rp.max_roll);
    let axis = Vector3::new(dir.cos(), dir.sin(), 0.0);
    let r = rotation_from_vector(&(axis * tilt)) * rotation_from_vector(&Vector3::new(0.0, 0.0, roll));
    let z = rng.random_range(rp.depth[0]..=rp.depth[1]);
    let c = Vector3::new(
        rng.random_range(-rp.max_offset..=rp.max_offset) * z,
        rng.random_range(-rp.max_offset..=rp.max_offset) * z,
        z,
    );
    Extrinsics::from_matrix(&r, c - r * grid.center())
}

/// Renders the grid through the truth camera. Returns the dataset and a
/// truth report (objective evaluated on the generated, possibly noisy,
/// observations).
pub fn simulate(config: &SimConfig) -> Result<(CalibrationDataset, CalibrationReport)> {
    config.validate()?;
    let grid_pts = config.grid.points();
    let world: Vec<WorldPoint> = grid_pts.iter().map(|p| WorldPoint::planar(p[0], p[1])).collect();
    let intr = config.intrinsics;
    let spec = config.truth.spec;

    let in_frame = |u: f64, v: f64| {
        let (w, h) = (config.image_size[0] as f64, config.image_size[1] as f64);
        u >= config.margin && u <= w - config.margin && v >= config.margin && v <= h - config.margin
    };

    let poses: Vec<Extrinsics> = match &config.random_poses {
        None => config.poses.clone(),
        Some(rp) => (0..rp.count)
            .map(|i| {
                let mut rng = view_rng(config.seed, i, 0);
                for _ in 0..rp.max_attempts {
                    let pose = draw_pose(&config.grid, rp, &mut rng);
                    let ok = world.iter().all(|w| {
                        project_normalized(w, &pose)
                            .map(|p| {
                                let q = intr.normalized_to_pixel(p);
                                in_frame(q.u, q.v)
                            })
                            .unwrap_or(false)
                    });
                    if ok {
                        return Ok(pose);
                    }
                }
                Err(Error::PointOutOfFrame { view: i, point: 0 })
            })
            .collect::<Result<_>>()?,
    };

    // Undistorted projections first: the piecewise truth needs their radius.
    let normalized = poses
        .iter()
        .map(|e| world.iter().map(|w| project_normalized(w, e)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let r_max = if spec.needs_r_max() {
        update_r_max(&normalized.iter().flatten().map(|p| p.radius()).collect::<Vec<_>>())?
    } else {
        0.0
    };
    let model = spec.build(&config.truth.coeffs, r_max)?;

    let noise = Normal::new(0.0, config.noise_sigma).map_err(|e| Error::InvalidConfig(format!("noise_sigma: {e}")))?;
    let mut views = Vec::with_capacity(poses.len());
    for (vi, (pose, pts)) in poses.iter().zip(&normalized).enumerate() {
        let mut rng = view_rng(config.seed, vi, 1);
        let mut points = Vec::with_capacity(pts.len());
        for (id, (p, g)) in pts.iter().zip(&grid_pts).enumerate() {
            let m = model.distort_to_pixel(*p, &intr)?;
            if !in_frame(m.u, m.v) {
                return Err(Error::PointOutOfFrame { view: vi, point: id });
            }
            let (nu, nv) = if config.noise_sigma > 0.0 {
                (noise.sample(&mut rng), noise.sample(&mut rng))
            } else {
                (0.0, 0.0)
            };
            points.push(Correspondence {
                id,
                world: *g,
                image: [m.u + nu, m.v + nv],
            });
        }
        views.push(View {
            pose_hint: Some(pose.clone()),
            points,
        });
    }
    let dataset = CalibrationDataset {
        image_size: config.image_size,
        views,
    };

    let truth_params = ParameterVector::pack(&intr, &poses, &config.truth.coeffs);
    let (j, _) = crate::calibration::compute_j(&truth_params, &dataset, &spec)?;
    let truth = report_at(&truth_params, &dataset, &spec, j, 0, Termination::Truth, false, Vec::new())?;
    Ok((dataset, truth))
}
