//! Planar calibration datasets: per-view lists of (world, image) correspondences.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Extrinsics, PixelPoint, WorldPoint};

pub const MIN_POINTS_PER_VIEW: usize = 4;

/// One observed feature: planar world coordinates (Z = 0) and its pixel position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub id: usize,
    pub world: [f64; 2],
    pub image: [f64; 2],
}

impl Correspondence {
    pub fn world_point(&self) -> WorldPoint {
        WorldPoint::planar(self.world[0], self.world[1])
    }

    pub fn pixel(&self) -> PixelPoint {
        PixelPoint::new(self.image[0], self.image[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct View {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose_hint: Option<Extrinsics>,
    pub points: Vec<Correspondence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationDataset {
    /// `(width, height)` in pixels.
    pub image_size: [u32; 2],
    pub views: Vec<View>,
}

impl CalibrationDataset {
    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    pub fn num_points(&self) -> usize {
        self.views.iter().map(|v| v.points.len()).sum()
    }

    /// Checks the structural requirements of calibration: enough views,
    /// at least four finite points per view, and non-collinear world points.
    pub fn validate(&self, fix_skew: bool) -> Result<()> {
        let needed = if fix_skew { 2 } else { 3 };
        if self.views.len() < needed {
            return Err(Error::InsufficientViews {
                needed,
                got: self.views.len(),
            });
        }
        for (i, view) in self.views.iter().enumerate() {
            if view.points.len() < MIN_POINTS_PER_VIEW {
                return Err(Error::InvalidDataset(format!(
                    "view {i} has {} points, need at least {MIN_POINTS_PER_VIEW}",
                    view.points.len()
                )));
            }
            if view
                .points
                .iter()
                .any(|p| !p.world.iter().chain(&p.image).all(|v| v.is_finite()))
            {
                return Err(Error::InvalidDataset(format!("view {i} has non-finite coordinates")));
            }
            if collinear(&view.points) {
                return Err(Error::DegenerateConfiguration(format!("world points of view {i} are collinear")));
            }
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    /// Reads a corner list with header `id,X,Y,u,v`, optionally preceded by a
    /// `view` column. Without a view column all rows form a single view.
    pub fn from_csv<R: Read>(reader: R, image_size: [u32; 2]) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            #[serde(default)]
            view: usize,
            id: usize,
            #[serde(rename = "X")]
            x: f64,
            #[serde(rename = "Y")]
            y: f64,
            u: f64,
            v: f64,
        }

        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut views: BTreeMap<usize, Vec<Correspondence>> = BTreeMap::new();
        for row in rdr.deserialize() {
            let row: Row = row?;
            views.entry(row.view).or_default().push(Correspondence {
                id: row.id,
                world: [row.x, row.y],
                image: [row.u, row.v],
            });
        }
        if views.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Self {
            image_size,
            views: views
                .into_values()
                .map(|points| View { pose_hint: None, points })
                .collect(),
        })
    }
}

/// True when the world points span (numerically) less than two dimensions.
fn collinear(points: &[Correspondence]) -> bool {
    let n = points.len() as f64;
    let (mx, my) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), p| (a + p.world[0] / n, b + p.world[1] / n));
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p.world[0] - mx, p.world[1] - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    // smallest / largest eigenvalue of the scatter matrix
    tr == 0.0 || det <= 1e-12 * tr * tr
}
