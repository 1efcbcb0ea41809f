//! Synthetic deterioration.
//!
//! Two kinds of slender feature can be injected into a scanned wall:
//!
//! * a *crack-like edge*: the element is repainted but keeps its geometry,
//!   a purely visual feature that a geometric comparison must not report;
//! * a *true crack*: the element is pushed along the wall normal by a given
//!   depth, a geometric change that a comparison should detect.

use std::path::Path;

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::cloud::{Point3, PointCloud, Rgb, Vector3};
use crate::error::{Error, Result};
use crate::segmentation::{ObbRegion, RegionSpec};

/// Narrow box selecting a crack-shaped element.
#[derive(Debug, Clone, PartialEq)]
pub struct SlenderElement {
    region: ObbRegion,
    source_label: String,
}

/// Each of the two shorter half extents must be below this fraction of the longest.
pub const SLENDERNESS_RATIO: f64 = 0.2;

impl SlenderElement {
    pub fn new(region: ObbRegion, source_label: impl Into<String>) -> Result<Self> {
        let mut h = [
            region.half_extents().x,
            region.half_extents().y,
            region.half_extents().z,
        ];
        h.sort_by(f64::total_cmp);
        if !(h[0] < SLENDERNESS_RATIO * h[2] && h[1] < SLENDERNESS_RATIO * h[2]) {
            return Err(Error::InvalidRegion(format!(
                "element is not slender: half extents {:?} (shorter ones must be < {SLENDERNESS_RATIO} x longest)",
                region.half_extents().as_slice()
            )));
        }
        Ok(SlenderElement {
            region,
            source_label: source_label.into(),
        })
    }

    pub fn region(&self) -> &ObbRegion {
        &self.region
    }

    pub fn source_label(&self) -> &str {
        &self.source_label
    }

    /// Per-point membership mask; errors when the element selects nothing.
    pub fn selection(&self, cloud: &PointCloud) -> Result<Vec<bool>> {
        let mask: Vec<bool> = cloud.points().iter().map(|p| self.region.contains(p)).collect();
        if !mask.iter().any(|&m| m) {
            return Err(Error::EmptySelection);
        }
        Ok(mask)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneFit {
    pub centroid: Point3,
    pub unit_normal: Vector3,
    /// RMS orthogonal distance of the points to the plane.
    pub rms_residual: f64,
}

pub fn fit_plane(cloud: &PointCloud) -> Result<PlaneFit> {
    fit_plane_points(cloud.points())
}

/// Least-squares plane through the centroid, with the normal along the
/// covariance eigenvector of the smallest eigenvalue. The normal is oriented
/// so that z >= 0 (ties broken by y >= 0, then x >= 0).
pub fn fit_plane_points(points: &[Point3]) -> Result<PlaneFit> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!(
            "plane fit needs 3 points, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p.coords - centroid;
        cov += d * d.transpose();
    }
    cov /= n;

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (smallest, middle, largest) = (order[0], order[1], order[2]);
    let scale = eig.eigenvalues[largest];
    if !(scale > 0.0) || eig.eigenvalues[middle] <= 1e-12 * scale {
        return Err(Error::Degenerate("points are collinear or coincident".into()));
    }

    let mut normal: Vector3 = eig.eigenvectors.column(smallest).normalize();
    let flip = if normal.z != 0.0 {
        normal.z < 0.0
    } else if normal.y != 0.0 {
        normal.y < 0.0
    } else {
        normal.x < 0.0
    };
    if flip {
        normal = -normal;
    }

    let sq: f64 = points.iter().map(|p| normal.dot(&(p.coords - centroid)).powi(2)).sum();
    Ok(PlaneFit {
        centroid: Point3::from(centroid),
        unit_normal: normal,
        rms_residual: (sq / n).sqrt(),
    })
}

/// Repaints the element; positions are returned bit-identical.
///
/// A colorless input gets [`Rgb::NEUTRAL_GRAY`] outside the element.
pub fn simulate_crack_like_edge(cloud: &PointCloud, element: &SlenderElement, paint: Rgb) -> Result<PointCloud> {
    let mask = element.selection(cloud)?;
    let mut colors = cloud
        .colors()
        .map(<[Rgb]>::to_vec)
        .unwrap_or_else(|| vec![Rgb::NEUTRAL_GRAY; cloud.len()]);
    for (c, _) in colors.iter_mut().zip(&mask).filter(|(_, &m)| m) {
        *c = paint;
    }
    Ok(PointCloud::from_parts_unchecked(
        cloud.points().to_vec(),
        Some(colors),
        cloud.label().to_string(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftDirection {
    /// Along `-normal`, i.e. into the wall.
    #[default]
    Into,
    /// Along `+normal`.
    Out,
}

/// Displaces the element by `depth` along the wall normal.
///
/// Without an explicit `normal`, one is estimated by [`fit_plane_points`] over
/// the selected points only. Unselected points and all colors are untouched.
pub fn simulate_true_crack(
    cloud: &PointCloud,
    element: &SlenderElement,
    depth: f64,
    normal: Option<Vector3>,
    direction: ShiftDirection,
) -> Result<PointCloud> {
    if !(depth > 0.0 && depth.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "crack depth must be positive, got {depth}"
        )));
    }
    let mask = element.selection(cloud)?;
    let normal = match normal {
        Some(n) => {
            let len = n.norm();
            if !(len.is_finite() && (len - 1.0).abs() < 1e-6) {
                return Err(Error::InvalidParameter(format!(
                    "normal must be a unit vector, |n| = {len}"
                )));
            }
            n / len
        }
        None => {
            let selected: Vec<Point3> = cloud
                .points()
                .iter()
                .zip(&mask)
                .filter(|(_, &m)| m)
                .map(|(p, _)| *p)
                .collect();
            fit_plane_points(&selected)?.unit_normal
        }
    };
    let offset = match direction {
        ShiftDirection::Into => -normal * depth,
        ShiftDirection::Out => normal * depth,
    };
    let points = cloud
        .points()
        .iter()
        .zip(&mask)
        .map(|(p, &m)| if m { p + offset } else { *p })
        .collect();
    Ok(PointCloud::from_parts_unchecked(
        points,
        cloud.colors().map(<[Rgb]>::to_vec),
        cloud.label().to_string(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimulationMode {
    Recolor,
    Shift,
}

/// Simulation file: `{"element": <region>, "mode": "recolor"|"shift",
/// "depth": d, "paint": [r,g,b], "normal": [x,y,z], "direction": "into"|"out"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub element: RegionSpec,
    pub mode: SimulationMode,
    #[serde(default)]
    pub depth: Option<f64>,
    #[serde(default)]
    pub paint: Option<[u8; 3]>,
    #[serde(default)]
    pub normal: Option<[f64; 3]>,
    #[serde(default)]
    pub direction: ShiftDirection,
}

impl SimulationSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    pub fn apply(&self, cloud: &PointCloud) -> Result<PointCloud> {
        let element = SlenderElement::new(self.element.to_region()?, cloud.label())?;
        match self.mode {
            SimulationMode::Recolor => {
                simulate_crack_like_edge(cloud, &element, self.paint.map(Rgb::from).unwrap_or(Rgb::BLACK))
            }
            SimulationMode::Shift => {
                let depth = self
                    .depth
                    .ok_or_else(|| Error::InvalidParameter("shift simulation needs a depth".into()))?;
                simulate_true_crack(cloud, &element, depth, self.normal.map(Vector3::from), self.direction)
            }
        }
    }
}
