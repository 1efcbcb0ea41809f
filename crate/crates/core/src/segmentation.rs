//! Oriented-box regions: cropping a region of interest and cutting out
//! exclusion zones such as window voids.

use std::path::Path;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::cloud::{Point3, PointCloud, Vector3};
use crate::error::{Error, Result};
use crate::registration::RigidTransform;

/// Relative slack on the half extents so that points lying on a face
/// (up to rounding in the local-frame transform) count as inside.
const BOUNDARY_SLACK: f64 = 1e-12;

/// Oriented bounding box. `orientation` columns are the box axes in world
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObbRegion {
    center: Point3,
    half_extents: Vector3,
    orientation: Matrix3<f64>,
}

impl ObbRegion {
    pub fn new(center: Point3, half_extents: Vector3, orientation: Matrix3<f64>) -> Result<Self> {
        if !center.coords.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidRegion("center must be finite".into()));
        }
        if !half_extents.iter().all(|&h| h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidRegion("half extents must be positive and finite".into()));
        }
        // Reuse the rigid-transform validation for the orientation.
        RigidTransform::new(orientation, Vector3::zeros())
            .map_err(|e| Error::InvalidRegion(format!("orientation: {e}")))?;
        Ok(ObbRegion {
            center,
            half_extents,
            orientation,
        })
    }

    pub fn axis_aligned(center: Point3, half_extents: Vector3) -> Result<Self> {
        Self::new(center, half_extents, Matrix3::identity())
    }

    /// Axis-aligned box spanning `min..max`.
    pub fn from_corners(min: Point3, max: Point3) -> Result<Self> {
        Self::axis_aligned(nalgebra::center(&min, &max), (max - min) / 2.0)
    }

    pub fn from_quaternion(center: Point3, half_extents: Vector3, wxyz: [f64; 4]) -> Result<Self> {
        let rot = RigidTransform::from_quaternion(wxyz, Vector3::zeros())
            .map_err(|e| Error::InvalidRegion(format!("orientation: {e}")))?;
        Self::new(center, half_extents, *rot.rotation())
    }

    pub fn center(&self) -> &Point3 {
        &self.center
    }

    pub fn half_extents(&self) -> &Vector3 {
        &self.half_extents
    }

    pub fn orientation(&self) -> &Matrix3<f64> {
        &self.orientation
    }

    /// Coordinates of `p` in the box frame.
    pub fn to_local(&self, p: &Point3) -> Vector3 {
        self.orientation.tr_mul(&(p - self.center))
    }

    /// Boundary inclusive.
    pub fn contains(&self, p: &Point3) -> bool {
        let local = self.to_local(p);
        (0..3).all(|i| local[i].abs() <= self.half_extents[i] * (1.0 + BOUNDARY_SLACK))
    }

    /// The same physical box expressed after moving the scene by `g`.
    pub fn transformed(&self, g: &RigidTransform) -> ObbRegion {
        ObbRegion {
            center: g.apply(&self.center),
            half_extents: self.half_extents,
            orientation: g.rotation() * self.orientation,
        }
    }

    pub fn to_spec(&self, role: RegionRole) -> RegionSpec {
        let t = RigidTransform::new(self.orientation, Vector3::zeros()).expect("orientation validated at construction");
        RegionSpec {
            center: self.center.coords.into(),
            half_extents: self.half_extents.into(),
            quaternion: t.quaternion(),
            role,
        }
    }
}

/// Points inside `region`, in their original order.
pub fn crop(cloud: &PointCloud, region: &ObbRegion) -> PointCloud {
    cloud.filter(|p| region.contains(p))
}

/// Points strictly outside `region`; the complement of [`crop`].
pub fn exclude(cloud: &PointCloud, region: &ObbRegion) -> PointCloud {
    cloud.filter(|p| !region.contains(p))
}

/// Applies every exclusion, then crops to the ROI.
pub fn extract_roi(cloud: &PointCloud, roi: &ObbRegion, exclusions: &[ObbRegion]) -> PointCloud {
    cloud.filter(|p| roi.contains(p) && !exclusions.iter().any(|x| x.contains(p)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionRole {
    #[default]
    Roi,
    Exclude,
}

/// Region file entry:
/// `{"center":[x,y,z], "half_extents":[a,b,c], "quaternion":[w,x,y,z], "role":"roi"|"exclude"}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub center: [f64; 3],
    pub half_extents: [f64; 3],
    #[serde(default = "identity_quaternion")]
    pub quaternion: [f64; 4],
    #[serde(default)]
    pub role: RegionRole,
}

fn identity_quaternion() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

impl RegionSpec {
    pub fn to_region(&self) -> Result<ObbRegion> {
        ObbRegion::from_quaternion(self.center.into(), self.half_extents.into(), self.quaternion)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RegionFileContents {
    One(RegionSpec),
    Many(Vec<RegionSpec>),
}

/// Regions loaded from a file, split by role.
#[derive(Debug, Clone, Default)]
pub struct RegionSet {
    pub rois: Vec<(RegionSpec, ObbRegion)>,
    pub exclusions: Vec<(RegionSpec, ObbRegion)>,
}

impl RegionSet {
    pub fn parse(text: &str, context: &str) -> Result<Self> {
        let contents: RegionFileContents = serde_json::from_str(text).map_err(|e| Error::json(context, e))?;
        let specs = match contents {
            RegionFileContents::One(s) => vec![s],
            RegionFileContents::Many(v) => v,
        };
        let mut set = RegionSet::default();
        for spec in specs {
            let region = spec.to_region()?;
            match spec.role {
                RegionRole::Roi => set.rois.push((spec, region)),
                RegionRole::Exclude => set.exclusions.push((spec, region)),
            }
        }
        Ok(set)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn extend(&mut self, other: RegionSet) {
        self.rois.extend(other.rois);
        self.exclusions.extend(other.exclusions);
    }

    /// The single ROI, erroring when there is none or more than one.
    pub fn single_roi(&self) -> Result<&(RegionSpec, ObbRegion)> {
        match self.rois.as_slice() {
            [one] => Ok(one),
            [] => Err(Error::InvalidRegion("no region with role \"roi\" given".into())),
            _ => Err(Error::InvalidRegion(
                "more than one region with role \"roi\" given".into(),
            )),
        }
    }
}
