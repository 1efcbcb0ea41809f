//! Point cloud representation and the geometric primitives shared by every
//! other module.
//!
//! A [`PointCloud`] is immutable once built: operations that "modify" a cloud
//! return a new one. Coordinates are unit-agnostic `f64` (meters by
//! convention) and are guaranteed finite.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;
pub type Vector3 = nalgebra::Vector3<f64>;

/// 8-bit RGB color.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rgb {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl Rgb {
    pub const BLACK: Rgb = Rgb::new(0, 0, 0);
    /// Filler for clouds without color that get merged with colored ones.
    pub const NEUTRAL_GRAY: Rgb = Rgb::new(128, 128, 128);

    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Rgb { r, g, b }
    }
}

impl From<[u8; 3]> for Rgb {
    fn from([r, g, b]: [u8; 3]) -> Self {
        Rgb { r, g, b }
    }
}

impl From<Rgb> for [u8; 3] {
    fn from(c: Rgb) -> Self {
        [c.r, c.g, c.b]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    colors: Option<Vec<Rgb>>,
    label: String,
}

impl PointCloud {
    /// Builds a cloud, rejecting non-finite coordinates and mismatched color lists.
    pub fn new(points: Vec<Point3>, colors: Option<Vec<Rgb>>, label: impl Into<String>) -> Result<Self> {
        if let Some(c) = &colors {
            if c.len() != points.len() {
                return Err(Error::ColorLengthMismatch {
                    points: points.len(),
                    colors: c.len(),
                });
            }
        }
        if let Some(i) = points.iter().position(|p| !is_finite(p)) {
            return Err(Error::InvalidParameter(format!(
                "point {i} has a non-finite coordinate"
            )));
        }
        Ok(PointCloud {
            points,
            colors,
            label: label.into(),
        })
    }

    pub fn from_points(points: Vec<Point3>) -> Result<Self> {
        Self::new(points, None, "")
    }

    pub fn empty(label: impl Into<String>) -> Self {
        PointCloud {
            points: Vec::new(),
            colors: None,
            label: label.into(),
        }
    }

    /// Skips validation. Callers must uphold the finite / length invariants.
    pub(crate) fn from_parts_unchecked(points: Vec<Point3>, colors: Option<Vec<Rgb>>, label: String) -> Self {
        debug_assert!(colors.as_ref().is_none_or(|c| c.len() == points.len()));
        PointCloud { points, colors, label }
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn colors(&self) -> Option<&[Rgb]> {
        self.colors.as_deref()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn has_colors(&self) -> bool {
        self.colors.is_some()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn into_parts(self) -> (Vec<Point3>, Option<Vec<Rgb>>, String) {
        (self.points, self.colors, self.label)
    }

    /// Keeps the points for which `keep` is true, in their original order.
    pub fn filter(&self, mut keep: impl FnMut(&Point3) -> bool) -> PointCloud {
        let mask: Vec<bool> = self.points.iter().map(&mut keep).collect();
        self.select(&mask)
    }

    pub(crate) fn select(&self, mask: &[bool]) -> PointCloud {
        let points = self
            .points
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(p, _)| *p)
            .collect();
        let colors = self
            .colors
            .as_ref()
            .map(|cs| cs.iter().zip(mask).filter(|(_, &m)| m).map(|(c, _)| *c).collect());
        PointCloud::from_parts_unchecked(points, colors, self.label.clone())
    }

    pub fn bounding_box(&self) -> Result<Aabb> {
        bounding_box(self)
    }
}

fn is_finite(p: &Point3) -> bool {
    p.x.is_finite() && p.y.is_finite() && p.z.is_finite()
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|i| self.min[i] <= p[i] && p[i] <= self.max[i])
    }

    pub fn extent(&self) -> Vector3 {
        self.max - self.min
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn center(&self) -> Point3 {
        nalgebra::center(&self.min, &self.max)
    }
}

/// Tight axis-aligned box around all points.
pub fn bounding_box(cloud: &PointCloud) -> Result<Aabb> {
    let (first, rest) = cloud.points.split_first().ok_or(Error::Empty("cloud"))?;
    let mut min = *first;
    let mut max = *first;
    for p in rest {
        for i in 0..3 {
            min[i] = min[i].min(p[i]);
            max[i] = max[i].max(p[i]);
        }
    }
    Ok(Aabb { min, max })
}

/// Concatenates `a` then `b`.
///
/// When exactly one side carries colors the other side is filled with
/// [`Rgb::NEUTRAL_GRAY`]. The result keeps `a`'s label.
pub fn merge(a: &PointCloud, b: &PointCloud) -> PointCloud {
    let mut points = Vec::with_capacity(a.len() + b.len());
    points.extend_from_slice(&a.points);
    points.extend_from_slice(&b.points);

    let colors = match (&a.colors, &b.colors) {
        (None, None) => None,
        (ca, cb) => {
            let mut out = Vec::with_capacity(points.len());
            match ca {
                Some(c) => out.extend_from_slice(c),
                None => out.resize(a.len(), Rgb::NEUTRAL_GRAY),
            }
            match cb {
                Some(c) => out.extend_from_slice(c),
                None => out.resize(out.len() + b.len(), Rgb::NEUTRAL_GRAY),
            }
            Some(out)
        }
    };
    PointCloud::from_parts_unchecked(points, colors, a.label.clone())
}
