//! Seeded synthetic scenes for tests, benchmarks and demos.
//!
//! A wall is a `width × height` rectangle in the z = 0 plane centered on the
//! origin, sampled uniformly with optional Gaussian noise along z and an
//! optional rectangular void (a window).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cloud::{Point3, PointCloud, Rgb, Vector3};
use crate::error::{Error, Result};
use crate::segmentation::ObbRegion;
use crate::sim::SlenderElement;

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]` in the wall plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.x0 <= x && x <= self.x1 && self.y0 <= y && y <= self.y1
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0).max(0.0) * (self.y1 - self.y0).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallSpec {
    pub width: f64,
    pub height: f64,
    /// Points per unit area.
    pub density: f64,
    /// Standard deviation of the out-of-plane noise.
    pub sigma: f64,
    pub void: Option<Rect>,
    pub label: String,
}

impl Default for WallSpec {
    fn default() -> Self {
        WallSpec {
            width: 10.0,
            height: 5.0,
            density: 1000.0,
            sigma: 0.0,
            void: None,
            label: "wall".into(),
        }
    }
}

impl WallSpec {
    /// Number of points the wall will hold.
    pub fn point_count(&self) -> usize {
        let void = self.void.map_or(0.0, |v| self.clip(v).area());
        ((self.width * self.height - void) * self.density).round().max(0.0) as usize
    }

    fn clip(&self, r: Rect) -> Rect {
        let (hw, hh) = (self.width / 2.0, self.height / 2.0);
        Rect {
            x0: r.x0.max(-hw),
            y0: r.y0.max(-hh),
            x1: r.x1.min(hw),
            y1: r.y1.min(hh),
        }
    }

    pub fn bounding_diagonal(&self) -> f64 {
        (self.width * self.width + self.height * self.height).sqrt()
    }

    pub fn generate(&self, seed: u64) -> Result<PointCloud> {
        if !(self.width > 0.0 && self.height > 0.0 && self.density > 0.0) {
            return Err(Error::InvalidParameter(
                "wall width, height and density must be positive".into(),
            ));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter("noise sigma must be non-negative".into()));
        }
        if self
            .void
            .is_some_and(|v| self.clip(v).area() >= self.width * self.height)
        {
            return Err(Error::InvalidParameter("void covers the whole wall".into()));
        }
        let n = self.point_count();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, self.sigma).expect("sigma validated");
        let (hw, hh) = (self.width / 2.0, self.height / 2.0);

        let mut points = Vec::with_capacity(n);
        let mut colors = Vec::with_capacity(n);
        while points.len() < n {
            let x = rng.random_range(-hw..=hw);
            let y = rng.random_range(-hh..=hh);
            if self.void.is_some_and(|v| v.contains(x, y)) {
                continue;
            }
            let z = if self.sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            points.push(Point3::new(x, y, z));
            // Sandstone-like base tone with per-point jitter.
            let j: i16 = rng.random_range(-20..=20);
            let tone = |base: i16| (base + j).clamp(0, 255) as u8;
            colors.push(Rgb::new(tone(176), tone(160), tone(132)));
        }
        PointCloud::new(points, Some(colors), self.label.clone())
    }
}

/// Vertical strip element of the given size centered at `(x, y)` on the
/// wall plane, thick enough along z to capture noisy points.
pub fn vertical_strip(x: f64, y: f64, width: f64, length: f64, thickness: f64) -> Result<SlenderElement> {
    let region = ObbRegion::axis_aligned(
        Point3::new(x, y, 0.0),
        Vector3::new(width / 2.0, length / 2.0, thickness / 2.0),
    )?;
    SlenderElement::new(region, "wall")
}
