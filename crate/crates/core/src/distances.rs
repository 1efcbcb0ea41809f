//! Cloud-to-cloud (C2C) distances and the Hausdorff summary.
//!
//! The monitoring direction is floating → reference: each point of the later
//! epoch is measured against its nearest neighbor in the earlier one, so new
//! or displaced material shows up on the floating points.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::kdtree::KdIndex;

/// Per-point nearest-neighbor distances, parallel to the floating cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    pub distances: Vec<f64>,
    pub reference_label: String,
    pub floating_label: String,
}

impl DistanceField {
    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distances.is_empty()
    }
}

/// Unsigned point-to-nearest-point distance from every floating point to the
/// reference cloud.
pub fn c2c_distances(reference: &PointCloud, floating: &PointCloud) -> Result<DistanceField> {
    if floating.is_empty() {
        return Err(Error::Empty("floating cloud"));
    }
    let index = KdIndex::build(reference)?;
    Ok(c2c_distances_indexed(&index, reference.label(), floating))
}

pub fn c2c_distances_indexed(index: &KdIndex, reference_label: &str, floating: &PointCloud) -> DistanceField {
    let distances = floating
        .points()
        .par_iter()
        .map(|p| index.nearest(p).distance)
        .collect();
    DistanceField {
        distances,
        reference_label: reference_label.to_string(),
        floating_label: floating.label().to_string(),
    }
}

/// Largest entry of a distance field: `max_a min_b ‖a − b‖`.
pub fn directed_hausdorff(field: &DistanceField) -> Result<f64> {
    field
        .distances
        .iter()
        .copied()
        .reduce(f64::max)
        .ok_or(Error::Empty("distance field"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceSummary {
    /// `h(reference, floating)`: worst reference point measured against the floating cloud.
    pub directed_h_ab: f64,
    /// `h(floating, reference)`: worst floating point measured against the reference cloud.
    pub directed_h_ba: f64,
    pub hausdorff: f64,
    pub mean: f64,
    pub median: f64,
    pub p50: f64,
    pub p90: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
    pub count: usize,
}

/// Linear interpolation between order statistics; `sorted` must be ascending
/// and non-empty, `q` in `[0, 1]`.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    Some(percentile(&v, 0.5))
}

/// Builds a summary from the floating → reference field plus the maximum of
/// the opposite direction.
pub fn summarize(field: &DistanceField, directed_h_ab: f64) -> Result<DistanceSummary> {
    let directed_h_ba = directed_hausdorff(field)?;
    let mut sorted = field.distances.clone();
    sorted.sort_unstable_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    let p50 = percentile(&sorted, 0.50);
    Ok(DistanceSummary {
        directed_h_ab,
        directed_h_ba,
        hausdorff: directed_h_ab.max(directed_h_ba),
        mean,
        median: p50,
        p50,
        p90: percentile(&sorted, 0.90),
        p95: percentile(&sorted, 0.95),
        p99: percentile(&sorted, 0.99),
        max: directed_h_ba,
        count: sorted.len(),
    })
}

/// Symmetric Hausdorff distance `max(h(A, B), h(B, A))` together with the
/// per-point statistics of the floating → reference field.
pub fn hausdorff(reference: &PointCloud, floating: &PointCloud) -> Result<DistanceSummary> {
    if reference.is_empty() {
        return Err(Error::Empty("reference cloud"));
    }
    if floating.is_empty() {
        return Err(Error::Empty("floating cloud"));
    }
    let ba = c2c_distances(reference, floating)?;
    let ab = c2c_distances(floating, reference)?;
    summarize(&ba, directed_hausdorff(&ab)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Point3;

    fn cloud(pts: &[[f64; 3]]) -> PointCloud {
        PointCloud::from_points(pts.iter().map(|p| Point3::from(*p)).collect()).unwrap()
    }

    #[test]
    fn analytic_distances() {
        let f = c2c_distances(&cloud(&[[0.0, 0.0, 0.0]]), &cloud(&[[3.0, 4.0, 0.0], [0.0, 0.0, 1.0]])).unwrap();
        assert_eq!(f.distances, vec![5.0, 1.0]);
        assert_eq!(directed_hausdorff(&f).unwrap(), 5.0);
    }

    #[test]
    fn self_distance_is_zero() {
        let c = cloud(&[[0.0, 0.0, 0.0], [1.0, 2.0, 3.0], [-1.0, 0.5, 0.0]]);
        let f = c2c_distances(&c, &c).unwrap();
        assert!(f.distances.iter().all(|&d| d == 0.0));
        assert_eq!(directed_hausdorff(&f).unwrap(), 0.0);
        let s = hausdorff(&c, &c).unwrap();
        for v in [
            s.directed_h_ab,
            s.directed_h_ba,
            s.hausdorff,
            s.mean,
            s.median,
            s.p99,
            s.max,
        ] {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn asymmetric_pair() {
        let a = cloud(&[[0.0, 0.0, 0.0], [10.0, 0.0, 0.0]]);
        let b = cloud(&[[0.0, 0.0, 0.0]]);
        // reference A, floating B
        let s = hausdorff(&a, &b).unwrap();
        assert_eq!(s.directed_h_ab, 10.0);
        assert_eq!(s.directed_h_ba, 0.0);
        assert_eq!(s.hausdorff, 10.0);
        let t = hausdorff(&b, &a).unwrap();
        assert_eq!(t.hausdorff, 10.0);
    }

    #[test]
    fn empty_inputs() {
        let c = cloud(&[[0.0; 3]]);
        assert!(matches!(
            c2c_distances(&PointCloud::empty(""), &c),
            Err(Error::Empty(_))
        ));
        assert!(matches!(
            c2c_distances(&c, &PointCloud::empty("")),
            Err(Error::Empty(_))
        ));
        let empty = DistanceField {
            distances: vec![],
            reference_label: String::new(),
            floating_label: String::new(),
        };
        assert!(directed_hausdorff(&empty).is_err());
    }

    #[test]
    fn percentile_interpolates() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&v, 0.5), 2.0);
        assert_eq!(percentile(&v, 0.9), 3.6);
        assert_eq!(percentile(&v, 1.0), 4.0);
        assert_eq!(percentile(&[7.0], 0.99), 7.0);
        assert_eq!(median(&[3.0, 1.0, 2.0, 10.0]), Some(2.5));
    }
}
