//! Rigid registration of a floating (later) epoch onto a reference epoch.
//!
//! Registration runs in two stages: a closed-form fit from a handful of
//! picked landmark pairs, then point-to-point ICP refinement. Every
//! transform maps floating coordinates into the reference frame:
//! `reference ≈ R · floating + t`.

use std::path::Path;

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::{Point3, PointCloud, Vector3};
use crate::error::{Error, Location, Result};
use crate::kdtree::KdIndex;

const ORTHONORMAL_TOL: f64 = 1e-9;

/// Proper rigid motion `p ↦ R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3,
}

impl RigidTransform {
    /// Validates that `rotation` is orthonormal with determinant +1.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidTransform("non-finite entry".into()));
        }
        let gram = rotation.transpose() * rotation - Matrix3::identity();
        if gram.iter().any(|v| v.abs() > ORTHONORMAL_TOL) {
            return Err(Error::InvalidTransform("rotation is not orthonormal".into()));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::InvalidTransform(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }
        Ok(RigidTransform { rotation, translation })
    }

    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(t: Vector3) -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: Vector3, angle: f64, translation: Vector3) -> Result<Self> {
        let axis = nalgebra::Unit::try_new(axis, 1e-300)
            .ok_or_else(|| Error::InvalidTransform("zero rotation axis".into()))?;
        Ok(RigidTransform {
            rotation: *Rotation3::from_axis_angle(&axis, angle).matrix(),
            translation,
        })
    }

    /// Builds from a `[w, x, y, z]` quaternion, normalizing it first.
    pub fn from_quaternion(wxyz: [f64; 4], translation: Vector3) -> Result<Self> {
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        let norm = q.norm();
        if !(norm.is_finite() && norm > 1e-12) {
            return Err(Error::InvalidTransform("quaternion has zero or non-finite norm".into()));
        }
        let unit = UnitQuaternion::from_quaternion(q);
        Self::new(*unit.to_rotation_matrix().matrix(), translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3 {
        &self.translation
    }

    /// Unit quaternion `[w, x, y, z]` with `w >= 0`.
    pub fn quaternion(&self) -> [f64; 4] {
        let rot = Rotation3::from_matrix_unchecked(self.rotation);
        let q = UnitQuaternion::from_rotation_matrix(&rot);
        let q = if q.w < 0.0 { -q.into_inner() } else { q.into_inner() };
        [q.w, q.i, q.j, q.k]
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == Matrix3::identity() && self.translation == Vector3::zeros()
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Angle in radians of the relative rotation between `self` and `other`.
    pub fn rotation_angle_to(&self, other: &RigidTransform) -> f64 {
        rotation_angle_between(&self.rotation, &other.rotation)
    }

    pub fn translation_distance_to(&self, other: &RigidTransform) -> f64 {
        (self.translation - other.translation).norm()
    }
}

/// Relative rotation angle, accurate for tiny angles: `‖A − B‖_F = 2√2 sin(θ/2)`.
pub fn rotation_angle_between(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let s = (a - b).norm() / (2.0 * std::f64::consts::SQRT_2);
    2.0 * s.clamp(0.0, 1.0).asin()
}

/// JSON form of a transform: `{"quaternion":[w,x,y,z], "translation":[x,y,z]}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub quaternion: [f64; 4],
    pub translation: [f64; 3],
}

impl From<&RigidTransform> for TransformRecord {
    fn from(t: &RigidTransform) -> Self {
        TransformRecord {
            quaternion: t.quaternion(),
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl TryFrom<&TransformRecord> for RigidTransform {
    type Error = Error;

    fn try_from(r: &TransformRecord) -> Result<Self> {
        RigidTransform::from_quaternion(r.quaternion, Vector3::from(r.translation))
    }
}

pub fn apply_transform(cloud: &PointCloud, transform: &RigidTransform) -> PointCloud {
    if transform.is_identity() {
        return cloud.clone();
    }
    let points = cloud.points().par_iter().map(|p| transform.apply(p)).collect();
    PointCloud::from_parts_unchecked(points, cloud.colors().map(<[_]>::to_vec), cloud.label().to_string())
}

// ---------------------------------------------------------------------------
// Landmark correspondences

/// One picked landmark seen in both epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct Correspondence {
    pub reference: Point3,
    pub floating: Point3,
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    pairs: Vec<Correspondence>,
}

pub const MIN_CORRESPONDENCES: usize = 3;

impl CorrespondenceSet {
    /// Requires at least three pairs whose reference points are not collinear.
    pub fn new(pairs: Vec<Correspondence>) -> Result<Self> {
        if pairs.len() < MIN_CORRESPONDENCES {
            return Err(Error::TooFewPairs {
                needed: MIN_CORRESPONDENCES,
                got: pairs.len(),
            });
        }
        let refs: Vec<Point3> = pairs.iter().map(|c| c.reference).collect();
        let sv = centered_singular_values(&refs);
        // Landmarks on a wall are coplanar, so only rank >= 2 is required.
        if !(sv[1] > 1e-9 * sv[0]) {
            return Err(Error::Degenerate(
                "reference landmarks are collinear or coincident".into(),
            ));
        }
        Ok(CorrespondenceSet { pairs })
    }

    pub fn from_points(reference: &[Point3], floating: &[Point3]) -> Result<Self> {
        if reference.len() != floating.len() {
            return Err(Error::InvalidParameter(format!(
                "{} reference landmarks but {} floating landmarks",
                reference.len(),
                floating.len()
            )));
        }
        Self::new(
            reference
                .iter()
                .zip(floating)
                .map(|(r, f)| Correspondence {
                    reference: *r,
                    floating: *f,
                    label: None,
                })
                .collect(),
        )
    }

    pub fn pairs(&self) -> &[Correspondence] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Parses the landmark file format: one `xr yr zr xf yf zf [label]` per
    /// line, `#` comment lines and blank lines ignored.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let loc = || Location::Line {
                path: path.to_path_buf(),
                line: i + 1,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() < 6 {
                return Err(Error::Parse {
                    location: loc(),
                    message: format!("expected 6 coordinates, found {}", fields.len()),
                });
            }
            let mut v = [0.0_f64; 6];
            for (k, tok) in fields[..6].iter().enumerate() {
                v[k] = tok.parse().map_err(|_| Error::Parse {
                    location: loc(),
                    message: format!("invalid coordinate `{tok}`"),
                })?;
                if !v[k].is_finite() {
                    return Err(Error::NonFinite { location: loc() });
                }
            }
            let label = (fields.len() > 6).then(|| fields[6..].join(" "));
            pairs.push(Correspondence {
                reference: Point3::new(v[0], v[1], v[2]),
                floating: Point3::new(v[3], v[4], v[5]),
                label,
            });
        }
        Self::new(pairs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}

fn centered_singular_values(points: &[Point3]) -> [f64; 3] {
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p.coords - centroid;
        cov += d * d.transpose();
    }
    // Singular values of the centered point matrix are the square roots of
    // the eigenvalues of its scatter matrix.
    let sv = cov.svd(false, false).singular_values;
    [sv[0].sqrt(), sv[1].sqrt(), sv[2].sqrt()]
}

/// Least-squares rigid transform taking `floating[i]` onto `reference[i]`.
///
/// Cross-covariance SVD (Kabsch). If the best orthogonal fit is a
/// reflection, the singular vector of the smallest singular value is
/// negated to return the best proper rotation instead.
pub fn fit_rigid(reference: &[Point3], floating: &[Point3]) -> Result<RigidTransform> {
    if reference.len() != floating.len() {
        return Err(Error::InvalidParameter("point lists differ in length".into()));
    }
    if reference.is_empty() {
        return Err(Error::Empty("correspondence list"));
    }
    let n = reference.len() as f64;
    let ref_c = reference.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let flt_c = floating.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;

    let mut h = Matrix3::zeros();
    for (r, f) in reference.iter().zip(floating) {
        h += (f.coords - flt_c) * (r.coords - ref_c).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.expect("U requested");
    let mut v = svd.v_t.expect("V^T requested").transpose();
    if (v * u.transpose()).determinant() < 0.0 {
        let mut last = v.column_mut(2);
        last.neg_mut();
    }
    let rotation = v * u.transpose();
    let translation = ref_c - rotation * flt_c;
    Ok(RigidTransform { rotation, translation })
}

/// Output of the landmark-based first stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoughAlignment {
    pub transform: RigidTransform,
    /// RMS landmark residual after alignment.
    pub rmse: f64,
}

pub fn rough_align(correspondences: &CorrespondenceSet) -> Result<RoughAlignment> {
    let (reference, floating): (Vec<Point3>, Vec<Point3>) =
        correspondences.pairs.iter().map(|c| (c.reference, c.floating)).unzip();
    let transform = fit_rigid(&reference, &floating)?;
    let sq: f64 = reference
        .iter()
        .zip(&floating)
        .map(|(r, f)| (r - transform.apply(f)).norm_squared())
        .sum();
    Ok(RoughAlignment {
        transform,
        rmse: (sq / reference.len() as f64).sqrt(),
    })
}

// ---------------------------------------------------------------------------
// ICP

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcpParams {
    pub max_iterations: usize,
    /// Stop once the RMSE changes by less than this between iterations.
    pub rmse_delta_tol: f64,
    /// Fraction of closest matches kept each iteration, in `[0.5, 1.0]`.
    pub trim_fraction: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        IcpParams {
            max_iterations: 50,
            rmse_delta_tol: 1e-6,
            trim_fraction: 1.0,
        }
    }
}

impl IcpParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.5..=1.0).contains(&self.trim_fraction) {
            return Err(Error::InvalidParameter(format!(
                "trim fraction {} outside [0.5, 1.0]",
                self.trim_fraction
            )));
        }
        if !(self.rmse_delta_tol >= 0.0) {
            return Err(Error::InvalidParameter("RMSE tolerance must be non-negative".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub transform: RigidTransform,
    /// RMSE of the kept matches at the start of each iteration.
    pub rmse_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl IcpResult {
    pub fn final_rmse(&self) -> f64 {
        self.rmse_history.last().copied().unwrap_or(0.0)
    }
}

pub fn icp_refine(
    reference: &PointCloud,
    floating: &PointCloud,
    initial: &RigidTransform,
    params: &IcpParams,
) -> Result<IcpResult> {
    if reference.is_empty() {
        return Err(Error::Empty("reference cloud"));
    }
    let index = KdIndex::build(reference)?;
    icp_refine_indexed(&index, reference, floating, initial, params)
}

/// ICP against a prebuilt index over `reference`.
pub fn icp_refine_indexed(
    index: &KdIndex,
    reference: &PointCloud,
    floating: &PointCloud,
    initial: &RigidTransform,
    params: &IcpParams,
) -> Result<IcpResult> {
    params.validate()?;
    if reference.is_empty() {
        return Err(Error::Empty("reference cloud"));
    }
    if floating.is_empty() {
        return Err(Error::Empty("floating cloud"));
    }
    let ref_pts = reference.points();
    let flt_pts = floating.points();
    let n = flt_pts.len();
    let keep = if params.trim_fraction >= 1.0 {
        n
    } else {
        ((params.trim_fraction * n as f64).ceil() as usize).clamp(1, n)
    };

    let mut current = *initial;
    let mut previous = current;
    let mut history: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut moved = vec![Point3::origin(); n];
    let mut matches: Vec<(usize, usize, f64)> = Vec::with_capacity(n);

    for _ in 0..params.max_iterations {
        moved
            .par_iter_mut()
            .zip(flt_pts)
            .for_each(|(m, p)| *m = current.apply(p));
        matches.clear();
        matches.par_extend(moved.par_iter().enumerate().map(|(i, p)| {
            let (j, d2) = index.nearest_squared(p);
            (i, j, d2)
        }));
        if keep < n {
            matches.sort_unstable_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)));
            matches.truncate(keep);
        }

        let sq: f64 = matches.iter().map(|m| m.2).sum();
        let rmse = (sq / matches.len() as f64).sqrt();
        // A step can only lose ground through rounding at the optimum;
        // keep the better transform and stop.
        if history.last().is_some_and(|&last| rmse > last) {
            current = previous;
            converged = true;
            break;
        }
        history.push(rmse);
        if rmse == 0.0 {
            converged = true;
            break;
        }

        let (targets, sources): (Vec<Point3>, Vec<Point3>) =
            matches.iter().map(|&(i, j, _)| (ref_pts[j], moved[i])).unzip();
        let step = fit_rigid(&targets, &sources)?;
        previous = current;
        current = step.compose(&current);

        if let [.., prev, last] = history[..] {
            if (prev - last).abs() < params.rmse_delta_tol {
                converged = true;
                break;
            }
        }
    }

    Ok(IcpResult {
        transform: current,
        iterations: history.len(),
        rmse_history: history,
        converged,
    })
}
