//! Python bindings for the `twinmon` change-detection library.

use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use twinmon::error::ErrorClass;
use twinmon::io::CloudFormat;
use twinmon::pipeline::{self, CompareOptions, EpochRecord, RegistrationOptions};
use twinmon::registration::{self, CorrespondenceSet, IcpParams, TransformRecord};
use twinmon::segmentation::{self, ObbRegion, RegionRole, RegionSpec};
use twinmon::sim::{self, ShiftDirection, SlenderElement};
use twinmon::synth::{Rect, WallSpec};
use twinmon::{Point3, Rgb, Vector3};

type Xyz = [f64; 3];

fn to_py(e: twinmon::Error) -> PyErr {
    match e.class() {
        ErrorClass::Io => PyOSError::new_err(e.to_string()),
        ErrorClass::Data => PyValueError::new_err(e.to_string()),
    }
}

fn points_from(xs: Vec<Xyz>) -> Vec<Point3> {
    xs.into_iter().map(Point3::from).collect()
}

fn parse_format(format: Option<&str>) -> PyResult<Option<CloudFormat>> {
    format
        .map(|f| {
            f.parse::<CloudFormat>()
                .map_err(|e| PyValueError::new_err(e.to_string()))
        })
        .transpose()
}

fn region(center: Xyz, half_extents: Xyz, quaternion: [f64; 4]) -> PyResult<ObbRegion> {
    ObbRegion::from_quaternion(center.into(), half_extents.into(), quaternion).map_err(to_py)
}

/// A point cloud with optional per-point RGB colors.
#[pyclass(name = "PointCloud", module = "twinmon", from_py_object)]
#[derive(Clone)]
pub struct PyPointCloud {
    inner: twinmon::PointCloud,
}

#[pymethods]
impl PyPointCloud {
    #[new]
    #[pyo3(signature = (points, colors=None, label=String::new()))]
    fn new(points: Vec<Xyz>, colors: Option<Vec<[u8; 3]>>, label: String) -> PyResult<Self> {
        let colors = colors.map(|c| c.into_iter().map(Rgb::from).collect());
        let inner = twinmon::PointCloud::new(points_from(points), colors, label).map_err(to_py)?;
        Ok(PyPointCloud { inner })
    }

    /// Loads a PLY or XYZ file; the format is detected when not given.
    #[staticmethod]
    #[pyo3(signature = (path, format=None))]
    fn load(path: PathBuf, format: Option<&str>) -> PyResult<Self> {
        let inner = match parse_format(format)? {
            Some(f) => twinmon::load_cloud(&path, f),
            None => twinmon::load_cloud_auto(&path),
        }
        .map_err(to_py)?;
        Ok(PyPointCloud { inner })
    }

    #[pyo3(signature = (path, format=None))]
    fn save(&self, path: PathBuf, format: Option<&str>) -> PyResult<()> {
        let format = parse_format(format)?.unwrap_or_else(|| CloudFormat::for_output(&path));
        twinmon::save_cloud(&self.inner, &path, format).map_err(to_py)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "PointCloud(label={:?}, points={}, colors={})",
            self.inner.label(),
            self.inner.len(),
            self.inner.has_colors()
        )
    }

    #[getter]
    fn label(&self) -> &str {
        self.inner.label()
    }

    fn points(&self) -> Vec<Xyz> {
        self.inner.points().iter().map(|p| [p.x, p.y, p.z]).collect()
    }

    fn colors(&self) -> Option<Vec<[u8; 3]>> {
        self.inner.colors().map(|c| c.iter().map(|c| [c.r, c.g, c.b]).collect())
    }

    /// `(min, max)` corners of the axis-aligned bounding box.
    fn bounding_box(&self) -> PyResult<(Xyz, Xyz)> {
        let b = self.inner.bounding_box().map_err(to_py)?;
        Ok((b.min.coords.into(), b.max.coords.into()))
    }

    fn merge(&self, other: &PyPointCloud) -> PyPointCloud {
        PyPointCloud {
            inner: twinmon::merge(&self.inner, &other.inner),
        }
    }
}

/// Rigid motion `p -> R p + t`.
#[pyclass(name = "RigidTransform", module = "twinmon", from_py_object)]
#[derive(Clone, Copy)]
pub struct PyRigidTransform {
    inner: twinmon::RigidTransform,
}

#[pymethods]
impl PyRigidTransform {
    /// From a unit quaternion `(w, x, y, z)` and a translation.
    #[new]
    #[pyo3(signature = (quaternion=[1.0, 0.0, 0.0, 0.0], translation=[0.0, 0.0, 0.0]))]
    fn new(quaternion: [f64; 4], translation: Xyz) -> PyResult<Self> {
        let inner = twinmon::RigidTransform::from_quaternion(quaternion, translation.into()).map_err(to_py)?;
        Ok(PyRigidTransform { inner })
    }

    #[staticmethod]
    fn identity() -> Self {
        PyRigidTransform {
            inner: twinmon::RigidTransform::identity(),
        }
    }

    #[staticmethod]
    #[pyo3(signature = (axis, angle, translation=[0.0, 0.0, 0.0]))]
    fn from_axis_angle(axis: Xyz, angle: f64, translation: Xyz) -> PyResult<Self> {
        let inner = twinmon::RigidTransform::from_axis_angle(axis.into(), angle, translation.into()).map_err(to_py)?;
        Ok(PyRigidTransform { inner })
    }

    #[getter]
    fn quaternion(&self) -> [f64; 4] {
        self.inner.quaternion()
    }

    #[getter]
    fn translation(&self) -> Xyz {
        (*self.inner.translation()).into()
    }

    /// Rotation matrix as three rows.
    fn matrix(&self) -> [[f64; 3]; 3] {
        let r = self.inner.rotation();
        [0, 1, 2].map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]])
    }

    fn apply(&self, point: Xyz) -> Xyz {
        self.inner.apply(&point.into()).coords.into()
    }

    fn inverse(&self) -> Self {
        PyRigidTransform {
            inner: self.inner.inverse(),
        }
    }

    /// `self ∘ other`: applies `other` first.
    fn compose(&self, other: &PyRigidTransform) -> Self {
        PyRigidTransform {
            inner: self.inner.compose(&other.inner),
        }
    }

    /// Angle in radians of the relative rotation.
    fn rotation_angle_to(&self, other: &PyRigidTransform) -> f64 {
        self.inner.rotation_angle_to(&other.inner)
    }

    fn translation_distance_to(&self, other: &PyRigidTransform) -> f64 {
        self.inner.translation_distance_to(&other.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "RigidTransform(quaternion={:?}, translation={:?})",
            self.quaternion(),
            self.translation()
        )
    }
}

/// Closed-form fit of the transform taking `floating` landmarks onto
/// `reference` ones. Returns `(transform, rmse)`.
#[pyfunction]
fn rough_align(reference: Vec<Xyz>, floating: Vec<Xyz>) -> PyResult<(PyRigidTransform, f64)> {
    let set = CorrespondenceSet::from_points(&points_from(reference), &points_from(floating)).map_err(to_py)?;
    let fit = registration::rough_align(&set).map_err(to_py)?;
    Ok((PyRigidTransform { inner: fit.transform }, fit.rmse))
}

/// Point-to-point ICP. Returns a dict with `transform`, `rmse_history`,
/// `iterations` and `converged`.
#[pyfunction]
#[pyo3(signature = (reference, floating, initial=None, max_iterations=50, tolerance=1e-6, trim=1.0))]
fn icp_refine<'py>(
    py: Python<'py>,
    reference: &PyPointCloud,
    floating: &PyPointCloud,
    initial: Option<PyRigidTransform>,
    max_iterations: usize,
    tolerance: f64,
    trim: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let params = IcpParams {
        max_iterations,
        rmse_delta_tol: tolerance,
        trim_fraction: trim,
    };
    let initial = initial.map_or_else(twinmon::RigidTransform::identity, |t| t.inner);
    let res = py
        .detach(|| registration::icp_refine(&reference.inner, &floating.inner, &initial, &params))
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("transform", PyRigidTransform { inner: res.transform })?;
    out.set_item("rmse_history", res.rmse_history)?;
    out.set_item("iterations", res.iterations)?;
    out.set_item("converged", res.converged)?;
    Ok(out)
}

#[pyfunction]
fn apply_transform(cloud: &PyPointCloud, transform: &PyRigidTransform) -> PyPointCloud {
    PyPointCloud {
        inner: registration::apply_transform(&cloud.inner, &transform.inner),
    }
}

/// Distance from every floating point to its nearest reference point.
#[pyfunction]
fn c2c_distances(py: Python<'_>, reference: &PyPointCloud, floating: &PyPointCloud) -> PyResult<Vec<f64>> {
    py.detach(|| twinmon::c2c_distances(&reference.inner, &floating.inner))
        .map(|f| f.distances)
        .map_err(to_py)
}

fn json_to_dict<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// Symmetric Hausdorff distance with distance statistics, as a dict.
#[pyfunction]
fn hausdorff<'py>(py: Python<'py>, reference: &PyPointCloud, floating: &PyPointCloud) -> PyResult<Bound<'py, PyAny>> {
    let s = py
        .detach(|| twinmon::hausdorff(&reference.inner, &floating.inner))
        .map_err(to_py)?;
    let text = serde_json::to_string(&s).map_err(|e| PyValueError::new_err(e.to_string()))?;
    json_to_dict(py, &text)
}

/// Points inside the oriented box.
#[pyfunction]
#[pyo3(signature = (cloud, center, half_extents, quaternion=[1.0, 0.0, 0.0, 0.0]))]
fn crop(cloud: &PyPointCloud, center: Xyz, half_extents: Xyz, quaternion: [f64; 4]) -> PyResult<PyPointCloud> {
    let r = region(center, half_extents, quaternion)?;
    Ok(PyPointCloud {
        inner: segmentation::crop(&cloud.inner, &r),
    })
}

/// Points outside the oriented box.
#[pyfunction]
#[pyo3(signature = (cloud, center, half_extents, quaternion=[1.0, 0.0, 0.0, 0.0]))]
fn exclude(cloud: &PyPointCloud, center: Xyz, half_extents: Xyz, quaternion: [f64; 4]) -> PyResult<PyPointCloud> {
    let r = region(center, half_extents, quaternion)?;
    Ok(PyPointCloud {
        inner: segmentation::exclude(&cloud.inner, &r),
    })
}

/// Paints the slender element; geometry is untouched.
#[pyfunction]
#[pyo3(signature = (cloud, center, half_extents, quaternion=[1.0, 0.0, 0.0, 0.0], paint=[0, 0, 0]))]
fn simulate_crack_like_edge(
    cloud: &PyPointCloud,
    center: Xyz,
    half_extents: Xyz,
    quaternion: [f64; 4],
    paint: [u8; 3],
) -> PyResult<PyPointCloud> {
    let element = SlenderElement::new(region(center, half_extents, quaternion)?, cloud.inner.label()).map_err(to_py)?;
    let inner = sim::simulate_crack_like_edge(&cloud.inner, &element, paint.into()).map_err(to_py)?;
    Ok(PyPointCloud { inner })
}

/// Shifts the slender element by `depth` along the wall normal (`"into"` the
/// wall by default). The normal is fitted when not given.
#[pyfunction]
#[pyo3(signature = (cloud, center, half_extents, depth, quaternion=[1.0, 0.0, 0.0, 0.0], normal=None, direction="into"))]
fn simulate_true_crack(
    cloud: &PyPointCloud,
    center: Xyz,
    half_extents: Xyz,
    depth: f64,
    quaternion: [f64; 4],
    normal: Option<Xyz>,
    direction: &str,
) -> PyResult<PyPointCloud> {
    let direction = match direction {
        "into" => ShiftDirection::Into,
        "out" => ShiftDirection::Out,
        other => {
            return Err(PyValueError::new_err(format!(
                "direction must be \"into\" or \"out\", got {other:?}"
            )))
        }
    };
    let element = SlenderElement::new(region(center, half_extents, quaternion)?, cloud.inner.label()).map_err(to_py)?;
    let inner =
        sim::simulate_true_crack(&cloud.inner, &element, depth, normal.map(Vector3::from), direction).map_err(to_py)?;
    Ok(PyPointCloud { inner })
}

/// Seeded synthetic wall in the z = 0 plane, centered on the origin.
#[pyfunction]
#[pyo3(signature = (width=10.0, height=5.0, density=1000.0, sigma=0.0, void=None, seed=0))]
fn synth_wall(
    width: f64,
    height: f64,
    density: f64,
    sigma: f64,
    void: Option<[f64; 4]>,
    seed: u64,
) -> PyResult<PyPointCloud> {
    let spec = WallSpec {
        width,
        height,
        density,
        sigma,
        void: void.map(|[x0, y0, x1, y1]| Rect { x0, y0, x1, y1 }),
        label: "wall".into(),
    };
    Ok(PyPointCloud {
        inner: spec.generate(seed).map_err(to_py)?,
    })
}

/// Adds an epoch to a registry file and returns its stored transform and
/// registration RMSE.
#[pyfunction]
#[pyo3(signature = (registry, epoch_id, cloud_path, captured_at, reference_landmarks=None, floating_landmarks=None, initial=None, format=None, notes=String::new()))]
#[allow(clippy::too_many_arguments)]
fn register_epoch(
    py: Python<'_>,
    registry: PathBuf,
    epoch_id: String,
    cloud_path: PathBuf,
    captured_at: String,
    reference_landmarks: Option<Vec<Xyz>>,
    floating_landmarks: Option<Vec<Xyz>>,
    initial: Option<PyRigidTransform>,
    format: Option<&str>,
    notes: String,
) -> PyResult<(PyRigidTransform, Option<f64>, bool)> {
    let format = match parse_format(format)? {
        Some(f) => f,
        None => CloudFormat::detect(&cloud_path).map_err(to_py)?,
    };
    let mut record = EpochRecord::new(epoch_id, captured_at, cloud_path, format);
    record.notes = notes;
    record.transform = initial.map(|t| TransformRecord::from(&t.inner));
    let pairs = match (reference_landmarks, floating_landmarks) {
        (Some(r), Some(f)) => Some(CorrespondenceSet::from_points(&points_from(r), &points_from(f)).map_err(to_py)?),
        (None, None) => None,
        _ => return Err(PyValueError::new_err("give both landmark lists or neither")),
    };
    let stored = py
        .detach(|| pipeline::register_epoch(&registry, record, pairs.as_ref(), &RegistrationOptions::default()))
        .map_err(to_py)?;
    let transform = stored
        .registered_transform()
        .map_err(to_py)?
        .unwrap_or_else(twinmon::RigidTransform::identity);
    Ok((
        PyRigidTransform { inner: transform },
        stored.registration_rmse,
        stored.flagged,
    ))
}

/// Compares two registered epochs inside an axis-aligned or oriented ROI,
/// writes the report artifacts to `out_dir` and returns the report as a dict.
/// `exclusions` is a list of `(center, half_extents)` or
/// `(center, half_extents, quaternion)` tuples.
#[pyfunction]
#[pyo3(signature = (registry, reference_id, floating_id, roi_center, roi_half_extents, threshold, out_dir, roi_quaternion=[1.0, 0.0, 0.0, 0.0], exclusions=Vec::new(), ramp_max=None))]
#[allow(clippy::too_many_arguments)]
fn compare_epochs<'py>(
    py: Python<'py>,
    registry: PathBuf,
    reference_id: String,
    floating_id: String,
    roi_center: Xyz,
    roi_half_extents: Xyz,
    threshold: f64,
    out_dir: PathBuf,
    roi_quaternion: [f64; 4],
    exclusions: Vec<Bound<'py, PyAny>>,
    ramp_max: Option<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    let roi = RegionSpec {
        center: roi_center,
        half_extents: roi_half_extents,
        quaternion: roi_quaternion,
        role: RegionRole::Roi,
    };
    let exclusions = exclusions
        .iter()
        .map(|x| {
            let (center, half_extents, quaternion) = match x.extract::<(Xyz, Xyz, [f64; 4])>() {
                Ok(t) => t,
                Err(_) => {
                    let (c, h) = x.extract::<(Xyz, Xyz)>()?;
                    (c, h, [1.0, 0.0, 0.0, 0.0])
                }
            };
            Ok(RegionSpec {
                center,
                half_extents,
                quaternion,
                role: RegionRole::Exclude,
            })
        })
        .collect::<PyResult<Vec<_>>>()?;
    let cmp = py
        .detach(|| {
            pipeline::compare_epochs(
                &registry,
                &reference_id,
                &floating_id,
                &roi,
                &exclusions,
                threshold,
                &out_dir,
                &CompareOptions { ramp_max },
            )
        })
        .map_err(to_py)?;
    json_to_dict(py, &cmp.report.to_json().map_err(to_py)?)
}

#[pymodule]
#[pyo3(name = "twinmon")]
pub fn twinmon_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyPointCloud>()?;
    m.add_class::<PyRigidTransform>()?;
    m.add_function(wrap_pyfunction!(rough_align, m)?)?;
    m.add_function(wrap_pyfunction!(icp_refine, m)?)?;
    m.add_function(wrap_pyfunction!(apply_transform, m)?)?;
    m.add_function(wrap_pyfunction!(c2c_distances, m)?)?;
    m.add_function(wrap_pyfunction!(hausdorff, m)?)?;
    m.add_function(wrap_pyfunction!(crop, m)?)?;
    m.add_function(wrap_pyfunction!(exclude, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_crack_like_edge, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_true_crack, m)?)?;
    m.add_function(wrap_pyfunction!(synth_wall, m)?)?;
    m.add_function(wrap_pyfunction!(register_epoch, m)?)?;
    m.add_function(wrap_pyfunction!(compare_epochs, m)?)?;
    Ok(())
}
