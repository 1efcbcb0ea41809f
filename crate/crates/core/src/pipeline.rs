//! The monitoring loop: a persistent registry of scanned epochs, pairwise
//! comparison of registered epochs, and report emission.
//!
//! The registry is a single JSON file:
//!
//! ```json
//! {"version": 1,
//!  "epochs": [{"epoch_id": "...", "captured_at": "...", "cloud_path": "...",
//!              "format": "ply-binary-le", "notes": "...",
//!              "transform": {"quaternion": [w,x,y,z], "translation": [x,y,z]},
//!              "registration_rmse": 0.0, "flagged": false}]}
//! ```
//!
//! The first epoch defines the reference frame. Every later epoch stores the
//! transform that maps its cloud into that frame. Writers take an advisory
//! lock on `<registry>.lock` and replace the file atomically.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cloud::{Point3, PointCloud, Rgb};
use crate::distances::{self, DistanceField, DistanceSummary};
use crate::error::{Error, Result};
use crate::io::{self, CloudFormat};
use crate::kdtree::KdIndex;
use crate::registration::{self, CorrespondenceSet, IcpParams, RigidTransform, TransformRecord};
use crate::segmentation::{self, ObbRegion, RegionSpec};

pub const REGISTRY_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch_id: String,
    /// ISO-8601 / RFC 3339 timestamp.
    pub captured_at: String,
    pub cloud_path: PathBuf,
    pub format: CloudFormat,
    #[serde(default)]
    pub notes: String,
    /// Maps this epoch's cloud into the reference frame.
    #[serde(default)]
    pub transform: Option<TransformRecord>,
    #[serde(default)]
    pub registration_rmse: Option<f64>,
    /// Set when the final registration RMSE exceeded the configured ceiling.
    #[serde(default)]
    pub flagged: bool,
}

impl EpochRecord {
    pub fn new(
        epoch_id: impl Into<String>,
        captured_at: impl Into<String>,
        cloud_path: impl Into<PathBuf>,
        format: CloudFormat,
    ) -> Self {
        EpochRecord {
            epoch_id: epoch_id.into(),
            captured_at: captured_at.into(),
            cloud_path: cloud_path.into(),
            format,
            notes: String::new(),
            transform: None,
            registration_rmse: None,
            flagged: false,
        }
    }

    pub fn registered_transform(&self) -> Result<Option<RigidTransform>> {
        self.transform.as_ref().map(RigidTransform::try_from).transpose()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    pub version: u32,
    pub epochs: Vec<EpochRecord>,
}

impl Default for Registry {
    fn default() -> Self {
        Registry {
            version: REGISTRY_VERSION,
            epochs: Vec::new(),
        }
    }
}

impl Registry {
    /// Reads a registry; a missing file is an empty registry.
    pub fn load(path: &Path) -> Result<Self> {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Registry::default()),
            Err(e) => return Err(Error::io(path, e)),
        };
        let reg: Registry = serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
        if reg.version != REGISTRY_VERSION {
            return Err(Error::Registry(format!("unsupported registry version {}", reg.version)));
        }
        Ok(reg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::json("registry", e))?;
        text.push('\n');
        io::write_atomically(path, text.as_bytes())
    }

    pub fn get(&self, epoch_id: &str) -> Result<&EpochRecord> {
        self.epochs
            .iter()
            .find(|e| e.epoch_id == epoch_id)
            .ok_or_else(|| Error::UnknownEpoch(epoch_id.to_string()))
    }

    pub fn reference(&self) -> Option<&EpochRecord> {
        self.epochs.first()
    }
}

/// Advisory lock held for the lifetime of the guard.
struct RegistryLock {
    _file: fs::File,
}

impl RegistryLock {
    fn acquire(registry: &Path) -> Result<Self> {
        let mut name = registry.as_os_str().to_owned();
        name.push(".lock");
        let lock_path = PathBuf::from(name);
        if let Some(dir) = lock_path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let file = fs::OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&lock_path)
            .map_err(|e| Error::io(&lock_path, e))?;
        file.lock().map_err(|e| Error::io(&lock_path, e))?;
        Ok(RegistryLock { _file: file })
    }
}

fn resolve_cloud_path(registry: &Path, cloud: &Path) -> PathBuf {
    if cloud.is_absolute() {
        return cloud.to_path_buf();
    }
    match registry.parent() {
        Some(dir) => dir.join(cloud),
        None => cloud.to_path_buf(),
    }
}

/// Loads an epoch's cloud and moves it into the reference frame.
pub fn load_registered_cloud(registry: &Path, record: &EpochRecord) -> Result<PointCloud> {
    let path = resolve_cloud_path(registry, &record.cloud_path);
    let cloud = io::load_cloud(&path, record.format)?.with_label(record.epoch_id.clone());
    Ok(match record.registered_transform()? {
        Some(t) => registration::apply_transform(&cloud, &t),
        None => cloud,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegistrationOptions {
    pub icp: IcpParams,
    /// Final ICP RMSE above this marks the stored record as flagged.
    pub rmse_ceiling: f64,
}

impl Default for RegistrationOptions {
    fn default() -> Self {
        RegistrationOptions {
            icp: IcpParams::default(),
            rmse_ceiling: f64::INFINITY,
        }
    }
}

/// Adds an epoch to the registry.
///
/// The first epoch is stored with the identity transform. Later epochs are
/// aligned onto the first one: landmark fit from `correspondences` (or the
/// record's own `transform` as a prior), then ICP refinement.
pub fn register_epoch(
    registry_path: &Path,
    mut record: EpochRecord,
    correspondences: Option<&CorrespondenceSet>,
    options: &RegistrationOptions,
) -> Result<EpochRecord> {
    let _lock = RegistryLock::acquire(registry_path)?;
    let mut registry = Registry::load(registry_path)?;

    if record.epoch_id.is_empty() {
        return Err(Error::InvalidParameter("epoch id must not be empty".into()));
    }
    if registry.epochs.iter().any(|e| e.epoch_id == record.epoch_id) {
        return Err(Error::DuplicateEpoch(record.epoch_id));
    }
    chrono::DateTime::parse_from_rfc3339(&record.captured_at).map_err(|e| {
        Error::InvalidParameter(format!(
            "captured_at `{}` is not an ISO-8601 timestamp: {e}",
            record.captured_at
        ))
    })?;
    let floating = io::load_cloud(resolve_cloud_path(registry_path, &record.cloud_path), record.format)?;
    if floating.is_empty() {
        return Err(Error::Empty("epoch cloud"));
    }

    match registry.reference() {
        None => {
            record.transform = Some(TransformRecord::from(&RigidTransform::identity()));
            record.registration_rmse = Some(0.0);
            record.flagged = false;
        }
        Some(reference_record) => {
            let initial = match (correspondences, record.registered_transform()?) {
                (Some(c), _) => registration::rough_align(c)?.transform,
                (None, Some(prior)) => prior,
                (None, None) => {
                    return Err(Error::InvalidParameter(
                        "epochs after the first need correspondences or a prior transform".into(),
                    ))
                }
            };
            let reference = load_registered_cloud(registry_path, reference_record)?;
            let result = registration::icp_refine(&reference, &floating, &initial, &options.icp)?;
            let rmse = result.final_rmse();
            record.transform = Some(TransformRecord::from(&result.transform));
            record.registration_rmse = Some(rmse);
            record.flagged = !(rmse <= options.rmse_ceiling);
            if record.flagged {
                log::warn!(
                    "epoch {}: registration RMSE {rmse} exceeds ceiling {}",
                    record.epoch_id,
                    options.rmse_ceiling
                );
            }
        }
    }

    registry.epochs.push(record.clone());
    registry.save(registry_path)?;
    Ok(record)
}

// ---------------------------------------------------------------------------
// Change classification

#[derive(Debug, Clone, PartialEq)]
pub struct ChangeClassification {
    pub flags: Vec<bool>,
    pub changed_count: usize,
    /// `changed_count / flags.len()`, zero for an empty field.
    pub changed_fraction: f64,
}

/// Flags points whose distance strictly exceeds `threshold`.
pub fn classify_changes(field: &DistanceField, threshold: f64) -> Result<ChangeClassification> {
    if !(threshold >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold must be non-negative, got {threshold}"
        )));
    }
    let flags: Vec<bool> = field.distances.iter().map(|&d| d > threshold).collect();
    let changed_count = flags.iter().filter(|&&f| f).count();
    let changed_fraction = if flags.is_empty() {
        0.0
    } else {
        changed_count as f64 / flags.len() as f64
    };
    Ok(ChangeClassification {
        flags,
        changed_count,
        changed_fraction,
    })
}

/// Noise-floor heuristic: `median + 5 × MAD` of the distances.
pub fn suggested_threshold(distances: &[f64]) -> f64 {
    let Some(med) = distances::median(distances) else {
        return 0.0;
    };
    let deviations: Vec<f64> = distances.iter().map(|d| (d - med).abs()).collect();
    med + 5.0 * distances::median(&deviations).unwrap_or(0.0)
}

/// Blue at 0, green at `max / 2`, red at and beyond `max`.
pub fn ramp_color(distance: f64, max: f64) -> Rgb {
    let t = if max > 0.0 {
        (distance / max).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let level = |s: f64| (255.0 * s).round() as u8;
    if t < 0.5 {
        let s = t / 0.5;
        Rgb::new(0, level(s), level(1.0 - s))
    } else {
        let s = (t - 0.5) / 0.5;
        Rgb::new(level(s), level(1.0 - s), 0)
    }
}

// ---------------------------------------------------------------------------
// Reports

/// Artifact file names, relative to the report directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportArtifacts {
    pub colored_cloud: String,
    pub distances_csv: String,
    pub summary_json: String,
    pub summary_text: String,
}

impl ReportArtifacts {
    pub fn for_pair(reference: &str, floating: &str) -> Self {
        let stem = format!("{reference}_vs_{floating}");
        ReportArtifacts {
            colored_cloud: format!("{stem}_distances.ply"),
            distances_csv: format!("{stem}_distances.csv"),
            summary_json: format!("{stem}_report.json"),
            summary_text: format!("{stem}_report.txt"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub reference_epoch: String,
    pub floating_epoch: String,
    pub roi: RegionSpec,
    pub exclusions: Vec<RegionSpec>,
    pub summary: DistanceSummary,
    pub reference_point_count: usize,
    /// Floating points inside the ROI after exclusions.
    pub roi_point_count: usize,
    pub changed_count: usize,
    pub changed_fraction: f64,
    pub threshold: f64,
    pub suggested_threshold: f64,
    pub ramp_max: f64,
    pub artifacts: ReportArtifacts,
}

impl ComparisonReport {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::json("report", e))?;
        s.push('\n');
        Ok(s)
    }

    /// Plain-text summary for people.
    pub fn render_text(&self) -> String {
        let s = &self.summary;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Change report: {} (floating) vs {} (reference)",
            self.floating_epoch, self.reference_epoch
        );
        let _ = writeln!(
            out,
            "ROI points: {} floating, {} reference",
            self.roi_point_count, self.reference_point_count
        );
        let _ = writeln!(out, "Exclusion zones: {}", self.exclusions.len());
        let _ = writeln!(out);
        let _ = writeln!(out, "Cloud-to-cloud distance (floating -> reference):");
        let _ = writeln!(out, "  mean    {:.6}", s.mean);
        let _ = writeln!(out, "  median  {:.6}", s.median);
        let _ = writeln!(out, "  p90     {:.6}", s.p90);
        let _ = writeln!(out, "  p95     {:.6}", s.p95);
        let _ = writeln!(out, "  p99     {:.6}", s.p99);
        let _ = writeln!(out, "  max     {:.6}", s.max);
        let _ = writeln!(
            out,
            "Hausdorff distance: {:.6} (h(ref,float) {:.6}, h(float,ref) {:.6})",
            s.hausdorff, s.directed_h_ab, s.directed_h_ba
        );
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "Changed points: {} of {} ({:.2}%) above threshold {:.6}",
            self.changed_count,
            self.roi_point_count,
            100.0 * self.changed_fraction,
            self.threshold
        );
        let _ = writeln!(
            out,
            "Suggested threshold (median + 5 MAD): {:.6}",
            self.suggested_threshold
        );
        let _ = writeln!(
            out,
            "Color ramp: blue 0 -> green {:.6} -> red {:.6}",
            self.ramp_max / 2.0,
            self.ramp_max
        );
        out
    }
}

/// Writes the colored cloud, the distance table, the JSON report and the
/// text summary into `out_dir` under the names in `report.artifacts`.
pub fn emit_report(
    report: &ComparisonReport,
    floating_roi: &PointCloud,
    field: &DistanceField,
    out_dir: &Path,
) -> Result<()> {
    if floating_roi.len() != field.len() {
        return Err(Error::InvalidParameter(
            "distance field does not match the floating cloud".into(),
        ));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let colors = field
        .distances
        .iter()
        .map(|&d| ramp_color(d, report.ramp_max))
        .collect();
    let colored = PointCloud::new(floating_roi.points().to_vec(), Some(colors), floating_roi.label())?;
    io::save_cloud(
        &colored,
        out_dir.join(&report.artifacts.colored_cloud),
        CloudFormat::PlyBinaryLe,
    )?;

    io::write_atomically(
        &out_dir.join(&report.artifacts.distances_csv),
        distance_csv(floating_roi.points(), &field.distances).as_bytes(),
    )?;
    io::write_atomically(
        &out_dir.join(&report.artifacts.summary_text),
        report.render_text().as_bytes(),
    )?;
    io::write_atomically(
        &out_dir.join(&report.artifacts.summary_json),
        report.to_json()?.as_bytes(),
    )?;
    Ok(())
}

/// `index,x,y,z,distance` table.
pub fn distance_csv(points: &[Point3], distances: &[f64]) -> String {
    let mut out = String::with_capacity(64 * points.len() + 32);
    out.push_str("index,x,y,z,distance\n");
    for (i, (p, d)) in points.iter().zip(distances).enumerate() {
        let _ = writeln!(out, "{i},{},{},{},{d}", p.x, p.y, p.z);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CompareOptions {
    /// Distance mapped to full red; defaults to the p99 of the field.
    pub ramp_max: Option<f64>,
}

/// Everything a comparison produced, including the in-memory inputs to the
/// written artifacts.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub report: ComparisonReport,
    pub floating_roi: PointCloud,
    pub field: DistanceField,
    pub classification: ChangeClassification,
}

/// Compares two registered epochs inside a region of interest and writes the
/// report artifacts to `out_dir`.
#[allow(clippy::too_many_arguments)]
pub fn compare_epochs(
    registry_path: &Path,
    reference_id: &str,
    floating_id: &str,
    roi: &RegionSpec,
    exclusions: &[RegionSpec],
    threshold: f64,
    out_dir: &Path,
    options: &CompareOptions,
) -> Result<Comparison> {
    let registry = {
        let _lock = RegistryLock::acquire(registry_path)?;
        Registry::load(registry_path)?
    };
    let reference_record = registry.get(reference_id)?;
    let floating_record = registry.get(floating_id)?;
    if !(threshold >= 0.0 && threshold.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "threshold must be non-negative, got {threshold}"
        )));
    }
    if let Some(m) = options.ramp_max {
        if !(m >= 0.0 && m.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "ramp max must be non-negative, got {m}"
            )));
        }
    }
    let roi_region = roi.to_region()?;
    let exclusion_regions = exclusions
        .iter()
        .map(RegionSpec::to_region)
        .collect::<Result<Vec<ObbRegion>>>()?;

    let reference = load_registered_cloud(registry_path, reference_record)?;
    let floating = load_registered_cloud(registry_path, floating_record)?;
    let reference_roi = segmentation::extract_roi(&reference, &roi_region, &exclusion_regions);
    let floating_roi = segmentation::extract_roi(&floating, &roi_region, &exclusion_regions);
    if reference_roi.is_empty() {
        return Err(Error::Empty("reference ROI"));
    }
    if floating_roi.is_empty() {
        return Err(Error::Empty("floating ROI"));
    }

    let reference_index = KdIndex::build(&reference_roi)?;
    let field = distances::c2c_distances_indexed(&reference_index, reference_id, &floating_roi);
    let back = distances::c2c_distances(&floating_roi, &reference_roi)?;
    let summary = distances::summarize(&field, distances::directed_hausdorff(&back)?)?;
    let classification = classify_changes(&field, threshold)?;

    let report = ComparisonReport {
        reference_epoch: reference_id.to_string(),
        floating_epoch: floating_id.to_string(),
        roi: RegionSpec {
            role: segmentation::RegionRole::Roi,
            ..*roi
        },
        exclusions: exclusions
            .iter()
            .map(|x| RegionSpec {
                role: segmentation::RegionRole::Exclude,
                ..*x
            })
            .collect(),
        summary,
        reference_point_count: reference_roi.len(),
        roi_point_count: floating_roi.len(),
        changed_count: classification.changed_count,
        changed_fraction: classification.changed_fraction,
        threshold,
        suggested_threshold: suggested_threshold(&field.distances),
        ramp_max: options.ramp_max.unwrap_or(summary.p99),
        artifacts: ReportArtifacts::for_pair(reference_id, floating_id),
    };
    emit_report(&report, &floating_roi, &field, out_dir)?;
    Ok(Comparison {
        report,
        floating_roi,
        field,
        classification,
    })
}
