//! `twinmon` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 I/O error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::cloud::{self, PointCloud};
use crate::distances;
use crate::error::{Error, ErrorClass, Result};
use crate::io::{self, CloudFormat};
use crate::pipeline::{self, CompareOptions, ComparisonReport, EpochRecord, RegistrationOptions};
use crate::registration::{self, CorrespondenceSet, IcpParams, RigidTransform, TransformRecord};
use crate::segmentation::{self, RegionSet};
use crate::sim::SimulationSpec;
use crate::synth::{Rect, WallSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_IO: i32 = 3;

const FORMATS_HELP: &str = "\
File formats:
  Clouds     PLY (`format ascii 1.0` or `format binary_little_endian 1.0`; vertex x,y,z as
             float/double, optional red,green,blue as uchar) or XYZ text (`x y z [r g b]`
             per line, `#` comments). Output clouds ending in .ply are binary PLY with
             double coordinates; anything else is XYZ text.
  Regions    JSON {\"center\":[x,y,z], \"half_extents\":[a,b,c], \"quaternion\":[w,x,y,z],
             \"role\":\"roi\"|\"exclude\"}, or an array of such objects.
  Landmarks  text, one `xr yr zr xf yf zf [label]` per line, `#` comments.
  Transform  JSON {\"quaternion\":[w,x,y,z], \"translation\":[x,y,z]}, mapping the floating
             cloud into the reference frame.
  Simulation JSON {\"element\":<region>, \"mode\":\"recolor\"|\"shift\", \"depth\":d,
             \"paint\":[r,g,b], \"normal\":[x,y,z], \"direction\":\"into\"|\"out\"}.
  Distances  CSV `index,x,y,z,distance`.";

#[derive(Debug, Parser)]
#[command(name = "twinmon", version, about = "Epoch-to-epoch point cloud change detection")]
pub struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Seed for every randomized generator.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Point count, color presence and bounding box of a cloud.
    Info(CloudArg),
    /// Keep the points inside the region(s) with role "roi".
    Crop(RegionOp),
    /// Remove the points inside every region in the file.
    Exclude(RegionOp),
    /// Closed-form rigid fit from landmark correspondences.
    Align(AlignArgs),
    /// Refine an alignment with point-to-point ICP.
    Icp(IcpArgs),
    /// Per-point cloud-to-cloud distances, floating -> reference.
    C2c(C2cArgs),
    /// Symmetric Hausdorff distance and distance statistics.
    Hausdorff(PairArgs),
    /// Inject a synthetic crack-like edge (recolor) or true crack (shift).
    Simulate(SimulateArgs),
    /// Generate a synthetic wall cloud (uses --seed).
    Synth(SynthArgs),
    /// Epoch registry operations.
    #[command(subcommand)]
    Epoch(EpochCommand),
    /// Print the human-readable summary of a report JSON.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct CloudArg {
    pub cloud: PathBuf,
    /// Input format (default: detect).
    #[arg(long)]
    pub format: Option<CloudFormat>,
}

#[derive(Debug, Args)]
pub struct RegionOp {
    #[command(flatten)]
    pub input: CloudArg,
    /// Region JSON file.
    #[arg(long)]
    pub region: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    /// Landmark correspondence file.
    pub correspondences: PathBuf,
    /// Write the transform as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Floating cloud to move into the reference frame.
    #[arg(long, requires = "output")]
    pub apply: Option<PathBuf>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IcpOptions {
    #[arg(long, default_value_t = 50)]
    pub max_iterations: usize,
    /// Stop when the RMSE changes by less than this.
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
    /// Fraction of closest matches kept per iteration, 0.5..=1.0.
    #[arg(long, default_value_t = 1.0)]
    pub trim: f64,
}

impl IcpOptions {
    fn params(&self) -> IcpParams {
        IcpParams {
            max_iterations: self.max_iterations,
            rmse_delta_tol: self.tolerance,
            trim_fraction: self.trim,
        }
    }
}

#[derive(Debug, Args)]
pub struct IcpArgs {
    pub reference: PathBuf,
    pub floating: PathBuf,
    /// Initial transform JSON.
    #[arg(long, conflicts_with = "correspondences")]
    pub init: Option<PathBuf>,
    /// Landmark file used for the initial rough alignment.
    #[arg(long)]
    pub correspondences: Option<PathBuf>,
    #[command(flatten)]
    pub icp: IcpOptions,
    /// Write the refined transform and RMSE history as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Write the aligned floating cloud.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PairArgs {
    pub reference: PathBuf,
    pub floating: PathBuf,
    /// Write the summary as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct C2cArgs {
    pub reference: PathBuf,
    pub floating: PathBuf,
    /// Distance table `index,x,y,z,distance`.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Distance-colored PLY of the floating cloud.
    #[arg(long)]
    pub ply: Option<PathBuf>,
    /// Distance mapped to red in the colored PLY (default: p99).
    #[arg(long)]
    pub ramp_max: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub input: CloudArg,
    /// Simulation JSON file.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10.0)]
    pub width: f64,
    #[arg(long, default_value_t = 5.0)]
    pub height: f64,
    /// Points per unit area.
    #[arg(long, default_value_t = 1000.0)]
    pub density: f64,
    /// Out-of-plane Gaussian noise.
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    /// Rectangular void `x0,y0,x1,y1` in wall coordinates.
    #[arg(long, value_parser = parse_rect, allow_hyphen_values = true)]
    pub void: Option<Rect>,
    #[arg(short, long)]
    pub output: PathBuf,
}

fn parse_rect(s: &str) -> std::result::Result<Rect, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match v[..] {
        [x0, y0, x1, y1] => Ok(Rect { x0, y0, x1, y1 }),
        _ => Err("expected x0,y0,x1,y1".into()),
    }
}

#[derive(Debug, Subcommand)]
pub enum EpochCommand {
    /// Register an epoch (the first one defines the reference frame).
    Add(EpochAddArgs),
    /// Compare two registered epochs inside a region of interest.
    Compare(EpochCompareArgs),
    /// List registered epochs.
    List(RegistryArg),
}

#[derive(Debug, Args)]
pub struct RegistryArg {
    /// Registry JSON file.
    #[arg(long)]
    pub registry: PathBuf,
}

#[derive(Debug, Args)]
pub struct EpochAddArgs {
    /// Registry JSON file (created when missing).
    #[arg(long)]
    pub registry: PathBuf,
    /// Unique epoch id.
    #[arg(long)]
    pub id: String,
    /// Epoch point cloud file.
    #[arg(long)]
    pub cloud: PathBuf,
    #[arg(long)]
    pub format: Option<CloudFormat>,
    /// RFC 3339 capture time, e.g. 2024-03-01T10:00:00Z.
    #[arg(long, default_value = "1970-01-01T00:00:00Z")]
    pub captured_at: String,
    #[arg(long, default_value = "")]
    pub notes: String,
    /// Landmark file for the rough alignment onto the first epoch.
    #[arg(long, conflicts_with = "init")]
    pub correspondences: Option<PathBuf>,
    /// Prior transform JSON used instead of correspondences.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[command(flatten)]
    pub icp: IcpOptions,
    /// Flag the record when the final ICP RMSE exceeds this.
    #[arg(long)]
    pub rmse_ceiling: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EpochCompareArgs {
    /// Registry JSON file.
    #[arg(long)]
    pub registry: PathBuf,
    /// Reference (earlier) epoch id.
    #[arg(long = "ref")]
    pub reference: String,
    /// Floating (later) epoch id.
    #[arg(long = "float")]
    pub floating: String,
    /// Region JSON: one "roi" region plus any number of "exclude" regions.
    #[arg(long)]
    pub roi: PathBuf,
    /// Additional exclusion region files.
    #[arg(long)]
    pub exclude: Vec<PathBuf>,
    /// Points farther than this from the reference are flagged as changed.
    #[arg(long)]
    pub threshold: f64,
    /// Report directory.
    #[arg(long, default_value = "report")]
    pub out: PathBuf,
    /// Distance mapped to red in the colored PLY (default: p99).
    #[arg(long)]
    pub ramp_max: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    pub report: PathBuf,
    /// Write the summary here instead of stdout.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

/// The clap command with the file format reference attached to every
/// subcommand's help.
pub fn command() -> clap::Command {
    fn attach(cmd: clap::Command) -> clap::Command {
        cmd.after_help(FORMATS_HELP).mut_subcommands(attach)
    }
    attach(Cli::command())
}

/// Parses `argv` (including the program name) and runs the command,
/// writing normal output to `out` and diagnostics to `err`.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let parsed = command()
        .try_get_matches_from(argv)
        .and_then(|m: ArgMatches| Cli::from_arg_matches(&m));
    let cli = match parsed {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let rendered = e.render().to_string();
            if code == EXIT_OK {
                let _ = out.write_all(rendered.as_bytes());
            } else {
                let _ = err.write_all(rendered.as_bytes());
            }
            return code;
        }
    };

    let pool = match cli.threads {
        Some(0) => {
            let _ = writeln!(err, "error: --threads must be at least 1");
            return EXIT_USAGE;
        }
        n => rayon::ThreadPoolBuilder::new().num_threads(n.unwrap_or(0)).build(),
    };
    let mut buffered = Vec::new();
    let result = match pool {
        Ok(pool) => pool.install(|| execute(&cli, &mut buffered)),
        Err(e) => {
            let _ = writeln!(err, "error: cannot start worker pool: {e}");
            return EXIT_DATA;
        }
    };
    let _ = out.write_all(&buffered);
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            match e.class() {
                ErrorClass::Data => EXIT_DATA,
                ErrorClass::Io => EXIT_IO,
            }
        }
    }
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

fn load(arg: &CloudArg) -> Result<PointCloud> {
    load_path(&arg.cloud, arg.format)
}

fn load_path(path: &Path, format: Option<CloudFormat>) -> Result<PointCloud> {
    match format {
        Some(f) => io::load_cloud(path, f),
        None => io::load_cloud_auto(path),
    }
}

fn save(cloud: &PointCloud, path: &Path) -> Result<()> {
    io::save_cloud(cloud, path, CloudFormat::for_output(path))
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path.display().to_string(), e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_transform(path: &Path) -> Result<RigidTransform> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let rec: TransformRecord = serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
    RigidTransform::try_from(&rec)
}

macro_rules! say {
    ($out:expr, $($arg:tt)*) => {
        writeln!($out, $($arg)*).map_err(|e| Error::io("<stdout>", e))?
    };
}

fn print_transform(out: &mut dyn Write, t: &RigidTransform) -> Result<()> {
    let q = t.quaternion();
    let tr = t.translation();
    say!(out, "quaternion (w x y z): {} {} {} {}", q[0], q[1], q[2], q[3]);
    say!(out, "translation: {} {} {}", tr.x, tr.y, tr.z);
    Ok(())
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Info(arg) => {
            let c = load(arg)?;
            say!(out, "points: {}", c.len());
            say!(out, "colors: {}", if c.has_colors() { "yes" } else { "no" });
            if let Ok(b) = cloud::bounding_box(&c) {
                say!(out, "bbox min: {} {} {}", b.min.x, b.min.y, b.min.z);
                say!(out, "bbox max: {} {} {}", b.max.x, b.max.y, b.max.z);
                say!(out, "bbox diagonal: {}", b.diagonal());
            }
        }
        Command::Crop(op) => {
            let c = load(&op.input)?;
            let regions = RegionSet::load(&op.region)?;
            if regions.rois.is_empty() {
                return Err(Error::InvalidRegion("region file has no \"roi\" region".into()));
            }
            let kept = c.filter(|p| regions.rois.iter().all(|(_, r)| r.contains(p)));
            say!(out, "kept {} of {} points", kept.len(), c.len());
            save(&kept, &op.output)?;
        }
        Command::Exclude(op) => {
            let c = load(&op.input)?;
            let regions = RegionSet::load(&op.region)?;
            let mut kept = c.clone();
            for (_, r) in regions.rois.iter().chain(&regions.exclusions) {
                kept = segmentation::exclude(&kept, r);
            }
            say!(out, "kept {} of {} points", kept.len(), c.len());
            save(&kept, &op.output)?;
        }
        Command::Align(args) => {
            let set = CorrespondenceSet::load(&args.correspondences)?;
            let fit = registration::rough_align(&set)?;
            say!(out, "pairs: {}", set.len());
            print_transform(out, &fit.transform)?;
            say!(out, "landmark rmse: {}", fit.rmse);
            if let Some(p) = &args.json {
                write_json(&TransformRecord::from(&fit.transform), p)?;
            }
            if let (Some(input), Some(output)) = (&args.apply, &args.output) {
                let c = load_path(input, None)?;
                save(&registration::apply_transform(&c, &fit.transform), output)?;
            }
        }
        Command::Icp(args) => {
            let reference = load_path(&args.reference, None)?;
            let floating = load_path(&args.floating, None)?;
            let initial = match (&args.init, &args.correspondences) {
                (Some(p), _) => read_transform(p)?,
                (None, Some(p)) => registration::rough_align(&CorrespondenceSet::load(p)?)?.transform,
                (None, None) => RigidTransform::identity(),
            };
            let result = registration::icp_refine(&reference, &floating, &initial, &args.icp.params())?;
            say!(
                out,
                "iterations: {} (converged: {})",
                result.iterations,
                result.converged
            );
            say!(out, "final rmse: {}", result.final_rmse());
            print_transform(out, &result.transform)?;
            if let Some(p) = &args.json {
                #[derive(serde::Serialize)]
                struct IcpJson<'a> {
                    transform: TransformRecord,
                    rmse_history: &'a [f64],
                    iterations: usize,
                    converged: bool,
                }
                write_json(
                    &IcpJson {
                        transform: TransformRecord::from(&result.transform),
                        rmse_history: &result.rmse_history,
                        iterations: result.iterations,
                        converged: result.converged,
                    },
                    p,
                )?;
            }
            if let Some(p) = &args.output {
                save(&registration::apply_transform(&floating, &result.transform), p)?;
            }
        }
        Command::C2c(args) => {
            let reference = load_path(&args.reference, None)?;
            let floating = load_path(&args.floating, None)?;
            let field = distances::c2c_distances(&reference, &floating)?;
            let max = distances::directed_hausdorff(&field)?;
            let med = distances::median(&field.distances).unwrap_or(0.0);
            say!(out, "points: {}", field.len());
            say!(out, "median distance: {med}");
            say!(out, "max distance: {max}");
            if let Some(p) = &args.csv {
                std::fs::write(p, pipeline::distance_csv(floating.points(), &field.distances))
                    .map_err(|e| Error::io(p, e))?;
            }
            if let Some(p) = &args.ply {
                let ramp_max = match args.ramp_max {
                    Some(m) => m,
                    None => {
                        let mut sorted = field.distances.clone();
                        sorted.sort_unstable_by(f64::total_cmp);
                        distances::percentile(&sorted, 0.99)
                    }
                };
                let colors = field
                    .distances
                    .iter()
                    .map(|&d| pipeline::ramp_color(d, ramp_max))
                    .collect();
                let colored = PointCloud::new(floating.points().to_vec(), Some(colors), floating.label())?;
                io::save_cloud(&colored, p, CloudFormat::PlyBinaryLe)?;
            }
        }
        Command::Hausdorff(args) => {
            let reference = load_path(&args.reference, None)?;
            let floating = load_path(&args.floating, None)?;
            let s = distances::hausdorff(&reference, &floating)?;
            say!(out, "hausdorff: {}", s.hausdorff);
            say!(out, "h(reference, floating): {}", s.directed_h_ab);
            say!(out, "h(floating, reference): {}", s.directed_h_ba);
            say!(
                out,
                "mean: {} median: {} p95: {} p99: {}",
                s.mean,
                s.median,
                s.p95,
                s.p99
            );
            if let Some(p) = &args.json {
                write_json(&s, p)?;
            }
        }
        Command::Simulate(args) => {
            let c = load(&args.input)?;
            let spec = SimulationSpec::load(&args.spec)?;
            let result = spec.apply(&c)?;
            save(&result, &args.output)?;
            say!(out, "wrote {} points to {}", result.len(), args.output.display());
        }
        Command::Synth(args) => {
            let spec = WallSpec {
                width: args.width,
                height: args.height,
                density: args.density,
                sigma: args.sigma,
                void: args.void,
                label: "wall".into(),
            };
            let wall = spec.generate(cli.seed)?;
            save(&wall, &args.output)?;
            say!(out, "wrote {} points to {}", wall.len(), args.output.display());
        }
        Command::Epoch(EpochCommand::Add(args)) => {
            let cloud_path = std::path::absolute(&args.cloud).map_err(|e| Error::io(&args.cloud, e))?;
            let format = match args.format {
                Some(f) => f,
                None => CloudFormat::detect(&cloud_path)?,
            };
            let mut record = EpochRecord::new(&args.id, &args.captured_at, cloud_path, format);
            record.notes = args.notes.clone();
            if let Some(p) = &args.init {
                record.transform = Some(TransformRecord::from(&read_transform(p)?));
            }
            let correspondences = args.correspondences.as_ref().map(CorrespondenceSet::load).transpose()?;
            let options = RegistrationOptions {
                icp: args.icp.params(),
                rmse_ceiling: args.rmse_ceiling.unwrap_or(f64::INFINITY),
            };
            let stored = pipeline::register_epoch(&args.registry, record, correspondences.as_ref(), &options)?;
            say!(out, "registered epoch {}", stored.epoch_id);
            if let Some(t) = stored.registered_transform()? {
                print_transform(out, &t)?;
            }
            if let Some(rmse) = stored.registration_rmse {
                say!(
                    out,
                    "registration rmse: {rmse}{}",
                    if stored.flagged { " (FLAGGED)" } else { "" }
                );
            }
        }
        Command::Epoch(EpochCommand::Compare(args)) => {
            let mut regions = RegionSet::load(&args.roi)?;
            for p in &args.exclude {
                let extra = RegionSet::load(p)?;
                regions
                    .exclusions
                    .extend(extra.rois.into_iter().chain(extra.exclusions));
            }
            let (roi, _) = regions.single_roi()?;
            let exclusions: Vec<_> = regions.exclusions.iter().map(|(s, _)| *s).collect();
            let cmp = pipeline::compare_epochs(
                &args.registry,
                &args.reference,
                &args.floating,
                roi,
                &exclusions,
                args.threshold,
                &args.out,
                &CompareOptions {
                    ramp_max: args.ramp_max,
                },
            )?;
            out.write_all(cmp.report.render_text().as_bytes())
                .map_err(|e| Error::io("<stdout>", e))?;
            say!(
                out,
                "report written to {}",
                args.out.join(&cmp.report.artifacts.summary_json).display()
            );
        }
        Command::Epoch(EpochCommand::List(args)) => {
            let reg = pipeline::Registry::load(&args.registry)?;
            for e in &reg.epochs {
                let rmse = e.registration_rmse.map(|r| r.to_string()).unwrap_or_else(|| "-".into());
                say!(
                    out,
                    "{}\t{}\t{}\trmse={}{}",
                    e.epoch_id,
                    e.captured_at,
                    e.cloud_path.display(),
                    rmse,
                    if e.flagged { "\tFLAGGED" } else { "" }
                );
            }
        }
        Command::Report(args) => {
            let report = ComparisonReport::load(&args.report)?;
            let text = report.render_text();
            match &args.output {
                Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e))?,
                None => out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))?,
            }
        }
    }
    Ok(())
}
