//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use common::{brute_distances, crack_scene, fraction, median, random_transform, random_unit, rng};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use twinmon::distances::{c2c_distances, c2c_distances_indexed, directed_hausdorff, hausdorff};
use twinmon::io::{save_cloud, CloudFormat};
use twinmon::kdtree::KdIndex;
use twinmon::pipeline::{compare_epochs, register_epoch, CompareOptions, EpochRecord, RegistrationOptions};
use twinmon::registration::{
    apply_transform, icp_refine, rough_align, CorrespondenceSet, IcpParams, RigidTransform, TransformRecord,
};
use twinmon::segmentation::RegionSpec;
use twinmon::sim::simulate_crack_like_edge;
use twinmon::synth::{vertical_strip, Rect, WallSpec};
use twinmon::{Point3, PointCloud, Rgb, Vector3};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn wall_corners(spec: &WallSpec) -> Vec<Point3> {
    let (hw, hh) = (spec.width / 2.0, spec.height / 2.0);
    vec![
        Point3::new(-hw, -hh, 0.0),
        Point3::new(hw, -hh, 0.0),
        Point3::new(hw, hh, 0.0),
        Point3::new(-hw, hh, 0.0),
    ]
}

fn window() -> Rect {
    Rect {
        x0: -2.5,
        y0: -0.5,
        x1: -1.0,
        y1: 1.0,
    }
}

fn transform_recovery() -> Outcome {
    let start = Instant::now();
    let mut spec = WallSpec {
        void: Some(window()),
        ..WallSpec::default()
    };
    spec.density = 100_000.0 / (spec.width * spec.height - window().area());
    let reference = spec.generate(101).unwrap();
    let diag = reference.bounding_box().unwrap().diagonal();
    let sigma = 0.001 * diag;

    let mut r = rng(102);
    let truth =
        RigidTransform::from_axis_angle(random_unit(&mut r), 5f64.to_radians(), random_unit(&mut r) * 0.1 * diag)
            .unwrap();
    let noise = Normal::new(0.0, sigma).unwrap();
    let noisy: Vec<Point3> = apply_transform(&reference, &truth)
        .points()
        .iter()
        .map(|p| p + Vector3::new(noise.sample(&mut r), noise.sample(&mut r), noise.sample(&mut r)))
        .collect();
    let floating = PointCloud::from_points(noisy).unwrap();

    let refs = wall_corners(&spec);
    let flts: Vec<Point3> = refs.iter().map(|p| truth.apply(p)).collect();
    let rough = rough_align(&CorrespondenceSet::from_points(&refs, &flts).unwrap()).unwrap();
    let icp = icp_refine(&reference, &floating, &rough.transform, &IcpParams::default()).unwrap();
    let elapsed = start.elapsed().as_secs_f64();

    let expected = truth.inverse();
    let rot_err = icp.transform.rotation_angle_to(&expected).to_degrees();
    let trans_err = icp.transform.translation_distance_to(&expected);
    check(
        rot_err < 0.1 && trans_err < 3.0 * sigma && elapsed < 30.0,
        format!(
            "{} pts, rotation error {rot_err:.2e} deg (< 0.1), translation error {trans_err:.2e} (< 3 sigma = {:.2e}), {} ICP iterations, {elapsed:.2} s (< 30)",
            reference.len(),
            3.0 * sigma,
            icp.iterations
        ),
    )
}

fn oracle_equivalence() -> Outcome {
    let mut r = rng(201);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for pair in 0..200 {
        let n = r.random_range(1..=500);
        let m = r.random_range(1..=500);
        let extent = [0.01, 1.0, 100.0][pair % 3];
        let mut a = common::random_points(&mut r, n, extent);
        let mut b = common::random_points(&mut r, m, extent);
        if pair % 5 == 0 {
            // Shared and duplicated points.
            let k = n.min(m) / 2;
            b[..k].copy_from_slice(&a[..k]);
            a.extend_from_within(..n / 3);
        }
        let (ca, cb) = (
            PointCloud::from_points(a.clone()).unwrap(),
            PointCloud::from_points(b.clone()).unwrap(),
        );

        let rel = |x: f64, y: f64| {
            if x == y {
                0.0
            } else {
                (x - y).abs() / x.abs().max(y.abs())
            }
        };
        let ba = c2c_distances(&ca, &cb).unwrap();
        let ab = c2c_distances(&cb, &ca).unwrap();
        let oracle_ba = brute_distances(&a, &b);
        let oracle_ab = brute_distances(&b, &a);
        for (x, y) in ba
            .distances
            .iter()
            .zip(&oracle_ba)
            .chain(ab.distances.iter().zip(&oracle_ab))
        {
            worst = worst.max(rel(*x, *y));
        }
        let h_ab = oracle_ab.iter().copied().fold(0.0, f64::max);
        let h_ba = oracle_ba.iter().copied().fold(0.0, f64::max);
        let s = hausdorff(&ca, &cb).unwrap();
        worst = worst
            .max(rel(s.directed_h_ab, h_ab))
            .max(rel(s.directed_h_ba, h_ba))
            .max(rel(s.hausdorff, h_ab.max(h_ba)));
        worst = worst.max(rel(directed_hausdorff(&ba).unwrap(), h_ba));
        if s.hausdorff != hausdorff(&cb, &ca).unwrap().hausdorff {
            failures += 1;
        }
    }
    check(
        worst <= 1e-12 && failures == 0,
        format!("200 pairs, worst relative deviation {worst:.1e} (<= 1e-12), asymmetric H in {failures} pairs"),
    )
}

fn discrimination() -> Outcome {
    let (width, height, sigma) = (10.0, 5.0, 0.005);
    // The scene cuts a window of 0.2 w x 0.35 h.
    let density = 500_000.0 / (width * height * (1.0 - 0.2 * 0.35));
    let scene = crack_scene(width, height, density, sigma, 301);
    let threshold = scene.depth / 2.0;
    let field = c2c_distances(&scene.reference, &scene.floating).unwrap();
    let flags: Vec<bool> = field.distances.iter().map(|&d| d > threshold).collect();
    let shifted = fraction(&flags, &scene.shifted);
    let recolored = fraction(&flags, &scene.recolored);
    let background: Vec<bool> = scene
        .recolored
        .iter()
        .zip(&scene.shifted)
        .map(|(a, b)| !a && !b)
        .collect();
    let pick = |mask: &[bool]| {
        field
            .distances
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(d, _)| *d)
            .collect::<Vec<_>>()
    };
    let median_gap = (median(pick(&scene.recolored).into_iter()) - median(pick(&background).into_iter())).abs();
    check(
        shifted >= 0.95 && recolored < 0.01,
        format!(
            "{} pts, sigma {sigma}, depth {}, shifted strip flagged {:.2}% (>= 95%), recolored strip flagged {:.3}% (< 1%), recolored vs background median gap {median_gap:.1e}",
            scene.floating.len(),
            scene.depth,
            100.0 * shifted,
            100.0 * recolored
        ),
    )
}

fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

fn scale() -> Outcome {
    // Reset the peak-RSS counter so the reading covers this criterion only.
    let reset = std::fs::write("/proc/self/clear_refs", "5").is_ok();
    let spec = WallSpec {
        width: 20.0,
        height: 12.0,
        density: 10_000.0,
        sigma: 0.002,
        ..WallSpec::default()
    };
    let reference = spec.generate(401).unwrap();
    let queries = WallSpec {
        density: 1_000_000.0 / 240.0,
        ..spec.clone()
    }
    .generate(402)
    .unwrap();

    let start = Instant::now();
    let index = KdIndex::build(&reference).unwrap();
    let built = start.elapsed().as_secs_f64();
    let field = c2c_distances_indexed(&index, "reference", &queries);
    let elapsed = start.elapsed().as_secs_f64();
    let peak = peak_rss_bytes();
    let peak_gb = peak.map(|b| b as f64 / (1u64 << 30) as f64);
    let threads = rayon::current_num_threads();
    check(
        reference.len() >= 2_400_000 && field.len() >= 1_000_000 && elapsed < 60.0 && peak_gb.is_some_and(|g| g < 4.0),
        format!(
            "{} indexed, {} queries, build {built:.2} s, total {elapsed:.2} s (< 60) on {threads} thread(s), peak RSS {} (< 4 GB{})",
            reference.len(),
            field.len(),
            peak_gb.map_or("unavailable".into(), |g| format!("{g:.2} GB")),
            if reset { "" } else { ", process-wide" }
        ),
    )
}

fn self_comparison() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let registry = dir.path().join("registry.json");
    let spec = WallSpec {
        width: 6.0,
        height: 3.0,
        density: 3000.0,
        sigma: 0.002,
        void: Some(window()),
        ..WallSpec::default()
    };
    let mut r = rng(502);
    let options = RegistrationOptions::default();
    let mut ids = Vec::new();
    for k in 0..3 {
        let id = format!("epoch-{}", k + 1);
        let truth = if k == 0 {
            RigidTransform::identity()
        } else {
            random_transform(&mut r, 0.2, 1.0)
        };
        let path = dir.path().join(format!("{id}.ply"));
        save_cloud(
            &apply_transform(&spec.generate(501 + k).unwrap(), &truth),
            &path,
            CloudFormat::PlyBinaryLe,
        )
        .unwrap();
        let mut record = EpochRecord::new(&id, format!("202{k}-03-01T10:00:00Z"), &path, CloudFormat::PlyBinaryLe);
        let pairs = match k {
            0 => None,
            1 => {
                let refs = wall_corners(&spec);
                let flts: Vec<Point3> = refs.iter().map(|p| truth.apply(p)).collect();
                Some(CorrespondenceSet::from_points(&refs, &flts).unwrap())
            }
            _ => {
                record.transform = Some(TransformRecord::from(&truth.inverse()));
                None
            }
        };
        register_epoch(&registry, record, pairs.as_ref(), &options).unwrap();
        ids.push(id);
    }
    let roi = RegionSpec {
        center: [0.0, 0.0, 0.0],
        half_extents: [4.0, 2.0, 1.0],
        quaternion: [1.0, 0.0, 0.0, 0.0],
        role: Default::default(),
    };
    let mut lines = Vec::new();
    let mut ok = true;
    for id in &ids {
        let cmp = compare_epochs(
            &registry,
            id,
            id,
            &roi,
            &[],
            0.0,
            &dir.path().join(id),
            &CompareOptions::default(),
        )
        .unwrap();
        let zero = cmp.field.distances.iter().all(|&d| d == 0.0);
        ok &= zero && cmp.report.changed_fraction == 0.0;
        lines.push(format!(
            "{id}: {} pts, all zero {zero}, changed_fraction {}",
            cmp.field.len(),
            cmp.report.changed_fraction
        ));
    }
    check(ok, lines.join("; "))
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_twinmon"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "`twinmon {}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn pipeline_run(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let write = |name: &str, text: &str| std::fs::write(dir.join(name), text).map_err(|e| e.to_string());
    write(
        "pairs.txt",
        "-3 -1.5 0 -3 -1.5 0 C1\n3 -1.5 0 3 -1.5 0 C2\n3 1.5 0 3 1.5 0 C3\n-3 1.5 0 -3 1.5 0 C4\n",
    )?;
    write(
        "recolor.json",
        r#"{"element":{"center":[-1.5,0,0],"half_extents":[0.1,1.0,0.05]},"mode":"recolor"}"#,
    )?;
    write(
        "shift.json",
        r#"{"element":{"center":[1.5,0,0],"half_extents":[0.1,1.0,0.05]},"mode":"shift","depth":0.02}"#,
    )?;
    write(
        "roi.json",
        r#"[{"center":[0,0,0],"half_extents":[3.5,2,1]},{"center":[0,1.2,0],"half_extents":[0.5,0.2,1],"role":"exclude"}]"#,
    )?;
    let synth = [
        "synth",
        "--width",
        "6",
        "--height",
        "3",
        "--density",
        "4000",
        "--sigma",
        "0.002",
        "--void=-0.5,-0.5,0.5,0.5",
        "-o",
    ];
    run_cli(dir, &[&["--seed", "42"], &synth[..], &["e1.ply"]].concat())?;
    run_cli(dir, &[&["--seed", "43"], &synth[..], &["raw2.ply"]].concat())?;
    run_cli(
        dir,
        &["simulate", "raw2.ply", "--spec", "recolor.json", "-o", "painted.ply"],
    )?;
    run_cli(
        dir,
        &["simulate", "painted.ply", "--spec", "shift.json", "-o", "e2.ply"],
    )?;
    run_cli(
        dir,
        &[
            "epoch",
            "add",
            "--registry",
            "registry.json",
            "--id",
            "e1",
            "--cloud",
            "e1.ply",
            "--captured-at",
            "2023-01-01T00:00:00Z",
        ],
    )?;
    run_cli(
        dir,
        &[
            "epoch",
            "add",
            "--registry",
            "registry.json",
            "--id",
            "e2",
            "--cloud",
            "e2.ply",
            "--captured-at",
            "2024-01-01T00:00:00Z",
            "--correspondences",
            "pairs.txt",
        ],
    )?;
    run_cli(
        dir,
        &[
            "epoch",
            "compare",
            "--registry",
            "registry.json",
            "--ref",
            "e1",
            "--float",
            "e2",
            "--roi",
            "roi.json",
            "--threshold",
            "0.01",
            "--out",
            "report",
        ],
    )?;
    [
        "e1_vs_e2_distances.csv",
        "e1_vs_e2_report.json",
        "e1_vs_e2_distances.ply",
        "e1_vs_e2_report.txt",
    ]
    .iter()
    .map(|name| {
        std::fs::read(dir.join("report").join(name))
            .map(|b| (name.to_string(), b))
            .map_err(|e| e.to_string())
    })
    .collect()
}

fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = pipeline_run(a.path())?;
    let second = pipeline_run(b.path())?;
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.as_str())
        .collect();
    let sizes: Vec<String> = first
        .iter()
        .map(|(n, bytes)| format!("{n} {} B", bytes.len()))
        .collect();
    check(
        differing.is_empty(),
        format!(
            "two runs in separate directories; {}; differing: {differing:?}",
            sizes.join(", ")
        ),
    )
}

fn icp_monotonicity() -> Outcome {
    let mut r = rng(701);
    let mut violations = 0;
    let mut steps = 0;
    for k in 0..50 {
        let n = r.random_range(200..3000);
        let reference = if k % 2 == 0 {
            common::random_cloud(&mut r, n, 1.0)
        } else {
            WallSpec {
                width: 3.0,
                height: 2.0,
                density: n as f64 / 6.0,
                sigma: 0.01,
                void: Some(Rect {
                    x0: -1.0,
                    y0: -0.5,
                    x1: 0.0,
                    y1: 0.5,
                }),
                ..WallSpec::default()
            }
            .generate(k)
            .unwrap()
        };
        let truth = random_transform(&mut r, 0.3, 0.3);
        let noise = Normal::new(0.0, r.random_range(0.0..0.02)).unwrap();
        let m = r.random_range(100..=reference.len());
        let floating: Vec<Point3> = reference.points()[..m]
            .iter()
            .map(|p| truth.apply(p) + Vector3::new(noise.sample(&mut r), noise.sample(&mut r), noise.sample(&mut r)))
            .collect();
        let params = IcpParams {
            max_iterations: 60,
            rmse_delta_tol: if k % 3 == 0 { 0.0 } else { 1e-6 },
            trim_fraction: 1.0,
        };
        let res = icp_refine(
            &reference,
            &PointCloud::from_points(floating).unwrap(),
            &RigidTransform::identity(),
            &params,
        )
        .unwrap();
        steps += res.rmse_history.len();
        violations += res.rmse_history.windows(2).filter(|w| w[1] > w[0]).count();
    }
    check(
        violations == 0,
        format!("50 instances, {steps} ICP iterations, {violations} increases"),
    )
}

fn recolor_null_result() -> Outcome {
    let spec = WallSpec {
        sigma: 0.003,
        void: Some(window()),
        ..WallSpec::default()
    };
    let original = spec.generate(801).unwrap();
    let strip = vertical_strip(1.0, 0.0, 0.3, 3.0, 0.05).unwrap();
    let painted = simulate_crack_like_edge(&original, &strip, Rgb::BLACK).unwrap();
    let colorless = PointCloud::from_points(original.points().to_vec()).unwrap();
    let painted_colorless = simulate_crack_like_edge(&colorless, &strip, Rgb::BLACK).unwrap();
    let h = hausdorff(&original, &painted).unwrap().hausdorff;
    let h2 = hausdorff(&colorless, &painted_colorless).unwrap().hausdorff;
    let repainted = painted.colors().unwrap().iter().filter(|&&c| c == Rgb::BLACK).count();
    check(
        h == 0.0 && h2 == 0.0,
        format!(
            "{} pts, {repainted} repainted, H = {h}, H (colorless input) = {h2}",
            original.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("transform recovery", transform_recovery),
        ("distance oracle equivalence", oracle_equivalence),
        ("recolor vs shift discrimination", discrimination),
        ("scale: 2.4M index + 1M queries", scale),
        ("self-comparison", self_comparison),
        ("pipeline determinism", determinism),
        ("ICP monotonicity", icp_monotonicity),
        ("crack-like edge null result", recolor_null_result),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("acceptance {} {name}: PASS ({secs:.1} s) {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("acceptance {} {name}: FAIL ({secs:.1} s) {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
