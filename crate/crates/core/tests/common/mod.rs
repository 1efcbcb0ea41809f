#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twinmon::registration::RigidTransform;
use twinmon::{Point3, PointCloud, Vector3};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, extent: f64) -> Vec<Point3> {
    (0..n)
        .map(|_| {
            Point3::new(
                rng.random_range(-extent..extent),
                rng.random_range(-extent..extent),
                rng.random_range(-extent..extent),
            )
        })
        .collect()
}

pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize, extent: f64) -> PointCloud {
    PointCloud::from_points(random_points(rng, n, extent)).unwrap()
}

pub fn random_unit(rng: &mut ChaCha8Rng) -> Vector3 {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn random_transform(rng: &mut ChaCha8Rng, max_angle: f64, max_shift: f64) -> RigidTransform {
    let axis = random_unit(rng);
    let angle = rng.random_range(-max_angle..=max_angle);
    let t = Vector3::new(
        rng.random_range(-max_shift..=max_shift),
        rng.random_range(-max_shift..=max_shift),
        rng.random_range(-max_shift..=max_shift),
    );
    RigidTransform::from_axis_angle(axis, angle, t).unwrap()
}

/// Exhaustive nearest neighbor: smallest squared distance, ties to the
/// smallest index.
pub fn brute_nearest(points: &[Point3], q: &Point3) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, p) in points.iter().enumerate() {
        let (dx, dy, dz) = (q.x - p.x, q.y - p.y, q.z - p.z);
        let d2 = dx * dx + dy * dy + dz * dz;
        if d2 < best.1 {
            best = (i, d2);
        }
    }
    best
}

/// Exhaustive per-point distances from each of `b` to its nearest in `a`.
pub fn brute_distances(a: &[Point3], b: &[Point3]) -> Vec<f64> {
    b.iter()
        .map(|q| a.iter().map(|p| (q - p).norm()).fold(f64::INFINITY, f64::min))
        .collect()
}

pub fn rel_close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()) || a == b
}

pub fn sorted_bits(cloud: &PointCloud) -> Vec<[u64; 3]> {
    let mut v: Vec<[u64; 3]> = cloud
        .points()
        .iter()
        .map(|p| [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()])
        .collect();
    v.sort_unstable();
    v
}

/// Two independent noisy samples of the same wall. The floating one carries
/// a recolored strip on the left half and a strip pushed into the wall by
/// `depth` on the right half.
pub struct CrackScene {
    pub reference: PointCloud,
    pub floating: PointCloud,
    pub recolored: Vec<bool>,
    pub shifted: Vec<bool>,
    pub sigma: f64,
    pub depth: f64,
    pub width: f64,
    pub height: f64,
}

pub fn crack_scene(width: f64, height: f64, density: f64, sigma: f64, seed: u64) -> CrackScene {
    use twinmon::sim::{simulate_crack_like_edge, simulate_true_crack, ShiftDirection};
    use twinmon::synth::{vertical_strip, Rect, WallSpec};

    let spec = WallSpec {
        width,
        height,
        density,
        sigma,
        void: Some(Rect {
            x0: -0.1 * width,
            y0: 0.05 * height,
            x1: 0.1 * width,
            y1: 0.4 * height,
        }),
        ..WallSpec::default()
    };
    let depth = 10.0 * sigma;
    let reference = spec.generate(seed).unwrap().with_label("reference");
    let base = spec.generate(seed + 1).unwrap().with_label("floating");
    let strip = |x: f64| vertical_strip(x, 0.0, 0.05 * width, 0.8 * height, 20.0 * sigma).unwrap();
    let (paint_strip, shift_strip) = (strip(-0.25 * width), strip(0.25 * width));
    let recolored = paint_strip.selection(&base).unwrap();
    let shifted = shift_strip.selection(&base).unwrap();
    let painted = simulate_crack_like_edge(&base, &paint_strip, twinmon::Rgb::BLACK).unwrap();
    let floating =
        simulate_true_crack(&painted, &shift_strip, depth, Some(Vector3::z()), ShiftDirection::Into).unwrap();
    CrackScene {
        reference,
        floating,
        recolored,
        shifted,
        sigma,
        depth,
        width,
        height,
    }
}

pub fn fraction(flags: &[bool], mask: &[bool]) -> f64 {
    let total = mask.iter().filter(|&&m| m).count();
    let hit = flags.iter().zip(mask).filter(|(&f, &m)| f && m).count();
    hit as f64 / total as f64
}

pub fn median(values: impl Iterator<Item = f64>) -> f64 {
    twinmon::distances::median(&values.collect::<Vec<_>>()).unwrap()
}
