mod common;

use common::{crack_scene, fraction, median, rng};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use twinmon::distances::{c2c_distances, hausdorff};
use twinmon::sim::{fit_plane, simulate_crack_like_edge, simulate_true_crack, ShiftDirection};
use twinmon::synth::{vertical_strip, WallSpec};
use twinmon::{Point3, PointCloud, Rgb, Vector3};

fn dense_wall() -> PointCloud {
    WallSpec {
        width: 2.0,
        height: 1.0,
        density: 40_000.0,
        ..WallSpec::default()
    }
    .generate(3)
    .unwrap()
}

#[test]
fn recolor_leaves_geometry_untouched() {
    let wall = dense_wall();
    let strip = vertical_strip(0.2, 0.0, 0.05, 0.8, 0.01).unwrap();
    let out = simulate_crack_like_edge(&wall, &strip, Rgb::BLACK).unwrap();
    assert_eq!(out.points(), wall.points());
    assert_eq!(hausdorff(&wall, &out).unwrap().hausdorff, 0.0);
    assert!(c2c_distances(&wall, &out).unwrap().distances.iter().all(|&d| d == 0.0));
    let mask = strip.selection(&wall).unwrap();
    for ((c, before), m) in out.colors().unwrap().iter().zip(wall.colors().unwrap()).zip(&mask) {
        assert_eq!(*c, if *m { Rgb::BLACK } else { *before });
    }
}

#[test]
fn true_crack_displaces_strip_by_depth() {
    let wall = dense_wall();
    let depth = 0.01;
    let strip = vertical_strip(-0.3, 0.1, 0.06, 0.6, 0.02).unwrap();
    let mask = strip.selection(&wall).unwrap();
    let out = simulate_true_crack(&wall, &strip, depth, Some(Vector3::z()), ShiftDirection::Into).unwrap();
    assert_eq!(out.colors(), wall.colors());
    for ((a, b), m) in out.points().iter().zip(wall.points()).zip(&mask) {
        if *m {
            assert_eq!(a.z, -depth);
            assert_eq!((a.x, a.y), (b.x, b.y));
        } else {
            assert_eq!(a.coords.map(f64::to_bits), b.coords.map(f64::to_bits));
        }
    }

    let field = c2c_distances(&wall, &out).unwrap();
    let strip_d: Vec<f64> = field
        .distances
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| m)
        .map(|(d, _)| *d)
        .collect();
    assert!(strip_d.iter().all(|&d| d <= depth));
    assert_eq!(strip_d.iter().copied().fold(0.0, f64::max), depth);

    let h = hausdorff(&wall, &out).unwrap().hausdorff;
    assert!(h > 0.0 && h <= depth);
    assert!((h - depth).abs() <= 0.02 * depth);
}

#[test]
fn estimated_normal_matches_wall_plane() {
    let wall = WallSpec {
        width: 2.0,
        height: 1.0,
        density: 20_000.0,
        sigma: 0.001,
        ..WallSpec::default()
    }
    .generate(4)
    .unwrap();
    let strip = vertical_strip(0.0, 0.0, 0.05, 0.8, 0.02).unwrap();
    let given = simulate_true_crack(&wall, &strip, 0.02, Some(Vector3::z()), ShiftDirection::Into).unwrap();
    let fitted = simulate_true_crack(&wall, &strip, 0.02, None, ShiftDirection::Into).unwrap();
    for (a, b) in given.points().iter().zip(fitted.points()) {
        assert!((a - b).norm() < 0.02 * 0.05);
    }
}

#[test]
fn tiny_depth_approaches_identity() {
    let wall = dense_wall();
    let strip = vertical_strip(0.0, 0.0, 0.05, 0.8, 0.02).unwrap();
    for depth in [1e-3, 1e-6, 1e-9] {
        let out = simulate_true_crack(&wall, &strip, depth, Some(Vector3::z()), ShiftDirection::Into).unwrap();
        let worst = out
            .points()
            .iter()
            .zip(wall.points())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(worst <= depth);
        assert!(hausdorff(&wall, &out).unwrap().hausdorff <= depth);
    }
}

#[test]
fn plane_fit_residual_tracks_noise() {
    for seed in 0..10 {
        let sigma = 0.002;
        let wall = WallSpec {
            width: 2.0,
            height: 2.0,
            density: 2000.0,
            sigma,
            ..WallSpec::default()
        }
        .generate(seed)
        .unwrap();
        let fit = fit_plane(&wall).unwrap();
        assert!((fit.rms_residual - sigma).abs() < 0.2 * sigma, "{}", fit.rms_residual);
        assert!(fit.unit_normal.z > 0.999);
    }
}

#[test]
fn plane_fit_on_tilted_plane() {
    let mut r = rng(5);
    let pts: Vec<Point3> = (0..200)
        .map(|_| {
            let (x, y) = (r.random_range(-3.0..3.0), r.random_range(-3.0..3.0));
            Point3::new(x, y, 1.0 - x - y)
        })
        .collect();
    let fit = fit_plane(&PointCloud::from_points(pts).unwrap()).unwrap();
    let expected = Vector3::new(1.0, 1.0, 1.0).normalize();
    assert!((fit.unit_normal - expected).norm() < 1e-9);
    assert!(fit.rms_residual < 1e-9);
}

#[test]
fn recolored_strip_is_not_detected_but_shifted_strip_is() {
    let scene = crack_scene(4.0, 2.0, 10_000.0, 0.005, 40);
    let field = c2c_distances(&scene.reference, &scene.floating).unwrap();
    let threshold = scene.depth / 2.0;
    let flags: Vec<bool> = field.distances.iter().map(|&d| d > threshold).collect();
    assert!(fraction(&flags, &scene.shifted) >= 0.95);
    assert!(fraction(&flags, &scene.recolored) < 0.01);

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
            .zip(mask.to_vec())
            .filter(|(_, m)| *m)
            .map(|(d, _)| *d)
            .collect::<Vec<_>>()
    };
    let recolored_median = median(pick(&scene.recolored).into_iter());
    let background_median = median(pick(&background).into_iter());
    assert!((recolored_median - background_median).abs() < scene.sigma);
}

#[test]
fn noise_samples_are_reproducible() {
    let n = Normal::new(0.0, 1.0).unwrap();
    let a: Vec<f64> = (0..5).map(|_| n.sample(&mut rng(1))).collect();
    assert!(a.windows(2).all(|w| w[0] == w[1]));
}
