mod common;

use common::{brute_nearest, random_points, rng};
use rand::Rng;
use twinmon::kdtree::KdIndex;
use twinmon::Point3;

#[test]
fn matches_linear_scan_on_random_clouds() {
    let mut r = rng(11);
    let mut trials = 0;
    for round in 0..60 {
        let n = r.random_range(1..=2000);
        let mut pts = random_points(&mut r, n, 10.0);
        // Exact duplicates and a coarse lattice exercise tie handling.
        if round % 3 == 0 {
            for p in pts.iter_mut() {
                *p = Point3::new(p.x.round(), p.y.round(), (p.z / 4.0).round());
            }
        }
        let capacity = [1, 2, 16, 64][round % 4];
        let index = KdIndex::build_points(&pts, capacity).unwrap();
        for _ in 0..2000 {
            let q = if r.random_bool(0.1) {
                pts[r.random_range(0..n)]
            } else if round % 3 == 0 {
                Point3::new(
                    r.random_range(-12..=12) as f64 * 0.5,
                    r.random_range(-12..=12) as f64 * 0.5,
                    r.random_range(-4..=4) as f64 * 0.5,
                )
            } else {
                Point3::new(
                    r.random_range(-15.0..15.0),
                    r.random_range(-15.0..15.0),
                    r.random_range(-15.0..15.0),
                )
            };
            let (i, d2) = index.nearest_squared(&q);
            let (bi, bd2) = brute_nearest(&pts, &q);
            assert_eq!((i, d2.to_bits()), (bi, bd2.to_bits()), "query {q:?}");
            assert_eq!(index.nearest(&q).distance.to_bits(), bd2.sqrt().to_bits());
            trials += 1;
        }
    }
    assert!(trials >= 100_000);
}

#[test]
fn two_thousand_points_five_hundred_queries() {
    let mut r = rng(2000);
    let pts = random_points(&mut r, 2000, 1.0);
    let queries = random_points(&mut r, 500, 1.5);
    let index = KdIndex::build_points(&pts, 16).unwrap();
    let answers = index.nearest_many(&queries);
    for (q, a) in queries.iter().zip(&answers) {
        let (bi, bd2) = brute_nearest(&pts, q);
        assert_eq!(a.index, bi);
        assert_eq!(a.distance.to_bits(), bd2.sqrt().to_bits());
    }
}

#[test]
fn nearest_never_farther_than_any_point() {
    let mut r = rng(5);
    let pts = random_points(&mut r, 3000, 3.0);
    let index = KdIndex::build_points(&pts, 8).unwrap();
    for _ in 0..5000 {
        let q = Point3::new(
            r.random_range(-4.0..4.0),
            r.random_range(-4.0..4.0),
            r.random_range(-4.0..4.0),
        );
        let best = index.nearest(&q).distance;
        for _ in 0..5 {
            let p = pts[r.random_range(0..pts.len())];
            assert!(best <= (q - p).norm());
        }
    }
}

#[test]
fn rebuilds_answer_identically() {
    let mut r = rng(8);
    let pts = random_points(&mut r, 5000, 2.0);
    let queries = random_points(&mut r, 2000, 2.5);
    let a = KdIndex::build_points(&pts, 16).unwrap().nearest_many(&queries);
    let b = KdIndex::build_points(&pts, 16).unwrap().nearest_many(&queries);
    assert_eq!(a, b);
}
