mod common;

use std::time::Instant;

use proptest::prelude::*;
use rand::Rng;

use floorscan::ceiling::{grid_ceiling_filter, ransac_plane};
use floorscan::{Point3, PointCloud};

#[test]
fn filter_matches_brute_force_on_random_clouds() {
    for seed in 0..20u64 {
        let mut r = common::rng(seed);
        let n = r.random_range(200..=5000);
        let gamma = r.random_range(0.05..0.5);
        let delta_z = r.random_range(0.0..0.3);
        let pc = common::random_cloud(&mut r, n, 4.0);
        let t = Instant::now();
        let out = grid_ceiling_filter(&pc, gamma, delta_z).unwrap();
        assert!(t.elapsed().as_secs_f64() < 1.0);
        let keep = common::ceiling_oracle(pc.points(), gamma, delta_z);
        let expect: Vec<Point3> = pc.points().iter().zip(&keep).filter(|(_, &k)| k).map(|(p, _)| *p).collect();
        assert_eq!(out.points(), &expect[..], "seed {seed}");
    }
}

#[test]
fn furnished_room_keeps_only_ceiling() {
    let mut r = common::rng(3);
    // One ceiling point per 0.1 m cell center, so no cell is left to the
    // floor; the corner point pins the grid origin at (0, 0).
    let mut pts = vec![Point3::new(0.0, 0.0, 3.0)];
    for i in 0..100 {
        for j in 0..100 {
            pts.push(Point3::new(0.05 + 0.1 * i as f64, 0.05 + 0.1 * j as f64, 3.0));
        }
    }
    for _ in 0..10_000 {
        pts.push(Point3::new(r.random_range(0.001..9.999), r.random_range(0.001..9.999), 0.0));
    }
    for _ in 0..3000 {
        pts.push(Point3::new(
            r.random_range(2.0..4.0),
            r.random_range(5.0..6.5),
            r.random_range(0.0..0.8),
        ));
    }
    let pc = PointCloud::new(pts).unwrap();
    let out = grid_ceiling_filter(&pc, 0.1, 0.1).unwrap();
    assert_eq!(out.len(), 10_001);
    assert!(out.points().iter().all(|p| p.z == 3.0));
    let keep = common::ceiling_oracle(pc.points(), 0.1, 0.1);
    assert_eq!(keep.iter().filter(|&&k| k).count(), 10_001);
}

#[test]
fn ransac_prefers_the_larger_of_two_planes() {
    let mut r = common::rng(9);
    let mut pts = Vec::new();
    for _ in 0..600 {
        pts.push(Point3::new(r.random_range(0.0..5.0), r.random_range(0.0..5.0), 0.0));
    }
    for _ in 0..400 {
        pts.push(Point3::new(r.random_range(0.0..5.0), r.random_range(0.0..5.0), 3.0));
    }
    let pc = PointCloud::new(pts).unwrap();
    let plane = ransac_plane(&pc, 0.05, 500, 4).unwrap();
    assert!((plane.inliers.len() as f64 - 600.0).abs() <= 6.0);
    assert!(plane.normal[2].abs() > 0.999_999);
    assert!(plane.d.abs() < 1e-9);
}

fn small_cloud() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0, 0.0f64..3.0), 1..300)
}

fn to_cloud(v: &[(f64, f64, f64)]) -> PointCloud {
    PointCloud::new(v.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn filter_output_is_an_exact_subsequence(v in small_cloud(), gamma in 0.05f64..1.0, dz in 0.0f64..0.5) {
        let pc = to_cloud(&v);
        let out = grid_ceiling_filter(&pc, gamma, dz).unwrap();
        let keep = common::ceiling_oracle(pc.points(), gamma, dz);
        let mut it = pc.points().iter().zip(&keep).filter(|(_, &k)| k).map(|(p, _)| p);
        for p in out.points() {
            prop_assert_eq!(Some(p), it.next());
        }
        prop_assert!(it.next().is_none());
    }

    #[test]
    fn ransac_is_reproducible_and_monotone(v in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0, 0.0f64..3.0), 10..120), seed in 0u64..1000) {
        let pc = to_cloud(&v);
        let a = ransac_plane(&pc, 0.05, 40, seed);
        let b = ransac_plane(&pc, 0.05, 40, seed);
        let c = ransac_plane(&pc, 0.05, 160, seed);
        match (a, b, c) {
            (Ok(a), Ok(b), Ok(c)) => {
                prop_assert_eq!(&a, &b);
                prop_assert!(c.inliers.len() >= a.inliers.len());
            }
            (Err(_), Err(_), Err(_)) => {}
            _ => prop_assert!(false, "inconsistent outcomes"),
        }
    }
}
