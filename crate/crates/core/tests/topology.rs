mod common;

use proptest::prelude::*;
use rand::Rng;

use floorscan::config::PipelineConfig;
use floorscan::contour::{PolylineContour, RoomContour};
use floorscan::density::ProjectionFrame;
use floorscan::pipeline::{ceiling_stage, cloud_2d, frame_for};
use floorscan::synth::{generate_synthetic, SceneSpec};
use floorscan::topology::{adjacent_room_pairs, build_floorplan, detect_door, find_adjacent_segments, TopologyParams};
use floorscan::Point2;

fn room(id: &str, poly: Vec<Point2>) -> RoomContour {
    RoomContour {
        id: id.into(),
        contour: PolylineContour::new(poly),
        theta_main: 0.0,
        regularized: true,
        snapped: 0,
    }
}

fn spec_rooms(spec: &SceneSpec) -> Vec<RoomContour> {
    spec.rooms.iter().map(|r| room(&r.id, r.polygon())).collect()
}

fn wall_frame() -> ProjectionFrame {
    ProjectionFrame {
        x_min: -0.5,
        y_min: -0.5,
        pixel_size: 0.05,
        width: 220,
        height: 120,
    }
}

/// Points filling the wall band `x ∈ [5.0, 5.2]` along `y ∈ [0, 4.5]`,
/// leaving out `gap`.
fn wall_band(r: &mut impl Rng, gap: (f64, f64), n: usize) -> Vec<Point2> {
    (0..n)
        .map(|_| Point2::new(r.random_range(5.0..5.2), r.random_range(0.0..4.5)))
        .filter(|p| p.y < gap.0 || p.y > gap.1)
        .collect()
}

#[test]
fn three_room_adjacency_matches_layout() {
    let spec = SceneSpec::three_rooms();
    let scene = generate_synthetic(&spec, 0).unwrap();
    let rooms = spec_rooms(&spec);
    let pairs = find_adjacent_segments(&rooms, &TopologyParams::default());
    assert_eq!(adjacent_room_pairs(&rooms, &pairs), scene.adjacency);
    assert_eq!(scene.adjacency.len(), 2);
}

#[test]
fn distant_rooms_are_not_adjacent() {
    let rooms = vec![
        room("A", SceneSpec::single_room(4.0, 4.0).rooms[0].polygon()),
        room(
            "B",
            vec![Point2::new(9.0, 0.0), Point2::new(13.0, 0.0), Point2::new(13.0, 4.0), Point2::new(9.0, 4.0)],
        ),
    ];
    assert!(find_adjacent_segments(&rooms, &TopologyParams::default()).is_empty());
}

#[test]
fn door_gap_is_found_within_two_bins() {
    let spec = SceneSpec::two_rooms();
    let rooms = spec_rooms(&spec);
    let f = wall_frame();
    let bin = 2.0 * f.pixel_size;
    let params = TopologyParams::default();
    let pairs = find_adjacent_segments(&rooms, &params);
    assert_eq!(pairs.len(), 1);
    let mut r = common::rng(4);
    let pts = wall_band(&mut r, (1.5, 2.4), 6000);
    let door = detect_door(&pairs[0], &rooms, &pts, &f, &params).unwrap();
    let (lo, hi) = (door.p0.y.min(door.p1.y), door.p0.y.max(door.p1.y));
    assert!((lo - 1.5).abs() <= 2.0 * bin && (hi - 2.4).abs() <= 2.0 * bin, "{lo} {hi}");
    assert!((door.p0.x - 5.1).abs() < 1e-9 && (door.p1.x - 5.1).abs() < 1e-9);

    // Solid wall, or a gap too narrow to walk through: no door.
    let solid = wall_band(&mut r, (-1.0, -1.0), 6000);
    assert!(detect_door(&pairs[0], &rooms, &solid, &f, &params).is_none());
    let slit = wall_band(&mut r, (2.0, 2.3), 6000);
    assert!(detect_door(&pairs[0], &rooms, &slit, &f, &params).is_none());
}

#[test]
fn four_room_scene_has_three_doors() {
    let cfg = PipelineConfig::default();
    let spec = SceneSpec::four_rooms();
    let scene = generate_synthetic(&spec, 2).unwrap();
    let ceiling = ceiling_stage(&scene.cloud, &cfg).unwrap();
    let (_, f) = frame_for(&ceiling.filtered, &cfg).unwrap();
    let rooms = spec_rooms(&spec);
    let (plan, pairs) = build_floorplan(f, &rooms, &cloud_2d(&ceiling.filtered), &cfg.topology).unwrap();
    assert_eq!(adjacent_room_pairs(&rooms, &pairs), scene.adjacency);
    assert_eq!(plan.doors.len(), 3);
    assert!(common::doors_recovered(&scene.doors, &plan.doors, 2.0 * 2.0 * f.pixel_size));
    assert!(plan.doors.iter().all(|d| d.rooms != ["C".to_string(), "D".to_string()]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn door_lies_within_overlap(start in 0.2f64..3.2, width in 0.7f64..1.3, seed in 0u64..1000) {
        let spec = SceneSpec::two_rooms();
        let rooms = spec_rooms(&spec);
        let f = wall_frame();
        let params = TopologyParams::default();
        let pairs = find_adjacent_segments(&rooms, &params);
        let mut r = common::rng(seed);
        let pts = wall_band(&mut r, (start, start + width), 6000);
        let pair = &pairs[0];
        let door = detect_door(pair, &rooms, &pts, &f, &params);
        prop_assert!(door.is_some());
        let door = door.unwrap();
        let tol = 2.0 * 2.0 * f.pixel_size;
        for p in [door.p0, door.p1] {
            let t = (p - pair.origin).dot(pair.dir);
            prop_assert!(t >= pair.overlap.0 - tol && t <= pair.overlap.1 + tol);
        }
        let (lo, hi) = (door.p0.y.min(door.p1.y), door.p0.y.max(door.p1.y));
        prop_assert!((lo - start).abs() <= tol && (hi - start - width).abs() <= tol);
    }
}
