//! Brute-force oracles and random instance generators shared by the
//! integration tests and the acceptance report.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use floorscan::config::PipelineConfig;
use floorscan::contour::PolylineContour;
use floorscan::mask_filter::RoomMaskStats;
use floorscan::pipeline::{run_pipeline, RunOutput};
use floorscan::raster::Raster;
use floorscan::segmentation::MaskImage;
use floorscan::synth::{generate_synthetic, SceneSpec, SyntheticScene};
use floorscan::topology::DoorSegment;
use floorscan::{Point2, Point3, PointCloud};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Cloud of `n` points over an `extent` square with a few stacked height
/// levels, so cells hold both high and low points.
pub fn random_cloud(r: &mut ChaCha8Rng, n: usize, extent: f64) -> PointCloud {
    let pts = (0..n)
        .map(|_| {
            let z = match r.random_range(0..4) {
                0 => r.random_range(0.0..0.2),
                1 => r.random_range(0.5..1.5),
                _ => 3.0 + r.random_range(-0.15..0.15),
            };
            Point3::new(r.random_range(-extent..extent), r.random_range(0.0..extent), z)
        })
        .collect();
    PointCloud::new(pts).unwrap()
}

/// Per-point retention by scanning every other point for the cell maximum.
pub fn ceiling_oracle(pts: &[Point3], gamma: f64, delta_z: f64) -> Vec<bool> {
    let x0 = pts.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let y0 = pts.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let cell = |p: &Point3| (((p.x - x0) / gamma).floor() as i64, ((p.y - y0) / gamma).floor() as i64);
    pts.iter()
        .map(|p| {
            let c = cell(p);
            let top = pts
                .iter()
                .filter(|q| cell(q) == c)
                .map(|q| q.z)
                .fold(f64::NEG_INFINITY, f64::max);
            top - p.z <= delta_z
        })
        .collect()
}

/// Pixels equal to the maximum of their clipped `pool × pool` window and
/// at least `tau`, in raster order.
pub fn peaks_oracle(img: &Raster<u8>, pool: usize, tau: f64) -> Vec<(usize, usize)> {
    let r = (pool / 2) as i64;
    let (w, h) = img.dims();
    let mut out = Vec::new();
    for n in 0..h {
        for m in 0..w {
            let v = *img.get(m, n);
            let mut is_max = true;
            for dn in -r..=r {
                for dm in -r..=r {
                    let (a, b) = (m as i64 + dm, n as i64 + dn);
                    if img.contains(a, b) && *img.get(a as usize, b as usize) > v {
                        is_max = false;
                    }
                }
            }
            if is_max && v as f64 >= tau {
                out.push((m, n));
            }
        }
    }
    out
}

/// Random raster with plateaus and isolated spikes.
pub fn random_raster(r: &mut ChaCha8Rng, w: usize, h: usize) -> Raster<u8> {
    let mut img = Raster::filled(w, h, 0u8);
    for v in img.data_mut() {
        *v = match r.random_range(0..10) {
            0..=5 => r.random_range(0..40),
            6..=8 => r.random_range(0..256) as u8,
            _ => 200,
        };
    }
    img
}

pub fn rect_mask(w: usize, h: usize, m0: usize, n0: usize, m1: usize, n1: usize) -> Raster<bool> {
    let mut b = Raster::filled(w, h, false);
    for n in n0..n1.min(h) {
        for m in m0..m1.min(w) {
            b.set(m, n, true);
        }
    }
    b
}

/// Up to `k` masks on a `w × h` raster: random rectangles plus shifted,
/// shrunk and merged copies of earlier ones so that every IoU regime shows
/// up.
pub fn random_mask_instance(r: &mut ChaCha8Rng, k: usize, w: usize, h: usize) -> (Vec<MaskImage>, Raster<u32>) {
    let mut rects: Vec<(usize, usize, usize, usize)> = Vec::new();
    let mut masks: Vec<Raster<bool>> = Vec::new();
    for i in 0..k {
        let kind = if i == 0 { 0 } else { r.random_range(0..5) };
        let mask = match kind {
            1 | 2 => {
                let (m0, n0, m1, n1) = rects[r.random_range(0..rects.len())];
                let s = if kind == 1 { 1 } else { 0 };
                let (dm, dn) = (r.random_range(0..=s + 1), r.random_range(0..=s));
                let rc = if kind == 1 {
                    (m0 + dm, n0 + dn, m1 + dm, n1 + dn)
                } else {
                    (m0 + dm, n0 + dn, m1.saturating_sub(dm).max(m0 + dm + 1), n1.saturating_sub(dn).max(n0 + dn + 1))
                };
                rects.push(rc);
                rect_mask(w, h, rc.0, rc.1, rc.2, rc.3)
            }
            3 if masks.len() >= 2 => {
                let a = r.random_range(0..masks.len());
                let b = r.random_range(0..masks.len());
                rects.push(rects[a]);
                let mut m = masks[a].clone();
                for (x, &y) in m.data_mut().iter_mut().zip(masks[b].data()) {
                    *x |= y;
                }
                m
            }
            _ => {
                let m0 = r.random_range(0..w - 3);
                let n0 = r.random_range(0..h - 3);
                let m1 = r.random_range(m0 + 2..=w);
                let n1 = r.random_range(n0 + 2..=h);
                rects.push((m0, n0, m1, n1));
                rect_mask(w, h, m0, n0, m1, n1)
            }
        };
        masks.push(mask);
    }
    let mut counts = Raster::filled(w, h, 0u32);
    for c in counts.data_mut() {
        *c = r.random_range(0..4);
    }
    let images = masks
        .into_iter()
        .enumerate()
        .map(|(i, mask)| MaskImage { id: format!("m{i:02}"), mask })
        .collect();
    (images, counts)
}

pub fn stats_of(images: &[MaskImage], counts: &Raster<u32>, pixel_size: f64) -> Vec<RoomMaskStats> {
    images
        .iter()
        .map(|m| RoomMaskStats::compute(m.clone(), pixel_size, counts).unwrap())
        .collect()
}

pub fn pixel_iou(a: &Raster<bool>, b: &Raster<bool>) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn pixel_count(a: &Raster<bool>) -> usize {
    a.data().iter().filter(|&&b| b).count()
}

/// Preference as a sortable key: more area, more points, smaller id.
pub fn pref_key(s: &RoomMaskStats) -> (usize, u64, std::cmp::Reverse<String>) {
    (pixel_count(&s.mask.mask), s.point_count, std::cmp::Reverse(s.mask.id.clone()))
}

/// Classes of the transitive closure of `edge`, by Floyd–Warshall
/// reachability. Each class ascending; classes ordered by first member.
pub fn closure_classes(k: usize, edge: impl Fn(usize, usize) -> bool) -> Vec<Vec<usize>> {
    let mut reach = vec![vec![false; k]; k];
    for i in 0..k {
        for j in 0..k {
            reach[i][j] = i == j || edge(i.min(j), i.max(j));
        }
    }
    for via in 0..k {
        for i in 0..k {
            for j in 0..k {
                if reach[i][via] && reach[via][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    let mut seen = vec![false; k];
    let mut out = Vec::new();
    for i in 0..k {
        if seen[i] {
            continue;
        }
        let class: Vec<usize> = (0..k).filter(|&j| reach[i][j]).collect();
        for &j in &class {
            seen[j] = true;
        }
        out.push(class);
    }
    out
}

pub fn best_in(stats: &[RoomMaskStats], class: &[usize]) -> usize {
    *class.iter().max_by_key(|&&i| pref_key(&stats[i])).unwrap()
}

/// Ids surviving IoU dedup, in input order.
pub fn dedup_oracle(stats: &[RoomMaskStats], thresh: f64) -> Vec<String> {
    let k = stats.len();
    let classes = closure_classes(k, |i, j| pixel_iou(&stats[i].mask.mask, &stats[j].mask.mask) >= thresh);
    let mut keep: Vec<usize> = classes.iter().map(|c| best_in(stats, c)).collect();
    keep.sort_unstable();
    keep.into_iter().map(|i| stats[i].mask.id.clone()).collect()
}

/// Visit masks from least to most preferred and drop any mask covered to
/// at least `thresh` by another still-alive mask; then apply the area cap.
pub fn inclusion_oracle(stats: &[RoomMaskStats], thresh: f64, upper_m2: Option<f64>) -> Vec<bool> {
    let k = stats.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by_key(|&i| pref_key(&stats[i]));
    let mut alive = vec![true; k];
    for &j in &order {
        let area = pixel_count(&stats[j].mask.mask);
        let covered = |i: usize| {
            let inter = stats[i]
                .mask
                .mask
                .data()
                .iter()
                .zip(stats[j].mask.mask.data())
                .filter(|(&a, &b)| a && b)
                .count();
            inter as f64 / area as f64 >= thresh
        };
        if area == 0 || (0..k).any(|i| i != j && alive[i] && covered(i)) {
            alive[j] = false;
        }
    }
    for (i, a) in alive.iter_mut().enumerate() {
        if upper_m2.is_some_and(|u| stats[i].area_m2 > u) {
            *a = false;
        }
    }
    alive
}

/// Best coverage over every subset whose members are pairwise within
/// `iou_tol`, coverage being the summed area over the union of all masks.
pub fn best_feasible_coverage(stats: &[RoomMaskStats], iou_tol: f64) -> f64 {
    let k = stats.len();
    assert!(k <= 20);
    let mut ok = vec![vec![true; k]; k];
    for i in 0..k {
        for j in 0..k {
            if i != j {
                ok[i][j] = pixel_iou(&stats[i].mask.mask, &stats[j].mask.mask) <= iou_tol;
            }
        }
    }
    let mut union = vec![false; stats[0].mask.mask.data().len()];
    for s in stats {
        for (u, &b) in union.iter_mut().zip(s.mask.mask.data()) {
            *u |= b;
        }
    }
    let total = union.iter().filter(|&&b| b).count();
    let mut best = 0usize;
    for bits in 1u32..(1 << k) {
        let members: Vec<usize> = (0..k).filter(|&i| bits >> i & 1 == 1).collect();
        if members.iter().all(|&i| members.iter().all(|&j| ok[i][j])) {
            let sum: usize = members.iter().map(|&i| pixel_count(&stats[i].mask.mask)).sum();
            best = best.max(sum);
        }
    }
    if total == 0 {
        0.0
    } else {
        best as f64 / total as f64
    }
}

/// Boundary flag per point by comparing every neighbor azimuth against
/// every other: the empty arc after azimuth `a` ends at the nearest distinct
/// azimuth counter-clockwise from it.
pub fn boundary_oracle(pts: &[Point2], radius: f64, sector_deg: f64) -> Vec<bool> {
    let sector = sector_deg.to_radians();
    pts.iter()
        .map(|&p| {
            let az: Vec<f64> = pts
                .iter()
                .filter(|&&q| q != p && (q.x - p.x).powi(2) + (q.y - p.y).powi(2) <= radius * radius)
                .map(|q| (q.y - p.y).atan2(q.x - p.x))
                .collect();
            let mut gap: f64 = if az.is_empty() { 2.0 * PI } else { 0.0 };
            for &a in &az {
                let next = az
                    .iter()
                    .filter(|&&b| b != a)
                    .map(|&b| (b - a).rem_euclid(2.0 * PI))
                    .fold(2.0 * PI, f64::min);
                gap = gap.max(next);
            }
            gap >= sector
        })
        .collect()
}

/// Points on an annulus plus a uniform sprinkle.
pub fn random_annulus(r: &mut ChaCha8Rng, n: usize) -> Vec<Point2> {
    (0..n)
        .map(|_| {
            if r.random_bool(0.8) {
                let t = r.random_range(0.0..2.0 * PI);
                let rad = r.random_range(1.0..1.6);
                Point2::new(rad * t.cos(), rad * t.sin())
            } else {
                Point2::new(r.random_range(-2.0..2.0), r.random_range(-2.0..2.0))
            }
        })
        .collect()
}

/// A rectilinear outline (rectangle, L, U or T), counter-clockwise, with
/// its corner coordinates given in the room's own axes.
pub fn random_rectilinear(r: &mut ChaCha8Rng) -> Vec<Point2> {
    let w = r.random_range(3.0..7.0);
    let h = r.random_range(3.0..6.0);
    let p = Point2::new;
    match r.random_range(0..4) {
        0 => vec![p(0.0, 0.0), p(w, 0.0), p(w, h), p(0.0, h)],
        1 => {
            let (a, b) = (r.random_range(0.3..0.7) * w, r.random_range(0.3..0.7) * h);
            vec![p(0.0, 0.0), p(w, 0.0), p(w, b), p(a, b), p(a, h), p(0.0, h)]
        }
        2 => {
            let (a, c, b) = (0.3 * w, 0.7 * w, r.random_range(0.3..0.6) * h);
            vec![p(0.0, 0.0), p(w, 0.0), p(w, h), p(c, h), p(c, b), p(a, b), p(a, h), p(0.0, h)]
        }
        _ => {
            let (a, c, b) = (0.35 * w, 0.65 * w, r.random_range(0.4..0.7) * h);
            vec![p(a, 0.0), p(c, 0.0), p(c, b), p(w, b), p(w, h), p(0.0, h), p(0.0, b), p(a, b)]
        }
    }
}

pub fn rotate(poly: &[Point2], theta: f64, shift: Point2) -> Vec<Point2> {
    let (s, c) = theta.sin_cos();
    poly.iter()
        .map(|q| Point2::new(c * q.x - s * q.y + shift.x, s * q.x + c * q.y + shift.y))
        .collect()
}

/// Densified outline with jittered intermediate vertices, as a traced and
/// simplified mask border would look.
pub fn perturb_outline(r: &mut ChaCha8Rng, poly: &[Point2], step: f64, jitter: f64) -> PolylineContour {
    let n = poly.len();
    let mut v = Vec::new();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let k = ((a.dist(b) / step).ceil() as usize).max(1);
        for j in 0..k {
            let q = a.lerp(b, j as f64 / k as f64);
            v.push(Point2::new(
                q.x + r.random_range(-jitter..jitter),
                q.y + r.random_range(-jitter..jitter),
            ));
        }
    }
    PolylineContour::new(v)
}

/// Boundary evidence sampled along `poly`'s edges.
pub fn sample_edges(r: &mut ChaCha8Rng, poly: &[Point2], per_m: f64, noise: f64) -> Vec<Point2> {
    let n = poly.len();
    let mut out = Vec::new();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let k = (a.dist(b) * per_m).ceil() as usize;
        for _ in 0..k {
            let q = a.lerp(b, r.random_range(0.0..1.0));
            out.push(Point2::new(
                q.x + r.random_range(-noise..noise),
                q.y + r.random_range(-noise..noise),
            ));
        }
    }
    out
}

/// Largest deviation of an edge direction from the nearest of `theta` and
/// `theta + 90°`, in radians.
pub fn axis_deviation(contour: &PolylineContour, theta: f64) -> f64 {
    contour
        .edge_angles()
        .into_iter()
        .map(|a| {
            let d = (a - theta).rem_euclid(PI / 2.0);
            d.min(PI / 2.0 - d)
        })
        .fold(0.0, f64::max)
}

/// Precision and recall columns reported for twelve benchmark scenes.
pub const REFERENCE_PRECISION: [f64; 12] = [0.92, 0.92, 0.82, 0.94, 0.90, 0.90, 0.93, 0.95, 0.88, 0.84, 0.90, 0.95];
pub const REFERENCE_RECALL: [f64; 12] = [0.90, 0.94, 0.89, 0.98, 0.94, 0.96, 0.96, 0.97, 0.92, 0.92, 0.94, 0.98];
pub const REFERENCE_MEANS: (f64, f64) = (0.90, 0.94);

/// Smallest counts `(true, all, gt)` whose fractions round to the given
/// two-decimal values.
pub fn recover_counts(p: f64, r: f64) -> (usize, usize, usize) {
    let hundredths = |x: f64| (x * 100.0).round() as i64;
    let (hp, hr) = (hundredths(p), hundredths(r));
    for total in 2..400usize {
        for all in 1..total {
            let gt = total - all;
            for t in 1..=all.min(gt) {
                if hundredths(t as f64 / all as f64) == hp && hundredths(t as f64 / gt as f64) == hr {
                    return (t, all, gt);
                }
            }
        }
    }
    panic!("no counts for ({p}, {r})");
}

/// Generates `spec` with `seed`, writes the cloud under `dir` and runs the
/// pipeline with default settings at the given endpoint tolerance.
pub fn run_scene(spec: &SceneSpec, seed: u64, dir: &Path, tol: f64) -> (SyntheticScene, RunOutput) {
    let scene = generate_synthetic(spec, seed).unwrap();
    scene.write_dir(dir, None).unwrap();
    let mut cfg = PipelineConfig::default();
    cfg.seed = seed;
    cfg.eval.endpoint_tol = tol;
    let out = run_pipeline(&cfg, &dir.join("cloud.xyz"), Some(&scene.gt), &dir.join("out")).unwrap();
    (scene, out)
}

/// Distance between two doors under the better endpoint pairing.
pub fn door_distance(a: &DoorSegment, b: &DoorSegment) -> f64 {
    let straight = a.p0.dist(b.p0).max(a.p1.dist(b.p1));
    let crossed = a.p0.dist(b.p1).max(a.p1.dist(b.p0));
    straight.min(crossed)
}

/// Whether every truth door has its own predicted door within `tol`.
pub fn doors_recovered(truth: &[DoorSegment], pred: &[DoorSegment], tol: f64) -> bool {
    if truth.len() != pred.len() {
        return false;
    }
    let mut used = vec![false; pred.len()];
    truth.iter().all(|t| {
        let hit = (0..pred.len())
            .filter(|&j| !used[j])
            .map(|j| (j, door_distance(t, &pred[j])))
            .filter(|&(_, d)| d <= tol)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match hit {
            Some((j, _)) => {
                used[j] = true;
                true
            }
            None => false,
        }
    })
}

/// Checks one random mask-filter instance against the exhaustive oracles.
pub fn check_mask_instance(seed: u64) -> Result<(), String> {
    use floorscan::mask_filter::{dedup, greedy_cover, group_masks, inclusion_keep};
    let mut r = rng(seed);
    let k = r.random_range(1..=10);
    let (images, counts) = random_mask_instance(&mut r, k, 16, 14);
    let stats = stats_of(&images, &counts, 0.1);

    let got: Vec<String> = dedup(stats.clone(), 0.8).iter().map(|s| s.mask.id.clone()).collect();
    let want = dedup_oracle(&stats, 0.8);
    if got != want {
        return Err(format!("seed {seed}: dedup {got:?} vs oracle {want:?}"));
    }

    let groups = group_masks(&stats, 0.5);
    let classes = closure_classes(k, |i, j| pixel_iou(&stats[i].mask.mask, &stats[j].mask.mask) >= 0.5);
    if groups.len() != classes.len() {
        return Err(format!("seed {seed}: {} groups vs {} classes", groups.len(), classes.len()));
    }
    for (g, c) in groups.iter().zip(&classes) {
        if &g.members != c || g.representative != best_in(&stats, c) {
            return Err(format!("seed {seed}: group {g:?} vs class {c:?}"));
        }
    }

    let upper = r.random_bool(0.3).then(|| r.random_range(0.5..2.0));
    let got = inclusion_keep(&stats, 0.9, upper);
    let want = inclusion_oracle(&stats, 0.9, upper);
    if got != want {
        return Err(format!("seed {seed}: inclusion {got:?} vs oracle {want:?}"));
    }

    let cover = greedy_cover(&stats, 0.95, 0.01).map_err(|e| e.to_string())?;
    for (a, &i) in cover.selected.iter().enumerate() {
        for &j in &cover.selected[a + 1..] {
            if pixel_iou(&stats[i].mask.mask, &stats[j].mask.mask) > 0.01 {
                return Err(format!("seed {seed}: selected {i} and {j} overlap"));
            }
        }
    }
    let best = best_feasible_coverage(&stats, 0.01);
    if best >= 0.95 && (cover.coverage < 0.95 || cover.below_target) {
        return Err(format!("seed {seed}: coverage {} though {best} is attainable", cover.coverage));
    }
    if best < 0.95 && !cover.below_target {
        return Err(format!("seed {seed}: target unattainable ({best}) but flag not set"));
    }
    Ok(())
}

fn nearest(set: &[Point2], q: Point2) -> f64 {
    set.iter().map(|b| b.dist(q)).fold(f64::INFINITY, f64::min)
}

/// Regularizes and corrects one randomized room, checking that vertices
/// already within τ of evidence stay put and no edge collapses. Returns the
/// worst axis deviation before and after correction.
pub fn regularized_room(seed: u64) -> Result<(f64, f64), String> {
    use floorscan::contour::{fuse_correct, main_direction, rdp_simplify, regularize, BoundaryPointSet, CorrectionParams};
    let mut r = rng(seed);
    let theta = r.random_range(0.0..PI / 2.0);
    let shape = random_rectilinear(&mut r);
    let shift = Point2::new(r.random_range(-5.0..5.0), r.random_range(-5.0..5.0));
    let truth = rotate(&shape, theta, shift);
    // Half the rooms are traced slightly too large, so correction has
    // edges to move.
    let scale = if seed.is_multiple_of(2) { 1.0 } else { 1.04 };
    let traced: Vec<Point2> = shape.iter().map(|q| Point2::new(q.x * scale - 0.05, q.y * scale - 0.05)).collect();
    let traced = rotate(&traced, theta, shift);
    let noisy = perturb_outline(&mut r, &traced, 0.25, 0.01);
    let rdp = rdp_simplify(&noisy, 0.05);
    let th = main_direction(&rdp).map_err(|e| format!("seed {seed}: {e}"))?;
    let reg = regularize(&rdp, th, 0.1).map_err(|e| format!("seed {seed}: {e}"))?;
    let evidence = sample_edges(&mut r, &truth, 40.0, 0.01);
    let set = BoundaryPointSet {
        points: evidence.clone(),
        radius: 0.2,
        sector_deg: 30.0,
    };
    let params = CorrectionParams::default();
    let (fin, _) = fuse_correct(&reg, th, &set, &params).map_err(|e| format!("seed {seed}: {e}"))?;
    if fin.len() != reg.len() {
        return Err(format!("seed {seed}: correction changed the vertex count"));
    }
    for (a, b) in reg.vertices.iter().zip(&fin.vertices) {
        if nearest(&evidence, *a) <= params.tau && a != b {
            return Err(format!("seed {seed}: vertex within tau moved"));
        }
    }
    for c in [&reg, &fin] {
        if c.len() < 4 || c.edges().any(|(a, b)| a.dist(b) <= 1e-9) {
            return Err(format!("seed {seed}: degenerate contour"));
        }
    }
    Ok((axis_deviation(&reg, th), axis_deviation(&fin, th)))
}
