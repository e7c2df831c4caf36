//! Room outlines from a mask and the filtered cloud: boundary-point
//! extraction, border tracing, simplification, rectilinear regularization
//! and correction against boundary evidence.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::density::ProjectionFrame;
use crate::error::{Error, Result};
use crate::geom::{fold_quarter, line_angle_diff, point_segment_distance, Point2};
use crate::raster::{label_components, BinaryRaster, Connectivity};
use crate::spatial::Grid2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPointSet {
    pub points: Vec<Point2>,
    pub radius: f64,
    pub sector_deg: f64,
}

/// Closed polygon; the closing edge from the last vertex back to the first
/// is implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolylineContour {
    pub vertices: Vec<Point2>,
}

impl PolylineContour {
    pub fn new(vertices: Vec<Point2>) -> Self {
        PolylineContour { vertices }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point2, Point2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn edge_angles(&self) -> Vec<f64> {
        self.edges().map(|(a, b)| (b.y - a.y).atan2(b.x - a.x)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomContour {
    pub id: String,
    pub contour: PolylineContour,
    pub theta_main: f64,
    pub regularized: bool,
    pub snapped: usize,
}

/// Largest empty circular arc (radians) left by the azimuths of `p`'s
/// neighbors; `2π` when there are none.
pub fn max_azimuth_gap(p: Point2, neighbors: impl Iterator<Item = Point2>) -> f64 {
    let mut az: Vec<f64> = neighbors
        .filter(|q| *q != p)
        .map(|q| (q.y - p.y).atan2(q.x - p.x))
        .collect();
    if az.is_empty() {
        return 2.0 * PI;
    }
    az.sort_by(f64::total_cmp);
    let mut gap = az[0] + 2.0 * PI - az[az.len() - 1];
    for w in az.windows(2) {
        gap = gap.max(w[1] - w[0]);
    }
    gap
}

/// Per-point boundary flags: a point is on the boundary when its neighbors
/// within `radius` leave an empty sector of at least `sector_deg`.
pub fn boundary_flags(points: &[Point2], radius: f64, sector_deg: f64) -> Result<Vec<bool>> {
    if points.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: points.len(),
        });
    }
    if !(radius > 0.0) || !(sector_deg > 0.0 && sector_deg < 360.0) {
        return Err(Error::InvalidParameter(format!(
            "boundary radius {radius} / sector {sector_deg}°"
        )));
    }
    let sector = sector_deg.to_radians();
    let grid = Grid2::new(points, radius);
    Ok(points
        .iter()
        .map(|&p| {
            let near = grid.within(points, p, radius);
            max_azimuth_gap(p, near.into_iter().map(|i| points[i])) >= sector
        })
        .collect())
}

pub fn extract_boundary_points(
    points: &[Point2],
    radius: f64,
    sector_deg: f64,
) -> Result<BoundaryPointSet> {
    let flags = boundary_flags(points, radius, sector_deg)?;
    Ok(BoundaryPointSet {
        points: points
            .iter()
            .zip(flags)
            .filter_map(|(&p, f)| f.then_some(p))
            .collect(),
        radius,
        sector_deg,
    })
}

// Clockwise in image orientation (row index grows downward).
const MOORE: [(i64, i64); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

fn dir_index(dm: i64, dn: i64) -> usize {
    MOORE
        .iter()
        .position(|&d| d == (dm, dn))
        .expect("unit neighbor offset")
}

/// Outer border pixels of a single-component mask by Moore-neighbor
/// tracing, starting at the first foreground pixel in raster order and
/// running clockwise in image orientation. Holes are ignored.
pub fn trace_mask_contour(mask: &BinaryRaster) -> Result<Vec<(usize, usize)>> {
    let comps = label_components(mask, |&b| b, Connectivity::Eight).count as usize;
    if comps != 1 {
        return Err(Error::MultipleComponents(comps));
    }
    let (w, h) = mask.dims();
    let start_idx = mask.data().iter().position(|&b| b).expect("one component");
    let start = ((start_idx % w) as i64, (start_idx / w) as i64);
    let fg = |m: i64, n: i64| mask.contains(m, n) && *mask.get(m as usize, n as usize);

    let mut out = vec![(start.0 as usize, start.1 as usize)];
    let mut cur = start;
    // The pixel west of the start is background.
    let mut back = 4usize;
    let mut at_start = false;
    for _ in 0..4 * w * h + 8 {
        let mut found = None;
        for k in 1..=8 {
            let (dm, dn) = MOORE[(back + k) % 8];
            if fg(cur.0 + dm, cur.1 + dn) {
                let prev = MOORE[(back + k - 1) % 8];
                let next = (cur.0 + dm, cur.1 + dn);
                let bg = (cur.0 + prev.0, cur.1 + prev.1);
                found = Some((next, dir_index(bg.0 - next.0, bg.1 - next.1)));
                break;
            }
        }
        let Some((next, nb)) = found else {
            break;
        };
        let next_px = (next.0 as usize, next.1 as usize);
        if at_start {
            // Back at the start and about to repeat the first move.
            if next_px == out[1] {
                break;
            }
            out.push((start.0 as usize, start.1 as usize));
        }
        cur = next;
        back = nb;
        at_start = cur == start;
        if !at_start {
            out.push(next_px);
        }
    }
    Ok(out)
}

/// Pixel-center world coordinates.
pub fn pixels_to_world(pixels: &[(usize, usize)], frame: &ProjectionFrame) -> PolylineContour {
    PolylineContour::new(
        pixels
            .iter()
            .map(|&(m, n)| frame.pixel_center(m as f64, n as f64))
            .collect(),
    )
}

fn rdp_open(chain: &[Point2], eps: f64, keep: &mut [bool]) {
    let mut stack = vec![(0usize, chain.len() - 1)];
    while let Some((lo, hi)) = stack.pop() {
        if hi <= lo + 1 {
            continue;
        }
        let (a, b) = (chain[lo], chain[hi]);
        let mut best = (lo, -1.0);
        for (i, &p) in chain.iter().enumerate().take(hi).skip(lo + 1) {
            let d = point_segment_distance(p, a, b);
            if d > best.1 {
                best = (i, d);
            }
        }
        if best.1 > eps {
            keep[best.0] = true;
            stack.push((lo, best.0));
            stack.push((best.0, hi));
        }
    }
}

/// Farthest-point simplification of an open polyline; endpoints are kept.
pub fn rdp_simplify_open(chain: &[Point2], eps: f64) -> Vec<Point2> {
    if chain.len() < 3 {
        return chain.to_vec();
    }
    let mut keep = vec![false; chain.len()];
    keep[0] = true;
    keep[chain.len() - 1] = true;
    rdp_open(chain, eps, &mut keep);
    chain
        .iter()
        .zip(keep)
        .filter_map(|(&p, k)| k.then_some(p))
        .collect()
}

/// Simplifies a closed contour by splitting it at its two mutually farthest
/// vertices and simplifying both halves.
pub fn rdp_simplify(contour: &PolylineContour, eps: f64) -> PolylineContour {
    let v = dedup_consecutive(&contour.vertices);
    let n = v.len();
    if n < 4 {
        return PolylineContour::new(v);
    }
    let (mut i0, mut j0, mut best) = (0, 0, -1.0);
    for i in 0..n {
        for j in i + 1..n {
            let d = v[i].dist2(v[j]);
            if d > best {
                (i0, j0, best) = (i, j, d);
            }
        }
    }
    let first: Vec<Point2> = v[i0..=j0].to_vec();
    let second: Vec<Point2> = v[j0..].iter().chain(&v[..=i0]).copied().collect();
    let mut out = rdp_simplify_open(&first, eps);
    out.pop();
    let mut tail = rdp_simplify_open(&second, eps);
    tail.pop();
    out.extend(tail);
    PolylineContour::new(out)
}

fn dedup_consecutive(v: &[Point2]) -> Vec<Point2> {
    let mut out: Vec<Point2> = Vec::with_capacity(v.len());
    for &p in v {
        if out.last() != Some(&p) {
            out.push(p);
        }
    }
    while out.len() > 1 && out.first() == out.last() {
        out.pop();
    }
    out
}

/// Distance of a direction to the nearest coordinate axis.
fn axis_distance(theta: f64) -> f64 {
    let f = fold_quarter(theta);
    f.min(FRAC_PI_2 - f)
}

/// Among the longest 20% of edges (at least one), the edge closest to an
/// axis; its angle folded into `[0, π/2)`. Ties go to the longer edge.
pub fn main_direction(contour: &PolylineContour) -> Result<f64> {
    let mut edges: Vec<(f64, f64)> = contour
        .edges()
        .map(|(a, b)| (a.dist(b), (b.y - a.y).atan2(b.x - a.x)))
        .filter(|e| e.0 > 0.0)
        .collect();
    if edges.is_empty() {
        return Err(Error::DegenerateGeometry("contour has no edges".into()));
    }
    edges.sort_by(|a, b| b.0.total_cmp(&a.0));
    let top = ((edges.len() as f64 * 0.2).ceil() as usize).max(1);
    let best = edges[..top]
        .iter()
        .min_by(|a, b| {
            axis_distance(a.1)
                .total_cmp(&axis_distance(b.1))
                .then(b.0.total_cmp(&a.0))
        })
        .expect("non-empty");
    Ok(fold_quarter(best.1))
}

/// Orthonormal frame of a main direction: `u` along θ, `n` across.
#[derive(Debug, Clone, Copy)]
struct Basis {
    u: Point2,
    n: Point2,
}

impl Basis {
    fn new(theta: f64) -> Self {
        let u = Point2::from_angle(theta);
        Basis { u, n: u.perp() }
    }

    /// Class 0 lines run along `u` and are indexed by their `n` offset;
    /// class 1 lines run along `n` and are indexed by their `u` offset.
    fn offset(&self, class: u8, p: Point2) -> f64 {
        if class == 0 {
            p.dot(self.n)
        } else {
            p.dot(self.u)
        }
    }

    fn corner(&self, a: &Line, b: &Line) -> Point2 {
        let (o0, o1) = if a.class == 0 {
            (a.offset, b.offset)
        } else {
            (b.offset, a.offset)
        };
        self.n * o0 + self.u * o1
    }

    fn class_of(&self, a: Point2, b: Point2) -> u8 {
        let th = (b.y - a.y).atan2(b.x - a.x);
        let base = self.u.y.atan2(self.u.x);
        if line_angle_diff(th, base) < PI / 4.0 {
            0
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Line {
    class: u8,
    offset: f64,
    weight: f64,
    end: Point2,
}

/// Fraction of contour length deviating more than `deg` from both axes of
/// `theta`.
pub fn off_axis_fraction(contour: &PolylineContour, theta: f64, deg: f64) -> f64 {
    let lim = deg.to_radians();
    let (mut off, mut total) = (0.0, 0.0);
    for (a, b) in contour.edges() {
        let len = a.dist(b);
        let th = (b.y - a.y).atan2(b.x - a.x);
        let d = line_angle_diff(th, theta).min(line_angle_diff(th, theta + FRAC_PI_2));
        total += len;
        if d > lim {
            off += len;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        off / total
    }
}

/// Snaps every edge to `theta` or `theta + 90°` (rotation about its
/// midpoint), merges consecutive parallel edges whose lines are within
/// `merge_tol`, bridges remaining parallel neighbors with a perpendicular
/// connector, drops edges shorter than `merge_tol`, and re-closes the chain
/// at the intersections of adjacent lines.
pub fn regularize(contour: &PolylineContour, theta: f64, merge_tol: f64) -> Result<PolylineContour> {
    let basis = Basis::new(theta);
    let v = dedup_consecutive(&contour.vertices);
    let n = v.len();
    let mut lines: Vec<Line> = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        let len = a.dist(b);
        if len == 0.0 {
            continue;
        }
        let class = basis.class_of(a, b);
        lines.push(Line {
            class,
            offset: basis.offset(class, a.lerp(b, 0.5)),
            weight: len,
            end: b,
        });
    }
    let mut guard = 0;
    loop {
        guard += 1;
        if guard > 4 * n + 16 {
            break;
        }
        merge_parallel(&mut lines, merge_tol);
        insert_connectors(&mut lines, &basis);
        if lines.len() <= 4 {
            break;
        }
        // Drop the shortest sub-tolerance edge and go round again.
        let k = lines.len();
        let short = (0..k)
            .map(|i| {
                let prev = &lines[(i + k - 1) % k];
                let next = &lines[(i + 1) % k];
                (i, (next.offset - prev.offset).abs())
            })
            .filter(|&(_, len)| len < merge_tol)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match short {
            Some((i, _)) => {
                lines.remove(i);
            }
            None => break,
        }
    }
    if lines.len() < 4 {
        return Err(Error::DegenerateAfterMerge(lines.len()));
    }
    Ok(PolylineContour::new(close_lines(&lines, &basis)))
}

fn close_lines(lines: &[Line], basis: &Basis) -> Vec<Point2> {
    let k = lines.len();
    (0..k)
        .map(|i| basis.corner(&lines[(i + k - 1) % k], &lines[i]))
        .collect()
}

fn merge_parallel(lines: &mut Vec<Line>, tol: f64) {
    loop {
        let k = lines.len();
        if k < 2 {
            return;
        }
        let hit = (0..k).find(|&i| {
            let j = (i + 1) % k;
            lines[i].class == lines[j].class && (lines[i].offset - lines[j].offset).abs() < tol
        });
        let Some(i) = hit else {
            return;
        };
        let j = (i + 1) % k;
        let (a, b) = (lines[i], lines[j]);
        let w = a.weight + b.weight;
        let offset = if w > 0.0 {
            (a.offset * a.weight + b.offset * b.weight) / w
        } else {
            0.5 * (a.offset + b.offset)
        };
        lines[i] = Line {
            class: a.class,
            offset,
            weight: w,
            end: b.end,
        };
        lines.remove(j);
    }
}

fn insert_connectors(lines: &mut Vec<Line>, basis: &Basis) {
    let mut i = 0;
    while i < lines.len() && lines.len() >= 2 {
        let j = (i + 1) % lines.len();
        if lines[i].class == lines[j].class {
            let class = 1 - lines[i].class;
            let end = lines[i].end;
            lines.insert(
                i + 1,
                Line {
                    class,
                    offset: basis.offset(class, end),
                    weight: 0.0,
                    end,
                },
            );
        }
        i += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionMode {
    /// Translate whole edges so rectilinearity survives.
    #[default]
    PerEdge,
    /// Move each far vertex onto its nearest boundary point.
    PerVertex,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrectionParams {
    pub tau: f64,
    /// Half-width of the strip around an edge searched for support.
    pub band: f64,
    /// Fraction of edge length ignored at each end when gathering support.
    pub end_margin: f64,
    pub min_support: usize,
    pub mode: CorrectionMode,
}

impl Default for CorrectionParams {
    fn default() -> Self {
        CorrectionParams {
            tau: 0.05,
            band: 0.25,
            end_margin: 0.15,
            min_support: 5,
            mode: CorrectionMode::PerEdge,
        }
    }
}

/// Index over boundary points for nearest and strip queries.
pub struct BoundaryIndex<'a> {
    points: &'a [Point2],
    grid: Grid2,
}

impl<'a> BoundaryIndex<'a> {
    pub fn new(set: &'a BoundaryPointSet) -> Self {
        BoundaryIndex {
            points: &set.points,
            grid: Grid2::new(&set.points, 0.1),
        }
    }

    pub fn loss(&self, p: Point2) -> f64 {
        self.grid
            .nearest(self.points, p)
            .map_or(f64::INFINITY, |(_, d)| d)
    }

    fn nearest(&self, p: Point2) -> Option<Point2> {
        self.grid.nearest(self.points, p).map(|(i, _)| self.points[i])
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Pulls the contour onto boundary evidence. Returns the corrected contour
/// and the number of vertices moved.
///
/// Per edge: when both endpoints are farther than `tau` from every boundary
/// point, the edge's line moves to the median offset of the boundary points
/// in a strip around the edge, and its corners are re-intersected. A vertex
/// within `tau` is never moved.
pub fn fuse_correct(
    contour: &PolylineContour,
    theta: f64,
    boundary: &BoundaryPointSet,
    params: &CorrectionParams,
) -> Result<(PolylineContour, usize)> {
    if boundary.points.is_empty() {
        return Err(Error::InvalidParameter("empty boundary point set".into()));
    }
    let index = BoundaryIndex::new(boundary);
    match params.mode {
        CorrectionMode::PerVertex => {
            let mut moved = 0;
            let v = contour
                .vertices
                .iter()
                .map(|&p| {
                    if index.loss(p) > params.tau {
                        moved += 1;
                        index.nearest(p).unwrap_or(p)
                    } else {
                        p
                    }
                })
                .collect();
            Ok((PolylineContour::new(v), moved))
        }
        CorrectionMode::PerEdge => correct_edges(contour, theta, &index, params),
    }
}

fn correct_edges(
    contour: &PolylineContour,
    theta: f64,
    index: &BoundaryIndex,
    params: &CorrectionParams,
) -> Result<(PolylineContour, usize)> {
    let basis = Basis::new(theta);
    let mut v = contour.vertices.clone();
    let n = v.len();
    if n < 4 {
        return Ok((contour.clone(), 0));
    }
    let mut lines: Vec<Line> = (0..n)
        .map(|i| {
            let (a, b) = (v[i], v[(i + 1) % n]);
            let class = basis.class_of(a, b);
            Line {
                class,
                offset: basis.offset(class, a.lerp(b, 0.5)),
                weight: a.dist(b),
                end: b,
            }
        })
        .collect();
    if (0..n).any(|i| lines[i].class == lines[(i + 1) % n].class) {
        log::warn!("contour is not alternating rectilinear; per-edge correction skipped");
        return Ok((contour.clone(), 0));
    }
    let original = v.clone();
    for k in 0..n {
        let (a, b) = (v[k], v[(k + 1) % n]);
        if index.loss(a) <= params.tau || index.loss(b) <= params.tau {
            continue;
        }
        let len = a.dist(b);
        if len == 0.0 {
            continue;
        }
        let dir = (b - a) * (1.0 / len);
        let normal = dir.perp();
        let lo = params.end_margin * len;
        let hi = (1.0 - params.end_margin) * len;
        let reach = 0.5 * len + params.band;
        let mut offs: Vec<f64> = index
            .grid
            .within(index.points, a.lerp(b, 0.5), reach)
            .into_iter()
            .filter_map(|i| {
                let q = index.points[i] - a;
                let t = q.dot(dir);
                let o = q.dot(normal);
                (t >= lo && t <= hi && o.abs() <= params.band).then_some(o)
            })
            .collect();
        if offs.len() < params.min_support {
            continue;
        }
        let shift = median(&mut offs);
        // Offsets are measured along the class normal, whose sign may
        // differ from the edge's own left normal.
        let class_normal = if lines[k].class == 0 { basis.n } else { basis.u };
        let mut trial = lines.clone();
        trial[k].offset += shift * normal.dot(class_normal);
        // Only the two corners of edge k move; the others are kept as they
        // are so untouched vertices stay bit-identical.
        let full = close_lines(&trial, &basis);
        let mut cand = v.clone();
        cand[k] = full[k];
        cand[(k + 1) % n] = full[(k + 1) % n];
        let valid = (0..n).all(|i| {
            let e0 = original[(i + 1) % n] - original[i];
            let e1 = cand[(i + 1) % n] - cand[i];
            e1.norm() > 1e-9 && e0.dot(e1) > 0.0
        });
        if valid {
            lines = trial;
            // `close_lines` puts the corner between line i-1 and line i
            // first, i.e. vertex i; keep indices aligned with the input.
            v = cand;
        } else {
            log::debug!("edge {k}: correction by {shift:.3} m would fold the contour; skipped");
        }
    }
    let snapped = v.iter().zip(&contour.vertices).filter(|(a, b)| a != b).count();
    Ok((PolylineContour::new(v), snapped))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContourParams {
    pub boundary_radius: f64,
    pub sector_deg: f64,
    /// Fixed RDP tolerance (m); `None` selects `max(2s, 0.5δ)`.
    pub rdp_epsilon: Option<f64>,
    /// Parallel-merge tolerance (m); `None` selects `2s`.
    pub merge_tol: Option<f64>,
    pub correction: CorrectionParams,
    pub nonrect_fraction: f64,
    pub nonrect_deg: f64,
}

impl Default for ContourParams {
    fn default() -> Self {
        ContourParams {
            boundary_radius: 0.2,
            sector_deg: 30.0,
            rdp_epsilon: None,
            merge_tol: None,
            correction: CorrectionParams::default(),
            nonrect_fraction: 0.3,
            nonrect_deg: 20.0,
        }
    }
}

impl ContourParams {
    pub fn epsilon(&self, pixel_size: f64, spacing: f64) -> f64 {
        self.rdp_epsilon
            .unwrap_or_else(|| (2.0 * pixel_size).max(0.5 * spacing))
    }

    pub fn merge_tolerance(&self, pixel_size: f64) -> f64 {
        self.merge_tol.unwrap_or(2.0 * pixel_size)
    }
}

/// Intermediate outlines of one room, in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourStages {
    pub raw: PolylineContour,
    pub rdp: PolylineContour,
    pub reg: PolylineContour,
    pub fin: PolylineContour,
}

/// Full per-room chain: trace, convert to meters, simplify, regularize,
/// correct.
pub fn room_contour(
    id: &str,
    mask: &BinaryRaster,
    frame: &ProjectionFrame,
    spacing: f64,
    boundary: &BoundaryPointSet,
    params: &ContourParams,
) -> Result<(RoomContour, ContourStages)> {
    let px = trace_mask_contour(mask)?;
    if px.len() < 3 {
        return Err(Error::DegenerateGeometry(format!(
            "room {id}: contour has {} pixels",
            px.len()
        )));
    }
    let raw = pixels_to_world(&px, frame);
    let eps = params.epsilon(frame.pixel_size, spacing);
    let rdp = rdp_simplify(&raw, eps);
    if rdp.len() < 3 {
        return Err(Error::DegenerateGeometry(format!(
            "room {id}: {} vertices after simplification",
            rdp.len()
        )));
    }
    let theta = main_direction(&rdp)?;
    let off = off_axis_fraction(&rdp, theta, params.nonrect_deg);
    let (reg, regularized) = if off > params.nonrect_fraction {
        log::info!(
            "room {id}: {:.0}% of outline off-axis; regularization skipped",
            off * 100.0
        );
        (rdp.clone(), false)
    } else {
        (regularize(&rdp, theta, params.merge_tolerance(frame.pixel_size))?, true)
    };
    let (fin, snapped) = if boundary.points.is_empty() {
        (reg.clone(), 0)
    } else if regularized || params.correction.mode == CorrectionMode::PerVertex {
        fuse_correct(&reg, theta, boundary, &params.correction)?
    } else {
        (reg.clone(), 0)
    };
    Ok((
        RoomContour {
            id: id.to_string(),
            contour: fin.clone(),
            theta_main: theta,
            regularized,
            snapped,
        },
        ContourStages { raw, rdp, reg, fin },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Raster;

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    fn mask_rect(w: usize, h: usize, r: (usize, usize, usize, usize)) -> BinaryRaster {
        let mut m = Raster::filled(w, h, false);
        for n in r.1..r.3 {
            for x in r.0..r.2 {
                m.set(x, n, true);
            }
        }
        m
    }

    #[test]
    fn three_by_three_trace() {
        let m = mask_rect(5, 5, (1, 1, 4, 4));
        let c = trace_mask_contour(&m).unwrap();
        assert_eq!(
            c,
            vec![(1, 1), (2, 1), (3, 1), (3, 2), (3, 3), (2, 3), (1, 3), (1, 2)]
        );
    }

    #[test]
    fn rectangle_trace_length() {
        for (w, h) in [(2, 2), (5, 3), (7, 9), (1, 4), (4, 1)] {
            let m = mask_rect(w + 2, h + 2, (1, 1, w + 1, h + 1));
            let c = trace_mask_contour(&m).unwrap();
            let expect = if w == 1 || h == 1 { 2 * (w.max(h)) - 2 } else { 2 * w + 2 * h - 4 };
            assert_eq!(c.len(), expect, "{w}x{h}");
        }
    }

    #[test]
    fn single_pixel_and_two_components() {
        let m = mask_rect(3, 3, (1, 1, 2, 2));
        assert_eq!(trace_mask_contour(&m).unwrap(), vec![(1, 1)]);
        let mut two = mask_rect(6, 6, (0, 0, 1, 1));
        two.set(4, 4, true);
        assert!(matches!(trace_mask_contour(&two), Err(Error::MultipleComponents(2))));
    }

    #[test]
    fn pixel_center_convention() {
        let f = ProjectionFrame {
            x_min: 0.0,
            y_min: 0.0,
            pixel_size: 1.0,
            width: 4,
            height: 4,
        };
        assert_eq!(pixels_to_world(&[(0, 0)], &f).vertices[0], p(0.5, 0.5));
    }

    #[test]
    fn collinear_chain_collapses() {
        let chain: Vec<Point2> = (0..10).map(|i| p(i as f64, 2.0 * i as f64)).collect();
        assert_eq!(rdp_simplify_open(&chain, 0.01), vec![chain[0], chain[9]]);
    }

    #[test]
    fn axis_rectangle_direction_and_fixpoint() {
        let r = PolylineContour::new(vec![p(0.0, 0.0), p(4.0, 0.0), p(4.0, 3.0), p(0.0, 3.0)]);
        assert_eq!(main_direction(&r).unwrap(), 0.0);
        assert_eq!(regularize(&r, 0.0, 0.1).unwrap(), r);
    }

    #[test]
    fn rotated_square_direction() {
        let th = 30f64.to_radians();
        let sq: Vec<Point2> = [(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0)]
            .iter()
            .map(|&(x, y)| p(x * th.cos() - y * th.sin(), x * th.sin() + y * th.cos()))
            .collect();
        let got = main_direction(&PolylineContour::new(sq)).unwrap();
        assert!((got - th).abs() < 1e-9);
    }

    #[test]
    fn azimuth_gap_basics() {
        let c = p(0.0, 0.0);
        assert_eq!(max_azimuth_gap(c, std::iter::empty()), 2.0 * PI);
        let ring = (0..12).map(|k| Point2::from_angle(k as f64 * PI / 6.0) * 0.1);
        assert!((max_azimuth_gap(c, ring) - PI / 6.0).abs() < 1e-9);
    }

    #[test]
    fn merge_inserts_connector_for_offset_parallel_edges() {
        // A 1-unit jog along the bottom edge, too big to merge at tol 0.1.
        let poly = PolylineContour::new(vec![
            p(0.0, 0.0),
            p(5.0, 0.0),
            p(5.0, 1.0),
            p(10.0, 1.0),
            p(10.0, 6.0),
            p(0.0, 6.0),
        ]);
        let r = regularize(&poly, 0.0, 0.1).unwrap();
        assert_eq!(r.len(), 6);
        // With a large tolerance the jog merges away.
        let r = regularize(&poly, 0.0, 1.5).unwrap();
        assert_eq!(r.len(), 4);
    }
}
