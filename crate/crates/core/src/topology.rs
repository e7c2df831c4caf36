//! Room adjacency and door openings.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use geo::{Area, BooleanOps, Euclidean, Length, LineString, Polygon};
use serde::{Deserialize, Serialize};

use crate::contour::RoomContour;
use crate::density::ProjectionFrame;
use crate::error::{Error, Result};
use crate::geom::{line_angle_diff, Point2};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyParams {
    pub parallel_deg: f64,
    pub gap_tol: f64,
    pub min_door: f64,
    pub max_door: f64,
    /// Bin count fraction of the slab median below which a bin is empty.
    pub density_frac: f64,
}

impl Default for TopologyParams {
    fn default() -> Self {
        TopologyParams {
            parallel_deg: 2.0,
            gap_tol: 0.4,
            min_door: 0.6,
            max_door: 2.0,
            density_frac: 0.2,
        }
    }
}

/// Two parallel edges of different rooms facing each other across a wall.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacentPair {
    pub room_a: usize,
    pub edge_a: usize,
    pub room_b: usize,
    pub edge_b: usize,
    /// Start of edge `a`; the along-wall coordinate `t` is measured from here.
    pub origin: Point2,
    /// Unit direction of edge `a`.
    pub dir: Point2,
    /// Signed offset of edge `b`'s line from edge `a`'s, along `dir.perp()`.
    pub separation: f64,
    /// Overlap of the two edges' projections, in `t`.
    pub overlap: (f64, f64),
}

impl AdjacentPair {
    pub fn overlap_len(&self) -> f64 {
        self.overlap.1 - self.overlap.0
    }

    /// Point at along-wall coordinate `t` on the wall midline.
    pub fn midline_point(&self, t: f64) -> Point2 {
        self.origin + self.dir * t + self.dir.perp() * (0.5 * self.separation)
    }
}

fn project_interval(a: Point2, b: Point2, origin: Point2, dir: Point2) -> (f64, f64) {
    let (ta, tb) = ((a - origin).dot(dir), (b - origin).dot(dir));
    (ta.min(tb), ta.max(tb))
}

pub fn find_adjacent_segments(rooms: &[RoomContour], params: &TopologyParams) -> Vec<AdjacentPair> {
    let lim = params.parallel_deg.to_radians();
    let mut out = Vec::new();
    for ra in 0..rooms.len() {
        for rb in ra + 1..rooms.len() {
            let ea: Vec<_> = rooms[ra].contour.edges().collect();
            let eb: Vec<_> = rooms[rb].contour.edges().collect();
            for (ia, &(a0, a1)) in ea.iter().enumerate() {
                let len = a0.dist(a1);
                if len == 0.0 {
                    continue;
                }
                let dir = (a1 - a0) * (1.0 / len);
                let th_a = dir.y.atan2(dir.x);
                for (ib, &(b0, b1)) in eb.iter().enumerate() {
                    let th_b = (b1.y - b0.y).atan2(b1.x - b0.x);
                    if b0 == b1 || line_angle_diff(th_a, th_b) > lim {
                        continue;
                    }
                    let sep = (b0.lerp(b1, 0.5) - a0).dot(dir.perp());
                    if sep.abs() > params.gap_tol {
                        continue;
                    }
                    let (pa0, pa1) = (0.0f64, len);
                    let (pb0, pb1) = project_interval(b0, b1, a0, dir);
                    let ov = (pa0.max(pb0), pa1.min(pb1));
                    if ov.1 - ov.0 >= params.min_door {
                        out.push(AdjacentPair {
                            room_a: ra,
                            edge_a: ia,
                            room_b: rb,
                            edge_b: ib,
                            origin: a0,
                            dir,
                            separation: sep,
                            overlap: ov,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Room id pairs (sorted) implied by adjacent edges.
pub fn adjacent_room_pairs(rooms: &[RoomContour], pairs: &[AdjacentPair]) -> BTreeSet<(String, String)> {
    pairs
        .iter()
        .map(|p| ordered(&rooms[p.room_a].id, &rooms[p.room_b].id))
        .collect()
}

fn ordered(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoorSegment {
    #[serde(default)]
    pub id: String,
    pub rooms: [String; 2],
    pub p0: Point2,
    pub p1: Point2,
}

impl DoorSegment {
    pub fn length(&self) -> f64 {
        self.p0.dist(self.p1)
    }
}

/// Per-bin point counts in the wall slab of `pair`. Bins have width
/// `bin` along the overlap interval; the slab spans both edge lines plus
/// `margin` on either side.
pub fn slab_profile(pair: &AdjacentPair, points: &[Point2], bin: f64, margin: f64) -> Vec<u32> {
    let (t0, t1) = pair.overlap;
    let nbins = (((t1 - t0) / bin).ceil() as usize).max(1);
    let mut counts = vec![0u32; nbins];
    let normal = pair.dir.perp();
    let lo = pair.separation.min(0.0) - margin;
    let hi = pair.separation.max(0.0) + margin;
    for &p in points {
        let q = p - pair.origin;
        let o = q.dot(normal);
        if o < lo || o > hi {
            continue;
        }
        let t = q.dot(pair.dir);
        if t < t0 || t > t1 {
            continue;
        }
        let k = (((t - t0) / bin) as usize).min(nbins - 1);
        counts[k] += 1;
    }
    counts
}

fn median_u32(v: &[u32]) -> f64 {
    let mut s = v.to_vec();
    s.sort_unstable();
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2] as f64
    } else {
        0.5 * (s[k / 2 - 1] as f64 + s[k / 2] as f64)
    }
}

/// Longest run of low-density bins whose length lies within the door bounds,
/// as `(t_start, t_end)` along the wall.
pub fn find_door_run(counts: &[u32], t0: f64, t1: f64, bin: f64, params: &TopologyParams) -> Option<(f64, f64)> {
    let med = median_u32(counts);
    if med == 0.0 {
        return None;
    }
    let cut = params.density_frac * med;
    let mut best: Option<(f64, f64)> = None;
    let mut i = 0;
    while i < counts.len() {
        if (counts[i] as f64) >= cut {
            i += 1;
            continue;
        }
        let j = (i..counts.len())
            .find(|&k| counts[k] as f64 >= cut)
            .unwrap_or(counts.len());
        let s = t0 + i as f64 * bin;
        let e = (t0 + j as f64 * bin).min(t1);
        let len = e - s;
        if len >= params.min_door && len <= params.max_door && best.is_none_or(|b| len > b.1 - b.0) {
            best = Some((s, e));
        }
        i = j;
    }
    best
}

pub fn detect_door(
    pair: &AdjacentPair,
    rooms: &[RoomContour],
    points: &[Point2],
    frame: &ProjectionFrame,
    params: &TopologyParams,
) -> Option<DoorSegment> {
    let bin = 2.0 * frame.pixel_size;
    let counts = slab_profile(pair, points, bin, frame.pixel_size);
    if counts.iter().all(|&c| c == 0) {
        log::warn!(
            "rooms {} and {}: adjacent edges with an empty wall slab",
            rooms[pair.room_a].id,
            rooms[pair.room_b].id
        );
        return None;
    }
    let (s, e) = find_door_run(&counts, pair.overlap.0, pair.overlap.1, bin, params)?;
    Some(DoorSegment {
        id: String::new(),
        rooms: [rooms[pair.room_a].id.clone(), rooms[pair.room_b].id.clone()],
        p0: pair.midline_point(s),
        p1: pair.midline_point(e),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub id: String,
    pub theta_main: f64,
    pub polygon: Vec<Point2>,
}

impl From<&RoomContour> for Room {
    fn from(r: &RoomContour) -> Self {
        Room {
            id: r.id.clone(),
            theta_main: r.theta_main,
            polygon: r.contour.vertices.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloorPlan {
    pub frame: ProjectionFrame,
    pub rooms: Vec<Room>,
    pub doors: Vec<DoorSegment>,
}

impl FloorPlan {
    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(self).expect("floorplan serializes");
        v.push(b'\n');
        v
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json_bytes())?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<FloorPlan> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

fn to_geo(poly: &[Point2]) -> Polygon<f64> {
    Polygon::new(
        LineString::from(poly.iter().map(|p| (p.x, p.y)).collect::<Vec<_>>()),
        vec![],
    )
}

/// Largest mean width `2A/P` over the connected pieces of the overlap of
/// two polygons; 0 when they do not overlap.
pub fn overlap_width(a: &[Point2], b: &[Point2]) -> f64 {
    let inter = to_geo(a).intersection(&to_geo(b));
    inter
        .0
        .iter()
        .map(|p| {
            let area = p.unsigned_area();
            let perim = p.exterior().length::<Euclidean>();
            if perim > 0.0 {
                2.0 * area / perim
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

/// Merges duplicate door detections, assigns ids and checks that rooms do
/// not overlap by more than `tol` (mean overlap width).
pub fn assemble_floorplan(
    frame: ProjectionFrame,
    rooms: &[RoomContour],
    doors: Vec<DoorSegment>,
    tol: f64,
) -> Result<FloorPlan> {
    let ids: BTreeSet<&str> = rooms.iter().map(|r| r.id.as_str()).collect();
    if ids.len() != rooms.len() {
        return Err(Error::InvalidParameter("duplicate room ids".into()));
    }
    for i in 0..rooms.len() {
        for j in i + 1..rooms.len() {
            if overlap_width(&rooms[i].contour.vertices, &rooms[j].contour.vertices) > tol {
                return Err(Error::OverlappingRooms {
                    a: rooms[i].id.clone(),
                    b: rooms[j].id.clone(),
                });
            }
        }
    }

    let mut merged: Vec<DoorSegment> = Vec::new();
    for d in doors {
        if d.rooms[0] == d.rooms[1] || !ids.contains(d.rooms[0].as_str()) || !ids.contains(d.rooms[1].as_str()) {
            return Err(Error::InvalidParameter(format!("door references rooms {:?}", d.rooms)));
        }
        let (ra, rb) = ordered(&d.rooms[0], &d.rooms[1]);
        let d = DoorSegment {
            rooms: [ra, rb],
            ..d
        };
        if let Some(m) = merged.iter_mut().find(|m| m.rooms == d.rooms && extents_overlap(m, &d)) {
            *m = union_extent(m, &d);
        } else {
            merged.push(d);
        }
    }
    merged.sort_by(|a, b| {
        a.rooms
            .cmp(&b.rooms)
            .then(a.p0.x.total_cmp(&b.p0.x))
            .then(a.p0.y.total_cmp(&b.p0.y))
    });
    for (k, d) in merged.iter_mut().enumerate() {
        d.id = format!("d{k}");
    }
    Ok(FloorPlan {
        frame,
        rooms: rooms.iter().map(Room::from).collect(),
        doors: merged,
    })
}

fn extents_overlap(a: &DoorSegment, b: &DoorSegment) -> bool {
    let len = a.length();
    if len == 0.0 {
        return a.p0.dist(b.p0) < 1e-9;
    }
    let dir = (a.p1 - a.p0) * (1.0 / len);
    if (b.p0 - a.p0).dot(dir.perp()).abs() > 0.5 {
        return false;
    }
    let (s, e) = project_interval(b.p0, b.p1, a.p0, dir);
    s <= len && e >= 0.0
}

fn union_extent(a: &DoorSegment, b: &DoorSegment) -> DoorSegment {
    let len = a.length();
    let dir = (a.p1 - a.p0) * (1.0 / len);
    let (s, e) = project_interval(b.p0, b.p1, a.p0, dir);
    let (lo, hi) = (s.min(0.0), e.max(len));
    DoorSegment {
        id: a.id.clone(),
        rooms: a.rooms.clone(),
        p0: a.p0 + dir * lo,
        p1: a.p0 + dir * hi,
    }
}

/// Adjacency, doors and assembly in one call. `points` is the filtered
/// cloud projected to the plane.
pub fn build_floorplan(
    frame: ProjectionFrame,
    rooms: &[RoomContour],
    points: &[Point2],
    params: &TopologyParams,
) -> Result<(FloorPlan, Vec<AdjacentPair>)> {
    let pairs = find_adjacent_segments(rooms, params);
    let doors: Vec<DoorSegment> = pairs
        .iter()
        .filter_map(|p| detect_door(p, rooms, points, &frame, params))
        .collect();
    let plan = assemble_floorplan(frame, rooms, doors, 2.0 * frame.pixel_size)?;
    Ok((plan, pairs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::PolylineContour;

    fn rect_room(id: &str, x0: f64, y0: f64, x1: f64, y1: f64) -> RoomContour {
        RoomContour {
            id: id.into(),
            contour: PolylineContour::new(vec![
                Point2::new(x0, y0),
                Point2::new(x1, y0),
                Point2::new(x1, y1),
                Point2::new(x0, y1),
            ]),
            theta_main: 0.0,
            regularized: true,
            snapped: 0,
        }
    }

    #[test]
    fn shared_wall_gives_one_pair() {
        let rooms = [rect_room("a", 0.0, 0.0, 4.0, 3.0), rect_room("b", 4.2, 0.0, 8.0, 3.0)];
        let pairs = find_adjacent_segments(&rooms, &TopologyParams::default());
        assert_eq!(pairs.len(), 1);
        assert!((pairs[0].overlap_len() - 3.0).abs() < 1e-12);
        assert!((pairs[0].separation.abs() - 0.2).abs() < 1e-12);
        let far = [rect_room("a", 0.0, 0.0, 4.0, 3.0), rect_room("b", 9.0, 0.0, 12.0, 3.0)];
        assert!(find_adjacent_segments(&far, &TopologyParams::default()).is_empty());
    }

    #[test]
    fn door_run_rules() {
        let p = TopologyParams::default();
        let mut c = vec![50u32; 50];
        assert_eq!(find_door_run(&c, 0.0, 5.0, 0.1, &p), None);
        for v in &mut c[20..29] {
            *v = 0;
        }
        let (s, e) = find_door_run(&c, 0.0, 5.0, 0.1, &p).unwrap();
        assert!((s - 2.0).abs() < 1e-9 && (e - 2.9).abs() < 1e-9);
        assert_eq!(find_door_run(&[0; 10], 0.0, 1.0, 0.1, &p), None);
    }

    #[test]
    fn symmetric_duplicates_merge() {
        let rooms = [rect_room("a", 0.0, 0.0, 4.0, 3.0), rect_room("b", 4.2, 0.0, 8.0, 3.0)];
        let frame = ProjectionFrame {
            x_min: 0.0,
            y_min: 0.0,
            pixel_size: 0.05,
            width: 160,
            height: 60,
        };
        let d1 = DoorSegment {
            id: String::new(),
            rooms: ["a".into(), "b".into()],
            p0: Point2::new(4.1, 1.0),
            p1: Point2::new(4.1, 1.9),
        };
        let d2 = DoorSegment {
            id: String::new(),
            rooms: ["b".into(), "a".into()],
            p0: Point2::new(4.1, 1.9),
            p1: Point2::new(4.1, 1.05),
        };
        let plan = assemble_floorplan(frame, &rooms, vec![d1, d2], 0.1).unwrap();
        assert_eq!(plan.doors.len(), 1);
        assert_eq!(plan.doors[0].id, "d0");
        assert!(assemble_floorplan(frame, &rooms, vec![], 0.1).unwrap().doors.is_empty());
    }

    #[test]
    fn overlapping_rooms_rejected() {
        let frame = ProjectionFrame {
            x_min: 0.0,
            y_min: 0.0,
            pixel_size: 0.05,
            width: 160,
            height: 60,
        };
        let rooms = [rect_room("a", 0.0, 0.0, 4.0, 3.0), rect_room("b", 3.0, 0.0, 8.0, 3.0)];
        assert!(matches!(
            assemble_floorplan(frame, &rooms, vec![], 0.1),
            Err(Error::OverlappingRooms { .. })
        ));
        let touching = [rect_room("a", 0.0, 0.0, 4.0, 3.0), rect_room("b", 3.95, 0.0, 8.0, 3.0)];
        assert!(assemble_floorplan(frame, &touching, vec![], 0.1).is_ok());
    }
}
