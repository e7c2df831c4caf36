//! Synthetic indoor scenes with known truth.
//!
//! Rooms are axis-aligned rectangles given by their inner wall faces. Walls
//! between neighbors have a fixed thickness. Ceiling and floor points are
//! sampled over each room's footprint. Wall points are sampled on every inner
//! face within a band just below the ceiling, and door intervals are left
//! empty on both faces of the shared wall.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::density::ProjectionFrame;
use crate::error::{Error, Result};
use crate::eval::{rasterize_polygon, GroundTruth, Segment};
use crate::geom::Point2;
use crate::ingest::{write_xyz, Point3, PointCloud};
use crate::raster::{write_gray_png, BinaryRaster};
use crate::topology::DoorSegment;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub id: String,
    pub min: Point2,
    pub max: Point2,
}

impl RoomSpec {
    pub fn new(id: &str, x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        RoomSpec {
            id: id.to_string(),
            min: Point2::new(x0, y0),
            max: Point2::new(x1, y1),
        }
    }

    /// Counter-clockwise corners starting at `min`.
    pub fn polygon(&self) -> Vec<Point2> {
        vec![
            self.min,
            Point2::new(self.max.x, self.min.y),
            self.max,
            Point2::new(self.min.x, self.max.y),
        ]
    }

    pub fn area(&self) -> f64 {
        (self.max.x - self.min.x) * (self.max.y - self.min.y)
    }
}

/// Door opening in the wall shared by two rooms, given as an interval along
/// that wall (x for horizontal walls, y for vertical ones).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoorSpec {
    pub rooms: [String; 2],
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub rooms: Vec<RoomSpec>,
    pub doors: Vec<DoorSpec>,
    pub wall_thickness: f64,
    pub ceiling_height: f64,
    /// Ceiling points per m² of room footprint.
    pub ceiling_density: f64,
    /// Floor points per m² of room footprint.
    pub floor_density: f64,
    /// Wall points per meter of inner wall face.
    pub wall_density: f64,
    /// Height of the sampled wall band below the ceiling.
    pub wall_band: f64,
    pub noise_sigma: f64,
}

impl SceneSpec {
    fn with_rooms(rooms: Vec<RoomSpec>, doors: Vec<DoorSpec>) -> Self {
        SceneSpec {
            rooms,
            doors,
            wall_thickness: 0.2,
            ceiling_height: 2.8,
            ceiling_density: 150.0,
            floor_density: 40.0,
            wall_density: 470.0,
            wall_band: 0.08,
            noise_sigma: 0.01,
        }
    }

    fn door(a: &str, b: &str, start: f64, end: f64) -> DoorSpec {
        DoorSpec {
            rooms: [a.to_string(), b.to_string()],
            start,
            end,
        }
    }

    pub fn single_room(w: f64, h: f64) -> Self {
        Self::with_rooms(vec![RoomSpec::new("A", 0.0, 0.0, w, h)], vec![])
    }

    /// Two rooms side by side joined by one door.
    pub fn two_rooms() -> Self {
        Self::with_rooms(
            vec![
                RoomSpec::new("A", 0.0, 0.0, 5.0, 4.5),
                RoomSpec::new("B", 5.2, 0.0, 9.5, 4.5),
            ],
            vec![Self::door("A", "B", 1.5, 2.4)],
        )
    }

    /// L-shaped apartment: A joined to B and C.
    pub fn three_rooms() -> Self {
        Self::with_rooms(
            vec![
                RoomSpec::new("A", 0.0, 0.0, 5.0, 4.5),
                RoomSpec::new("B", 5.2, 0.0, 9.5, 4.5),
                RoomSpec::new("C", 0.0, 4.7, 4.5, 9.0),
            ],
            vec![
                Self::door("A", "B", 1.5, 2.4),
                Self::door("A", "C", 1.5, 2.4),
            ],
        )
    }

    /// 2×2 grid of rooms, about 82 m², with three doors. C and D share a
    /// wall without a door.
    pub fn four_rooms() -> Self {
        Self::with_rooms(
            vec![
                RoomSpec::new("A", 0.0, 0.0, 5.0, 4.5),
                RoomSpec::new("B", 5.2, 0.0, 9.5, 4.5),
                RoomSpec::new("C", 0.0, 4.7, 5.0, 9.0),
                RoomSpec::new("D", 5.2, 4.7, 9.5, 9.0),
            ],
            vec![
                Self::door("A", "B", 1.5, 2.4),
                Self::door("A", "C", 1.5, 2.4),
                Self::door("B", "D", 6.5, 7.4),
            ],
        )
    }

    pub fn floor_area(&self) -> f64 {
        self.rooms.iter().map(RoomSpec::area).sum()
    }

    fn room(&self, id: &str) -> Option<usize> {
        self.rooms.iter().position(|r| r.id == id)
    }

    /// Wall shared by rooms `a` and `b`, if they are wall-thickness apart
    /// along one axis and overlap along the other.
    pub fn shared_wall(&self, a: usize, b: usize) -> Option<SharedWall> {
        let (ra, rb) = (&self.rooms[a], &self.rooms[b]);
        let t = self.wall_thickness;
        let close = |u: f64, v: f64| (u - v).abs() <= 1e-9 * (1.0 + t);
        let overlap = |a0: f64, a1: f64, b0: f64, b1: f64| (a0.max(b0), a1.min(b1));
        for vertical in [true, false] {
            let (a_lo, a_hi, b_lo, b_hi) = if vertical {
                (ra.min.x, ra.max.x, rb.min.x, rb.max.x)
            } else {
                (ra.min.y, ra.max.y, rb.min.y, rb.max.y)
            };
            let (o_a, o_b) = if vertical {
                overlap(ra.min.y, ra.max.y, rb.min.y, rb.max.y)
            } else {
                overlap(ra.min.x, ra.max.x, rb.min.x, rb.max.x)
            };
            if o_b <= o_a {
                continue;
            }
            let faces = if close(b_lo - a_hi, t) {
                Some((a_hi, b_lo))
            } else if close(a_lo - b_hi, t) {
                Some((b_hi, a_lo))
            } else {
                None
            };
            if let Some((lo, hi)) = faces {
                return Some(SharedWall {
                    vertical,
                    lo,
                    hi,
                    along: (o_a, o_b),
                });
            }
        }
        None
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidLayout(m));
        if self.rooms.is_empty() {
            return bad("no rooms".into());
        }
        let positive = [
            ("wall_thickness", self.wall_thickness),
            ("ceiling_height", self.ceiling_height),
            ("ceiling_density", self.ceiling_density),
            ("wall_band", self.wall_band),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.floor_density >= 0.0) || !(self.wall_density >= 0.0) || !(self.noise_sigma >= 0.0) {
            return bad("densities and noise must be non-negative".into());
        }
        if self.wall_band > self.ceiling_height {
            return bad("wall band exceeds ceiling height".into());
        }
        let mut ids = BTreeSet::new();
        for r in &self.rooms {
            if !(r.max.x > r.min.x && r.max.y > r.min.y) {
                return bad(format!("room {} has an empty rectangle", r.id));
            }
            if !ids.insert(r.id.as_str()) {
                return bad(format!("duplicate room id {}", r.id));
            }
        }
        for (i, a) in self.rooms.iter().enumerate() {
            for b in &self.rooms[i + 1..] {
                let ox = a.max.x.min(b.max.x) - a.min.x.max(b.min.x);
                let oy = a.max.y.min(b.max.y) - a.min.y.max(b.min.y);
                if ox > 0.0 && oy > 0.0 {
                    return bad(format!("rooms {} and {} overlap", a.id, b.id));
                }
            }
        }
        for d in &self.doors {
            let (Some(a), Some(b)) = (self.room(&d.rooms[0]), self.room(&d.rooms[1])) else {
                return bad(format!("door references unknown room in {:?}", d.rooms));
            };
            let Some(w) = (a != b).then(|| self.shared_wall(a, b)).flatten() else {
                return bad(format!("rooms {} and {} share no wall", d.rooms[0], d.rooms[1]));
            };
            if !(d.start < d.end) || d.start < w.along.0 || d.end > w.along.1 {
                return bad(format!(
                    "door [{}, {}] not within shared wall [{}, {}]",
                    d.start, d.end, w.along.0, w.along.1
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharedWall {
    /// Wall runs along y (its faces are at constant x).
    pub vertical: bool,
    /// Face coordinates across the wall.
    pub lo: f64,
    pub hi: f64,
    /// Extent along the wall shared by both rooms.
    pub along: (f64, f64),
}

impl SharedWall {
    fn point(&self, across: f64, along: f64) -> Point2 {
        if self.vertical {
            Point2::new(across, along)
        } else {
            Point2::new(along, across)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub spec: SceneSpec,
    pub seed: u64,
    pub cloud: PointCloud,
    pub gt: GroundTruth,
    /// Room index pairs that share a wall, by room id, sorted.
    pub adjacency: BTreeSet<(String, String)>,
    /// Door truth on the wall midline.
    pub doors: Vec<DoorSegment>,
}

impl SyntheticScene {
    /// Truth room masks in `frame`, pixel centers inside each rectangle.
    pub fn truth_masks(&self, frame: &ProjectionFrame) -> Vec<BinaryRaster> {
        self.gt.rooms.iter().map(|r| rasterize_polygon(r, frame)).collect()
    }

    /// Writes `cloud.xyz`, `gt.json`, `doors.json` and, given a frame,
    /// `frame.json` plus `truth/<id>.png`.
    pub fn write_dir(&self, dir: &Path, frame: Option<&ProjectionFrame>) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("cloud.xyz"), write_xyz(&self.cloud))?;
        self.gt.write_json(&dir.join("gt.json"))?;
        fs::write(dir.join("doors.json"), serde_json::to_vec_pretty(&self.doors)?)?;
        if let Some(frame) = frame {
            frame.write_json(&dir.join("frame.json"))?;
            let truth = dir.join("truth");
            fs::create_dir_all(&truth)?;
            for (room, mask) in self.spec.rooms.iter().zip(self.truth_masks(frame)) {
                write_gray_png(&truth.join(format!("{}.png", room.id)), &mask.map(|&b| if b { 255 } else { 0 }))?;
            }
        }
        Ok(())
    }
}

fn sample_count(rate: f64) -> usize {
    rate.round().max(0.0) as usize
}

/// Samples the scene. The same spec and seed always give the same cloud.
pub fn generate_synthetic(spec: &SceneSpec, seed: u64) -> Result<SyntheticScene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::InvalidLayout(e.to_string()))?;
    let h = spec.ceiling_height;
    let mut pts = Vec::new();

    for r in &spec.rooms {
        let (w, d) = (r.max.x - r.min.x, r.max.y - r.min.y);
        for (density, z) in [(spec.ceiling_density, h), (spec.floor_density, 0.0)] {
            for _ in 0..sample_count(density * w * d) {
                let x = r.min.x + rng.random::<f64>() * w;
                let y = r.min.y + rng.random::<f64>() * d;
                pts.push(Point3::new(x, y, z + noise.sample(&mut rng)));
            }
        }
    }

    // Door gaps: (room, edge is horizontal, edge coordinate, start, end).
    let mut gaps = Vec::new();
    for d in &spec.doors {
        let a = spec.room(&d.rooms[0]).unwrap();
        let b = spec.room(&d.rooms[1]).unwrap();
        let w = spec.shared_wall(a, b).unwrap();
        for (room, face) in [(a, w.lo), (a, w.hi), (b, w.lo), (b, w.hi)] {
            gaps.push((room, !w.vertical, face, d.start, d.end));
        }
    }

    for (ri, r) in spec.rooms.iter().enumerate() {
        let c = r.polygon();
        for k in 0..4 {
            let (p, q) = (c[k], c[(k + 1) % 4]);
            let len = p.dist(q);
            let horizontal = p.y == q.y;
            let face = if horizontal { p.y } else { p.x };
            let in_door = |at: Point2| {
                let along = if horizontal { at.x } else { at.y };
                gaps.iter().any(|&(room, hz, f, s, e)| {
                    room == ri && hz == horizontal && f == face && along >= s && along <= e
                })
            };
            let normal = (q - p).normalized().perp();
            for _ in 0..sample_count(spec.wall_density * len) {
                let t: f64 = rng.random();
                let z = h - rng.random::<f64>() * spec.wall_band + noise.sample(&mut rng);
                let off = noise.sample(&mut rng);
                let on_face = p.lerp(q, t);
                if in_door(on_face) {
                    continue;
                }
                let at = on_face + normal * off;
                pts.push(Point3::new(at.x, at.y, z));
            }
        }
    }

    let mut adjacency = BTreeSet::new();
    for a in 0..spec.rooms.len() {
        for b in a + 1..spec.rooms.len() {
            if spec.shared_wall(a, b).is_some() {
                let (x, y) = (spec.rooms[a].id.clone(), spec.rooms[b].id.clone());
                adjacency.insert(if x <= y { (x, y) } else { (y, x) });
            }
        }
    }
    let doors = spec
        .doors
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let a = spec.room(&d.rooms[0]).unwrap();
            let b = spec.room(&d.rooms[1]).unwrap();
            let w = spec.shared_wall(a, b).unwrap();
            let (s, e) = (d.start, d.end);
            let mid = 0.5 * (w.lo + w.hi);
            let mut rooms = d.rooms.clone();
            rooms.sort();
            DoorSegment {
                id: format!("d{k}"),
                rooms,
                p0: w.point(mid, s),
                p1: w.point(mid, e),
            }
        })
        .collect();

    let rooms: Vec<Vec<Point2>> = spec.rooms.iter().map(RoomSpec::polygon).collect();
    let boundaries: Vec<Segment> = rooms
        .iter()
        .flat_map(|poly| (0..poly.len()).map(move |i| [poly[i], poly[(i + 1) % poly.len()]]))
        .collect();

    Ok(SyntheticScene {
        spec: spec.clone(),
        seed,
        cloud: PointCloud::new(pts)?,
        gt: GroundTruth { rooms, boundaries },
        adjacency,
        doors,
    })
}
