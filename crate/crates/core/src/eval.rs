//! Room-count and boundary precision/recall scoring against ground truth.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::density::ProjectionFrame;
use crate::error::{Error, Result};
use crate::geom::{point_in_polygon, Point2};
use crate::raster::{read_gray_png, BinaryRaster, Raster};
use crate::topology::FloorPlan;

pub type Segment = [Point2; 2];

/// `gt.json`: room polygons and boundary segments in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub rooms: Vec<Vec<Point2>>,
    pub boundaries: Vec<Segment>,
}

impl GroundTruth {
    pub fn read_json(path: &Path) -> Result<GroundTruth> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}

/// Pixels whose centers fall inside `poly`.
pub fn rasterize_polygon(poly: &[Point2], frame: &ProjectionFrame) -> BinaryRaster {
    let mut out = Raster::filled(frame.width, frame.height, false);
    if poly.len() < 3 {
        return out;
    }
    let s = frame.pixel_size;
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in poly {
        (x0, y0, x1, y1) = (x0.min(p.x), y0.min(p.y), x1.max(p.x), y1.max(p.y));
    }
    let m0 = (((x0 - frame.x_min) / s - 0.5).floor().max(0.0)) as usize;
    let n0 = (((y0 - frame.y_min) / s - 0.5).floor().max(0.0)) as usize;
    let m1 = ((((x1 - frame.x_min) / s).ceil()).max(0.0) as usize).min(frame.width);
    let n1 = ((((y1 - frame.y_min) / s).ceil()).max(0.0) as usize).min(frame.height);
    for n in n0..n1 {
        for m in m0..m1 {
            if point_in_polygon(frame.pixel_center(m as f64, n as f64), poly) {
                out.set(m, n, true);
            }
        }
    }
    out
}

/// Ground-truth masks from a directory of PNGs (foreground ≥ 128), in file
/// name order.
pub fn read_mask_dir(dir: &Path, frame: &ProjectionFrame) -> Result<Vec<BinaryRaster>> {
    let mut files: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "png"))
        .collect();
    files.sort();
    files
        .iter()
        .map(|p| {
            let img = read_gray_png(p)?;
            if img.dims() != (frame.width, frame.height) {
                return Err(Error::FrameMismatch(format!(
                    "{} is {:?}, frame is {}x{}",
                    p.display(),
                    img.dims(),
                    frame.width,
                    frame.height
                )));
            }
            Ok(img.map(|&v| v >= 128))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomMatch {
    pub pred: usize,
    pub gt: usize,
    pub ratio: f64,
}

/// Greedy one-to-one matching by descending `|pred ∩ gt| / |gt|`; a pair
/// matches when the ratio exceeds `thresh`.
pub fn match_rooms(pred: &[BinaryRaster], gt: &[BinaryRaster], thresh: f64) -> Result<Vec<RoomMatch>> {
    let mut cands = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gt.iter().enumerate() {
            if p.dims() != g.dims() {
                return Err(Error::FrameMismatch(format!(
                    "prediction {:?} vs truth {:?}",
                    p.dims(),
                    g.dims()
                )));
            }
            let area = g.count();
            if area == 0 {
                continue;
            }
            let ratio = p.intersection_count(g) as f64 / area as f64;
            if ratio > thresh {
                cands.push(RoomMatch { pred: i, gt: j, ratio });
            }
        }
    }
    cands.sort_by(|a, b| {
        b.ratio
            .total_cmp(&a.ratio)
            .then(a.pred.cmp(&b.pred))
            .then(a.gt.cmp(&b.gt))
    });
    let (mut used_p, mut used_g) = (vec![false; pred.len()], vec![false; gt.len()]);
    let mut out = Vec::new();
    for c in cands {
        if !used_p[c.pred] && !used_g[c.gt] {
            used_p[c.pred] = true;
            used_g[c.gt] = true;
            out.push(c);
        }
    }
    Ok(out)
}

/// Larger endpoint distance under the better of the two endpoint pairings.
pub fn endpoint_distance(a: &Segment, b: &Segment) -> f64 {
    let straight = a[0].dist(b[0]).max(a[1].dist(b[1]));
    let crossed = a[0].dist(b[1]).max(a[1].dist(b[0]));
    straight.min(crossed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentMatch {
    pub pred: usize,
    pub gt: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryScore {
    pub boundary_true: usize,
    pub boundary_all: usize,
    pub boundary_gt: usize,
    pub precision: f64,
    pub recall: f64,
    /// Set when there were no predicted segments (precision reported as 0).
    pub empty_prediction: bool,
    pub matches: Vec<SegmentMatch>,
}

pub fn precision(boundary_true: usize, boundary_all: usize) -> f64 {
    if boundary_all == 0 {
        0.0
    } else {
        boundary_true as f64 / boundary_all as f64
    }
}

pub fn recall(boundary_true: usize, boundary_gt: usize) -> f64 {
    if boundary_gt == 0 {
        0.0
    } else {
        boundary_true as f64 / boundary_gt as f64
    }
}

/// Greedy one-to-one segment matching by ascending endpoint distance; a pair
/// matches when both endpoints are within `tol`.
pub fn match_boundaries(pred: &[Segment], gt: &[Segment], tol: f64) -> Result<BoundaryScore> {
    if gt.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    let mut cands = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, g) in gt.iter().enumerate() {
            let d = endpoint_distance(p, g);
            if d <= tol {
                cands.push(SegmentMatch { pred: i, gt: j, distance: d });
            }
        }
    }
    cands.sort_by(|a, b| {
        a.distance
            .partial_cmp(&b.distance)
            .unwrap_or(Ordering::Equal)
            .then(a.pred.cmp(&b.pred))
            .then(a.gt.cmp(&b.gt))
    });
    let (mut used_p, mut used_g) = (vec![false; pred.len()], vec![false; gt.len()]);
    let mut matches = Vec::new();
    for c in cands {
        if !used_p[c.pred] && !used_g[c.gt] {
            used_p[c.pred] = true;
            used_g[c.gt] = true;
            matches.push(c);
        }
    }
    let t = matches.len();
    Ok(BoundaryScore {
        boundary_true: t,
        boundary_all: pred.len(),
        boundary_gt: gt.len(),
        precision: precision(t, pred.len()),
        recall: recall(t, gt.len()),
        empty_prediction: pred.is_empty(),
        matches,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    pub overlap: f64,
    /// Endpoint tolerance in meters.
    pub endpoint_tol: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            overlap: 0.95,
            endpoint_tol: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub room_true: usize,
    pub room_all: usize,
    pub room_gt: usize,
    pub precision_boundary: f64,
    pub recall_boundary: f64,
    pub boundary_true: usize,
    pub boundary_all: usize,
    pub boundary_gt: usize,
    pub empty_prediction: bool,
    pub endpoint_tol: f64,
    pub room_matches: Vec<RoomMatch>,
    pub segment_matches: Vec<SegmentMatch>,
}

impl EvalReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}

/// Every polygon edge of every room.
pub fn plan_segments(plan: &FloorPlan) -> Vec<Segment> {
    plan.rooms
        .iter()
        .flat_map(|r| {
            let n = r.polygon.len();
            (0..n).map(move |i| [r.polygon[i], r.polygon[(i + 1) % n]])
        })
        .collect()
}

pub fn evaluate_with_masks(
    plan: &FloorPlan,
    gt_masks: &[BinaryRaster],
    gt_boundaries: &[Segment],
    params: &EvalParams,
) -> Result<EvalReport> {
    let pred: Vec<BinaryRaster> = plan
        .rooms
        .iter()
        .map(|r| rasterize_polygon(&r.polygon, &plan.frame))
        .collect();
    let rooms = match_rooms(&pred, gt_masks, params.overlap)?;
    let b = match_boundaries(&plan_segments(plan), gt_boundaries, params.endpoint_tol)?;
    Ok(EvalReport {
        room_true: rooms.len(),
        room_all: pred.len(),
        room_gt: gt_masks.len(),
        precision_boundary: b.precision,
        recall_boundary: b.recall,
        boundary_true: b.boundary_true,
        boundary_all: b.boundary_all,
        boundary_gt: b.boundary_gt,
        empty_prediction: b.empty_prediction,
        endpoint_tol: params.endpoint_tol,
        room_matches: rooms,
        segment_matches: b.matches,
    })
}

/// Scores `plan` against polygon ground truth rasterized in the plan's frame.
pub fn evaluate(plan: &FloorPlan, gt: &GroundTruth, params: &EvalParams) -> Result<EvalReport> {
    let masks: Vec<BinaryRaster> = gt
        .rooms
        .iter()
        .map(|r| rasterize_polygon(r, &plan.frame))
        .collect();
    evaluate_with_masks(plan, &masks, &gt.boundaries, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(x0: f64, y0: f64, x1: f64, y1: f64) -> Segment {
        [Point2::new(x0, y0), Point2::new(x1, y1)]
    }

    #[test]
    fn identical_segments_score_one() {
        let gt = vec![seg(0.0, 0.0, 1.0, 0.0), seg(1.0, 0.0, 1.0, 1.0)];
        let s = match_boundaries(&gt, &gt, 0.005).unwrap();
        assert_eq!((s.precision, s.recall), (1.0, 1.0));
    }

    #[test]
    fn reversed_segment_matches() {
        let a = [seg(0.0, 0.0, 2.0, 0.0)];
        let b = [seg(2.0, 0.001, 0.0, 0.0)];
        assert_eq!(match_boundaries(&a, &b, 0.005).unwrap().boundary_true, 1);
    }

    #[test]
    fn empty_cases() {
        assert!(matches!(match_boundaries(&[seg(0.0, 0.0, 1.0, 1.0)], &[], 0.1), Err(Error::EmptyGroundTruth)));
        let s = match_boundaries(&[], &[seg(0.0, 0.0, 1.0, 1.0)], 0.1).unwrap();
        assert!(s.empty_prediction);
        assert_eq!(s.precision, 0.0);
    }

    #[test]
    fn rasterized_square_room_matches_itself() {
        let frame = ProjectionFrame {
            x_min: 0.0,
            y_min: 0.0,
            pixel_size: 0.1,
            width: 50,
            height: 50,
        };
        let sq = vec![
            Point2::new(1.0, 1.0),
            Point2::new(3.0, 1.0),
            Point2::new(3.0, 3.0),
            Point2::new(1.0, 3.0),
        ];
        let m = rasterize_polygon(&sq, &frame);
        assert_eq!(m.count(), 400);
        let half = rasterize_polygon(
            &[
                Point2::new(1.0, 1.0),
                Point2::new(2.0, 1.0),
                Point2::new(2.0, 3.0),
                Point2::new(1.0, 3.0),
            ],
            &frame,
        );
        assert_eq!(match_rooms(std::slice::from_ref(&m), std::slice::from_ref(&m), 0.95).unwrap().len(), 1);
        assert!(match_rooms(&[half], &[m], 0.95).unwrap().is_empty());
    }
}
