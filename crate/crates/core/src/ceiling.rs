//! Ceiling-adjacent point retention and ceiling plane fitting.
//!
//! The XOY plane is cut into square cells of side `gamma`; a point survives
//! when it sits within `delta_z` of the highest point of its cell. Furniture
//! and floor returns under a ceiling disappear, wall tops remain.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Point3, PointCloud};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridCell {
    pub m: u64,
    pub n: u64,
}

impl GridCell {
    pub fn of(p: &Point3, x_min: f64, y_min: f64, gamma: f64) -> GridCell {
        GridCell {
            m: ((p.x - x_min) / gamma).floor() as u64,
            n: ((p.y - y_min) / gamma).floor() as u64,
        }
    }
}

/// Which maximum the height tolerance is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxScope {
    #[default]
    PerCell,
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CeilingParams {
    pub gamma: f64,
    pub delta_z: f64,
    pub scope: MaxScope,
}

impl Default for CeilingParams {
    fn default() -> Self {
        CeilingParams {
            gamma: 0.1,
            delta_z: 0.1,
            scope: MaxScope::PerCell,
        }
    }
}

/// Per-cell retention with the given grid size and height tolerance.
pub fn grid_ceiling_filter(pc: &PointCloud, gamma: f64, delta_z: f64) -> Result<PointCloud> {
    filter_ceiling(
        pc,
        &CeilingParams {
            gamma,
            delta_z,
            scope: MaxScope::PerCell,
        },
    )
}

pub fn filter_ceiling(pc: &PointCloud, params: &CeilingParams) -> Result<PointCloud> {
    let keep = ceiling_keep_mask(pc, params)?;
    pc.select(|i| keep[i])
}

/// `keep[i]` tells whether point `i` passes the height test.
pub fn ceiling_keep_mask(pc: &PointCloud, params: &CeilingParams) -> Result<Vec<bool>> {
    if !(params.gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma must be positive, got {}",
            params.gamma
        )));
    }
    if !(params.delta_z >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "delta_z must be non-negative, got {}",
            params.delta_z
        )));
    }
    if pc.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let b = pc.bounds();
    let pts = pc.points();
    let keep = match params.scope {
        MaxScope::Global => {
            let cut = b.max.z - params.delta_z;
            pts.iter().map(|p| p.z >= cut).collect()
        }
        MaxScope::PerCell => {
            let cells: Vec<GridCell> = pts
                .iter()
                .map(|p| GridCell::of(p, b.min.x, b.min.y, params.gamma))
                .collect();
            let mut top: HashMap<GridCell, f64> = HashMap::new();
            for (c, p) in cells.iter().zip(pts) {
                top.entry(*c)
                    .and_modify(|z| *z = z.max(p.z))
                    .or_insert(p.z);
            }
            cells
                .iter()
                .zip(pts)
                .map(|(c, p)| p.z >= top[c] - params.delta_z)
                .collect()
        }
    };
    Ok(keep)
}

/// Plane `a·x + b·y + c·z + d = 0` with unit normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneModel {
    pub normal: [f64; 3],
    pub d: f64,
    pub inliers: Vec<usize>,
}

impl PlaneModel {
    pub fn distance(&self, p: &Point3) -> f64 {
        (self.normal[0] * p.x + self.normal[1] * p.y + self.normal[2] * p.z + self.d).abs()
    }

    fn from_normal_point(normal: [f64; 3], on: [f64; 3]) -> Option<PlaneModel> {
        let len = (normal[0] * normal[0] + normal[1] * normal[1] + normal[2] * normal[2]).sqrt();
        if !(len > 1e-12) {
            return None;
        }
        let mut n = normal.map(|v| v / len);
        // Canonical orientation: first nonzero component of (c, b, a) positive.
        let sign_ref = [n[2], n[1], n[0]]
            .into_iter()
            .find(|v| v.abs() > 1e-12)
            .unwrap_or(1.0);
        if sign_ref < 0.0 {
            n = n.map(|v| -v);
        }
        let d = -(n[0] * on[0] + n[1] * on[1] + n[2] * on[2]);
        Some(PlaneModel {
            normal: n,
            d,
            inliers: Vec::new(),
        })
    }

    fn collect_inliers(&mut self, pts: &[Point3], thresh: f64) {
        self.inliers = (0..pts.len())
            .filter(|&i| self.distance(&pts[i]) <= thresh)
            .collect();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacParams {
    pub dist_thresh: f64,
    pub max_iters: usize,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        RansacParams {
            dist_thresh: 0.05,
            max_iters: 1000,
            seed: 0,
        }
    }
}

/// RANSAC over random 3-point samples, each new best sample refit to its
/// inliers by least squares. The result is the best plane seen over the
/// sample sequence, so more iterations never return fewer inliers.
pub fn ransac_plane(
    pc: &PointCloud,
    dist_thresh: f64,
    max_iters: usize,
    seed: u64,
) -> Result<PlaneModel> {
    if !(dist_thresh > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "RANSAC threshold must be positive, got {dist_thresh}"
        )));
    }
    let pts = pc.points();
    if pts.len() < 3 {
        return Err(Error::DegenerateGeometry(format!(
            "plane fit needs 3 points, got {}",
            pts.len()
        )));
    }
    if all_collinear(pts) {
        return Err(Error::DegenerateGeometry("all points are collinear".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = pts.len();
    let mut best_sample = 0usize;
    let mut best: Option<PlaneModel> = None;
    for _ in 0..max_iters.max(1) {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let mut k = rng.random_range(0..n - 2);
        for lo in [i.min(j), i.max(j)] {
            if k >= lo {
                k += 1;
            }
        }
        let Some(mut cand) = plane_through(&pts[i], &pts[j], &pts[k]) else {
            continue;
        };
        cand.collect_inliers(pts, dist_thresh);
        if cand.inliers.len() <= best_sample {
            continue;
        }
        best_sample = cand.inliers.len();
        let cand = match refit(pts, &cand.inliers) {
            Some(mut r) => {
                r.collect_inliers(pts, dist_thresh);
                if r.inliers.len() >= cand.inliers.len() {
                    r
                } else {
                    cand
                }
            }
            None => cand,
        };
        if best
            .as_ref()
            .is_none_or(|b| cand.inliers.len() > b.inliers.len())
        {
            best = Some(cand);
        }
    }
    best.ok_or_else(|| Error::DegenerateGeometry("no non-degenerate sample drawn".into()))
}

fn plane_through(a: &Point3, b: &Point3, c: &Point3) -> Option<PlaneModel> {
    let u = [b.x - a.x, b.y - a.y, b.z - a.z];
    let v = [c.x - a.x, c.y - a.y, c.z - a.z];
    let n = [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ];
    let scale = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]) * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    let n2 = n[0] * n[0] + n[1] * n[1] + n[2] * n[2];
    if n2 <= 1e-20 * scale || n2 == 0.0 {
        return None;
    }
    PlaneModel::from_normal_point(n, [a.x, a.y, a.z])
}

fn centroid_cov(pts: &[Point3], idx: impl Iterator<Item = usize> + Clone) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut c = [0.0; 3];
    let mut cnt = 0.0;
    for i in idx.clone() {
        c[0] += pts[i].x;
        c[1] += pts[i].y;
        c[2] += pts[i].z;
        cnt += 1.0;
    }
    let c = c.map(|v| v / cnt);
    let mut cov = [[0.0; 3]; 3];
    for i in idx {
        let d = [pts[i].x - c[0], pts[i].y - c[1], pts[i].z - c[2]];
        for r in 0..3 {
            for s in 0..3 {
                cov[r][s] += d[r] * d[s];
            }
        }
    }
    (c, cov)
}

fn refit(pts: &[Point3], inliers: &[usize]) -> Option<PlaneModel> {
    if inliers.len() < 3 {
        return None;
    }
    let (c, cov) = centroid_cov(pts, inliers.iter().copied());
    let (vals, vecs) = symmetric_eigen3(cov);
    let smallest = (0..3).min_by(|&a, &b| vals[a].total_cmp(&vals[b]))?;
    PlaneModel::from_normal_point([vecs[0][smallest], vecs[1][smallest], vecs[2][smallest]], c)
}

fn all_collinear(pts: &[Point3]) -> bool {
    let (_, cov) = centroid_cov(pts, 0..pts.len());
    let (mut vals, _) = symmetric_eigen3(cov);
    vals.sort_by(|a, b| b.total_cmp(a));
    vals[0] <= 0.0 || vals[1] <= 1e-12 * vals[0]
}

/// Cyclic Jacobi rotations; returns eigenvalues and column eigenvectors.
pub(crate) fn symmetric_eigen3(mut a: [[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _ in 0..64 {
        let off = a[0][1].abs() + a[0][2].abs() + a[1][2].abs();
        if off < 1e-300 {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            if a[p][q].abs() < 1e-300 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for k in 0..3 {
                let (akp, akq) = (a[k][p], a[k][q]);
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let (apk, aqk) = (a[p][k], a[q][k]);
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for row in v.iter_mut() {
                let (vp, vq) = (row[p], row[q]);
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    ([a[0][0], a[1][1], a[2][2]], v)
}
