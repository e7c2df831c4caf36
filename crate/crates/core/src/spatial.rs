//! Uniform hash-grid indices for radius and nearest-neighbor queries.

use std::collections::HashMap;

use crate::geom::Point2;
use crate::ingest::Point3;

pub struct Grid2 {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<u32>>,
    lo: (i64, i64),
    hi: (i64, i64),
}

impl Grid2 {
    pub fn new(points: &[Point2], cell: f64) -> Self {
        assert!(cell > 0.0);
        let mut cells: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(key2(*p, cell)).or_default().push(i as u32);
        }
        let (mut lo, mut hi) = ((i64::MAX, i64::MAX), (i64::MIN, i64::MIN));
        for k in cells.keys() {
            lo = (lo.0.min(k.0), lo.1.min(k.1));
            hi = (hi.0.max(k.0), hi.1.max(k.1));
        }
        Grid2 { cell, cells, lo, hi }
    }

    /// Indices of points within `r` of `q` (inclusive), in ascending order.
    pub fn within(&self, points: &[Point2], q: Point2, r: f64) -> Vec<usize> {
        let span = (r / self.cell).ceil() as i64;
        let (ci, cj) = key2(q, self.cell);
        let r2 = r * r;
        let mut out = Vec::new();
        for i in ci - span..=ci + span {
            for j in cj - span..=cj + span {
                if let Some(ids) = self.cells.get(&(i, j)) {
                    out.extend(
                        ids.iter()
                            .map(|&k| k as usize)
                            .filter(|&k| points[k].dist2(q) <= r2),
                    );
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Nearest point to `q`, as `(index, distance)`.
    pub fn nearest(&self, points: &[Point2], q: Point2) -> Option<(usize, f64)> {
        if points.is_empty() {
            return None;
        }
        let (ci, cj) = key2(q, self.cell);
        let mut best: Option<(usize, f64)> = None;
        let max_ring = self.max_ring(ci, cj);
        for ring in 0..=max_ring {
            for i in ci - ring..=ci + ring {
                for j in cj - ring..=cj + ring {
                    if (i - ci).abs() != ring && (j - cj).abs() != ring {
                        continue;
                    }
                    let Some(ids) = self.cells.get(&(i, j)) else {
                        continue;
                    };
                    for &k in ids {
                        let d = points[k as usize].dist2(q);
                        if best.is_none_or(|(bk, bd)| d < bd || (d == bd && (k as usize) < bk)) {
                            best = Some((k as usize, d));
                        }
                    }
                }
            }
            if let Some((_, d2)) = best {
                let reach = ring as f64 * self.cell;
                if d2 <= reach * reach {
                    break;
                }
            }
        }
        best.map(|(k, d2)| (k, d2.sqrt()))
    }

    fn max_ring(&self, ci: i64, cj: i64) -> i64 {
        let di = (ci - self.lo.0).abs().max((self.hi.0 - ci).abs());
        let dj = (cj - self.lo.1).abs().max((self.hi.1 - cj).abs());
        di.max(dj) + 1
    }
}

fn key2(p: Point2, cell: f64) -> (i64, i64) {
    ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64)
}

const SHELL_LIMIT: i64 = 6;

pub struct Grid3 {
    cell: f64,
    cells: HashMap<(i64, i64, i64), Vec<u32>>,
    max_ring: i64,
}

impl Grid3 {
    pub fn new(points: &[Point3], cell: f64) -> Self {
        assert!(cell > 0.0);
        let mut cells: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(key3(p, cell)).or_default().push(i as u32);
        }
        let (mut lo, mut hi) = ((i64::MAX, i64::MAX, i64::MAX), (i64::MIN, i64::MIN, i64::MIN));
        for k in cells.keys() {
            lo = (lo.0.min(k.0), lo.1.min(k.1), lo.2.min(k.2));
            hi = (hi.0.max(k.0), hi.1.max(k.1), hi.2.max(k.2));
        }
        let max_ring = (hi.0 - lo.0).max(hi.1 - lo.1).max(hi.2 - lo.2).max(0) + 1;
        Grid3 {
            cell,
            cells,
            max_ring,
        }
    }

    /// Distance from `points[idx]` to its nearest other point.
    pub fn nearest_other(&self, points: &[Point3], idx: usize) -> Option<f64> {
        let q = &points[idx];
        let (ci, cj, ck) = key3(q, self.cell);
        let mut best = f64::INFINITY;
        for ring in 0..=self.max_ring {
            if ring > SHELL_LIMIT {
                // Isolated point: a linear scan beats walking huge empty shells.
                let far = (0..points.len())
                    .filter(|&o| o != idx)
                    .map(|o| points[o].dist2(q))
                    .fold(f64::INFINITY, f64::min);
                best = best.min(far);
                break;
            }
            for i in ci - ring..=ci + ring {
                for j in cj - ring..=cj + ring {
                    for k in ck - ring..=ck + ring {
                        let on_shell = (i - ci).abs() == ring
                            || (j - cj).abs() == ring
                            || (k - ck).abs() == ring;
                        if !on_shell {
                            continue;
                        }
                        if let Some(ids) = self.cells.get(&(i, j, k)) {
                            for &o in ids {
                                if o as usize != idx {
                                    best = best.min(points[o as usize].dist2(q));
                                }
                            }
                        }
                    }
                }
            }
            let reach = ring as f64 * self.cell;
            if best <= reach * reach {
                break;
            }
        }
        best.is_finite().then(|| best.sqrt())
    }
}

fn key3(p: &Point3, cell: f64) -> (i64, i64, i64) {
    (
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn radius_and_nearest_match_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Point2> = (0..400)
            .map(|_| Point2::new(rng.random_range(0.0..4.0), rng.random_range(0.0..4.0)))
            .collect();
        let grid = Grid2::new(&pts, 0.3);
        for _ in 0..50 {
            let q = Point2::new(rng.random_range(-1.0..5.0), rng.random_range(-1.0..5.0));
            let got = grid.within(&pts, q, 0.45);
            let expect: Vec<usize> = (0..pts.len()).filter(|&i| pts[i].dist(q) <= 0.45).collect();
            assert_eq!(got, expect);
            let (_, d) = grid.nearest(&pts, q).unwrap();
            let bf = pts.iter().map(|p| p.dist2(q)).fold(f64::INFINITY, f64::min).sqrt();
            assert_eq!(d, bf);
        }
    }

    #[test]
    fn nearest_other_in_3d() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<Point3> = (0..300)
            .map(|_| Point3::new(rng.random(), rng.random::<f64>() * 3.0, rng.random()))
            .collect();
        let grid = Grid3::new(&pts, 0.07);
        for i in 0..pts.len() {
            let bf = (0..pts.len())
                .filter(|&j| j != i)
                .map(|j| pts[i].dist2(&pts[j]))
                .fold(f64::INFINITY, f64::min)
                .sqrt();
            assert_eq!(grid.nearest_other(&pts, i).unwrap(), bf);
        }
    }
}
