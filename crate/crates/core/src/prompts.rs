//! Density-peak prompt points for the segmenter.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Raster;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PromptPoint {
    pub m: usize,
    pub n: usize,
    pub score: f64,
}

impl PromptPoint {
    fn dist2(&self, o: &PromptPoint) -> f64 {
        let dm = self.m as f64 - o.m as f64;
        let dn = self.n as f64 - o.n as f64;
        dm * dm + dn * dn
    }
}

/// Selected prompts, in selection order. Serialized as `prompts.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSet {
    pub tau: f64,
    pub min_dist_px: u32,
    pub points: Vec<PromptPoint>,
}

impl PromptSet {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<PromptSet> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

/// Which pixels the threshold mean is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanMode {
    #[default]
    All,
    Nonzero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptParams {
    pub pool: usize,
    pub tau_factor: f64,
    pub mean_mode: MeanMode,
    pub min_dist_px: u32,
}

impl Default for PromptParams {
    fn default() -> Self {
        PromptParams {
            pool: 11,
            tau_factor: 0.9,
            mean_mode: MeanMode::All,
            min_dist_px: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidates {
    pub tau: f64,
    /// Raster scan order.
    pub points: Vec<PromptPoint>,
}

pub fn threshold(enhanced: &Raster<u8>, factor: f64, mode: MeanMode) -> f64 {
    let (sum, count) = enhanced
        .data()
        .iter()
        .filter(|&&v| mode == MeanMode::All || v > 0)
        .fold((0u64, 0u64), |(s, c), &v| (s + v as u64, c + 1));
    if count == 0 {
        0.0
    } else {
        factor * sum as f64 / count as f64
    }
}

/// Pixels equal to their `pool × pool` neighborhood maximum (window clipped
/// at the border) and at least `tau`.
pub fn detect_peaks(
    enhanced: &Raster<u8>,
    pool: usize,
    tau_factor: f64,
    mode: MeanMode,
) -> Result<Candidates> {
    if enhanced.data().is_empty() {
        return Err(Error::EmptyRaster);
    }
    if pool < 3 || pool.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "pool must be odd and ≥ 3, got {pool}"
        )));
    }
    let tau = threshold(enhanced, tau_factor, mode);
    let local_max = max_filter(enhanced, pool / 2);
    let mut points = Vec::new();
    for n in 0..enhanced.height() {
        for m in 0..enhanced.width() {
            let v = *enhanced.get(m, n);
            if v == *local_max.get(m, n) && v as f64 >= tau {
                points.push(PromptPoint {
                    m,
                    n,
                    score: v as f64,
                });
            }
        }
    }
    Ok(Candidates { tau, points })
}

fn max_filter(img: &Raster<u8>, r: usize) -> Raster<u8> {
    let (w, h) = img.dims();
    let mut tmp = Raster::filled(w, h, 0u8);
    for n in 0..h {
        for m in 0..w {
            let lo = m.saturating_sub(r);
            let hi = (m + r).min(w - 1);
            let v = (lo..=hi).map(|x| *img.get(x, n)).max().unwrap_or(0);
            tmp.set(m, n, v);
        }
    }
    let mut out = Raster::filled(w, h, 0u8);
    for n in 0..h {
        let lo = n.saturating_sub(r);
        let hi = (n + r).min(h - 1);
        for m in 0..w {
            let v = (lo..=hi).map(|y| *tmp.get(m, y)).max().unwrap_or(0);
            out.set(m, n, v);
        }
    }
    out
}

/// Highest score first, ties by `(m, n)`.
pub fn rank_order(a: &PromptPoint, b: &PromptPoint) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.m.cmp(&b.m))
        .then(a.n.cmp(&b.n))
}

/// Greedy spacing: walk candidates in rank order, keeping each one that is
/// at least `min_dist_px` from every point kept so far.
pub fn enforce_min_distance(candidates: &Candidates, min_dist_px: u32) -> PromptSet {
    let mut order = candidates.points.clone();
    order.sort_by(rank_order);
    let d = min_dist_px as f64;
    let d2 = d * d;
    let mut kept: Vec<PromptPoint> = Vec::new();
    if min_dist_px == 0 {
        kept = order;
    } else {
        // Bucket kept points by cells of side `d`; any conflict lies in the
        // 3×3 block of cells around a candidate.
        let cell = |p: &PromptPoint| ((p.m as f64 / d) as i64, (p.n as f64 / d) as i64);
        let mut buckets: std::collections::HashMap<(i64, i64), Vec<usize>> =
            std::collections::HashMap::new();
        for p in order {
            let (ci, cj) = cell(&p);
            let blocked = (ci - 1..=ci + 1).any(|i| {
                (cj - 1..=cj + 1).any(|j| {
                    buckets
                        .get(&(i, j))
                        .is_some_and(|ids| ids.iter().any(|&k| kept[k].dist2(&p) < d2))
                })
            });
            if !blocked {
                buckets.entry((ci, cj)).or_default().push(kept.len());
                kept.push(p);
            }
        }
    }
    PromptSet {
        tau: candidates.tau,
        min_dist_px,
        points: kept,
    }
}

pub fn extract_prompts(enhanced: &Raster<u8>, params: &PromptParams) -> Result<PromptSet> {
    let cands = detect_peaks(enhanced, params.pool, params.tau_factor, params.mean_mode)?;
    Ok(enforce_min_distance(&cands, params.min_dist_px))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_bright_pixel() {
        let mut img = Raster::filled(20, 20, 0u8);
        img.set(7, 12, 200);
        let c = detect_peaks(&img, 5, 0.9, MeanMode::All).unwrap();
        assert_eq!(c.points.len(), 1);
        assert_eq!((c.points[0].m, c.points[0].n), (7, 12));
    }

    #[test]
    fn uniform_image_all_qualify() {
        let img = Raster::filled(9, 6, 40u8);
        let c = detect_peaks(&img, 3, 0.9, MeanMode::All).unwrap();
        assert_eq!(c.points.len(), 54);
        assert!((c.tau - 36.0).abs() < 1e-12);
    }

    #[test]
    fn nonzero_mean_mode_raises_threshold() {
        let mut img = Raster::filled(10, 10, 0u8);
        img.set(1, 1, 100);
        img.set(8, 8, 50);
        assert!(threshold(&img, 0.9, MeanMode::Nonzero) > threshold(&img, 0.9, MeanMode::All));
        let c = detect_peaks(&img, 3, 0.9, MeanMode::Nonzero).unwrap();
        assert_eq!(c.points.len(), 1);
    }

    #[test]
    fn peak_errors() {
        let img: Raster<u8> = Raster::filled(0, 0, 0);
        assert!(matches!(detect_peaks(&img, 3, 0.9, MeanMode::All), Err(Error::EmptyRaster)));
        let img = Raster::filled(4, 4, 1u8);
        assert!(detect_peaks(&img, 4, 0.9, MeanMode::All).is_err());
    }

    #[test]
    fn close_pair_keeps_higher_score() {
        let cands = Candidates {
            tau: 0.0,
            points: vec![
                PromptPoint { m: 0, n: 0, score: 5.0 },
                PromptPoint { m: 3, n: 4, score: 9.0 },
            ],
        };
        let set = enforce_min_distance(&cands, 10);
        assert_eq!(set.points.len(), 1);
        assert_eq!(set.points[0].score, 9.0);
        assert_eq!(enforce_min_distance(&cands, 0).points.len(), 2);
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let set = PromptSet {
            tau: 12.5,
            min_dist_px: 10,
            points: vec![PromptPoint { m: 3, n: 4, score: 200.0 }],
        };
        let path = dir.path().join("prompts.json");
        set.write_json(&path).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
        assert_eq!(v["points"][0]["m"], 3);
        assert_eq!(v["min_dist_px"], 10);
        assert_eq!(PromptSet::read_json(&path).unwrap(), set);
    }
}
