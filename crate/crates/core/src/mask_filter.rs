//! Two-stage room-mask filtering.
//!
//! Coarse: connectivity/hole screen, IoU dedup, area and point-count screen.
//! Fine: IoU grouping, inclusion pruning, per-group representative, and a
//! greedy non-overlapping cover.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::density::ProjectionFrame;
use crate::error::{Error, Result};
use crate::raster::{label_components, Connectivity, Raster};
use crate::segmentation::MaskImage;

/// Inclusive pixel bounding box `(m0, n0, m1, n1)`.
pub type PixelBox = (usize, usize, usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct RoomMaskStats {
    pub mask: MaskImage,
    pub area_px: usize,
    pub area_m2: f64,
    pub component_count: usize,
    pub hole_count: usize,
    pub point_count: u64,
    pub bbox: PixelBox,
}

impl RoomMaskStats {
    /// `counts` is the per-pixel point tally of the filtered cloud in the
    /// same frame.
    pub fn compute(mask: MaskImage, pixel_size: f64, counts: &Raster<u32>) -> Result<Self> {
        if mask.mask.dims() != counts.dims() {
            return Err(Error::DimensionMismatch {
                a: mask.mask.dims(),
                b: counts.dims(),
            });
        }
        let (w, h) = mask.mask.dims();
        let mut area_px = 0usize;
        let mut point_count = 0u64;
        let mut bbox = (usize::MAX, usize::MAX, 0, 0);
        for n in 0..h {
            for m in 0..w {
                if *mask.mask.get(m, n) {
                    area_px += 1;
                    point_count += *counts.get(m, n) as u64;
                    bbox = (bbox.0.min(m), bbox.1.min(n), bbox.2.max(m), bbox.3.max(n));
                }
            }
        }
        let component_count = label_components(&mask.mask, |&b| b, Connectivity::Four).count as usize;
        let background = label_components(&mask.mask, |&b| !b, Connectivity::Eight);
        let touches = background.touches_border();
        let hole_count = (1..=background.count as usize).filter(|&l| !touches[l]).count();
        if area_px == 0 {
            bbox = (0, 0, 0, 0);
        }
        Ok(RoomMaskStats {
            area_m2: area_px as f64 * pixel_size * pixel_size,
            mask,
            area_px,
            component_count,
            hole_count,
            point_count,
            bbox,
        })
    }

    pub fn id(&self) -> &str {
        &self.mask.id
    }
}

/// Preference order used by every tie-break: larger area, then more points,
/// then smaller id. `Greater` means `a` is preferred.
pub fn preference(a: &RoomMaskStats, b: &RoomMaskStats) -> Ordering {
    a.area_px
        .cmp(&b.area_px)
        .then(a.point_count.cmp(&b.point_count))
        .then_with(|| b.mask.id.cmp(&a.mask.id))
}

fn boxes_overlap(a: PixelBox, b: PixelBox) -> bool {
    a.0 <= b.2 && b.0 <= a.2 && a.1 <= b.3 && b.1 <= a.3
}

fn intersection(a: &RoomMaskStats, b: &RoomMaskStats) -> usize {
    if !boxes_overlap(a.bbox, b.bbox) {
        return 0;
    }
    let (m0, n0) = (a.bbox.0.max(b.bbox.0), a.bbox.1.max(b.bbox.1));
    let (m1, n1) = (a.bbox.2.min(b.bbox.2), a.bbox.3.min(b.bbox.3));
    let mut c = 0;
    for n in n0..=n1 {
        for m in m0..=m1 {
            if *a.mask.mask.get(m, n) && *b.mask.mask.get(m, n) {
                c += 1;
            }
        }
    }
    c
}

fn iou_stats(a: &RoomMaskStats, b: &RoomMaskStats) -> f64 {
    let inter = intersection(a, b);
    let union = a.area_px + b.area_px - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn iou(a: &MaskImage, b: &MaskImage) -> Result<f64> {
    if a.mask.dims() != b.mask.dims() {
        return Err(Error::DimensionMismatch {
            a: a.mask.dims(),
            b: b.mask.dims(),
        });
    }
    let inter = a.mask.intersection_count(&b.mask);
    let union = a.mask.count() + b.mask.count() - inter;
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}

pub fn connectivity_screen(stats: &RoomMaskStats, max_holes: usize) -> bool {
    stats.component_count == 1 && stats.hole_count <= max_holes
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Connected components of the graph with an edge wherever IoU ≥ `thresh`.
/// Each component lists member indices ascending; components are ordered by
/// their smallest member.
fn iou_components(stats: &[RoomMaskStats], thresh: f64) -> Vec<Vec<usize>> {
    let k = stats.len();
    let mut parent: Vec<usize> = (0..k).collect();
    for i in 0..k {
        for j in i + 1..k {
            if iou_stats(&stats[i], &stats[j]) >= thresh {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut comps: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; k];
    for i in 0..k {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = comps.len();
            comps.push(Vec::new());
        }
        comps[slot[r]].push(i);
    }
    comps
}

fn best_of(stats: &[RoomMaskStats], members: &[usize]) -> usize {
    *members
        .iter()
        .max_by(|&&a, &&b| preference(&stats[a], &stats[b]))
        .expect("non-empty component")
}

/// Clusters masks by IoU ≥ `thresh` (transitive closure) and keeps the
/// preferred mask of each cluster. Survivors keep their input order.
pub fn dedup(stats: Vec<RoomMaskStats>, thresh: f64) -> Vec<RoomMaskStats> {
    let keep = dedup_keep(&stats, thresh);
    stats
        .into_iter()
        .zip(keep)
        .filter_map(|(s, k)| k.then_some(s))
        .collect()
}

fn dedup_keep(stats: &[RoomMaskStats], thresh: f64) -> Vec<bool> {
    let mut keep = vec![false; stats.len()];
    for comp in iou_components(stats, thresh) {
        keep[best_of(stats, &comp)] = true;
    }
    keep
}

/// Quantile by linear interpolation between order statistics (type 7).
/// `sorted` must be ascending and non-empty.
pub fn quantile_type7(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaBounds {
    pub lower_m2: f64,
    /// `None` when no candidate passed the lower bound.
    pub upper_m2: Option<f64>,
    pub min_points: u64,
}

/// Scales the base point threshold, stated for 0.05 m pixels, by
/// `(0.05 / s)²`.
pub fn scaled_min_points(base: f64, pixel_size: f64) -> u64 {
    (base * (0.05 / pixel_size).powi(2)).round() as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AreaVerdict {
    Keep,
    TooSmall,
    TooLarge,
    TooFewPoints,
}

pub fn area_bounds(
    stats: &[RoomMaskStats],
    scene_area_m2: f64,
    min_area_frac: f64,
    min_area_m2: f64,
    iqr_factor: f64,
    min_points: u64,
) -> AreaBounds {
    let lower_m2 = (min_area_frac * scene_area_m2).max(min_area_m2);
    let mut areas: Vec<f64> = stats
        .iter()
        .map(|s| s.area_m2)
        .filter(|&a| a >= lower_m2)
        .collect();
    areas.sort_by(f64::total_cmp);
    let upper_m2 = (!areas.is_empty()).then(|| {
        let q25 = quantile_type7(&areas, 0.25);
        let q75 = quantile_type7(&areas, 0.75);
        q75 + iqr_factor * (q75 - q25)
    });
    AreaBounds {
        lower_m2,
        upper_m2,
        min_points,
    }
}

pub fn area_verdict(s: &RoomMaskStats, b: &AreaBounds) -> AreaVerdict {
    if s.area_m2 < b.lower_m2 {
        AreaVerdict::TooSmall
    } else if b.upper_m2.is_some_and(|u| s.area_m2 > u) {
        AreaVerdict::TooLarge
    } else if s.point_count < b.min_points {
        AreaVerdict::TooFewPoints
    } else {
        AreaVerdict::Keep
    }
}

/// Keeps masks inside the area bounds with enough points.
pub fn area_point_screen(
    stats: Vec<RoomMaskStats>,
    scene_area_m2: f64,
    min_points: u64,
) -> (Vec<RoomMaskStats>, AreaBounds) {
    let b = area_bounds(&stats, scene_area_m2, 0.02, 1.0, 2.0, min_points);
    let kept = stats
        .into_iter()
        .filter(|s| area_verdict(s, &b) == AreaVerdict::Keep)
        .collect();
    (kept, b)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskGroup {
    pub members: Vec<usize>,
    pub representative: usize,
}

pub fn group_masks(stats: &[RoomMaskStats], thresh: f64) -> Vec<MaskGroup> {
    iou_components(stats, thresh)
        .into_iter()
        .map(|members| MaskGroup {
            representative: best_of(stats, &members),
            members,
        })
        .collect()
}

/// Which masks survive inclusion pruning. Masks are visited from least to
/// most preferred; a mask at least `thresh` covered by any other surviving
/// mask is dropped, so of two mutually included masks the less preferred
/// goes. Survivors above `upper_m2` are dropped afterwards.
pub fn inclusion_keep(stats: &[RoomMaskStats], thresh: f64, upper_m2: Option<f64>) -> Vec<bool> {
    let k = stats.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| preference(&stats[a], &stats[b]));
    let mut alive = vec![true; k];
    for &j in &order {
        if stats[j].area_px == 0 {
            alive[j] = false;
            continue;
        }
        let included = (0..k).any(|i| {
            i != j
                && alive[i]
                && intersection(&stats[i], &stats[j]) as f64 / stats[j].area_px as f64 >= thresh
        });
        if included {
            alive[j] = false;
        }
    }
    if let Some(u) = upper_m2 {
        for (a, s) in alive.iter_mut().zip(stats) {
            if s.area_m2 > u {
                *a = false;
            }
        }
    }
    alive
}

pub fn inclusion_prune(
    stats: Vec<RoomMaskStats>,
    thresh: f64,
    upper_m2: Option<f64>,
) -> Vec<RoomMaskStats> {
    let keep = inclusion_keep(&stats, thresh, upper_m2);
    stats
        .into_iter()
        .zip(keep)
        .filter_map(|(s, k)| k.then_some(s))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cover {
    /// Indices into the candidate list, in selection order.
    pub selected: Vec<usize>,
    pub coverage: f64,
    pub below_target: bool,
}

/// Candidate sets up to this size get an exact search when the greedy pass
/// misses the coverage target.
pub const EXACT_COVER_LIMIT: usize = 20;

/// Walks candidates by preference (area descending) and keeps each one whose
/// IoU with every kept mask is at most `iou_tol`. Coverage is the kept area
/// over the area of the union of all candidates.
///
/// When the greedy pick falls below `target` and there are at most
/// [`EXACT_COVER_LIMIT`] candidates, the compatible subset of largest total
/// area is found exhaustively and used if it covers more.
pub fn greedy_cover(stats: &[RoomMaskStats], target: f64, iou_tol: f64) -> Result<Cover> {
    if stats.is_empty() {
        return Err(Error::NoCandidates);
    }
    let k = stats.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| preference(&stats[b], &stats[a]));
    let mut compatible = vec![vec![true; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let ok = iou_stats(&stats[i], &stats[j]) <= iou_tol;
            compatible[i][j] = ok;
            compatible[j][i] = ok;
        }
    }
    let mut selected: Vec<usize> = Vec::new();
    for &i in &order {
        if selected.iter().all(|&j| compatible[i][j]) {
            selected.push(i);
        }
    }
    let (w, h) = stats[0].mask.mask.dims();
    let mut union = Raster::filled(w, h, false);
    for s in stats {
        for (u, &b) in union.data_mut().iter_mut().zip(s.mask.mask.data()) {
            *u |= b;
        }
    }
    let total = union.count();
    let ratio = |sel: &[usize]| {
        let covered: usize = sel.iter().map(|&i| stats[i].area_px).sum();
        if total == 0 {
            0.0
        } else {
            covered as f64 / total as f64
        }
    };
    let mut coverage = ratio(&selected);
    if coverage < target && k <= EXACT_COVER_LIMIT {
        let areas: Vec<usize> = order.iter().map(|&i| stats[i].area_px).collect();
        let compat: Vec<Vec<bool>> = order
            .iter()
            .map(|&i| order.iter().map(|&j| compatible[i][j]).collect())
            .collect();
        let mut best = (0usize, Vec::new());
        let mut cur = Vec::new();
        max_weight_compatible(&areas, &compat, 0, 0, &mut cur, &mut best);
        let exact: Vec<usize> = best.1.iter().map(|&p| order[p]).collect();
        let c = ratio(&exact);
        if c > coverage {
            log::debug!("greedy cover {coverage:.4} below target; exact search reaches {c:.4}");
            selected = exact;
            coverage = c;
        }
    }
    Ok(Cover {
        selected,
        coverage,
        below_target: coverage < target,
    })
}

/// Branch and bound over positions in preference order. The first subset
/// found with the largest weight wins, so ties resolve toward preferred masks.
fn max_weight_compatible(
    w: &[usize],
    compat: &[Vec<bool>],
    pos: usize,
    acc: usize,
    cur: &mut Vec<usize>,
    best: &mut (usize, Vec<usize>),
) {
    if acc > best.0 || best.1.is_empty() && !cur.is_empty() && acc >= best.0 {
        *best = (acc, cur.clone());
    }
    if pos == w.len() {
        return;
    }
    let rest: usize = w[pos..].iter().sum();
    if acc + rest <= best.0 {
        return;
    }
    if cur.iter().all(|&j| compat[pos][j]) {
        cur.push(pos);
        max_weight_compatible(w, compat, pos + 1, acc + w[pos], cur, best);
        cur.pop();
    }
    max_weight_compatible(w, compat, pos + 1, acc, cur, best);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterParams {
    pub max_holes: usize,
    pub dedup_iou: f64,
    pub min_area_frac: f64,
    pub min_area_m2: f64,
    pub iqr_factor: f64,
    /// Point threshold at 0.05 m pixels; scaled by `(0.05 / s)²`.
    pub min_points: f64,
    pub group_iou: f64,
    pub inclusion: f64,
    pub coverage: f64,
    pub iou_tol: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams {
            max_holes: 2,
            dedup_iou: 0.8,
            min_area_frac: 0.02,
            min_area_m2: 1.0,
            iqr_factor: 2.0,
            min_points: 50.0,
            group_iou: 0.5,
            inclusion: 0.9,
            coverage: 0.95,
            iou_tol: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Elimination {
    pub id: String,
    pub stage: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub members: Vec<String>,
    pub representative: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub candidates: usize,
    pub scene_area_m2: f64,
    pub bounds: Option<AreaBounds>,
    pub eliminated: Vec<Elimination>,
    pub groups: Vec<GroupReport>,
    pub selected: Vec<String>,
    pub coverage: f64,
    pub below_target: bool,
}

impl FilterReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}

pub struct FilterOutcome {
    pub selected: Vec<RoomMaskStats>,
    pub report: FilterReport,
}

fn eliminate(report: &mut FilterReport, s: &RoomMaskStats, stage: &str, reason: String) {
    report.eliminated.push(Elimination {
        id: s.mask.id.clone(),
        stage: stage.to_string(),
        reason,
    });
}

fn split_keep(
    stats: Vec<RoomMaskStats>,
    keep: &[bool],
    report: &mut FilterReport,
    stage: &str,
    reason: impl Fn(&RoomMaskStats) -> String,
) -> Vec<RoomMaskStats> {
    let mut out = Vec::new();
    for (s, &k) in stats.into_iter().zip(keep) {
        if k {
            out.push(s);
        } else {
            eliminate(report, &s, stage, reason(&s));
        }
    }
    out
}

/// Runs the full filter. `counts` is the filtered-cloud tally in `frame`.
/// Returns the selected masks in selection order.
pub fn filter_masks(
    masks: Vec<MaskImage>,
    frame: &ProjectionFrame,
    counts: &Raster<u32>,
    params: &FilterParams,
) -> Result<FilterOutcome> {
    let scene_area_m2 = frame.area_m2();
    let mut report = FilterReport {
        candidates: masks.len(),
        scene_area_m2,
        bounds: None,
        eliminated: Vec::new(),
        groups: Vec::new(),
        selected: Vec::new(),
        coverage: 0.0,
        below_target: true,
    };
    let mut stats = Vec::with_capacity(masks.len());
    for m in masks {
        stats.push(RoomMaskStats::compute(m, frame.pixel_size, counts)?);
    }

    let keep: Vec<bool> = stats
        .iter()
        .map(|s| connectivity_screen(s, params.max_holes))
        .collect();
    let stats = split_keep(stats, &keep, &mut report, "connectivity", |s| {
        format!("{} components, {} holes", s.component_count, s.hole_count)
    });

    let keep = dedup_keep(&stats, params.dedup_iou);
    let stats = split_keep(stats, &keep, &mut report, "dedup", |_| {
        format!("IoU ≥ {} with a preferred mask", params.dedup_iou)
    });

    let bounds = area_bounds(
        &stats,
        scene_area_m2,
        params.min_area_frac,
        params.min_area_m2,
        params.iqr_factor,
        scaled_min_points(params.min_points, frame.pixel_size),
    );
    report.bounds = Some(bounds);
    let keep: Vec<bool> = stats
        .iter()
        .map(|s| area_verdict(s, &bounds) == AreaVerdict::Keep)
        .collect();
    let stats = split_keep(stats, &keep, &mut report, "area_points", |s| {
        let v = area_verdict(s, &bounds);
        format!("{v:?}: {:.3} m², {} points", s.area_m2, s.point_count)
    });

    let keep = inclusion_keep(&stats, params.inclusion, bounds.upper_m2);
    let stats = split_keep(stats, &keep, &mut report, "inclusion", |_| {
        format!("covered ≥ {} by another mask", params.inclusion)
    });

    let groups = group_masks(&stats, params.group_iou);
    report.groups = groups
        .iter()
        .map(|g| GroupReport {
            members: g.members.iter().map(|&i| stats[i].mask.id.clone()).collect(),
            representative: stats[g.representative].mask.id.clone(),
        })
        .collect();
    let mut keep = vec![false; stats.len()];
    for g in &groups {
        keep[g.representative] = true;
    }
    let stats = split_keep(stats, &keep, &mut report, "grouping", |_| {
        "not the group representative".to_string()
    });

    if stats.is_empty() {
        return Ok(FilterOutcome {
            selected: Vec::new(),
            report,
        });
    }
    let cover = greedy_cover(&stats, params.coverage, params.iou_tol)?;
    report.coverage = cover.coverage;
    report.below_target = cover.below_target;
    let mut keep = vec![false; stats.len()];
    for &i in &cover.selected {
        keep[i] = true;
    }
    let mut rank = vec![0usize; stats.len()];
    for (r, &i) in cover.selected.iter().enumerate() {
        rank[i] = r;
    }
    let mut selected: Vec<(usize, RoomMaskStats)> = Vec::new();
    for (i, s) in stats.into_iter().enumerate() {
        if keep[i] {
            selected.push((rank[i], s));
        } else {
            eliminate(
                &mut report,
                &s,
                "cover",
                format!("IoU > {} with a selected mask", params.iou_tol),
            );
        }
    }
    selected.sort_by_key(|(r, _)| *r);
    let selected: Vec<RoomMaskStats> = selected.into_iter().map(|(_, s)| s).collect();
    report.selected = selected.iter().map(|s| s.mask.id.clone()).collect();
    if report.below_target {
        log::warn!(
            "selected masks cover {:.3} of the candidate area (target {})",
            report.coverage,
            params.coverage
        );
    }
    Ok(FilterOutcome { selected, report })
}
