//! Candidate room masks from the enhanced density map.
//!
//! Three backends share one file contract:
//!
//! * `external_dir`: masks produced elsewhere, read from
//!   `masks/mask_<id>.png` plus `masks/manifest.json`;
//! * `runner_subprocess`: invokes `sam-runner --density <png> --frame <json>
//!   --prompts <json> --out <dir>` and then loads its output directory;
//! * `fallback`: a deterministic flood-fill segmenter needing no model.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::density::{fingerprint_bytes, ProjectionFrame};
use crate::error::{Error, Result};
use crate::prompts::PromptSet;
use crate::raster::{
    dilate_square, flood_fill, label_components, read_gray_png, write_gray_png, BinaryRaster,
    Connectivity, Raster,
};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq)]
pub struct MaskImage {
    pub id: String,
    pub mask: BinaryRaster,
}

impl MaskImage {
    pub fn area(&self) -> usize {
        self.mask.count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameFingerprint {
    pub width: usize,
    pub height: usize,
    pub hash: String,
}

impl FrameFingerprint {
    pub fn of(frame: &ProjectionFrame) -> Self {
        FrameFingerprint {
            width: frame.width,
            height: frame.height,
            hash: fingerprint_bytes(&frame.to_json_bytes()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub file: String,
    pub prompt_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sam_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskManifest {
    pub backend: String,
    pub frame: FrameFingerprint,
    pub entries: Vec<ManifestEntry>,
}

impl MaskManifest {
    pub fn read(dir: &Path) -> Result<MaskManifest> {
        let path = dir.join(MANIFEST_FILE);
        let bytes = fs::read(&path).map_err(|e| {
            Error::BackendUnavailable(format!("cannot read {}: {e}", path.display()))
        })?;
        serde_json::from_slice(&bytes)
            .map_err(|e| Error::DecodeFailure(format!("{}: {e}", path.display())))
    }
}

/// Mask plus the prompt that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentedMask {
    pub image: MaskImage,
    pub prompt_index: usize,
    pub sam_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Backend {
    ExternalDir(PathBuf),
    RunnerSubprocess { program: PathBuf, work_dir: PathBuf },
    Fallback(FallbackParams),
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::ExternalDir(_) => "external_dir",
            Backend::RunnerSubprocess { .. } => "runner_subprocess",
            Backend::Fallback(_) => "fallback",
        }
    }
}

pub fn segment(
    enhanced: &Raster<u8>,
    frame: &ProjectionFrame,
    prompts: &PromptSet,
    backend: &Backend,
) -> Result<Vec<SegmentedMask>> {
    if enhanced.dims() != (frame.width, frame.height) {
        return Err(Error::FrameMismatch(format!(
            "enhanced raster {:?} vs frame {}x{}",
            enhanced.dims(),
            frame.width,
            frame.height
        )));
    }
    match backend {
        Backend::ExternalDir(dir) => load_mask_dir(dir, frame),
        Backend::RunnerSubprocess { program, work_dir } => {
            run_subprocess(program, work_dir, enhanced, frame, prompts)
        }
        Backend::Fallback(params) => Ok(fallback_segment(enhanced, prompts, params)),
    }
}

/// Loads masks in manifest order after checking the frame fingerprint.
pub fn load_mask_dir(dir: &Path, frame: &ProjectionFrame) -> Result<Vec<SegmentedMask>> {
    let manifest = MaskManifest::read(dir)?;
    let expect = FrameFingerprint::of(frame);
    if manifest.frame != expect {
        return Err(Error::FrameMismatch(format!(
            "manifest fingerprint {:?} does not match frame {:?}",
            manifest.frame, expect
        )));
    }
    let mut out = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let img = read_gray_png(&dir.join(&entry.file))?;
        if img.dims() != (frame.width, frame.height) {
            return Err(Error::FrameMismatch(format!(
                "mask {} is {:?}, frame is {}x{}",
                entry.file,
                img.dims(),
                frame.width,
                frame.height
            )));
        }
        let mask = img.map(|&v| v >= 128);
        if mask.count() == 0 {
            log::warn!("mask {} has no foreground pixels; skipped", entry.id);
            continue;
        }
        out.push(SegmentedMask {
            image: MaskImage {
                id: entry.id.clone(),
                mask,
            },
            prompt_index: entry.prompt_index,
            sam_score: entry.sam_score,
        });
    }
    Ok(out)
}

/// Writes `mask_<id>.png` files (0 / 255) and `manifest.json` into `dir`.
pub fn write_mask_dir(
    dir: &Path,
    frame: &ProjectionFrame,
    backend: &str,
    masks: &[SegmentedMask],
) -> Result<MaskManifest> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(masks.len());
    for m in masks {
        let file = format!("mask_{}.png", m.image.id);
        write_gray_png(&dir.join(&file), &m.image.mask.map(|&b| if b { 255u8 } else { 0 }))?;
        entries.push(ManifestEntry {
            id: m.image.id.clone(),
            file,
            prompt_index: m.prompt_index,
            sam_score: m.sam_score,
        });
    }
    let manifest = MaskManifest {
        backend: backend.to_string(),
        frame: FrameFingerprint::of(frame),
        entries,
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

fn run_subprocess(
    program: &Path,
    work_dir: &Path,
    enhanced: &Raster<u8>,
    frame: &ProjectionFrame,
    prompts: &PromptSet,
) -> Result<Vec<SegmentedMask>> {
    fs::create_dir_all(work_dir)?;
    let density = work_dir.join("density.png");
    let frame_path = work_dir.join("frame.json");
    let prompts_path = work_dir.join("prompts.json");
    let out_dir = work_dir.join("masks");
    write_gray_png(&density, enhanced)?;
    frame.write_json(&frame_path)?;
    prompts.write_json(&prompts_path)?;
    fs::create_dir_all(&out_dir)?;

    let output = Command::new(program)
        .arg("--density")
        .arg(&density)
        .arg("--frame")
        .arg(&frame_path)
        .arg("--prompts")
        .arg(&prompts_path)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .map_err(|e| Error::BackendUnavailable(format!("cannot run {}: {e}", program.display())))?;
    if !output.status.success() {
        return Err(Error::BackendUnavailable(format!(
            "{} exited with {}: {}",
            program.display(),
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }
    load_mask_dir(&out_dir, frame)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FallbackParams {
    /// Pixels at or above this value are walls.
    pub wall_thresh: u8,
    /// Wall dilation radius (pixels) used to seal openings such as doorways
    /// before flood filling; regions are grown back by the same radius.
    pub seal_px: usize,
    /// Wall components smaller than this many pixels are treated as free.
    pub min_wall_px: usize,
    /// Closing radius (pixels) applied to the wall mask to join fragments
    /// and fill thin slabs between wall faces.
    pub close_px: usize,
}

impl Default for FallbackParams {
    fn default() -> Self {
        FallbackParams {
            wall_thresh: 128,
            seal_px: 0,
            min_wall_px: 0,
            close_px: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    PromptOnWall,
    PromptInSealedGap,
    DuplicateRegion,
}

/// Flood-fill segmentation: one mask per distinct free-space region reached
/// by a prompt. Masks are pairwise disjoint.
pub fn fallback_segment(
    enhanced: &Raster<u8>,
    prompts: &PromptSet,
    params: &FallbackParams,
) -> Vec<SegmentedMask> {
    fallback_segment_detailed(enhanced, prompts, params).0
}

pub fn fallback_segment_detailed(
    enhanced: &Raster<u8>,
    prompts: &PromptSet,
    params: &FallbackParams,
) -> (Vec<SegmentedMask>, Vec<(usize, SkipReason)>) {
    let (w, h) = enhanced.dims();
    let mut wall = enhanced.map(|&v| v >= params.wall_thresh);
    if params.close_px > 0 {
        let grown = dilate_square(&wall, params.close_px).map(|&b| !b);
        wall = dilate_square(&grown, params.close_px).map(|&b| !b);
    }
    if params.min_wall_px > 1 {
        let labels = label_components(&wall, |&b| b, Connectivity::Eight);
        let sizes = labels.sizes();
        wall = labels
            .labels
            .map(|&l| l != 0 && sizes[l as usize] >= params.min_wall_px);
    }
    let free = wall.map(|&b| !b);
    let sealed_free = free.and_not(&dilate_square(&wall, params.seal_px));

    let mut claimed = Raster::filled(w, h, false);
    let mut cores: Vec<BinaryRaster> = Vec::new();
    let mut masks = Vec::new();
    let mut skipped = Vec::new();
    for (idx, p) in prompts.points.iter().enumerate() {
        if p.m >= w || p.n >= h || *wall.get(p.m, p.n) {
            log::debug!("prompt {idx} at ({}, {}) lies on a wall; skipped", p.m, p.n);
            skipped.push((idx, SkipReason::PromptOnWall));
            continue;
        }
        if !*sealed_free.get(p.m, p.n) {
            skipped.push((idx, SkipReason::PromptInSealedGap));
            continue;
        }
        if cores.iter().any(|c| *c.get(p.m, p.n)) {
            skipped.push((idx, SkipReason::DuplicateRegion));
            continue;
        }
        let core = flood_fill(&sealed_free, (p.m, p.n), Connectivity::Four);
        let grown = dilate_square(&core, params.seal_px).and(&free);
        let region = flood_fill(&grown, (p.m, p.n), Connectivity::Four).and_not(&claimed);
        cores.push(core);
        if region.count() == 0 {
            continue;
        }
        for (c, &r) in claimed.data_mut().iter_mut().zip(region.data()) {
            *c |= r;
        }
        masks.push(SegmentedMask {
            image: MaskImage {
                id: format!("fb{:04}", masks.len()),
                mask: region,
            },
            prompt_index: idx,
            sam_score: None,
        });
    }
    let on_wall = skipped.iter().filter(|(_, r)| *r == SkipReason::PromptOnWall).count();
    if on_wall > 0 {
        log::warn!("{on_wall} of {} prompts lie on walls and were skipped", prompts.points.len());
    }
    (masks, skipped)
}
