//! End-to-end runs with persisted, content-addressed intermediates.
//!
//! Each stage writes into `<out>/stages/<nn>-<stage>-<hash>/`, where the hash
//! covers the stage name, the upstream stage's hash and the stage's own
//! config section. A `done` marker makes a later run with the same inputs
//! load the stage from disk instead of recomputing it. Everything is stored
//! in exact form (round-trip floats, lossless PNG), so a resumed run produces
//! the same bytes as a fresh one.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ceiling::{filter_ceiling, ransac_plane, PlaneModel};
use crate::config::{BackendKind, PipelineConfig};
use crate::contour::{extract_boundary_points, room_contour, BoundaryPointSet, ContourStages, RoomContour};
use crate::density::{
    compute_frame, enhance, estimate_point_spacing, export_density_png, import_density_png, project_density,
    DensityGrid, ProjectionFrame,
};
use crate::error::{Error, Result, Stage, StageExt};
use crate::eval::{evaluate, EvalReport, GroundTruth};
use crate::geom::Point2;
use crate::ingest::{parse_point_cloud, read_point_cloud, voxel_downsample, write_xyz, PointCloud, PointFormat};
use crate::mask_filter::{filter_masks, FilterReport};
use crate::prompts::{extract_prompts, PromptSet};
use crate::render::{render_svg, RenderOptions};
use crate::segmentation::{load_mask_dir, segment, write_mask_dir, Backend, SegmentedMask};
use crate::topology::{build_floorplan, FloorPlan};

const DONE: &str = "done";

fn sha_hex(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("value serializes");
    out.push(b'\n');
    out
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

/// One stage's output directory.
#[derive(Debug, Clone)]
pub struct StageDir {
    pub stage: Stage,
    pub hash: String,
    pub path: PathBuf,
}

impl StageDir {
    fn new(root: &Path, index: usize, stage: Stage, upstream: &str, config: &impl Serialize) -> StageDir {
        let name = stage.to_string();
        let hash = sha_hex(&[name.as_bytes(), upstream.as_bytes(), &to_json(config)]);
        let path = root.join(format!("{index:02}-{name}-{}", &hash[..16]));
        StageDir { stage, hash, path }
    }

    pub fn is_done(&self) -> bool {
        self.path.join(DONE).is_file()
    }

    fn begin(&self) -> Result<()> {
        if self.path.exists() {
            fs::remove_dir_all(&self.path)?;
        }
        fs::create_dir_all(&self.path)?;
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        fs::write(self.path.join(DONE), format!("{}\n", self.hash))?;
        Ok(())
    }

    fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }
}

pub fn read_cloud_stage(input: &Path, cfg: &PipelineConfig) -> Result<PointCloud> {
    let cloud = read_point_cloud(input)?;
    match cfg.ingest.voxel {
        Some(v) => voxel_downsample(&cloud, v),
        None => Ok(cloud),
    }
}

fn load_xyz(path: &Path) -> Result<PointCloud> {
    parse_point_cloud(&fs::read(path)?, PointFormat::XyzText)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CeilingOutput {
    pub filtered: PointCloud,
    pub plane: PlaneModel,
}

pub fn ceiling_stage(cloud: &PointCloud, cfg: &PipelineConfig) -> Result<CeilingOutput> {
    let filtered = filter_ceiling(cloud, &cfg.ceiling.params())?;
    let plane = ransac_plane(&filtered, cfg.ceiling.ransac_thresh, cfg.ceiling.ransac_iters, cfg.seed)?;
    Ok(CeilingOutput { filtered, plane })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityOutput {
    pub spacing: f64,
    pub grid: DensityGrid,
}

impl DensityOutput {
    pub fn frame(&self) -> &ProjectionFrame {
        &self.grid.frame
    }

    pub fn enhanced(&self) -> &crate::raster::Raster<u8> {
        self.grid.enhanced.as_ref().expect("enhanced raster present")
    }
}

/// Frame the pipeline derives from a filtered cloud.
pub fn frame_for(filtered: &PointCloud, cfg: &PipelineConfig) -> Result<(f64, ProjectionFrame)> {
    let spacing = estimate_point_spacing(filtered, cfg.density.spacing_sample)?;
    let b = filtered.bounds();
    let frame = compute_frame(
        (b.min.x, b.max.x),
        (b.min.y, b.max.y),
        spacing,
        &cfg.density.frame_params(),
    )?;
    Ok((spacing, frame))
}

/// Frame the pipeline will use for a raw input cloud.
pub fn frame_for_input(cloud: &PointCloud, cfg: &PipelineConfig) -> Result<ProjectionFrame> {
    let filtered = filter_ceiling(cloud, &cfg.ceiling.params())?;
    Ok(frame_for(&filtered, cfg)?.1)
}

pub fn density_stage(filtered: &PointCloud, cfg: &PipelineConfig) -> Result<DensityOutput> {
    let (spacing, frame) = frame_for(filtered, cfg)?;
    let grid = enhance(&project_density(filtered, &frame)?, &cfg.density.enhance_params())?;
    Ok(DensityOutput { spacing, grid })
}

pub fn backend_for(cfg: &PipelineConfig, pixel_size: f64, work_dir: &Path) -> Result<Backend> {
    let seg = &cfg.segmentation;
    Ok(match seg.backend {
        BackendKind::Fallback => Backend::Fallback(seg.fallback_params(pixel_size)),
        BackendKind::ExternalDir => Backend::ExternalDir(
            seg.mask_dir
                .clone()
                .ok_or_else(|| Error::Config("segmentation.mask_dir is required".into()))?,
        ),
        BackendKind::RunnerSubprocess => Backend::RunnerSubprocess {
            program: seg.runner.clone(),
            work_dir: work_dir.to_path_buf(),
        },
    })
}

/// Ceiling-plane inliers of the filtered cloud, projected to 2D.
pub fn plane_points(filtered: &PointCloud, plane: &PlaneModel) -> Vec<Point2> {
    let pts = filtered.points();
    plane.inliers.iter().map(|&i| Point2::new(pts[i].x, pts[i].y)).collect()
}

pub fn cloud_2d(cloud: &PointCloud) -> Vec<Point2> {
    cloud.points().iter().map(|p| Point2::new(p.x, p.y)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourFailure {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourOutput {
    pub rooms: Vec<RoomContour>,
    pub failed: Vec<ContourFailure>,
}

/// Contours for every selected mask. A room whose outline cannot be built
/// is dropped with a warning; the run fails only when no room survives.
pub fn contour_stage(
    masks: &[SegmentedMask],
    frame: &ProjectionFrame,
    spacing: f64,
    boundary: &BoundaryPointSet,
    cfg: &PipelineConfig,
) -> Result<(ContourOutput, Vec<(String, ContourStages)>)> {
    let mut rooms = Vec::new();
    let mut failed = Vec::new();
    let mut debug = Vec::new();
    let mut first_err = None;
    for m in masks {
        match room_contour(&m.image.id, &m.image.mask, frame, spacing, boundary, &cfg.contour) {
            Ok((room, stages)) => {
                debug.push((room.id.clone(), stages));
                rooms.push(room);
            }
            Err(e) => {
                log::warn!("room {}: {e}; dropped", m.image.id);
                failed.push(ContourFailure {
                    id: m.image.id.clone(),
                    error: e.to_string(),
                });
                first_err.get_or_insert(e);
            }
        }
    }
    if rooms.is_empty() {
        return Err(first_err.unwrap_or(Error::NoCandidates));
    }
    Ok((ContourOutput { rooms, failed }, debug))
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub plan: FloorPlan,
    pub report: Option<EvalReport>,
    pub filter_report: FilterReport,
    pub stages: Vec<StageDir>,
    /// Stages loaded from an earlier run rather than recomputed.
    pub resumed: Vec<Stage>,
}

struct Runner<'a> {
    cfg: &'a PipelineConfig,
    root: PathBuf,
    upstream: String,
    stages: Vec<StageDir>,
    resumed: Vec<Stage>,
}

impl Runner<'_> {
    /// Opens the next stage. Returns the directory and whether it can be
    /// loaded from disk.
    fn open(&mut self, stage: Stage, config: &impl Serialize) -> Result<(StageDir, bool)> {
        let dir = StageDir::new(&self.root, self.stages.len(), stage, &self.upstream, config);
        self.upstream = dir.hash.clone();
        self.stages.push(dir.clone());
        let done = dir.is_done();
        if done {
            log::info!("{stage}: resuming from {}", dir.path.display());
            self.resumed.push(stage);
        } else {
            dir.begin()?;
        }
        Ok((dir, done))
    }
}

/// Runs every stage on `input`, writing intermediates under
/// `out_dir/stages` and `floorplan.json`, `floorplan.svg`,
/// `filter-report.json` (and `eval-report.json` when `gt` is given) into
/// `out_dir`.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    input: &Path,
    gt: Option<&GroundTruth>,
    out_dir: &Path,
) -> Result<RunOutput> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let input_bytes = fs::read(input).map_err(|e| Error::Io(e).at(Stage::Ingest))?;
    let mut r = Runner {
        cfg,
        root: out_dir.join("stages"),
        upstream: sha_hex(&[&input_bytes]),
        stages: Vec::new(),
        resumed: Vec::new(),
    };
    drop(input_bytes);

    let (dir, done) = r.open(Stage::Ingest, &cfg.ingest)?;
    let cloud = if done {
        load_xyz(&dir.file("cloud.xyz")).stage(Stage::Ingest)?
    } else {
        let c = read_cloud_stage(input, cfg).stage(Stage::Ingest)?;
        fs::write(dir.file("cloud.xyz"), write_xyz(&c))?;
        dir.finish()?;
        c
    };

    let (dir, done) = r.open(Stage::FilterCeiling, &(cfg.seed, &cfg.ceiling))?;
    let ceiling = if done {
        CeilingOutput {
            filtered: load_xyz(&dir.file("filtered.xyz")).stage(Stage::FilterCeiling)?,
            plane: read_json(&dir.file("plane.json")).stage(Stage::FilterCeiling)?,
        }
    } else {
        let c = ceiling_stage(&cloud, cfg).stage(Stage::FilterCeiling)?;
        fs::write(dir.file("filtered.xyz"), write_xyz(&c.filtered))?;
        fs::write(dir.file("plane.json"), to_json(&c.plane))?;
        dir.finish()?;
        c
    };
    drop(cloud);

    let (dir, done) = r.open(Stage::Density, &r.cfg.density)?;
    let density = if done {
        let (frame, enhanced) = import_density_png(&dir.file("density.png")).stage(Stage::Density)?;
        let spacing: f64 = read_json(&dir.file("spacing.json")).stage(Stage::Density)?;
        let mut grid = project_density(&ceiling.filtered, &frame).stage(Stage::Density)?;
        grid.enhanced = Some(enhanced);
        DensityOutput { spacing, grid }
    } else {
        let d = density_stage(&ceiling.filtered, cfg).stage(Stage::Density)?;
        export_density_png(&d.grid, &dir.file("density.png")).stage(Stage::Density)?;
        fs::write(dir.file("spacing.json"), to_json(&d.spacing))?;
        dir.finish()?;
        d
    };
    let frame = *density.frame();

    let (dir, done) = r.open(Stage::Prompts, &cfg.prompts)?;
    let prompts = if done {
        PromptSet::read_json(&dir.file("prompts.json")).stage(Stage::Prompts)?
    } else {
        let p = extract_prompts(density.enhanced(), &cfg.prompts).stage(Stage::Prompts)?;
        p.write_json(&dir.file("prompts.json"))?;
        dir.finish()?;
        p
    };

    let (dir, done) = r.open(Stage::Segment, &cfg.segmentation)?;
    let masks = if done {
        load_mask_dir(&dir.file("masks"), &frame).stage(Stage::Segment)?
    } else {
        let backend = backend_for(cfg, frame.pixel_size, &dir.file("runner")).stage(Stage::Segment)?;
        let m = segment(density.enhanced(), &frame, &prompts, &backend).stage(Stage::Segment)?;
        write_mask_dir(&dir.file("masks"), &frame, backend.name(), &m)?;
        dir.finish()?;
        m
    };
    log::info!("segment: {} candidate masks", masks.len());

    let (dir, done) = r.open(Stage::FilterMasks, &cfg.mask_filter)?;
    let (selected, filter_report) = if done {
        (
            load_mask_dir(&dir.file("selected"), &frame).stage(Stage::FilterMasks)?,
            read_json::<FilterReport>(&dir.file("filter-report.json")).stage(Stage::FilterMasks)?,
        )
    } else {
        let images = masks.iter().map(|m| m.image.clone()).collect();
        let outcome = filter_masks(images, &frame, &density.grid.counts, &cfg.mask_filter)
            .stage(Stage::FilterMasks)?;
        let selected: Vec<SegmentedMask> = outcome
            .selected
            .iter()
            .map(|s| {
                let src = masks.iter().find(|m| m.image.id == s.mask.id).expect("selected mask exists");
                SegmentedMask {
                    image: s.mask.clone(),
                    prompt_index: src.prompt_index,
                    sam_score: src.sam_score,
                }
            })
            .collect();
        write_mask_dir(&dir.file("selected"), &frame, "mask_filter", &selected)?;
        outcome.report.write_json(&dir.file("filter-report.json"))?;
        dir.finish()?;
        (selected, outcome.report)
    };
    fs::write(out_dir.join("filter-report.json"), serde_json::to_vec_pretty(&filter_report)?)?;
    if selected.is_empty() {
        return Err(Error::NoCandidates.at(Stage::FilterMasks));
    }

    let (dir, done) = r.open(Stage::Contour, &cfg.contour)?;
    let contours = if done {
        read_json::<ContourOutput>(&dir.file("contours.json")).stage(Stage::Contour)?
    } else {
        let boundary = extract_boundary_points(
            &plane_points(&ceiling.filtered, &ceiling.plane),
            cfg.contour.boundary_radius,
            cfg.contour.sector_deg,
        )
        .stage(Stage::Contour)?;
        let (out, debug) =
            contour_stage(&selected, &frame, density.spacing, &boundary, cfg).stage(Stage::Contour)?;
        fs::write(dir.file("boundary.json"), to_json(&boundary))?;
        let dbg = dir.file("debug");
        fs::create_dir_all(&dbg)?;
        for (id, stages) in &debug {
            fs::write(dbg.join(format!("{id}.json")), to_json(stages))?;
        }
        fs::write(dir.file("contours.json"), to_json(&out))?;
        dir.finish()?;
        out
    };

    let (dir, done) = r.open(Stage::Topology, &cfg.topology)?;
    let plan = if done {
        FloorPlan::read_json(&dir.file("floorplan.json")).stage(Stage::Topology)?
    } else {
        let (plan, pairs) = build_floorplan(frame, &contours.rooms, &cloud_2d(&ceiling.filtered), &cfg.topology)
            .stage(Stage::Topology)?;
        log::info!("topology: {} adjacent edge pairs, {} doors", pairs.len(), plan.doors.len());
        plan.write_json(&dir.file("floorplan.json"))?;
        dir.finish()?;
        plan
    };
    plan.write_json(&out_dir.join("floorplan.json"))?;
    fs::write(out_dir.join("floorplan.svg"), render_svg(&plan, &RenderOptions { grid: true }))
        .map_err(|e| Error::Io(e).at(Stage::Render))?;

    let report = match gt {
        Some(gt) => {
            let gt_hash = sha_hex(&[&to_json(gt)]);
            let (dir, done) = r.open(Stage::Eval, &(&cfg.eval, gt_hash))?;
            let rep = if done {
                read_json::<EvalReport>(&dir.file("eval-report.json")).stage(Stage::Eval)?
            } else {
                let rep = evaluate(&plan, gt, &cfg.eval).stage(Stage::Eval)?;
                rep.write_json(&dir.file("eval-report.json"))?;
                dir.finish()?;
                rep
            };
            rep.write_json(&out_dir.join("eval-report.json"))?;
            Some(rep)
        }
        None => None,
    };

    Ok(RunOutput {
        plan,
        report,
        filter_report,
        stages: r.stages,
        resumed: r.resumed,
    })
}
