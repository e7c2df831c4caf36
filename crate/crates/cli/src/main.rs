use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use floorscan::ceiling::ransac_plane;
use floorscan::config::{BackendKind, PipelineConfig};
use floorscan::contour::{extract_boundary_points, RoomContour};
use floorscan::density::{export_density_png, import_density_png, project_density, ProjectionFrame};
use floorscan::error::{Error, Stage};
use floorscan::eval::{evaluate, GroundTruth};
use floorscan::ingest::{read_point_cloud, write_xyz, PointCloud};
use floorscan::mask_filter::filter_masks;
use floorscan::pipeline::{
    backend_for, ceiling_stage, cloud_2d, contour_stage, density_stage, frame_for, frame_for_input,
    plane_points, read_cloud_stage, run_pipeline, ContourOutput,
};
use floorscan::prompts::{extract_prompts, PromptSet};
use floorscan::render::{render_svg, RenderOptions};
use floorscan::segmentation::{load_mask_dir, segment, write_mask_dir, SegmentedMask};
use floorscan::synth::{generate_synthetic, SceneSpec};
use floorscan::topology::{build_floorplan, FloorPlan};

const EXIT_CONFIG: u8 = 2;
const EXIT_STAGE: u8 = 3;

#[derive(Parser)]
#[command(name = "floorscan", version, about = "Floorplan reconstruction from indoor LiDAR point clouds")]
struct Cli {
    /// TOML config file. Falls back to $FLOORSCAN_CONFIG, then built-in defaults.
    #[arg(long, global = true, env = "FLOORSCAN_CONFIG")]
    config: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse a PLY/XYZ cloud, optionally voxel-downsample, write XYZ.
    Ingest {
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        voxel: Option<f64>,
    },
    /// Keep points near each cell's top elevation.
    FilterCeiling {
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Also write the fitted ceiling plane as JSON.
        #[arg(long)]
        plane: Option<PathBuf>,
    },
    /// Rasterize a filtered cloud into an enhanced density PNG plus frame.json.
    Density {
        input: PathBuf,
        /// Output PNG; frame.json is written next to it.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Density-peak prompt points.
    Prompts {
        density: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Candidate room masks.
    Segment {
        density: PathBuf,
        #[arg(long)]
        prompts: PathBuf,
        /// Output mask directory.
        #[arg(short, long)]
        out: PathBuf,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Screen and select one mask per room.
    FilterMasks {
        masks: PathBuf,
        /// Filtered cloud, for point counts.
        #[arg(long)]
        cloud: PathBuf,
        /// Density PNG whose frame.json registers the masks.
        #[arg(long)]
        density: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Room outlines from selected masks.
    Contour {
        masks: PathBuf,
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        density: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Adjacency, doors and the final floorplan.
    Topology {
        contours: PathBuf,
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        frame: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Score a floorplan against ground truth.
    Eval {
        plan: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long)]
        endpoint_tol: Option<f64>,
    },
    /// All stages with persisted intermediates.
    Run {
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long)]
        endpoint_tol: Option<f64>,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Generate a synthetic scene with ground truth.
    Synth {
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Layout::Four)]
        layout: Layout,
    },
    /// Draw a floorplan as SVG.
    Render {
        plan: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        grid: bool,
    },
}

#[derive(Args)]
struct BackendArgs {
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Mask directory for the external-dir backend.
    #[arg(long)]
    mask_dir: Option<PathBuf>,
    /// Runner program for the runner backend.
    #[arg(long)]
    runner: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Fallback,
    ExternalDir,
    Runner,
}

#[derive(Clone, Copy, ValueEnum)]
enum Layout {
    Single,
    Two,
    Three,
    Four,
}

impl BackendArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(b) = self.backend {
            cfg.segmentation.backend = match b {
                BackendArg::Fallback => BackendKind::Fallback,
                BackendArg::ExternalDir => BackendKind::ExternalDir,
                BackendArg::Runner => BackendKind::RunnerSubprocess,
            };
        }
        if let Some(d) = &self.mask_dir {
            cfg.segmentation.mask_dir = Some(d.clone());
        }
        if let Some(r) = &self.runner {
            cfg.segmentation.runner = r.clone();
        }
    }
}

enum Failure {
    Config(String),
    Stage(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => Failure::Config(m),
            e => Failure::Stage(e),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn at(stage: Stage) -> impl Fn(Error) -> Failure {
    move |e| Failure::Stage(e.at(stage))
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> Result<(), Error> {
    fs::write(path, serde_json::to_vec_pretty(v)?)?;
    Ok(())
}

fn read_cloud(path: &Path, stage: Stage) -> Result<PointCloud, Failure> {
    read_point_cloud(path).map_err(at(stage))
}

fn run(cli: Cli) -> CmdResult {
    let mut cfg = load_config(&cli)?;
    match cli.cmd {
        Cmd::Ingest { input, out, voxel } => {
            if voxel.is_some() {
                cfg.ingest.voxel = voxel;
            }
            cfg.validate()?;
            let cloud = read_cloud_stage(&input, &cfg).map_err(at(Stage::Ingest))?;
            fs::write(&out, write_xyz(&cloud)).map_err(|e| at(Stage::Ingest)(e.into()))?;
            log::info!("{} points written", cloud.len());
        }
        Cmd::FilterCeiling { input, out, plane } => {
            let cloud = read_cloud(&input, Stage::FilterCeiling)?;
            let c = ceiling_stage(&cloud, &cfg).map_err(at(Stage::FilterCeiling))?;
            fs::write(&out, write_xyz(&c.filtered)).map_err(|e| at(Stage::FilterCeiling)(e.into()))?;
            if let Some(p) = plane {
                write_json(&p, &c.plane).map_err(at(Stage::FilterCeiling))?;
            }
            log::info!("kept {} of {} points", c.filtered.len(), cloud.len());
        }
        Cmd::Density { input, out } => {
            let cloud = read_cloud(&input, Stage::Density)?;
            let d = density_stage(&cloud, &cfg).map_err(at(Stage::Density))?;
            export_density_png(&d.grid, &out).map_err(at(Stage::Density))?;
            log::info!("{}x{} px at {:.4} m/px", d.frame().width, d.frame().height, d.frame().pixel_size);
        }
        Cmd::Prompts { density, out } => {
            let (_, img) = import_density_png(&density).map_err(at(Stage::Prompts))?;
            let p = extract_prompts(&img, &cfg.prompts).map_err(at(Stage::Prompts))?;
            p.write_json(&out).map_err(at(Stage::Prompts))?;
            log::info!("{} prompts", p.points.len());
        }
        Cmd::Segment { density, prompts, out, backend } => {
            backend.apply(&mut cfg);
            cfg.validate()?;
            let (frame, img) = import_density_png(&density).map_err(at(Stage::Segment))?;
            let p = PromptSet::read_json(&prompts).map_err(at(Stage::Segment))?;
            let b = backend_for(&cfg, frame.pixel_size, &out.join("runner"))?;
            let masks = segment(&img, &frame, &p, &b).map_err(at(Stage::Segment))?;
            write_mask_dir(&out, &frame, b.name(), &masks).map_err(at(Stage::Segment))?;
            log::info!("{} masks", masks.len());
        }
        Cmd::FilterMasks { masks, cloud, density, out } => {
            let (frame, _) = import_density_png(&density).map_err(at(Stage::FilterMasks))?;
            let cloud = read_cloud(&cloud, Stage::FilterMasks)?;
            let counts = project_density(&cloud, &frame).map_err(at(Stage::FilterMasks))?.counts;
            let loaded = load_mask_dir(&masks, &frame).map_err(at(Stage::FilterMasks))?;
            let images = loaded.iter().map(|m| m.image.clone()).collect();
            let outcome = filter_masks(images, &frame, &counts, &cfg.mask_filter).map_err(at(Stage::FilterMasks))?;
            let selected: Vec<SegmentedMask> = outcome
                .selected
                .iter()
                .map(|s| {
                    let src = loaded.iter().find(|m| m.image.id == s.mask.id).expect("selected mask exists");
                    SegmentedMask {
                        image: s.mask.clone(),
                        ..src.clone()
                    }
                })
                .collect();
            write_mask_dir(&out, &frame, "mask_filter", &selected).map_err(at(Stage::FilterMasks))?;
            outcome
                .report
                .write_json(&out.join("filter-report.json"))
                .map_err(at(Stage::FilterMasks))?;
            log::info!("{} of {} masks selected", selected.len(), loaded.len());
        }
        Cmd::Contour { masks, cloud, density, out } => {
            let (frame, _) = import_density_png(&density).map_err(at(Stage::Contour))?;
            let cloud = read_cloud(&cloud, Stage::Contour)?;
            let (spacing, _) = frame_for(&cloud, &cfg).map_err(at(Stage::Contour))?;
            let plane = ransac_plane(&cloud, cfg.ceiling.ransac_thresh, cfg.ceiling.ransac_iters, cfg.seed)
                .map_err(at(Stage::Contour))?;
            let boundary = extract_boundary_points(
                &plane_points(&cloud, &plane),
                cfg.contour.boundary_radius,
                cfg.contour.sector_deg,
            )
            .map_err(at(Stage::Contour))?;
            let selected = load_mask_dir(&masks, &frame).map_err(at(Stage::Contour))?;
            let (result, _) = contour_stage(&selected, &frame, spacing, &boundary, &cfg).map_err(at(Stage::Contour))?;
            write_json(&out, &result).map_err(at(Stage::Contour))?;
            log::info!("{} rooms, {} failed", result.rooms.len(), result.failed.len());
        }
        Cmd::Topology { contours, cloud, frame, out, svg } => {
            let frame = ProjectionFrame::read_json(&frame).map_err(at(Stage::Topology))?;
            let bytes = fs::read(&contours).map_err(|e| at(Stage::Topology)(e.into()))?;
            let rooms: Vec<RoomContour> = match serde_json::from_slice::<ContourOutput>(&bytes) {
                Ok(c) => c.rooms,
                Err(_) => serde_json::from_slice(&bytes).map_err(|e| at(Stage::Topology)(e.into()))?,
            };
            let cloud = read_cloud(&cloud, Stage::Topology)?;
            let (plan, _) =
                build_floorplan(frame, &rooms, &cloud_2d(&cloud), &cfg.topology).map_err(at(Stage::Topology))?;
            plan.write_json(&out).map_err(at(Stage::Topology))?;
            if let Some(svg) = svg {
                fs::write(svg, render_svg(&plan, &RenderOptions { grid: true }))
                    .map_err(|e| at(Stage::Render)(e.into()))?;
            }
            log::info!("{} rooms, {} doors", plan.rooms.len(), plan.doors.len());
        }
        Cmd::Eval { plan, gt, out, endpoint_tol } => {
            if let Some(t) = endpoint_tol {
                cfg.eval.endpoint_tol = t;
            }
            cfg.validate()?;
            let plan = FloorPlan::read_json(&plan).map_err(at(Stage::Eval))?;
            let gt = GroundTruth::read_json(&gt).map_err(at(Stage::Eval))?;
            let report = evaluate(&plan, &gt, &cfg.eval).map_err(at(Stage::Eval))?;
            let text = serde_json::to_string_pretty(&report).map_err(|e| at(Stage::Eval)(e.into()))?;
            match out {
                Some(p) => fs::write(p, text).map_err(|e| at(Stage::Eval)(e.into()))?,
                None => println!("{text}"),
            }
        }
        Cmd::Run { input, out, gt, endpoint_tol, backend } => {
            backend.apply(&mut cfg);
            if let Some(t) = endpoint_tol {
                cfg.eval.endpoint_tol = t;
            }
            cfg.validate()?;
            let gt = match gt {
                Some(p) => Some(GroundTruth::read_json(&p).map_err(at(Stage::Eval))?),
                None => None,
            };
            fs::create_dir_all(&out).map_err(|e| Failure::Stage(e.into()))?;
            fs::write(out.join("config.toml"), cfg.to_toml_string()).map_err(|e| Failure::Stage(e.into()))?;
            let result = run_pipeline(&cfg, &input, gt.as_ref(), &out)?;
            println!(
                "{} rooms, {} doors -> {}",
                result.plan.rooms.len(),
                result.plan.doors.len(),
                out.join("floorplan.json").display()
            );
            if let Some(r) = result.report {
                println!(
                    "rooms {}/{}, boundary precision {:.3}, recall {:.3}",
                    r.room_true, r.room_gt, r.precision_boundary, r.recall_boundary
                );
            }
        }
        Cmd::Synth { out, layout } => {
            let spec = match layout {
                Layout::Single => SceneSpec::single_room(5.0, 4.0),
                Layout::Two => SceneSpec::two_rooms(),
                Layout::Three => SceneSpec::three_rooms(),
                Layout::Four => SceneSpec::four_rooms(),
            };
            let scene = generate_synthetic(&spec, cfg.seed).map_err(Failure::Stage)?;
            let frame = frame_for_input(&scene.cloud, &cfg).map_err(Failure::Stage)?;
            scene.write_dir(&out, Some(&frame)).map_err(Failure::Stage)?;
            write_json(&out.join("scene.json"), &spec).map_err(Failure::Stage)?;
            println!("{} points, {} rooms -> {}", scene.cloud.len(), spec.rooms.len(), out.display());
        }
        Cmd::Render { plan, out, grid } => {
            let plan = FloorPlan::read_json(&plan).map_err(at(Stage::Render))?;
            fs::write(out, render_svg(&plan, &RenderOptions { grid })).map_err(|e| at(Stage::Render)(e.into()))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Stage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_STAGE)
        }
    }
}
