//! Pipeline configuration, read from TOML with one table per stage.
//!
//! Every key is optional; missing keys take their defaults. Unknown keys are
//! rejected.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ceiling::{CeilingParams, MaxScope};
use crate::contour::ContourParams;
use crate::density::{EnhanceParams, FrameParams};
use crate::error::{Error, Result};
use crate::eval::EvalParams;
use crate::mask_filter::FilterParams;
use crate::prompts::PromptParams;
use crate::segmentation::FallbackParams;
use crate::topology::TopologyParams;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// Voxel size for downsampling after load; none keeps every point.
    pub voxel: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CeilingConfig {
    pub gamma: f64,
    pub delta_z: f64,
    pub scope: MaxScope,
    pub ransac_thresh: f64,
    pub ransac_iters: usize,
}

impl Default for CeilingConfig {
    fn default() -> Self {
        let c = CeilingParams::default();
        CeilingConfig {
            gamma: c.gamma,
            delta_z: c.delta_z,
            scope: c.scope,
            ransac_thresh: 0.05,
            ransac_iters: 1000,
        }
    }
}

impl CeilingConfig {
    pub fn params(&self) -> CeilingParams {
        CeilingParams {
            gamma: self.gamma,
            delta_z: self.delta_z,
            scope: self.scope,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityConfig {
    /// Resolution factor: `R = kappa · extent / spacing`, clamped.
    pub kappa: f64,
    pub r_min: f64,
    pub r_max: f64,
    /// Points sampled for the mean nearest-neighbor spacing.
    pub spacing_sample: usize,
    pub blur_kernel: usize,
    pub blur_sigma: f64,
    pub clahe_clip: f64,
    pub clahe_tiles: usize,
}

impl Default for DensityConfig {
    fn default() -> Self {
        let f = FrameParams::default();
        let e = EnhanceParams::default();
        DensityConfig {
            kappa: 1.0,
            r_min: f.r_min,
            r_max: f.r_max,
            spacing_sample: 2000,
            blur_kernel: e.blur_kernel,
            blur_sigma: e.blur_sigma,
            clahe_clip: e.clahe_clip,
            clahe_tiles: e.clahe_tiles,
        }
    }
}

impl DensityConfig {
    pub fn frame_params(&self) -> FrameParams {
        FrameParams {
            kappa: self.kappa,
            r_min: self.r_min,
            r_max: self.r_max,
        }
    }

    pub fn enhance_params(&self) -> EnhanceParams {
        EnhanceParams {
            blur_kernel: self.blur_kernel,
            blur_sigma: self.blur_sigma,
            clahe_clip: self.clahe_clip,
            clahe_tiles: self.clahe_tiles,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Fallback,
    ExternalDir,
    RunnerSubprocess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationConfig {
    pub backend: BackendKind,
    /// Mask directory for `external_dir`.
    pub mask_dir: Option<PathBuf>,
    /// Program for `runner_subprocess`.
    pub runner: PathBuf,
    pub wall_thresh: u8,
    /// Opening-sealing radius of the fallback segmenter, meters.
    pub seal_radius: f64,
    /// Bright blobs smaller than this (m²) are not treated as walls.
    pub min_wall_area: f64,
    /// Closing radius for the wall mask, meters.
    pub wall_close: f64,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            backend: BackendKind::Fallback,
            mask_dir: None,
            runner: PathBuf::from("sam-runner"),
            wall_thresh: 128,
            seal_radius: 0.6,
            min_wall_area: 0.01,
            wall_close: 0.1,
        }
    }
}

impl SegmentationConfig {
    pub fn fallback_params(&self, pixel_size: f64) -> FallbackParams {
        FallbackParams {
            wall_thresh: self.wall_thresh,
            seal_px: (self.seal_radius / pixel_size).round() as usize,
            min_wall_px: (self.min_wall_area / (pixel_size * pixel_size)).round() as usize,
            close_px: (self.wall_close / pixel_size).round() as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub ingest: IngestConfig,
    pub ceiling: CeilingConfig,
    pub density: DensityConfig,
    pub prompts: PromptParams,
    pub segmentation: SegmentationConfig,
    pub mask_filter: FilterParams,
    pub contour: ContourParams,
    pub topology: TopologyParams,
    pub eval: EvalParams,
}

impl PipelineConfig {
    pub fn from_toml_str(s: &str) -> Result<PipelineConfig> {
        let cfg: PipelineConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(what.to_string()));
        if self.ingest.voxel.is_some_and(|v| !(v > 0.0)) {
            return bad("ingest.voxel must be > 0");
        }
        if !(self.ceiling.gamma > 0.0) {
            return bad("ceiling.gamma must be > 0");
        }
        if !(self.ceiling.delta_z >= 0.0) {
            return bad("ceiling.delta_z must be ≥ 0");
        }
        if !(self.ceiling.ransac_thresh > 0.0) {
            return bad("ceiling.ransac_thresh must be > 0");
        }
        let d = &self.density;
        if !(d.kappa > 0.0) || !(d.r_min >= 1.0) || !(d.r_max >= d.r_min) {
            return bad("density: need kappa > 0 and 1 ≤ r_min ≤ r_max");
        }
        if d.blur_kernel.is_multiple_of(2) || d.clahe_tiles == 0 || d.spacing_sample == 0 {
            return bad("density: blur_kernel must be odd, clahe_tiles and spacing_sample ≥ 1");
        }
        if self.prompts.pool < 3 || self.prompts.pool.is_multiple_of(2) {
            return bad("prompts.pool must be odd and ≥ 3");
        }
        if self.segmentation.backend == BackendKind::ExternalDir && self.segmentation.mask_dir.is_none() {
            return bad("segmentation.mask_dir is required for the external_dir backend");
        }
        let sg = &self.segmentation;
        if !(sg.seal_radius >= 0.0) || !(sg.min_wall_area >= 0.0) || !(sg.wall_close >= 0.0) {
            return bad("segmentation: seal_radius, min_wall_area and wall_close must be ≥ 0");
        }
        let c = &self.contour;
        if !(c.boundary_radius > 0.0) || !(c.sector_deg > 0.0 && c.sector_deg < 360.0) {
            return bad("contour: need boundary_radius > 0 and 0 < sector_deg < 360");
        }
        let t = &self.topology;
        if !(t.min_door > 0.0 && t.max_door >= t.min_door) || !(t.gap_tol > 0.0) {
            return bad("topology: need 0 < min_door ≤ max_door and gap_tol > 0");
        }
        if !(self.eval.endpoint_tol >= 0.0) {
            return bad("eval.endpoint_tol must be ≥ 0");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(PipelineConfig::from_toml_str("").unwrap(), PipelineConfig::default());
    }

    #[test]
    fn round_trip() {
        let mut c = PipelineConfig::default();
        c.seed = 7;
        c.ingest.voxel = Some(0.05);
        c.contour.rdp_epsilon = Some(0.1);
        let back = PipelineConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_sections_and_errors() {
        let c = PipelineConfig::from_toml_str("[ceiling]\ngamma = 0.2\n[eval]\nendpoint_tol = 0.1\n").unwrap();
        assert_eq!(c.ceiling.gamma, 0.2);
        assert_eq!(c.ceiling.delta_z, 0.1);
        assert_eq!(c.eval.endpoint_tol, 0.1);
        assert!(matches!(PipelineConfig::from_toml_str("[ceiling]\ngama = 1"), Err(Error::Config(_))));
        assert!(matches!(PipelineConfig::from_toml_str("[ceiling]\ngamma = -1"), Err(Error::Config(_))));
        assert!(PipelineConfig::from_toml_str("[segmentation]\nbackend = \"external_dir\"").is_err());
    }
}
