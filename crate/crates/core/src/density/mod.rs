//! Top-down density rasterization and enhancement.

mod clahe;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geom::Point2;
use crate::ingest::PointCloud;
use crate::raster::{read_gray_png, write_gray_png, Raster};
use crate::spatial::Grid3;

pub use clahe::clahe;

/// World ↔ pixel registration. Serialized as the shared `frame.json`
/// contract: `{"x_min", "y_min", "pixel_size", "width", "height"}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionFrame {
    pub x_min: f64,
    pub y_min: f64,
    pub pixel_size: f64,
    pub width: usize,
    pub height: usize,
}

impl ProjectionFrame {
    /// Pixel holding world point `(x, y)`. Points on the far edge of the
    /// frame (`x = x_min + width·s`) fall into the last column.
    pub fn world_to_pixel(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        Some((
            axis_index(x - self.x_min, self.pixel_size, self.width)?,
            axis_index(y - self.y_min, self.pixel_size, self.height)?,
        ))
    }

    /// World coordinates of the center of pixel `(m, n)`.
    pub fn pixel_center(&self, m: f64, n: f64) -> Point2 {
        Point2::new(
            self.x_min + (m + 0.5) * self.pixel_size,
            self.y_min + (n + 0.5) * self.pixel_size,
        )
    }

    pub fn area_m2(&self) -> f64 {
        self.width as f64 * self.height as f64 * self.pixel_size * self.pixel_size
    }

    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(self).expect("frame serializes");
        v.push(b'\n');
        v
    }

    /// SHA-256 of the canonical `frame.json` bytes, hex encoded.
    pub fn fingerprint(&self) -> String {
        fingerprint_bytes(&self.to_json_bytes())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json_bytes())?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<ProjectionFrame> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

pub fn fingerprint_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn axis_index(offset: f64, s: f64, len: usize) -> Option<usize> {
    if !(offset >= 0.0) {
        return None;
    }
    let i = (offset / s).floor() as usize;
    if i < len {
        Some(i)
    } else if offset <= len as f64 * s * (1.0 + 1e-12) {
        Some(len - 1)
    } else {
        None
    }
}

/// Mean nearest-neighbor distance over `min(sample, N)` stride-sampled points.
pub fn estimate_point_spacing(pc: &PointCloud, sample: usize) -> Result<f64> {
    if pc.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: pc.len(),
        });
    }
    if sample == 0 {
        return Err(Error::InvalidParameter("sample must be at least 1".into()));
    }
    let pts = pc.points();
    let b = pc.bounds();
    let ext = b
        .x_extent()
        .max(b.y_extent())
        .max(b.max.z - b.min.z)
        .max(1e-9);
    let cell = ext / (pts.len() as f64).cbrt().max(1.0);
    let grid = Grid3::new(pts, cell);
    let k = sample.min(pts.len());
    let total: f64 = (0..k)
        .map(|i| i * pts.len() / k)
        .map(|idx| grid.nearest_other(pts, idx).unwrap_or(0.0))
        .sum();
    Ok(total / k as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameParams {
    pub kappa: f64,
    pub r_min: f64,
    pub r_max: f64,
}

impl Default for FrameParams {
    fn default() -> Self {
        FrameParams {
            kappa: 1000.0,
            r_min: 256.0,
            r_max: 4096.0,
        }
    }
}

/// Unclamped target resolution `kappa · max_extent / delta`.
pub fn raw_resolution(x_ext: f64, y_ext: f64, delta: f64, kappa: f64) -> f64 {
    kappa * x_ext.max(y_ext) / delta
}

/// Frame covering `[x_min, x_max] × [y_min, y_max]` with the clamped target
/// resolution along the longer axis.
pub fn compute_frame(
    x_range: (f64, f64),
    y_range: (f64, f64),
    delta: f64,
    params: &FrameParams,
) -> Result<ProjectionFrame> {
    let x_ext = x_range.1 - x_range.0;
    let y_ext = y_range.1 - y_range.0;
    if !(x_ext > 0.0) || !(y_ext > 0.0) {
        return Err(Error::DegenerateExtent { x_ext, y_ext });
    }
    if !(delta > 0.0) || !(params.kappa > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "delta and kappa must be positive (delta {delta}, kappa {})",
            params.kappa
        )));
    }
    if !(params.r_min >= 1.0) || params.r_max < params.r_min {
        return Err(Error::InvalidParameter(format!(
            "bad resolution clamp [{}, {}]",
            params.r_min, params.r_max
        )));
    }
    let r_raw = raw_resolution(x_ext, y_ext, delta, params.kappa);
    let r = r_raw.clamp(params.r_min, params.r_max).round();
    if r != r_raw {
        log::info!("target resolution {r_raw:.1} px clamped to {r}");
    }
    let s = x_ext.max(y_ext) / r;
    let cells = |ext: f64| ((ext / s - 1e-9).ceil() as usize).max(1);
    Ok(ProjectionFrame {
        x_min: x_range.0,
        y_min: y_range.0,
        pixel_size: s,
        width: cells(x_ext),
        height: cells(y_ext),
    })
}

/// Raw counts plus the optional enhanced 8-bit image.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub frame: ProjectionFrame,
    pub counts: Raster<u32>,
    pub enhanced: Option<Raster<u8>>,
}

impl DensityGrid {
    pub fn total(&self) -> u64 {
        self.counts.data().iter().map(|&c| c as u64).sum()
    }
}

pub fn project_density(pc: &PointCloud, frame: &ProjectionFrame) -> Result<DensityGrid> {
    let mut counts = Raster::filled(frame.width, frame.height, 0u32);
    for (index, p) in pc.points().iter().enumerate() {
        let (m, n) = frame
            .world_to_pixel(p.x, p.y)
            .ok_or(Error::PointOutsideFrame { index, x: p.x, y: p.y })?;
        let i = counts.idx(m, n);
        counts.data_mut()[i] += 1;
    }
    Ok(DensityGrid {
        frame: *frame,
        counts,
        enhanced: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnhanceParams {
    pub blur_kernel: usize,
    pub blur_sigma: f64,
    pub clahe_clip: f64,
    pub clahe_tiles: usize,
}

impl Default for EnhanceParams {
    fn default() -> Self {
        EnhanceParams {
            blur_kernel: 5,
            blur_sigma: 1.0,
            clahe_clip: 2.0,
            clahe_tiles: 8,
        }
    }
}

/// `log1p` of the counts mapped linearly so the maximum becomes 255.
pub fn log_normalize(counts: &Raster<u32>) -> Result<Raster<u8>> {
    let max = counts.data().iter().copied().max().unwrap_or(0);
    if max == 0 {
        return Err(Error::EmptyCounts);
    }
    let scale = 255.0 / (max as f64).ln_1p();
    Ok(counts.map(|&c| ((c as f64).ln_1p() * scale).round().clamp(0.0, 255.0) as u8))
}

pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as i64;
    let w: Vec<f64> = (-half..=half)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = w.iter().sum();
    w.into_iter().map(|v| v / sum).collect()
}

/// Separable Gaussian blur with symmetric (edge-repeating) reflection.
pub fn gaussian_blur(img: &Raster<f64>, size: usize, sigma: f64) -> Raster<f64> {
    let k = gaussian_kernel(size, sigma);
    let half = (size / 2) as i64;
    let (w, h) = img.dims();
    let pass = |src: &Raster<f64>, horizontal: bool| {
        let mut dst = Raster::filled(w, h, 0.0);
        for n in 0..h {
            for m in 0..w {
                let mut acc = 0.0;
                for (t, wt) in k.iter().enumerate() {
                    let o = t as i64 - half;
                    let v = if horizontal {
                        *src.get(reflect(m as i64 + o, w), n)
                    } else {
                        *src.get(m, reflect(n as i64 + o, h))
                    };
                    acc += wt * v;
                }
                dst.set(m, n, acc);
            }
        }
        dst
    };
    let tmp = pass(img, true);
    pass(&tmp, false)
}

/// Symmetric reflection: `… c b a | a b c … x y z | z y x …`.
fn reflect(i: i64, len: usize) -> usize {
    let len = len as i64;
    if len == 1 {
        return 0;
    }
    let period = 2 * len;
    let r = i.rem_euclid(period);
    (if r < len { r } else { period - 1 - r }) as usize
}

/// log1p → 8-bit normalize → Gaussian blur → CLAHE.
pub fn enhance(grid: &DensityGrid, params: &EnhanceParams) -> Result<DensityGrid> {
    if params.blur_kernel == 0 || params.blur_kernel.is_multiple_of(2) {
        return Err(Error::InvalidParameter(format!(
            "blur kernel must be odd and ≥ 1, got {}",
            params.blur_kernel
        )));
    }
    if !(params.blur_sigma > 0.0) || params.clahe_tiles == 0 {
        return Err(Error::InvalidParameter(
            "blur sigma and CLAHE tile count must be positive".into(),
        ));
    }
    let normalized = log_normalize(&grid.counts)?;
    let blurred = gaussian_blur(
        &normalized.map(|&v| v as f64),
        params.blur_kernel,
        params.blur_sigma,
    )
    .map(|&v| v.round().clamp(0.0, 255.0) as u8);
    let enhanced = clahe(&blurred, params.clahe_clip, params.clahe_tiles);
    Ok(DensityGrid {
        frame: grid.frame,
        counts: grid.counts.clone(),
        enhanced: Some(enhanced),
    })
}

/// Writes `enhanced` as a grayscale PNG and `frame.json` next to it.
pub fn export_density_png(grid: &DensityGrid, path: &Path) -> Result<()> {
    let img = grid
        .enhanced
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("density grid has not been enhanced".into()))?;
    write_gray_png(path, img)?;
    grid.frame.write_json(&sidecar_path(path))
}

/// Reads a PNG written by [`export_density_png`] with its frame sidecar.
pub fn import_density_png(path: &Path) -> Result<(ProjectionFrame, Raster<u8>)> {
    let frame = ProjectionFrame::read_json(&sidecar_path(path))?;
    let img = read_gray_png(path)?;
    if img.dims() != (frame.width, frame.height) {
        return Err(Error::FrameMismatch(format!(
            "{} is {:?}, frame says {}x{}",
            path.display(),
            img.dims(),
            frame.width,
            frame.height
        )));
    }
    Ok((frame, img))
}

pub fn sidecar_path(png: &Path) -> std::path::PathBuf {
    png.with_file_name("frame.json")
}
