//! Vectorized 2D floorplan reconstruction from indoor LiDAR point clouds.
//!
//! The pipeline runs in stages, each exposed as its own module:
//!
//! 1. [`ingest`] parses PLY/XYZ files and voxel-downsamples.
//! 2. [`ceiling`] keeps points near each grid cell's top elevation and fits
//!    the ceiling plane with RANSAC.
//! 3. [`density`] rasterizes the filtered cloud into a world-registered
//!    density map and enhances it (log, blur, CLAHE).
//! 4. [`prompts`] picks density peaks as seed points for segmentation.
//! 5. [`segmentation`] turns the enhanced map and prompts into candidate room
//!    masks through a pluggable backend.
//! 6. [`mask_filter`] screens and selects one mask per room.
//! 7. [`contour`] traces, simplifies, regularizes and corrects room outlines.
//! 8. [`topology`] finds shared walls and door openings.
//! 9. [`eval`] scores a floorplan against ground truth.
//!
//! [`pipeline`] strings the stages together with persisted intermediates,
//! [`synth`] generates synthetic scenes with known truth, and [`render`]
//! writes SVG drawings.

pub mod ceiling;
pub mod config;
pub mod contour;
pub mod density;
pub mod error;
pub mod eval;
pub mod geom;
pub mod ingest;
pub mod mask_filter;
pub mod pipeline;
pub mod prompts;
pub mod raster;
pub mod render;
pub mod segmentation;
pub mod spatial;
pub mod synth;
pub mod topology;

pub use error::{Error, Result};
pub use geom::Point2;
pub use ingest::{Bounds3, Point3, PointCloud};
