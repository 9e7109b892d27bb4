//! KITTI ingestion: LiDAR scans, calibration, projection into the camera
//! image and the joint RGB + depth sample the network consumes.

mod calib;
mod dataset;
mod project;
mod synthetic;
mod unified;
mod velodyne;

pub use calib::{parse_calibration, CalibrationSet};
pub use dataset::{list_pcnu_dir, load_triplet, KittiDataset};
pub use project::{project_points, rasterize_depth, DepthMap, DepthSource, ProjectedPoint, Projection};
pub use unified::{
    crop_sample, load_png_rgb, make_unified_sample, read_pcnu, save_png_rgb, write_pcnu, write_png_pair, UnifiedSample,
    DEFAULT_D_MAX, PCNU_MAGIC, PCNU_VERSION,
};
pub use synthetic::{synthetic_frame, write_synthetic_split, SyntheticFrame};
pub use velodyne::{parse_velodyne_bin, write_velodyne_bin, PointCloud};

#[derive(Debug, thiserror::Error)]
pub enum KittiError {
    #[error("format error: {0}")]
    Format(String),
    #[error("calibration is missing key `{0}`")]
    MissingKey(&'static str),
    #[error("calibration key `{key}` expects {expected} values, found {actual}")]
    Count { key: &'static str, expected: usize, actual: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("crop {top},{left} {h}×{w} does not fit a {height}×{width} sample")]
    Crop { top: usize, left: usize, h: usize, w: usize, height: usize, width: usize },
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = KittiError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> KittiError + '_ {
    move |source| KittiError::Io { path: path.display().to_string(), source }
}
