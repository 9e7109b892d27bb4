//! Quality metrics, Bjøntegaard deltas, RD curves and report tables.

mod bd;
mod curve;
mod eval;
mod quality;
mod report;

pub use bd::{bd_metrics, bd_quality, bd_rate, BdResult};
pub use curve::{RdCurve, RdPoint};
pub use eval::{evaluate_model, evaluate_sample, rate_comparison, RateRow, SampleEval};
pub use quality::{ms_ssim, psnr, ssim_components, MSSSIM_WEIGHTS, SSIM_C1, SSIM_C2};
pub use report::{emit_report, format_bd, MethodRow, Report};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("shape mismatch: {0:?} vs {1:?}")]
    Shape(Vec<usize>, Vec<usize>),
    #[error("image of {h}×{w} is too small for 5-scale MS-SSIM (need at least 161 px per side)")]
    TooSmall { h: usize, w: usize },
    #[error("curve `{name}` has {points} points, BD needs at least 4")]
    TooFewPoints { name: String, points: usize },
    #[error("curves do not overlap in {0}")]
    NoOverlap(&'static str),
    #[error("curve fit failed: {0}")]
    Fit(String),
    #[error("curve parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Net(#[from] crate::net::NetError),
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;
