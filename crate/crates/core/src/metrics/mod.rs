//! Image-quality metrics (MSE, PSNR, SSIM, NCC), bit error and removal rate,
//! and the two-sided sanitization verdict.
//!
//! Image metrics are computed on raw `[0, 255]` pixel values.

mod quality;
mod ssim;
mod verdict;

pub use self::quality::{ber, mse, mse_slices, ncc, ncc_slices, psnr, psnr_from_mse, rr};
pub use self::ssim::{ssim, SSIM_WINDOW};
pub use self::verdict::{verdict, MetricReport, QualityMetrics, Verdict, THETA_IP, THETA_SE};
