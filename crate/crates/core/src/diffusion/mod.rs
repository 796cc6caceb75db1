//! Denoising diffusion from scratch: cosine schedule, closed-form forward
//! noising, the Gaussian posterior, `x0` recovery, the timestep-conditioned
//! U-Net noise predictor, its trainer and an ancestral sampler.

mod denoiser;
mod model;
mod process;
mod schedule;
mod train;

pub use self::denoiser::{oracle_eps, Denoiser, UNetConfig};
pub use self::model::{ancestral_sample, ancestral_sample_with, train_denoiser, DiffusionModel};
pub use self::process::{posterior, predict_x0, q_sample, X0Mode};
pub use self::schedule::{NoiseSchedule, COSINE_OFFSET, MAX_BETA};
pub use self::train::{train_denoiser_samples, DiffTrainConfig, TrainHistory};
pub(crate) use self::train::lr_at;
