use std::collections::BTreeMap;
use std::path::Path;

use super::process::predict_x0_slice;
use super::{train_denoiser_samples, DiffTrainConfig, Denoiser, NoiseSchedule, TrainHistory, UNetConfig, X0Mode};
use crate::error::{Error, Result};
use crate::media::{FloatImage, ImageTensor, SeededRng};
use crate::nn::serialize::WeightFile;

pub const DENOISER_KIND: &str = "denoiser";

/// A trained denoiser together with the schedule it was trained under.
#[derive(Clone, Debug)]
pub struct DiffusionModel {
    pub denoiser: Denoiser,
    pub schedule: NoiseSchedule,
    pub seed: u64,
}

impl DiffusionModel {
    pub fn horizon(&self) -> usize {
        self.schedule.horizon()
    }

    /// `(channels, height, width)` the network was built for.
    pub fn sample_shape(&self) -> (usize, usize, usize) {
        let c = self.denoiser.config();
        (c.channels, c.height, c.width)
    }

    pub fn predict_eps(&self, x_t: &[f32], t: usize) -> Result<Vec<f32>> {
        self.schedule.check_t(t)?;
        Ok(self.denoiser.predict(&[x_t], &[t])?.remove(0))
    }

    pub fn predict_eps_batch(&self, xs: &[&[f32]], ts: &[usize]) -> Result<Vec<Vec<f32>>> {
        for &t in ts {
            self.schedule.check_t(t)?;
        }
        self.denoiser.predict(xs, ts)
    }

    pub fn to_weight_file(&self) -> WeightFile {
        let c = self.denoiser.config();
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut meta = BTreeMap::new();
        meta.insert("channels".into(), c.channels.to_string());
        meta.insert("height".into(), c.height.to_string());
        meta.insert("width".into(), c.width.to_string());
        meta.insert("base".into(), c.base.to_string());
        meta.insert("mults".into(), join(&c.mults));
        meta.insert("kernel".into(), join(&[c.kernel.0, c.kernel.1]));
        meta.insert("pool".into(), join(&[c.pool.0, c.pool.1]));
        meta.insert("temb_dim".into(), c.temb_dim.to_string());
        meta.insert("T".into(), self.schedule.horizon().to_string());
        meta.insert("schedule".into(), "cosine".into());
        meta.insert("seed".into(), self.seed.to_string());
        WeightFile {
            kind: DENOISER_KIND.into(),
            meta,
            params: self.denoiser.params().clone(),
        }
    }

    pub fn from_weight_file(wf: &WeightFile) -> Result<Self> {
        wf.expect_kind(DENOISER_KIND)?;
        let list = |key: &str| -> Result<Vec<usize>> {
            wf.meta
                .get(key)
                .ok_or_else(|| Error::ModelFormat(format!("missing metadata key {key}")))?
                .split(',')
                .map(|s| s.parse().map_err(|_| Error::ModelFormat(format!("bad {key}"))))
                .collect()
        };
        let pair = |key: &str| -> Result<(usize, usize)> {
            match list(key)?[..] {
                [a, b] => Ok((a, b)),
                _ => Err(Error::ModelFormat(format!("{key} must have two entries"))),
            }
        };
        let schedule_kind: String = wf.meta_parse("schedule")?;
        if schedule_kind != "cosine" {
            return Err(Error::ModelFormat(format!("unknown schedule {schedule_kind}")));
        }
        let cfg = UNetConfig {
            channels: wf.meta_parse("channels")?,
            height: wf.meta_parse("height")?,
            width: wf.meta_parse("width")?,
            base: wf.meta_parse("base")?,
            mults: list("mults")?,
            kernel: pair("kernel")?,
            pool: pair("pool")?,
            temb_dim: wf.meta_parse("temb_dim")?,
        };
        let mut denoiser = Denoiser::new(cfg, &mut SeededRng::new(0))?;
        wf.load_into(denoiser.params_mut())?;
        Ok(Self {
            denoiser,
            schedule: NoiseSchedule::cosine_default(wf.meta_parse("T")?)?,
            seed: wf.meta_parse("seed")?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_weight_file().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_weight_file(&WeightFile::load(path)?)
    }
}

/// Trains a denoiser on images (converted to `[-1, 1]`) under the cosine
/// schedule with horizon `cfg.horizon`.
pub fn train_denoiser(
    dataset: &[ImageTensor],
    unet: Option<UNetConfig>,
    cfg: &DiffTrainConfig,
) -> Result<(DiffusionModel, TrainHistory)> {
    let first = dataset
        .first()
        .ok_or_else(|| Error::InvalidArgument("training set is empty".into()))?;
    for img in dataset {
        first.ensure_same_shape(img)?;
    }
    let (c, h, w) = first.shape();
    let unet = unet.unwrap_or_else(|| UNetConfig::image(c, h, w));
    if (unet.channels, unet.height, unet.width) != (c, h, w) {
        return Err(crate::error::shape_err((unet.channels, unet.height, unet.width), (c, h, w)));
    }
    let schedule = NoiseSchedule::cosine_default(cfg.horizon)?;
    let samples: Vec<Vec<f32>> = dataset.iter().map(|i| i.to_model_range().to_f32()).collect();
    let (denoiser, history) = train_denoiser_samples(&samples, unet, &schedule, cfg)?;
    Ok((
        DiffusionModel {
            denoiser,
            schedule,
            seed: cfg.seed,
        },
        history,
    ))
}

/// Ancestral sampling with an arbitrary noise predictor
/// `eps_fn(x_t, t) -> eps_hat`: from pure noise at `T`, each step recovers
/// `x0_hat` by exact inversion (clamped to `[-1, 1]`) and draws `x_{t-1}`
/// from the Gaussian posterior.
pub fn ancestral_sample_with(
    mut eps_fn: impl FnMut(&[f32], usize) -> Result<Vec<f32>>,
    sched: &NoiseSchedule,
    len: usize,
    rng: &mut SeededRng,
) -> Result<Vec<f32>> {
    let mut x = rng.normal_vec(len);
    for t in (1..=sched.horizon()).rev() {
        let eps = eps_fn(&x, t)?;
        let x0: Vec<f32> = predict_x0_slice(sched, &x, t, &eps, X0Mode::ExactInversion)
            .into_iter()
            .map(|v| v.clamp(-1.0, 1.0))
            .collect();
        let (c0, ct) = sched.posterior_mean_coefs(t);
        let sd = sched.posterior_variance(t).sqrt();
        x = x0
            .iter()
            .zip(&x)
            .map(|(&a, &b)| {
                let noise = if t > 1 { rng.normal() as f64 } else { 0.0 };
                (c0 * a as f64 + ct * b as f64 + sd * noise) as f32
            })
            .collect();
    }
    Ok(x.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect())
}

/// Draws `n` samples from a trained model.
pub fn ancestral_sample(model: &DiffusionModel, n: usize, rng: &mut SeededRng) -> Result<Vec<FloatImage>> {
    let (c, h, w) = model.sample_shape();
    (0..n)
        .map(|_| {
            let v = ancestral_sample_with(|x, t| model.predict_eps(x, t), &model.schedule, c * h * w, rng)?;
            FloatImage::new(c, h, w, v.into_iter().map(f64::from).collect())
        })
        .collect()
}
