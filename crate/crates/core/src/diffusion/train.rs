use super::process::q_sample_slice;
use super::{Denoiser, NoiseSchedule, UNetConfig};
use crate::error::{Error, Result};
use crate::media::SeededRng;
use crate::nn::{Adam, AdamConfig};

/// Optimization settings shared by every trainer in the crate.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub horizon: usize,
    /// Decay of the exponential moving average of the weights that is
    /// returned in place of the last iterate; `0` returns the last iterate.
    pub ema_decay: f64,
}

impl Default for DiffTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            lr: 2e-3,
            seed: 0,
            horizon: 200,
            ema_decay: 0.995,
        }
    }
}

impl DiffTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.horizon == 0 || !(self.lr > 0.0) {
            return Err(Error::InvalidArgument(
                "epochs, batch size, horizon and learning rate must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return Err(Error::InvalidArgument(format!("ema_decay must be in [0, 1), got {}", self.ema_decay)));
        }
        Ok(())
    }
}

/// Loss curve of a training run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub step_losses: Vec<f32>,
    pub epoch_losses: Vec<f32>,
}

impl TrainHistory {
    pub fn initial(&self) -> f32 {
        self.step_losses.first().copied().unwrap_or(f32::NAN)
    }

    pub fn last_epoch(&self) -> f32 {
        self.epoch_losses.last().copied().unwrap_or(f32::NAN)
    }
}

/// Linear warm-up over the first 5% of steps, then cosine decay to 5% of
/// the peak rate.
pub(crate) fn lr_at(step: usize, total: usize, peak: f64) -> f64 {
    let warm = (total / 20).max(1);
    if step < warm {
        return peak * (step + 1) as f64 / warm as f64;
    }
    let p = (step - warm) as f64 / (total - warm).max(1) as f64;
    peak * (0.05 + 0.95 * 0.5 * (1.0 + (std::f64::consts::PI * p).cos()))
}

/// Fits `eps_hat(x_t, t)` to the injected noise, `t` uniform on `[1, T]`.
///
/// `samples` are flat `[C, H, W]` vectors in the model range.
pub fn train_denoiser_samples(
    samples: &[Vec<f32>],
    unet: UNetConfig,
    sched: &NoiseSchedule,
    cfg: &DiffTrainConfig,
) -> Result<(Denoiser, TrainHistory)> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    if let Some(bad) = samples.iter().find(|s| s.len() != unet.sample_len()) {
        return Err(crate::error::shape_err(unet.sample_len(), bad.len()));
    }
    let root = SeededRng::new(cfg.seed);
    let mut init_rng = root.split(0);
    let mut rng = root.split(1);
    let mut model = Denoiser::new(unet, &mut init_rng)?;
    let mut opt = Adam::new(
        model.params(),
        AdamConfig {
            lr: cfg.lr,
            ..Default::default()
        },
    );
    let steps_per_epoch = samples.len().div_ceil(cfg.batch_size);
    let total = steps_per_epoch * cfg.epochs;
    let mut history = TrainHistory::default();
    let mut ema = (cfg.ema_decay > 0.0).then(|| model.params().clone());
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let len = samples[0].len();
    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut epoch_sum = 0.0f64;
        for batch in order.chunks(cfg.batch_size) {
            let ts: Vec<usize> = batch.iter().map(|_| rng.below(1, sched.horizon() + 1)).collect();
            let eps: Vec<Vec<f32>> = batch.iter().map(|_| rng.normal_vec(len)).collect();
            let x_t: Vec<Vec<f32>> = batch
                .iter()
                .zip(&ts)
                .zip(&eps)
                .map(|((&i, &t), e)| q_sample_slice(sched, &samples[i], t, e))
                .collect();
            let xr: Vec<&[f32]> = x_t.iter().map(Vec::as_slice).collect();
            let er: Vec<&[f32]> = eps.iter().map(Vec::as_slice).collect();
            let loss = model.accumulate_loss_grad(&xr, &ts, &er);
            let step = history.step_losses.len();
            if !loss.is_finite() {
                return Err(Error::Diverged { step, loss });
            }
            opt.set_lr(lr_at(step, total, cfg.lr));
            opt.step(model.params_mut());
            if let Some(ema) = ema.as_mut() {
                // Short warm-up so early weights do not dominate the average.
                let d = cfg.ema_decay.min((1 + step) as f64 / (10 + step) as f64) as f32;
                for id in model.params().ids() {
                    let cur = model.params().value(id).data();
                    for (e, &c) in ema.value_mut(id).data_mut().iter_mut().zip(cur) {
                        *e = d * *e + (1.0 - d) * c;
                    }
                }
            }
            history.step_losses.push(loss);
            epoch_sum += loss as f64 * batch.len() as f64;
        }
        history.epoch_losses.push((epoch_sum / samples.len() as f64) as f32);
        log::debug!(
            "denoiser epoch {} loss {:.4}",
            history.epoch_losses.len(),
            history.last_epoch()
        );
    }
    if let Some(ema) = ema {
        for id in ema.ids() {
            *model.params_mut().value_mut(id) = ema.value(id).clone();
        }
    }
    Ok((model, history))
}
