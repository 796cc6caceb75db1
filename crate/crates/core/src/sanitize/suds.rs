use crate::diffusion::{
    predict_x0, q_sample, train_denoiser_samples, DiffTrainConfig, DiffusionModel, NoiseSchedule, TrainHistory,
    UNetConfig, X0Mode,
};
use crate::error::{shape_err, Result};
use crate::media::{AudioClip, FloatImage, ImageTensor, SeededRng};

/// Samples per audio frame fed to the one-dimensional denoiser.
pub const AUDIO_FRAME: usize = 4096;

fn as_float(v: Vec<f32>, like: &FloatImage) -> Result<FloatImage> {
    let (c, h, w) = like.shape();
    FloatImage::new(c, h, w, v.into_iter().map(f64::from).collect())
}

fn normal_image(like: &FloatImage, rng: &mut SeededRng) -> Result<FloatImage> {
    let (c, h, w) = like.shape();
    FloatImage::new(c, h, w, (0..like.len()).map(|_| rng.normal() as f64).collect())
}

/// Noise, predict, invert, in model units, for any noise predictor.
pub fn dm_suds_with(
    x0: &FloatImage,
    t: usize,
    sched: &NoiseSchedule,
    mut eps_fn: impl FnMut(&FloatImage, usize) -> Result<FloatImage>,
    rng: &mut SeededRng,
) -> Result<FloatImage> {
    sched.check_t(t)?;
    let eps = normal_image(x0, rng)?;
    let x_t = q_sample(x0, t, &eps, sched)?;
    let eps_hat = eps_fn(&x_t, t)?;
    predict_x0(&x_t, t, &eps_hat, sched, X0Mode::ExactInversion)
}

fn check_image(model: &DiffusionModel, shape: (usize, usize, usize)) -> Result<()> {
    if model.sample_shape() != shape {
        return Err(shape_err(model.sample_shape(), shape));
    }
    Ok(())
}

fn model_eps(model: &DiffusionModel) -> impl Fn(&FloatImage, usize) -> Result<FloatImage> + '_ {
    move |x, t| as_float(model.predict_eps(&x.to_f32(), t)?, x)
}

/// Diffusion sanitization: forward-noise the container to step `t` with
/// fresh noise, then recover a single-shot clean estimate from the model's
/// noise prediction.
pub fn dm_suds(x: &ImageTensor, t: usize, model: &DiffusionModel, rng: &mut SeededRng) -> Result<ImageTensor> {
    check_image(model, x.shape())?;
    dm_suds_with(&x.to_model_range(), t, &model.schedule, model_eps(model), rng)?.from_model_range()
}

/// [`dm_suds`] over many images with one batched network call per chunk.
/// Noise is drawn from `rng` in input order.
pub fn dm_suds_batch(
    xs: &[ImageTensor],
    t: usize,
    model: &DiffusionModel,
    rng: &mut SeededRng,
) -> Result<Vec<ImageTensor>> {
    model.schedule.check_t(t)?;
    let mut noisy = Vec::with_capacity(xs.len());
    for x in xs {
        check_image(model, x.shape())?;
        let x0 = x.to_model_range();
        let eps = normal_image(&x0, rng)?;
        noisy.push(q_sample(&x0, t, &eps, &model.schedule)?);
    }
    invert_batch(&noisy, t, model)
}

fn invert_batch(noisy: &[FloatImage], t: usize, model: &DiffusionModel) -> Result<Vec<ImageTensor>> {
    let mut out = Vec::with_capacity(noisy.len());
    for chunk in noisy.chunks(64) {
        let f: Vec<Vec<f32>> = chunk.iter().map(FloatImage::to_f32).collect();
        let refs: Vec<&[f32]> = f.iter().map(Vec::as_slice).collect();
        let eps = model.predict_eps_batch(&refs, &vec![t; refs.len()])?;
        for (x_t, e) in chunk.iter().zip(eps) {
            let e = as_float(e, x_t)?;
            out.push(predict_x0(x_t, t, &e, &model.schedule, X0Mode::ExactInversion)?.from_model_range()?);
        }
    }
    Ok(out)
}

/// The no-added-noise ablation: the container itself is treated as `x_t`
/// and inverted with the model's noise prediction at step `t`.
pub fn dm_suds_direct(x: &ImageTensor, t: usize, model: &DiffusionModel) -> Result<ImageTensor> {
    Ok(dm_suds_direct_batch(std::slice::from_ref(x), t, model)?.remove(0))
}

pub fn dm_suds_direct_batch(xs: &[ImageTensor], t: usize, model: &DiffusionModel) -> Result<Vec<ImageTensor>> {
    model.schedule.check_t(t)?;
    let mut inputs = Vec::with_capacity(xs.len());
    for x in xs {
        check_image(model, x.shape())?;
        inputs.push(x.to_model_range());
    }
    invert_batch(&inputs, t, model)
}

/// Splits normalised samples into zero-padded frames of `frame` samples.
fn frames(values: &[f64], frame: usize) -> Vec<Vec<f64>> {
    values
        .chunks(frame)
        .map(|c| {
            let mut v = c.to_vec();
            v.resize(frame, 0.0);
            v
        })
        .collect()
}

/// Audio variant of [`dm_suds`]: the clip is cut into fixed frames matching
/// the one-dimensional model, each frame is sanitized, and the result is
/// trimmed back to the clip length.
pub fn dm_suds_audio(clip: &AudioClip, t: usize, model: &DiffusionModel, rng: &mut SeededRng) -> Result<AudioClip> {
    let (c, h, w) = model.sample_shape();
    if c != 1 || h != 1 {
        return Err(shape_err((1, 1, w), (c, h, w)));
    }
    model.schedule.check_t(t)?;
    let norm: Vec<f64> = clip.to_normalized().into_iter().map(f64::from).collect();
    let mut noisy = Vec::new();
    for f in frames(&norm, w) {
        let x0 = FloatImage::new(1, 1, w, f)?;
        let eps = normal_image(&x0, rng)?;
        noisy.push(q_sample(&x0, t, &eps, &model.schedule)?);
    }
    let mut out = Vec::with_capacity(noisy.len() * w);
    for chunk in noisy.chunks(16) {
        let f: Vec<Vec<f32>> = chunk.iter().map(FloatImage::to_f32).collect();
        let refs: Vec<&[f32]> = f.iter().map(Vec::as_slice).collect();
        let eps = model.predict_eps_batch(&refs, &vec![t; refs.len()])?;
        for (x_t, e) in chunk.iter().zip(eps) {
            let e = as_float(e, x_t)?;
            let x0 = predict_x0(x_t, t, &e, &model.schedule, X0Mode::ExactInversion)?;
            out.extend(x0.data().iter().map(|v| v.clamp(-1.0, 1.0) as f32));
        }
    }
    out.truncate(norm.len());
    AudioClip::from_normalized(&out, clip.sample_rate())
}

/// Trains the one-dimensional denoiser on non-overlapping [`AUDIO_FRAME`]
/// frames of `clips` (the last frame of each clip zero-padded).
pub fn train_audio_denoiser(clips: &[AudioClip], cfg: &DiffTrainConfig) -> Result<(DiffusionModel, TrainHistory)> {
    let samples: Vec<Vec<f32>> = clips
        .iter()
        .flat_map(|c| frames(&c.to_normalized().into_iter().map(f64::from).collect::<Vec<_>>(), AUDIO_FRAME))
        .map(|f| f.into_iter().map(|v| v as f32).collect())
        .collect();
    if samples.is_empty() {
        return Err(crate::Error::InvalidArgument("no audio to train on".into()));
    }
    let schedule = NoiseSchedule::cosine_default(cfg.horizon)?;
    let (denoiser, history) = train_denoiser_samples(&samples, UNetConfig::audio(AUDIO_FRAME), &schedule, cfg)?;
    Ok((
        DiffusionModel {
            denoiser,
            schedule,
            seed: cfg.seed,
        },
        history,
    ))
}
