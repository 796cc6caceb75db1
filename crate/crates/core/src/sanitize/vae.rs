use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{shape_err, Error, Result};
use crate::media::{ImageTensor, SeededRng};
use crate::nn::serialize::WeightFile;
use crate::nn::{pack_cnhw, unpack_cnhw, Adam, AdamConfig, Conv, Dense, ParamStore, Tape, Tensor, Var};

pub const VAE_KIND: &str = "vae";

#[derive(Clone, Debug, PartialEq)]
pub struct VaeConfig {
    pub latent: usize,
    /// Weight of the KL term; 1 is the plain evidence lower bound.
    pub beta: f64,
    /// Channels of the first feature map; the second has twice as many.
    pub width: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            latent: 64,
            beta: 1.0,
            width: 32,
            epochs: 10,
            batch_size: 32,
            lr: 2e-3,
            seed: 0,
        }
    }
}

impl VaeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent == 0 || self.width == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("VAE sizes and epochs must be positive".into()));
        }
        if !(self.beta >= 0.0) || !(self.lr > 0.0) {
            return Err(Error::InvalidArgument("beta must be >= 0 and lr > 0".into()));
        }
        Ok(())
    }
}

/// Convolutional VAE with a Bernoulli decoder over pixel intensities in
/// `[0, 1]`. Two conv/pool stages down to a quarter resolution, then dense
/// heads for the latent mean and log-variance; the decoder mirrors it.
#[derive(Clone, Debug)]
pub struct VaeModel {
    shape: (usize, usize, usize),
    latent: usize,
    width: usize,
    store: ParamStore<f32>,
    enc1: Conv,
    enc2: Conv,
    mu: Dense,
    logvar: Dense,
    dec_in: Dense,
    dec1: Conv,
    dec2: Conv,
    dec_out: Conv,
    pub seed: u64,
    /// Per-epoch mean negative ELBO per image.
    pub losses: Vec<f32>,
}

struct Encoded {
    mu: Var,
    logvar: Var,
}

impl VaeModel {
    fn new(shape: (usize, usize, usize), latent: usize, width: usize, seed: u64) -> Result<Self> {
        let (c, h, w) = shape;
        if h % 4 != 0 || w % 4 != 0 {
            return Err(Error::InvalidArgument(format!("VAE needs sides divisible by 4, got {h}x{w}")));
        }
        let mut rng = SeededRng::new(seed).split(0);
        let mut s = ParamStore::new();
        let r = &mut rng;
        let k = (3, 3);
        let flat = 2 * width * (h / 4) * (w / 4);
        Ok(Self {
            shape,
            latent,
            width,
            enc1: Conv::new(&mut s, "enc1", c, width, k, 1.4, r),
            enc2: Conv::new(&mut s, "enc2", width, 2 * width, k, 1.4, r),
            mu: Dense::new(&mut s, "mu", flat, latent, 1.0, r),
            logvar: Dense::new(&mut s, "logvar", flat, latent, 0.1, r),
            dec_in: Dense::new(&mut s, "dec_in", latent, flat, 1.4, r),
            dec1: Conv::new(&mut s, "dec1", 2 * width, width, k, 1.4, r),
            dec2: Conv::new(&mut s, "dec2", width, width, k, 1.4, r),
            dec_out: Conv::new(&mut s, "dec_out", width, c, k, 1.0, r),
            store: s,
            seed,
            losses: Vec::new(),
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.shape
    }

    pub fn latent_dim(&self) -> usize {
        self.latent
    }

    fn encode(&self, tape: &mut Tape<f32>, x: Var) -> Encoded {
        let s = &self.store;
        let h = self.enc1.apply(tape, s, x);
        let h = tape.silu(h);
        let h = tape.avg_pool(h, (2, 2));
        let h = self.enc2.apply(tape, s, h);
        let h = tape.silu(h);
        let h = tape.avg_pool(h, (2, 2));
        let h = tape.swap_leading(h);
        let n = tape.value(h).shape()[0];
        let flat = tape.value(h).len() / n;
        let h = tape.reshape(h, vec![n, flat]);
        Encoded {
            mu: self.mu.apply(tape, s, h),
            logvar: self.logvar.apply(tape, s, h),
        }
    }

    /// Decoder logits, `[C, N, H, W]`.
    fn decode(&self, tape: &mut Tape<f32>, z: Var) -> Var {
        let s = &self.store;
        let (_, h, w) = self.shape;
        let n = tape.value(z).shape()[0];
        let d = self.dec_in.apply(tape, s, z);
        let d = tape.silu(d);
        let d = tape.reshape(d, vec![n, 2 * self.width, h / 4, w / 4]);
        let d = tape.swap_leading(d);
        let d = tape.upsample(d, (2, 2));
        let d = self.dec1.apply(tape, s, d);
        let d = tape.silu(d);
        let d = tape.upsample(d, (2, 2));
        let d = self.dec2.apply(tape, s, d);
        let d = tape.silu(d);
        self.dec_out.apply(tape, s, d)
    }

    fn unit_pixels(img: &ImageTensor) -> Vec<f32> {
        img.data().iter().map(|&p| p as f32 / 255.0).collect()
    }

    fn pack(&self, xs: &[&[f32]]) -> Tensor<f32> {
        let (c, h, w) = self.shape;
        pack_cnhw(xs, c, h, w)
    }

    /// `decode(mean(encode(x)))` in `[0, 1]` units.
    fn reconstruct_unit(&self, xs: &[&[f32]]) -> Vec<Vec<f32>> {
        let mut tape = Tape::new();
        let x = tape.input(self.pack(xs));
        let enc = self.encode(&mut tape, x);
        let logits = self.decode(&mut tape, enc.mu);
        unpack_cnhw(tape.value(logits))
            .into_iter()
            .map(|v| v.into_iter().map(sigmoid).collect())
            .collect()
    }

    pub fn to_weight_file(&self) -> WeightFile {
        let mut meta = BTreeMap::new();
        meta.insert("channels".into(), self.shape.0.to_string());
        meta.insert("height".into(), self.shape.1.to_string());
        meta.insert("width".into(), self.shape.2.to_string());
        meta.insert("latent".into(), self.latent.to_string());
        meta.insert("hidden".into(), self.width.to_string());
        meta.insert("seed".into(), self.seed.to_string());
        meta.insert("epochs".into(), self.losses.len().to_string());
        WeightFile {
            kind: VAE_KIND.into(),
            meta,
            params: self.store.clone(),
        }
    }

    pub fn from_weight_file(wf: &WeightFile) -> Result<Self> {
        wf.expect_kind(VAE_KIND)?;
        let shape = (
            wf.meta_parse("channels")?,
            wf.meta_parse("height")?,
            wf.meta_parse("width")?,
        );
        let mut m = Self::new(shape, wf.meta_parse("latent")?, wf.meta_parse("hidden")?, wf.meta_parse("seed")?)?;
        wf.load_into(&mut m.store)?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_weight_file().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_weight_file(&WeightFile::load(path)?)
    }
}

fn sigmoid(v: f32) -> f32 {
    1.0 / (1.0 + (-v).exp())
}

/// Fits the VAE on cover images by minimising the negative ELBO:
/// per-pixel binary cross-entropy plus `beta` times the Gaussian KL term.
pub fn train_vae(dataset: &[ImageTensor], cfg: &VaeConfig) -> Result<VaeModel> {
    cfg.validate()?;
    let first = dataset
        .first()
        .ok_or_else(|| Error::InvalidArgument("training set is empty".into()))?;
    for img in dataset {
        first.ensure_same_shape(img)?;
    }
    let mut model = VaeModel::new(first.shape(), cfg.latent, cfg.width, cfg.seed)?;
    let data: Vec<Vec<f32>> = dataset.iter().map(VaeModel::unit_pixels).collect();
    let mut rng = SeededRng::new(cfg.seed).split(1);
    let mut opt = Adam::new(
        &model.store,
        AdamConfig {
            lr: cfg.lr,
            ..Default::default()
        },
    );
    let n = data.len();
    let total = n.div_ceil(cfg.batch_size) * cfg.epochs;
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut epoch = 0.0f64;
        for batch in order.chunks(cfg.batch_size) {
            let xs: Vec<&[f32]> = batch.iter().map(|&i| data[i].as_slice()).collect();
            let nb = xs.len() as f32;
            let mut tape = Tape::new();
            let x = tape.input(model.pack(&xs));
            let enc = model.encode(&mut tape, x);
            let half = tape.scale(enc.logvar, 0.5);
            let std = tape.exp(half);
            let noise = Tensor::new(vec![xs.len(), cfg.latent], rng.normal_vec(xs.len() * cfg.latent));
            let noise = tape.input(noise);
            let spread = tape.mul(std, noise);
            let z = tape.add(enc.mu, spread);
            let logits = model.decode(&mut tape, z);

            let target = tape.value(x).clone();
            let mut loss = 0.0f64;
            let g_logits: Vec<f32> = tape
                .value(logits)
                .data()
                .iter()
                .zip(target.data())
                .map(|(&l, &t)| {
                    // Stable BCE with logits: max(l, 0) - l t + ln(1 + e^-|l|).
                    loss += (l.max(0.0) - l * t + (-l.abs()).exp().ln_1p()) as f64;
                    (sigmoid(l) - t) / nb
                })
                .collect();
            let beta = cfg.beta as f32;
            let mu_v = tape.value(enc.mu).data();
            let lv_v = tape.value(enc.logvar).data();
            let mut g_mu = Vec::with_capacity(mu_v.len());
            let mut g_lv = Vec::with_capacity(lv_v.len());
            for (&m, &lv) in mu_v.iter().zip(lv_v) {
                loss += cfg.beta * (-0.5 * (1.0 + lv - m * m - lv.exp())) as f64;
                g_mu.push(beta * m / nb);
                g_lv.push(beta * 0.5 * (lv.exp() - 1.0) / nb);
            }
            let loss = loss / xs.len() as f64;
            let step = opt.steps() as usize;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    step,
                    loss: loss as f32,
                });
            }
            let shape_of = |v: Var| tape.value(v).shape().to_vec();
            let seeds = [
                (logits, Tensor::new(shape_of(logits), g_logits)),
                (enc.mu, Tensor::new(shape_of(enc.mu), g_mu)),
                (enc.logvar, Tensor::new(shape_of(enc.logvar), g_lv)),
            ];
            tape.backward(&seeds, &mut model.store);
            opt.set_lr(crate::diffusion::lr_at(step, total, cfg.lr));
            opt.step(&mut model.store);
            epoch += loss * xs.len() as f64;
        }
        model.losses.push((epoch / n as f64) as f32);
        log::debug!("vae epoch {} loss {:.3}", model.losses.len(), model.losses.last().unwrap());
    }
    Ok(model)
}

/// Sanitizes by reconstruction: decode the encoder mean of `x`.
pub fn vae_sanitize(x: &ImageTensor, model: &VaeModel) -> Result<ImageTensor> {
    Ok(vae_sanitize_batch(std::slice::from_ref(x), model)?.remove(0))
}

pub fn vae_sanitize_batch(xs: &[ImageTensor], model: &VaeModel) -> Result<Vec<ImageTensor>> {
    let (c, h, w) = model.shape;
    let mut out = Vec::with_capacity(xs.len());
    for chunk in xs.chunks(64) {
        let mut data = Vec::with_capacity(chunk.len());
        for x in chunk {
            if x.shape() != model.shape {
                return Err(shape_err(model.shape, x.shape()));
            }
            data.push(VaeModel::unit_pixels(x));
        }
        let refs: Vec<&[f32]> = data.iter().map(Vec::as_slice).collect();
        for rec in model.reconstruct_unit(&refs) {
            let px = rec.iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect();
            out.push(ImageTensor::new(c, h, w, px)?);
        }
    }
    Ok(out)
}
