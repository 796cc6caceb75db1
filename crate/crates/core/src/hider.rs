//! A trainable cover-dependent hider: a convolutional hide network that adds
//! a learned residual to the cover, and a convolutional reveal network that
//! reads the secret back out of the container.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{shape_err, Error, Result};
use crate::media::{ImageTensor, SeededRng};
use crate::nn::serialize::WeightFile;
use crate::nn::{pack_cnhw, unpack_cnhw, Adam, AdamConfig, Conv, ParamStore, ResBlock, Tape, Tensor, Var};

pub const HIDER_KIND: &str = "hider";

#[derive(Clone, Debug, PartialEq)]
pub struct HideTrainConfig {
    pub lambda_cover: f64,
    pub lambda_secret: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Hidden channels in both networks.
    pub width: usize,
    /// Residual blocks per network.
    pub blocks: usize,
}

impl Default for HideTrainConfig {
    fn default() -> Self {
        Self {
            lambda_cover: 1.0,
            lambda_secret: 0.75,
            epochs: 8,
            batch_size: 32,
            lr: 2e-3,
            seed: 0,
            width: 32,
            blocks: 2,
        }
    }
}

impl HideTrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.lambda_cover > 0.0) || !(self.lambda_secret >= 0.0) {
            return bad("loss weights must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 || self.width == 0 {
            return bad("epochs, batch size and width must be positive");
        }
        if !(self.lr > 0.0) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct ConvStack {
    conv_in: Conv,
    blocks: Vec<ResBlock>,
    conv_out: Conv,
}

impl ConvStack {
    fn new(
        store: &mut ParamStore<f32>,
        name: &str,
        cin: usize,
        cout: usize,
        width: usize,
        blocks: usize,
        out_gain: f64,
        rng: &mut SeededRng,
    ) -> Self {
        let k = (3, 3);
        let conv_in = Conv::new(store, &format!("{name}.in"), cin, width, k, 1.0, rng);
        let blocks = (0..blocks)
            .map(|i| ResBlock::new(store, &format!("{name}.block{i}"), width, width, k, None, rng))
            .collect();
        let conv_out = Conv::new(store, &format!("{name}.out"), width, cout, k, out_gain, rng);
        Self {
            conv_in,
            blocks,
            conv_out,
        }
    }

    fn apply(&self, tape: &mut Tape<f32>, store: &ParamStore<f32>, x: Var) -> Var {
        let mut h = self.conv_in.apply(tape, store, x);
        for b in &self.blocks {
            h = b.apply(tape, store, h, None);
        }
        let h = tape.silu(h);
        self.conv_out.apply(tape, store, h)
    }
}

/// Trained hide/reveal networks and their training record.
#[derive(Clone, Debug)]
pub struct HidePair {
    shape: (usize, usize, usize),
    store: ParamStore<f32>,
    hide_net: ConvStack,
    reveal_net: ConvStack,
    pub width: usize,
    pub blocks: usize,
    pub seed: u64,
    pub epochs: usize,
    /// Per-epoch `(cover MSE, secret MSE)` in model units.
    pub losses: Vec<(f32, f32)>,
}

impl HidePair {
    fn new(shape: (usize, usize, usize), width: usize, blocks: usize, seed: u64) -> Self {
        let mut rng = SeededRng::new(seed).split(0);
        let mut store = ParamStore::new();
        let c = shape.0;
        let hide_net = ConvStack::new(&mut store, "hide", 2 * c, c, width, blocks, 0.1, &mut rng);
        let reveal_net = ConvStack::new(&mut store, "reveal", c, c, width, blocks, 1.0, &mut rng);
        Self {
            shape,
            store,
            hide_net,
            reveal_net,
            width,
            blocks,
            seed,
            epochs: 0,
            losses: Vec::new(),
        }
    }

    /// `(channels, height, width)` the pair was trained on.
    pub fn shape(&self) -> (usize, usize, usize) {
        self.shape
    }

    fn pack(&self, xs: &[&[f32]]) -> Tensor<f32> {
        let (c, h, w) = self.shape;
        pack_cnhw(xs, c, h, w)
    }

    /// Records `container = cover + hide(cover ++ secret)` on `tape`.
    fn hide_on_tape(&self, tape: &mut Tape<f32>, cover: Var, secret: Var) -> Var {
        let both = tape.concat(cover, secret);
        let residual = self.hide_net.apply(tape, &self.store, both);
        tape.add(cover, residual)
    }

    fn check(&self, img: &ImageTensor) -> Result<()> {
        if img.shape() != self.shape {
            return Err(shape_err(self.shape, img.shape()));
        }
        Ok(())
    }

    pub fn to_weight_file(&self) -> WeightFile {
        let mut meta = BTreeMap::new();
        meta.insert("channels".into(), self.shape.0.to_string());
        meta.insert("height".into(), self.shape.1.to_string());
        meta.insert("width".into(), self.shape.2.to_string());
        meta.insert("hidden".into(), self.width.to_string());
        meta.insert("blocks".into(), self.blocks.to_string());
        meta.insert("seed".into(), self.seed.to_string());
        meta.insert("epochs".into(), self.epochs.to_string());
        if let Some(&(c, s)) = self.losses.last() {
            meta.insert("final_cover_loss".into(), c.to_string());
            meta.insert("final_secret_loss".into(), s.to_string());
        }
        WeightFile {
            kind: HIDER_KIND.into(),
            meta,
            params: self.store.clone(),
        }
    }

    pub fn from_weight_file(wf: &WeightFile) -> Result<Self> {
        wf.expect_kind(HIDER_KIND)?;
        let shape = (
            wf.meta_parse("channels")?,
            wf.meta_parse("height")?,
            wf.meta_parse("width")?,
        );
        let mut pair = Self::new(shape, wf.meta_parse("hidden")?, wf.meta_parse("blocks")?, wf.meta_parse("seed")?);
        wf.load_into(&mut pair.store)?;
        pair.epochs = wf.meta_parse("epochs")?;
        if let (Ok(c), Ok(s)) = (wf.meta_parse("final_cover_loss"), wf.meta_parse("final_secret_loss")) {
            pair.losses.push((c, s));
        }
        Ok(pair)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_weight_file().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_weight_file(&WeightFile::load(path)?)
    }
}

fn mse_grad(pred: &Tensor<f32>, target: &Tensor<f32>, weight: f64) -> (f64, Tensor<f32>) {
    let n = pred.len() as f64;
    let mut sum = 0.0;
    let g = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = (p - t) as f64;
            sum += d * d;
            (2.0 * weight * d / n) as f32
        })
        .collect();
    (sum / n, Tensor::new(pred.shape().to_vec(), g))
}

/// Trains a hide/reveal pair on random disjoint cover/secret pairings drawn
/// from `dataset` to minimise
/// `lambda_cover * MSE(cover, container) + lambda_secret * MSE(secret, revealed)`.
///
/// Containers are perturbed by uniform noise of one quantisation step before
/// the reveal network sees them, matching the rounding applied at inference.
pub fn train_hide_pair(dataset: &[ImageTensor], cfg: &HideTrainConfig) -> Result<HidePair> {
    cfg.validate()?;
    let first = dataset
        .first()
        .ok_or_else(|| Error::InvalidArgument("training set is empty".into()))?;
    if dataset.len() < 2 {
        return Err(Error::InvalidArgument("need at least two images to pair".into()));
    }
    for img in dataset {
        first.ensure_same_shape(img)?;
    }
    let shape = first.shape();
    let mut pair = HidePair::new(shape, cfg.width, cfg.blocks, cfg.seed);
    let data: Vec<Vec<f32>> = dataset.iter().map(|i| i.to_model_range().to_f32()).collect();
    let mut rng = SeededRng::new(cfg.seed).split(1);
    let mut opt = Adam::new(
        &pair.store,
        AdamConfig {
            lr: cfg.lr,
            ..Default::default()
        },
    );
    let n = data.len();
    let total = n.div_ceil(cfg.batch_size) * cfg.epochs;
    let mut order: Vec<usize> = (0..n).collect();
    let step_len = 1.0 / 127.5;
    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let (mut cover_sum, mut secret_sum) = (0.0f64, 0.0f64);
        for chunk in (0..n).collect::<Vec<_>>().chunks(cfg.batch_size) {
            let covers: Vec<&[f32]> = chunk.iter().map(|&k| data[order[k]].as_slice()).collect();
            let secrets: Vec<&[f32]> = chunk
                .iter()
                .map(|&k| data[order[(k + n / 2) % n]].as_slice())
                .collect();
            let mut tape = Tape::new();
            let cv = tape.input(pair.pack(&covers));
            let sv = tape.input(pair.pack(&secrets));
            let container = pair.hide_on_tape(&mut tape, cv, sv);
            let jitter: Vec<f32> = (0..tape.value(container).len())
                .map(|_| (rng.uniform() - 0.5) * step_len)
                .collect();
            let jv = tape.input(Tensor::new(tape.value(container).shape().to_vec(), jitter));
            let noisy = tape.add(container, jv);
            let revealed = pair.reveal_net.apply(&mut tape, &pair.store, noisy);
            let (lc, gc) = mse_grad(tape.value(container), tape.value(cv), cfg.lambda_cover);
            let (ls, gs) = mse_grad(tape.value(revealed), tape.value(sv), cfg.lambda_secret);
            let loss = cfg.lambda_cover * lc + cfg.lambda_secret * ls;
            let step = opt.steps() as usize;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    step,
                    loss: loss as f32,
                });
            }
            tape.backward(&[(container, gc), (revealed, gs)], &mut pair.store);
            opt.set_lr(crate::diffusion::lr_at(step, total, cfg.lr));
            opt.step(&mut pair.store);
            cover_sum += lc * chunk.len() as f64;
            secret_sum += ls * chunk.len() as f64;
        }
        let epoch = ((cover_sum / n as f64) as f32, (secret_sum / n as f64) as f32);
        log::debug!("hider epoch {} cover {:.5} secret {:.5}", pair.losses.len() + 1, epoch.0, epoch.1);
        pair.losses.push(epoch);
        pair.epochs += 1;
    }
    Ok(pair)
}

/// Embeds `secret` into `cover`; output rounded to valid pixels.
pub fn ddh_hide(pair: &HidePair, cover: &ImageTensor, secret: &ImageTensor) -> Result<ImageTensor> {
    pair.check(cover)?;
    pair.check(secret)?;
    let c = cover.to_model_range().to_f32();
    let s = secret.to_model_range().to_f32();
    let mut tape = Tape::new();
    let cv = tape.input(pair.pack(&[&c]));
    let sv = tape.input(pair.pack(&[&s]));
    let out = pair.hide_on_tape(&mut tape, cv, sv);
    to_image(pair, tape.value(out))
}

/// Recovers the secret estimate from a container.
pub fn ddh_reveal(pair: &HidePair, container: &ImageTensor) -> Result<ImageTensor> {
    pair.check(container)?;
    let x = container.to_model_range().to_f32();
    let mut tape = Tape::new();
    let xv = tape.input(pair.pack(&[&x]));
    let out = pair.reveal_net.apply(&mut tape, &pair.store, xv);
    to_image(pair, tape.value(out))
}

fn to_image(pair: &HidePair, t: &Tensor<f32>) -> Result<ImageTensor> {
    let (c, h, w) = pair.shape;
    let v = unpack_cnhw(t).remove(0);
    crate::media::FloatImage::new(c, h, w, v.into_iter().map(f64::from).collect())?.from_model_range()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::gen_synthetic_images;

    fn tiny() -> HideTrainConfig {
        HideTrainConfig {
            epochs: 2,
            batch_size: 8,
            width: 8,
            blocks: 1,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_loss_curve() {
        let data = gen_synthetic_images(24, (3, 8, 8), 1).unwrap();
        let a = train_hide_pair(&data, &tiny()).unwrap();
        let b = train_hide_pair(&data, &tiny()).unwrap();
        assert_eq!(a.losses, b.losses);
        assert_eq!(a.losses.len(), 2);
    }

    #[test]
    fn shapes_and_errors() {
        let data = gen_synthetic_images(8, (3, 8, 8), 2).unwrap();
        let pair = train_hide_pair(&data, &tiny()).unwrap();
        let cont = ddh_hide(&pair, &data[0], &data[1]).unwrap();
        assert_eq!(cont.shape(), data[0].shape());
        assert_eq!(ddh_reveal(&pair, &cont).unwrap().shape(), data[0].shape());
        let other = ImageTensor::zeros(3, 4, 4).unwrap();
        assert!(ddh_hide(&pair, &other, &other).is_err());
        assert!(train_hide_pair(&data[..1], &tiny()).is_err());
        let bad = HideTrainConfig {
            lambda_cover: 0.0,
            ..tiny()
        };
        assert!(train_hide_pair(&data, &bad).is_err());
    }

    #[test]
    fn cover_only_objective_tracks_the_cover() {
        let data = gen_synthetic_images(32, (3, 8, 8), 3).unwrap();
        let cfg = HideTrainConfig {
            lambda_secret: 0.0,
            epochs: 6,
            ..tiny()
        };
        let pair = train_hide_pair(&data, &cfg).unwrap();
        let (first, last) = (pair.losses[0].0, pair.losses.last().unwrap().0);
        assert!(last <= first, "{first} -> {last}");
        assert!(last < 1e-3, "cover loss {last}");
    }

    #[test]
    fn container_depends_on_the_cover() {
        let data = gen_synthetic_images(24, (3, 8, 8), 5).unwrap();
        let pair = train_hide_pair(&data, &tiny()).unwrap();
        let a = ddh_hide(&pair, &data[0], &data[2]).unwrap();
        let b = ddh_hide(&pair, &data[1], &data[2]).unwrap();
        let differ = a.data().iter().zip(b.data()).filter(|(x, y)| x != y).count();
        assert!(differ * 100 > a.len(), "{differ} of {} pixels differ", a.len());
    }

    #[test]
    fn weight_file_round_trip() {
        let data = gen_synthetic_images(8, (3, 8, 8), 4).unwrap();
        let pair = train_hide_pair(&data, &tiny()).unwrap();
        let mut buf = Vec::new();
        pair.to_weight_file().write_to(&mut buf).unwrap();
        let back = HidePair::from_weight_file(&WeightFile::read_from(&mut buf.as_slice()).unwrap()).unwrap();
        let c = ddh_hide(&pair, &data[2], &data[3]).unwrap();
        assert_eq!(ddh_hide(&back, &data[2], &data[3]).unwrap(), c);
        assert_eq!(back.epochs, 2);
    }
}
