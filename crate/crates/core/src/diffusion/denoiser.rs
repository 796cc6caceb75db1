use super::NoiseSchedule;
use crate::error::{shape_err, Result};
use crate::media::SeededRng;
use crate::nn::{
    pack_cnhw, timestep_features, unpack_cnhw, Conv, Dense, ParamStore, ResBlock, Scalar, Tape,
    Tensor, Var,
};

/// Architecture of the noise-prediction U-Net.
#[derive(Clone, Debug, PartialEq)]
pub struct UNetConfig {
    /// Data channels (3 for RGB images, 1 for audio frames).
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub base: usize,
    /// Channel multiplier per resolution level; one pooling step between
    /// consecutive levels.
    pub mults: Vec<usize>,
    pub kernel: (usize, usize),
    pub pool: (usize, usize),
    pub temb_dim: usize,
}

impl UNetConfig {
    /// 16x16 RGB, two down/up stages.
    pub fn image(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            base: 32,
            mults: vec![1, 2, 2],
            kernel: (3, 3),
            pool: (2, 2),
            temb_dim: 64,
        }
    }

    /// One-dimensional frames, stored as `1 x len` images.
    pub fn audio(frame: usize) -> Self {
        Self {
            channels: 1,
            height: 1,
            width: frame,
            base: 16,
            mults: vec![1, 2, 2],
            kernel: (1, 9),
            pool: (1, 4),
            temb_dim: 32,
        }
    }

    pub fn sample_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    fn validate(&self) -> Result<()> {
        let levels = self.mults.len().saturating_sub(1) as u32;
        let (ph, pw) = (self.pool.0.pow(levels), self.pool.1.pow(levels));
        if self.mults.is_empty() || !self.height.is_multiple_of(ph) || !self.width.is_multiple_of(pw) {
            return Err(crate::Error::InvalidArgument(format!(
                "{}x{} is not divisible by the pooling pyramid {ph}x{pw}",
                self.height, self.width
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Level {
    down: ResBlock,
    up: ResBlock,
}

/// Timestep-conditioned noise predictor `eps_hat(x_t, t)`.
#[derive(Clone, Debug)]
pub struct Denoiser {
    cfg: UNetConfig,
    store: ParamStore<f32>,
    temb1: Dense,
    temb2: Dense,
    conv_in: Conv,
    levels: Vec<Level>,
    mid: ResBlock,
    conv_out: Conv,
}

impl Denoiser {
    pub fn new(cfg: UNetConfig, rng: &mut SeededRng) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let s = &mut store;
        let td = cfg.temb_dim;
        let temb1 = Dense::new(s, "temb1", td, td, 1.0, rng);
        let temb2 = Dense::new(s, "temb2", td, td, 1.0, rng);
        let ch: Vec<usize> = cfg.mults.iter().map(|m| m * cfg.base).collect();
        let conv_in = Conv::new(s, "conv_in", cfg.channels, ch[0], cfg.kernel, 1.0, rng);
        let mut downs = Vec::new();
        let mut prev = ch[0];
        for (i, &c) in ch.iter().enumerate() {
            downs.push(ResBlock::new(s, &format!("down{i}"), prev, c, cfg.kernel, Some(td), rng));
            prev = c;
        }
        let mid = ResBlock::new(s, "mid", prev, prev, cfg.kernel, Some(td), rng);
        let mut ups = vec![None; ch.len()];
        for i in (0..ch.len()).rev() {
            ups[i] = Some(ResBlock::new(
                s,
                &format!("up{i}"),
                prev + ch[i],
                ch[i],
                cfg.kernel,
                Some(td),
                rng,
            ));
            prev = ch[i];
        }
        let conv_out = Conv::new(s, "conv_out", ch[0], cfg.channels, cfg.kernel, 0.1, rng);
        let levels = downs
            .into_iter()
            .zip(ups)
            .map(|(down, up)| Level {
                down,
                up: up.expect("every level has an up block"),
            })
            .collect();
        Ok(Self {
            cfg,
            store,
            temb1,
            temb2,
            conv_in,
            levels,
            mid,
            conv_out,
        })
    }

    pub fn config(&self) -> &UNetConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore<f32> {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<f32> {
        &mut self.store
    }

    /// Records the network on `tape`. `x` is `[C, N, H, W]`, `t_feats` is the
    /// sinusoidal timestep embedding `[N, temb_dim]`.
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        x: Var,
        t_feats: Var,
    ) -> Var {
        let e = self.temb1.apply(tape, store, t_feats);
        let e = tape.silu(e);
        let temb = self.temb2.apply(tape, store, e);

        let mut h = self.conv_in.apply(tape, store, x);
        let mut skips = Vec::with_capacity(self.levels.len());
        let last = self.levels.len() - 1;
        for (i, level) in self.levels.iter().enumerate() {
            h = level.down.apply(tape, store, h, Some(temb));
            skips.push(h);
            if i < last {
                h = tape.avg_pool(h, self.cfg.pool);
            }
        }
        h = self.mid.apply(tape, store, h, Some(temb));
        for (i, level) in self.levels.iter().enumerate().rev() {
            if i < last {
                h = tape.upsample(h, self.cfg.pool);
            }
            h = tape.concat(h, skips[i]);
            h = level.up.apply(tape, store, h, Some(temb));
        }
        let h = tape.silu(h);
        self.conv_out.apply(tape, store, h)
    }

    /// Predicts the noise for a batch of flat samples at the given timesteps.
    pub fn predict(&self, xs: &[&[f32]], ts: &[usize]) -> Result<Vec<Vec<f32>>> {
        let c = &self.cfg;
        if xs.len() != ts.len() {
            return Err(shape_err(xs.len(), ts.len()));
        }
        if let Some(bad) = xs.iter().find(|x| x.len() != c.sample_len()) {
            return Err(shape_err(c.sample_len(), bad.len()));
        }
        let mut tape = Tape::<f32>::new();
        let x = tape.input(pack_cnhw(xs, c.channels, c.height, c.width));
        let tf = timestep_features(&ts.iter().map(|&t| t as f64).collect::<Vec<_>>(), c.temb_dim);
        let tv = tape.input(tf);
        let out = self.forward(&mut tape, &self.store, x, tv);
        Ok(unpack_cnhw(tape.value(out)))
    }

    /// One training step worth of gradients for `mean((eps_hat - eps)^2)`,
    /// accumulated into the parameter store. Returns the loss.
    pub(crate) fn accumulate_loss_grad(
        &mut self,
        x_t: &[&[f32]],
        ts: &[usize],
        eps: &[&[f32]],
    ) -> f32 {
        let c = self.cfg.clone();
        let mut tape = Tape::<f32>::new();
        let x = tape.input(pack_cnhw(x_t, c.channels, c.height, c.width));
        let tf = timestep_features(&ts.iter().map(|&t| t as f64).collect::<Vec<_>>(), c.temb_dim);
        let tv = tape.input(tf);
        let out = self.forward(&mut tape, &self.store, x, tv);
        let target: Tensor<f32> = pack_cnhw(eps, c.channels, c.height, c.width);
        let pred = tape.value(out);
        let n = pred.len() as f32;
        let mut loss = 0.0f64;
        let grad: Vec<f32> = pred
            .data()
            .iter()
            .zip(target.data())
            .map(|(&p, &t)| {
                let d = p - t;
                loss += (d * d) as f64;
                2.0 * d / n
            })
            .collect();
        let seed = Tensor::new(pred.shape().to_vec(), grad);
        tape.backward(&[(out, seed)], &mut self.store);
        (loss / n as f64) as f32
    }
}

/// Denoiser known exactly from the clean signal: returns
/// `(x_t - sqrt(abar_t) x0) / sqrt(1 - abar_t)`. Used to isolate the
/// sampling and sanitization algebra from learning error.
pub fn oracle_eps(sched: &NoiseSchedule, x_t: &[f32], x0: &[f32], t: usize) -> Vec<f32> {
    let a = sched.alpha_bar(t).sqrt();
    let b = (1.0 - sched.alpha_bar(t)).sqrt();
    x_t.iter()
        .zip(x0)
        .map(|(&xt, &x)| ((xt as f64 - a * x as f64) / b) as f32)
        .collect()
}
