use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::metrics::{THETA_IP, THETA_SE};
use crate::sanitize::Method;

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "STEGSAN_SEED";

/// How secrets are embedded into covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HideMethod {
    Lsb,
    DdhToy,
}

impl HideMethod {
    pub fn name(self) -> &'static str {
        match self {
            HideMethod::Lsb => "lsb",
            HideMethod::DdhToy => "ddh_toy",
        }
    }
}

impl std::fmt::Display for HideMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HideMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "lsb" => Ok(HideMethod::Lsb),
            "ddh_toy" | "ddh" => Ok(HideMethod::DdhToy),
            _ => Err(Error::Config(format!("unknown hide method {s}"))),
        }
    }
}

/// Everything an experiment run depends on. Parsed from `key = value` lines;
/// `#` starts a comment. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// Directory of PNG covers (or WAV clips for the audio case). Synthetic
    /// data is generated when unset.
    pub data_dir: Option<PathBuf>,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Images used to train the denoiser, the VAE and the hider.
    pub train_images: usize,
    /// Cover/secret pairs turned into containers.
    pub containers: usize,
    pub hide_methods: Vec<HideMethod>,
    /// Sanitizers compared in the first experiment.
    pub sanitizers: Vec<Method>,
    pub horizon: usize,
    /// Timestep for single-point runs; defaults to `horizon / 2`.
    pub t: Option<usize>,
    /// Explicit sweep grid; defaults to `horizon / 40` steps up to `horizon`.
    pub t_grid: Option<Vec<usize>>,
    pub lsb_bits: u8,
    pub sigma_gaussian: f64,
    pub sigma_dct: f64,
    pub theta_ip: f64,
    pub theta_se: f64,
    pub seed: u64,
    pub diffusion_epochs: usize,
    pub vae_epochs: usize,
    pub hider_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Where trained models are cached. Missing files are trained when
    /// `train` is set, and saved here.
    pub model_dir: Option<PathBuf>,
    pub train: bool,
    /// Record per-image wall time in `time_ms`. Off by default so that
    /// repeated runs produce identical files.
    pub timing: bool,
    pub audio_clips: usize,
    pub audio_train_clips: usize,
    pub audio_len: usize,
    pub sample_rate: u32,
    pub audio_bits: u8,
    pub audio_epochs: usize,
    pub blur: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data_dir: None,
            channels: 3,
            height: 16,
            width: 16,
            train_images: 2000,
            containers: 100,
            hide_methods: vec![HideMethod::Lsb, HideMethod::DdhToy],
            sanitizers: vec![Method::DmSuds, Method::Vae, Method::Gaussian, Method::DctNoise],
            horizon: 200,
            t: None,
            t_grid: None,
            lsb_bits: 4,
            sigma_gaussian: crate::sanitize::DEFAULT_NOISE_SIGMA,
            sigma_dct: crate::sanitize::DEFAULT_NOISE_SIGMA,
            theta_ip: THETA_IP,
            theta_se: THETA_SE,
            seed: 0,
            diffusion_epochs: 50,
            vae_epochs: 15,
            hider_epochs: 10,
            batch_size: 32,
            lr: 2e-3,
            model_dir: None,
            train: true,
            timing: false,
            audio_clips: 50,
            audio_train_clips: 200,
            audio_len: 16384,
            sample_rate: 8000,
            audio_bits: 1,
            audio_epochs: 20,
            blur: super::DEFAULT_BLUR,
        }
    }
}

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_list<V: FromStr>(key: &str, value: &str) -> Result<Vec<V>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

impl ExperimentConfig {
    /// Parses `key = value` text on top of the defaults.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and applies the seed override from the
    /// environment.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut cfg = Self::parse_str(&std::fs::read_to_string(path)?)?;
        cfg.apply_env()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = parse(SEED_ENV, v.trim())?;
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "data_dir" => self.data_dir = Some(PathBuf::from(value)),
            "shape" => {
                let dims: Vec<usize> = value
                    .split('x')
                    .map(|s| parse(key, s.trim()))
                    .collect::<Result<_>>()?;
                match dims[..] {
                    [c, h, w] => (self.channels, self.height, self.width) = (c, h, w),
                    _ => return Err(Error::Config(format!("shape must be CxHxW, got {value}"))),
                }
            }
            "train_images" => self.train_images = parse(key, value)?,
            "containers" => self.containers = parse(key, value)?,
            "hide_methods" => self.hide_methods = parse_list(key, value)?,
            "sanitizers" => {
                self.sanitizers = parse_list::<Method>(key, value)
                    .map_err(|_| Error::Config(format!("{key}: unknown sanitizer in {value:?}")))?
            }
            "horizon" | "T" => self.horizon = parse(key, value)?,
            "t" => self.t = Some(parse(key, value)?),
            "t_grid" => self.t_grid = Some(parse_list(key, value)?),
            "lsb_bits" => self.lsb_bits = parse(key, value)?,
            "sigma_gaussian" => self.sigma_gaussian = parse(key, value)?,
            "sigma_dct" => self.sigma_dct = parse(key, value)?,
            "theta_ip" => self.theta_ip = parse(key, value)?,
            "theta_se" => self.theta_se = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "diffusion_epochs" => self.diffusion_epochs = parse(key, value)?,
            "vae_epochs" => self.vae_epochs = parse(key, value)?,
            "hider_epochs" => self.hider_epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "model_dir" => self.model_dir = Some(PathBuf::from(value)),
            "train" => self.train = parse_bool(key, value)?,
            "timing" => self.timing = parse_bool(key, value)?,
            "audio_clips" => self.audio_clips = parse(key, value)?,
            "audio_train_clips" => self.audio_train_clips = parse(key, value)?,
            "audio_len" => self.audio_len = parse(key, value)?,
            "sample_rate" => self.sample_rate = parse(key, value)?,
            "audio_bits" => self.audio_bits = parse(key, value)?,
            "audio_epochs" => self.audio_epochs = parse(key, value)?,
            "blur" => self.blur = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.channels != 1 && self.channels != 3 {
            return fail(format!("channels must be 1 or 3, got {}", self.channels));
        }
        if self.height == 0 || self.width == 0 {
            return fail("image sides must be positive".into());
        }
        let counts = [
            ("train_images", self.train_images),
            ("containers", self.containers),
            ("horizon", self.horizon),
            ("diffusion_epochs", self.diffusion_epochs),
            ("vae_epochs", self.vae_epochs),
            ("hider_epochs", self.hider_epochs),
            ("batch_size", self.batch_size),
            ("audio_clips", self.audio_clips),
            ("audio_train_clips", self.audio_train_clips),
            ("audio_len", self.audio_len),
            ("audio_epochs", self.audio_epochs),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return fail(format!("{name} must be positive"));
        }
        if self.hide_methods.is_empty() || self.sanitizers.is_empty() {
            return fail("hide_methods and sanitizers must be non-empty".into());
        }
        for t in self.t.iter().chain(self.t_grid.iter().flatten()) {
            if *t == 0 || *t > self.horizon {
                return fail(format!("timestep {t} outside [1, {}]", self.horizon));
            }
        }
        if self.t_grid.as_ref().is_some_and(Vec::is_empty) {
            return fail("t_grid must be non-empty".into());
        }
        if !(1..=8).contains(&self.lsb_bits) || !(1..=4).contains(&self.audio_bits) {
            return fail("lsb_bits must be in [1, 8] and audio_bits in [1, 4]".into());
        }
        if !(self.sigma_gaussian >= 0.0) || !(self.sigma_dct >= 0.0) || !(self.blur >= 0.0) || !(self.lr > 0.0) {
            return fail("sigmas and blur must be >= 0 and lr > 0".into());
        }
        if self.sample_rate == 0 {
            return fail("sample_rate must be positive".into());
        }
        Ok(())
    }

    /// Single timestep for the comparison run.
    pub fn timestep(&self) -> usize {
        self.t.unwrap_or((self.horizon / 2).max(1))
    }

    /// Sweep grid: the configured one, or `horizon / 40` spacing.
    pub fn grid(&self) -> Vec<usize> {
        self.t_grid.clone().unwrap_or_else(|| t_grid(self.horizon, 40))
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }
}

/// `points` evenly spaced timesteps ending at `horizon`, spacing
/// `horizon / points` (at least 1), deduplicated.
pub fn t_grid(horizon: usize, points: usize) -> Vec<usize> {
    let step = (horizon / points.max(1)).max(1);
    let mut grid: Vec<usize> = (1..=points).map(|k| (k * step).min(horizon)).collect();
    grid.dedup();
    grid
}
