use std::hash::{DefaultHasher, Hash, Hasher};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};

use super::config::{ExperimentConfig, HideMethod};
use super::report::{emit_report, write_table, ResultRow};
use super::stats::spearman;
use super::synth::{gen_synthetic_audio, gen_synthetic_images_blurred};
use crate::diffusion::{train_denoiser, DiffTrainConfig, DiffusionModel};
use crate::error::{Error, Result};
use crate::hider::{ddh_hide, ddh_reveal, train_hide_pair, HidePair, HideTrainConfig};
use crate::media::{load_png, load_wav, AudioClip, ImageTensor, SeededRng};
use crate::metrics::{ber, mse_slices, rr, verdict, QualityMetrics};
use crate::sanitize::{
    dct_noise_sanitize, dm_suds_audio, dm_suds_batch, dm_suds_direct_batch, gaussian_sanitize,
    train_audio_denoiser, train_vae, vae_sanitize_batch, Method, VaeConfig, VaeModel, AUDIO_FRAME,
};
use crate::stego::{audio_lsb_hide, lsb_hide, lsb_reveal, read_embedded_bits, TextPayload};

const DATA_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const TEXT_STREAM: u64 = 3;

/// Disjoint training images, covers and secrets.
#[derive(Clone, Debug)]
pub struct ImageData {
    pub train: Vec<ImageTensor>,
    pub covers: Vec<ImageTensor>,
    pub secrets: Vec<ImageTensor>,
}

/// Builds the image pool: synthetic, or every PNG in `data_dir` in shuffled
/// order. Covers and secrets are `containers` images each and never overlap
/// each other or the training set.
pub fn load_image_data(cfg: &ExperimentConfig) -> Result<ImageData> {
    let pairs = 2 * cfg.containers;
    let mut pool = match &cfg.data_dir {
        None => gen_synthetic_images_blurred(cfg.train_images + pairs, cfg.shape(), cfg.seed, cfg.blur)?,
        Some(dir) => {
            let mut images = Vec::new();
            for path in sorted_files(dir, "png")? {
                let img = load_png(&path)?;
                if img.shape() != cfg.shape() {
                    return Err(crate::error::shape_err(cfg.shape(), img.shape()));
                }
                images.push(img);
            }
            SeededRng::new(cfg.seed).split(DATA_STREAM).shuffle(&mut images);
            images
        }
    };
    if pool.len() < pairs + 1 {
        return Err(Error::Config(format!(
            "need at least {} images for {} cover/secret pairs, found {}",
            pairs + 1,
            cfg.containers,
            pool.len()
        )));
    }
    let rest = pool.split_off(pool.len() - pairs);
    pool.truncate(cfg.train_images);
    let (covers, secrets) = rest.split_at(cfg.containers);
    Ok(ImageData {
        train: pool,
        covers: covers.to_vec(),
        secrets: secrets.to_vec(),
    })
}

fn sorted_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext)))
        .collect();
    files.sort();
    Ok(files)
}

/// Trained models an experiment needs; absent ones are `None`.
#[derive(Clone, Debug, Default)]
pub struct Artifacts {
    pub diffusion: Option<DiffusionModel>,
    pub vae: Option<VaeModel>,
    pub hider: Option<HidePair>,
}

impl Artifacts {
    fn diffusion(&self) -> Result<&DiffusionModel> {
        self.diffusion
            .as_ref()
            .ok_or_else(|| Error::Config("no diffusion model loaded".into()))
    }
}

/// Content fingerprint of a training set, used in cache file names.
fn fingerprint<'a>(items: impl Iterator<Item = &'a [u8]>) -> String {
    let mut h = DefaultHasher::new();
    for item in items {
        item.hash(&mut h);
    }
    format!("{:016x}", h.finish())
}

/// Loads `<model_dir>/<name>` when present, otherwise trains (if allowed)
/// and caches the result.
fn cached<M>(
    cfg: &ExperimentConfig,
    name: String,
    load: impl FnOnce(&Path) -> Result<M>,
    save: impl FnOnce(&M, &Path) -> Result<()>,
    train: impl FnOnce() -> Result<M>,
) -> Result<M> {
    let path = cfg.model_dir.as_ref().map(|d| d.join(&name));
    if let Some(p) = path.as_ref().filter(|p| p.exists()) {
        info!("loading {}", p.display());
        return load(p);
    }
    if !cfg.train {
        return Err(Error::Config(format!(
            "model {name} not found in model_dir and train = false"
        )));
    }
    info!("training {name}");
    let model = train()?;
    if let Some(p) = path {
        std::fs::create_dir_all(p.parent().unwrap_or(Path::new(".")))?;
        save(&model, &p)?;
    }
    Ok(model)
}

fn diffusion_config(cfg: &ExperimentConfig, epochs: usize) -> DiffTrainConfig {
    DiffTrainConfig {
        epochs,
        batch_size: cfg.batch_size,
        lr: cfg.lr,
        seed: cfg.seed,
        horizon: cfg.horizon,
        ..Default::default()
    }
}

fn check_diffusion(m: DiffusionModel, horizon: usize, shape: (usize, usize, usize)) -> Result<DiffusionModel> {
    if m.horizon() != horizon {
        return Err(Error::Config(format!("cached model has T={}, config wants {horizon}", m.horizon())));
    }
    if m.sample_shape() != shape {
        return Err(crate::error::shape_err(shape, m.sample_shape()));
    }
    Ok(m)
}

/// Loads or trains the models required by `sanitizers` and `hides`.
pub fn prepare_artifacts(
    cfg: &ExperimentConfig,
    data: &ImageData,
    sanitizers: &[Method],
    hides: &[HideMethod],
) -> Result<Artifacts> {
    let (c, h, w) = cfg.shape();
    let tag = format!(
        "{c}x{h}x{w}-{}-s{}",
        fingerprint(data.train.iter().map(ImageTensor::data)),
        cfg.seed
    );
    let needs_train = || {
        if data.train.is_empty() {
            Err(Error::Config("no training images left after reserving covers and secrets".into()))
        } else {
            Ok(())
        }
    };
    let mut arts = Artifacts::default();
    if sanitizers.iter().any(|m| matches!(m, Method::DmSuds | Method::DmSudsDirect)) {
        let name = format!("denoiser-{tag}-T{}-e{}.bin", cfg.horizon, cfg.diffusion_epochs);
        let m = cached(
            cfg,
            name,
            |p| DiffusionModel::load(p),
            |m, p| m.save(p),
            || {
                needs_train()?;
                Ok(train_denoiser(&data.train, None, &diffusion_config(cfg, cfg.diffusion_epochs))?.0)
            },
        )?;
        arts.diffusion = Some(check_diffusion(m, cfg.horizon, cfg.shape())?);
    }
    if sanitizers.contains(&Method::Vae) {
        let name = format!("vae-{tag}-e{}.bin", cfg.vae_epochs);
        let vcfg = VaeConfig {
            epochs: cfg.vae_epochs,
            batch_size: cfg.batch_size,
            lr: cfg.lr,
            seed: cfg.seed,
            ..Default::default()
        };
        let m = cached(cfg, name, |p| VaeModel::load(p), |m, p| m.save(p), || {
            needs_train()?;
            train_vae(&data.train, &vcfg)
        })?;
        if m.shape() != cfg.shape() {
            return Err(crate::error::shape_err(cfg.shape(), m.shape()));
        }
        arts.vae = Some(m);
    }
    if hides.contains(&HideMethod::DdhToy) {
        let name = format!("hider-{tag}-e{}.bin", cfg.hider_epochs);
        let hcfg = HideTrainConfig {
            epochs: cfg.hider_epochs,
            batch_size: cfg.batch_size,
            lr: cfg.lr,
            seed: cfg.seed,
            ..Default::default()
        };
        let m = cached(cfg, name, |p| HidePair::load(p), |m, p| m.save(p), || {
            needs_train()?;
            train_hide_pair(&data.train, &hcfg)
        })?;
        if m.shape() != cfg.shape() {
            return Err(crate::error::shape_err(cfg.shape(), m.shape()));
        }
        arts.hider = Some(m);
    }
    Ok(arts)
}

fn hider(arts: &Artifacts) -> Result<&HidePair> {
    arts.hider
        .as_ref()
        .ok_or_else(|| Error::Config("no hider loaded".into()))
}

/// Embeds `secrets[i]` into `covers[i]` for every `i`.
pub fn make_containers(
    cfg: &ExperimentConfig,
    hide: HideMethod,
    data: &ImageData,
    arts: &Artifacts,
) -> Result<Vec<ImageTensor>> {
    data.covers
        .iter()
        .zip(&data.secrets)
        .map(|(c, s)| match hide {
            HideMethod::Lsb => lsb_hide(c, s, cfg.lsb_bits),
            HideMethod::DdhToy => ddh_hide(hider(arts)?, c, s),
        })
        .collect()
}

/// Runs the hide method's reveal on one image.
pub fn reveal(cfg: &ExperimentConfig, hide: HideMethod, arts: &Artifacts, img: &ImageTensor) -> Result<ImageTensor> {
    match hide {
        HideMethod::Lsb => lsb_reveal(img, cfg.lsb_bits),
        HideMethod::DdhToy => ddh_reveal(hider(arts)?, img),
    }
}

/// Applies one sanitizer to a batch. Noise comes from `rng` in input order.
pub fn sanitize_images(
    cfg: &ExperimentConfig,
    method: Method,
    t: usize,
    xs: &[ImageTensor],
    arts: &Artifacts,
    rng: &mut SeededRng,
) -> Result<Vec<ImageTensor>> {
    match method {
        Method::DmSuds => dm_suds_batch(xs, t, arts.diffusion()?, rng),
        Method::DmSudsDirect => dm_suds_direct_batch(xs, t, arts.diffusion()?),
        Method::Vae => {
            let vae = arts.vae.as_ref().ok_or_else(|| Error::Config("no VAE loaded".into()))?;
            vae_sanitize_batch(xs, vae)
        }
        Method::Gaussian => xs.iter().map(|x| gaussian_sanitize(x, cfg.sigma_gaussian, rng)).collect(),
        Method::DctNoise => xs.iter().map(|x| dct_noise_sanitize(x, cfg.sigma_dct, rng)).collect(),
    }
}

/// The noise stream for one (hide, sanitizer) pair. It does not depend on
/// `t`, so every point of a sweep sees the same underlying draws.
fn noise_rng(cfg: &ExperimentConfig, hide: HideMethod, method: Method) -> SeededRng {
    let h = hide as u64;
    let m = Method::ALL.iter().position(|&x| x == method).unwrap_or(0) as u64;
    SeededRng::new(cfg.seed).split(NOISE_STREAM).split(h * 16 + m)
}

fn score(
    cfg: &ExperimentConfig,
    hide: HideMethod,
    sanitizer: &str,
    t: Option<usize>,
    outputs: &[ImageTensor],
    data: &ImageData,
    arts: &Artifacts,
    time_ms: Option<f64>,
) -> Result<ResultRow> {
    let mut ip = Vec::with_capacity(outputs.len());
    let mut se = Vec::with_capacity(outputs.len());
    for ((out, cover), secret) in outputs.iter().zip(&data.covers).zip(&data.secrets) {
        ip.push(QualityMetrics::compute(cover, out)?);
        se.push(QualityMetrics::compute(secret, &reveal(cfg, hide, arts, out)?)?);
    }
    let (ip, se) = (QualityMetrics::mean(&ip), QualityMetrics::mean(&se));
    Ok(ResultRow {
        hide: hide.name().into(),
        sanitizer: sanitizer.into(),
        t,
        ip,
        se,
        verdict: verdict(ip.ncc, se.ncc, cfg.theta_ip, cfg.theta_se),
        time_ms,
    })
}

fn sanitize_row(
    cfg: &ExperimentConfig,
    hide: HideMethod,
    method: Method,
    t: usize,
    containers: &[ImageTensor],
    data: &ImageData,
    arts: &Artifacts,
) -> Result<ResultRow> {
    let mut rng = noise_rng(cfg, hide, method);
    let start = Instant::now();
    let out = sanitize_images(cfg, method, t, containers, arts, &mut rng)?;
    let ms = start.elapsed().as_secs_f64() * 1e3 / containers.len() as f64;
    let t = method.uses_timestep().then_some(t);
    score(cfg, hide, method.name(), t, &out, data, arts, cfg.timing.then_some(ms))
}

/// Rows and the files written for one experiment.
#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub files: Vec<PathBuf>,
}

struct Prepared {
    data: ImageData,
    arts: Artifacts,
    containers: Vec<(HideMethod, Vec<ImageTensor>)>,
}

fn prepare(cfg: &ExperimentConfig, sanitizers: &[Method]) -> Result<Prepared> {
    cfg.validate()?;
    let data = load_image_data(cfg)?;
    let arts = prepare_artifacts(cfg, &data, sanitizers, &cfg.hide_methods)?;
    let containers = cfg
        .hide_methods
        .iter()
        .map(|&h| Ok((h, make_containers(cfg, h, &data, &arts)?)))
        .collect::<Result<_>>()?;
    Ok(Prepared { data, arts, containers })
}

/// Sanitizer comparison at a single timestep. Per hide method: a `none` row
/// (covers against containers, secrets against their pre-sanitization
/// reveals) and then one row per configured sanitizer. Writes `rq1.csv`.
pub fn run_rq1(cfg: &ExperimentConfig, outdir: &Path) -> Result<ExperimentOutput> {
    let p = prepare(cfg, &cfg.sanitizers)?;
    let t = cfg.timestep();
    let mut rows = Vec::new();
    for (hide, containers) in &p.containers {
        rows.push(score(cfg, *hide, "none", None, containers, &p.data, &p.arts, None)?);
        for &m in &cfg.sanitizers {
            info!("rq1 {hide} {}", m.name());
            rows.push(sanitize_row(cfg, *hide, m, t, containers, &p.data, &p.arts)?);
        }
    }
    let files = emit_report(&rows, outdir, "rq1", false)?;
    Ok(ExperimentOutput { rows, files })
}

/// DM-SUDS over the timestep grid. Writes `rq2.csv` and `rq2.svg`.
pub fn run_rq2(cfg: &ExperimentConfig, outdir: &Path) -> Result<ExperimentOutput> {
    let p = prepare(cfg, &[Method::DmSuds])?;
    let mut rows = Vec::new();
    for (hide, containers) in &p.containers {
        for t in cfg.grid() {
            info!("rq2 {hide} t={t}");
            rows.push(sanitize_row(cfg, *hide, Method::DmSuds, t, containers, &p.data, &p.arts)?);
        }
    }
    let files = emit_report(&rows, outdir, "rq2", true)?;
    Ok(ExperimentOutput { rows, files })
}

/// Noise-free ablation: `dm_suds_direct` and `dm_suds` on the same
/// containers over the grid. Writes `rq3.csv`, `rq3.svg` and the per-t
/// comparison `rq3_paired.csv`.
pub fn run_rq3(cfg: &ExperimentConfig, outdir: &Path) -> Result<ExperimentOutput> {
    let p = prepare(cfg, &[Method::DmSuds])?;
    let mut rows = Vec::new();
    let mut paired = Vec::new();
    for (hide, containers) in &p.containers {
        for t in cfg.grid() {
            info!("rq3 {hide} t={t}");
            let direct = sanitize_row(cfg, *hide, Method::DmSudsDirect, t, containers, &p.data, &p.arts)?;
            let noisy = sanitize_row(cfg, *hide, Method::DmSuds, t, containers, &p.data, &p.arts)?;
            paired.push(vec![
                hide.name().to_string(),
                t.to_string(),
                noisy.se.ncc.to_string(),
                direct.se.ncc.to_string(),
                (direct.se.ncc - noisy.se.ncc).to_string(),
                noisy.ip.ncc.to_string(),
                direct.ip.ncc.to_string(),
            ]);
            rows.push(direct);
            rows.push(noisy);
        }
    }
    let mut files = emit_report(&rows, outdir, "rq3", true)?;
    files.push(write_table(
        outdir,
        "rq3_paired",
        &["hide", "t", "ncc_se_dm_suds", "ncc_se_direct", "delta_se", "ncc_ip_dm_suds", "ncc_ip_direct"],
        &paired,
    )?);
    Ok(ExperimentOutput { rows, files })
}

/// Mean IP and SE NCC over all hide methods for `sanitizer` at `t`.
pub fn mean_ncc_at(rows: &[ResultRow], sanitizer: &str, t: usize) -> Option<(f64, f64)> {
    let sel: Vec<&ResultRow> = rows
        .iter()
        .filter(|r| r.sanitizer == sanitizer && r.t == Some(t))
        .collect();
    if sel.is_empty() {
        return None;
    }
    let n = sel.len() as f64;
    Some((
        sel.iter().map(|r| r.ip.ncc).sum::<f64>() / n,
        sel.iter().map(|r| r.se.ncc).sum::<f64>() / n,
    ))
}

/// Spearman correlation between t and the mean SE NCC (over hide methods)
/// for one sanitizer, and for a single hide method when `hide` is given.
pub fn se_trend(rows: &[ResultRow], sanitizer: &str, hide: Option<&str>) -> Option<f64> {
    let mut ts: Vec<usize> = rows
        .iter()
        .filter(|r| r.sanitizer == sanitizer && hide.is_none_or(|h| r.hide == h))
        .filter_map(|r| r.t)
        .collect();
    ts.sort_unstable();
    ts.dedup();
    let se: Vec<f64> = ts
        .iter()
        .map(|&t| {
            let sel: Vec<f64> = rows
                .iter()
                .filter(|r| r.sanitizer == sanitizer && r.t == Some(t) && hide.is_none_or(|h| r.hide == h))
                .map(|r| r.se.ncc)
                .collect();
            sel.iter().sum::<f64>() / sel.len() as f64
        })
        .collect();
    let ts: Vec<f64> = ts.into_iter().map(|t| t as f64).collect();
    spearman(&ts, &se)
}

/// One audio container's outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioRow {
    pub file: String,
    pub payload_bytes: usize,
    /// Mean squared error between container and sanitized clip on `[-1, 1]`.
    pub mse: f64,
    pub ber_pre: f64,
    pub ber_post: f64,
    pub rr: f64,
}

#[derive(Clone, Debug)]
pub struct AudioOutput {
    pub t: usize,
    pub rows: Vec<AudioRow>,
    pub mean_mse: f64,
    pub mean_ber_pre: f64,
    pub mean_ber_post: f64,
    /// Mean of per-file RR.
    pub mean_rr: f64,
    /// Clips skipped because the payload did not fit.
    pub skipped: Vec<String>,
    pub files: Vec<PathBuf>,
}

fn random_text(rng: &mut SeededRng, len: usize) -> String {
    const WORDS: [&str; 16] = [
        "river", "stone", "quiet", "north", "signal", "amber", "field", "lantern", "orbit", "meadow", "copper",
        "harbor", "winter", "thread", "cedar", "echo",
    ];
    let mut s = String::new();
    while s.len() < len {
        if !s.is_empty() {
            s.push(' ');
        }
        s.push_str(WORDS[rng.below(0, WORDS.len())]);
    }
    s.truncate(len);
    s
}

/// Named clips: the test clips and the training clips, disjoint.
type ClipSplit = (Vec<(String, AudioClip)>, Vec<AudioClip>);

fn load_audio_data(cfg: &ExperimentConfig) -> Result<ClipSplit> {
    match &cfg.data_dir {
        None => {
            let mut train = gen_synthetic_audio(
                cfg.audio_train_clips + cfg.audio_clips,
                cfg.audio_len,
                cfg.sample_rate,
                cfg.seed,
            )?;
            let test = train
                .split_off(cfg.audio_train_clips)
                .into_iter()
                .enumerate()
                .map(|(i, c)| (format!("clip{i:03}"), c))
                .collect();
            Ok((test, train))
        }
        Some(dir) => {
            let mut clips = Vec::new();
            for path in sorted_files(dir, "wav")? {
                let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                clips.push((name, load_wav(&path)?));
            }
            SeededRng::new(cfg.seed).split(DATA_STREAM).shuffle(&mut clips);
            if clips.len() <= cfg.audio_clips {
                return Err(Error::Config(format!(
                    "need more than {} WAV files, found {}",
                    cfg.audio_clips,
                    clips.len()
                )));
            }
            let train = clips.split_off(cfg.audio_clips);
            Ok((clips, train.into_iter().map(|c| c.1).take(cfg.audio_train_clips).collect()))
        }
    }
}

/// Audio LSB text containers sanitized by one-dimensional DM-SUDS at
/// `t = horizon / 2` (or the configured `t`). Writes `audio.csv` with one
/// row per clip and a final `mean` row.
pub fn run_audio_case(cfg: &ExperimentConfig, outdir: &Path) -> Result<AudioOutput> {
    cfg.validate()?;
    let (test, train) = load_audio_data(cfg)?;
    let bytes: Vec<Vec<u8>> = train
        .iter()
        .map(|c| c.samples().iter().flat_map(|s| s.to_le_bytes()).collect())
        .collect();
    let name = format!(
        "audio-denoiser-f{AUDIO_FRAME}-{}-s{}-T{}-e{}.bin",
        fingerprint(bytes.iter().map(Vec::as_slice)),
        cfg.seed,
        cfg.horizon,
        cfg.audio_epochs
    );
    let model = cached(cfg, name, |p| DiffusionModel::load(p), |m, p| m.save(p), || {
        Ok(train_audio_denoiser(&train, &diffusion_config(cfg, cfg.audio_epochs))?.0)
    })?;
    let model = check_diffusion(model, cfg.horizon, (1, 1, AUDIO_FRAME))?;
    let t = cfg.timestep();
    let root = SeededRng::new(cfg.seed);
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (i, (name, clip)) in test.iter().enumerate() {
        let mut text_rng = root.split(TEXT_STREAM).split(i as u64);
        let capacity = (clip.len() * cfg.audio_bits as usize).saturating_sub(32) / 8;
        let len = 64 + text_rng.below(0, 449);
        let payload = TextPayload::new(&random_text(&mut text_rng, len));
        if payload.bytes().len() > capacity {
            warn!("{name}: {} byte payload exceeds capacity {capacity}, skipped", payload.bytes().len());
            skipped.push(name.clone());
            continue;
        }
        let container = audio_lsb_hide(clip, &payload, cfg.audio_bits)?;
        let framed = payload.framed_bits();
        let ber_pre = ber(&framed, &read_embedded_bits(&container, cfg.audio_bits, framed.len())?)?;
        let mut rng = root.split(NOISE_STREAM).split(i as u64);
        let clean = dm_suds_audio(&container, t, &model, &mut rng)?;
        let ber_post = ber(&framed, &read_embedded_bits(&clean, cfg.audio_bits, framed.len())?)?;
        let a: Vec<f64> = container.to_normalized().into_iter().map(f64::from).collect();
        let b: Vec<f64> = clean.to_normalized().into_iter().map(f64::from).collect();
        rows.push(AudioRow {
            file: name.clone(),
            payload_bytes: payload.bytes().len(),
            mse: mse_slices(&a, &b)?,
            ber_pre,
            ber_post,
            rr: rr(ber_post),
        });
    }
    if rows.is_empty() {
        return Err(Error::Config("every audio clip was skipped".into()));
    }
    let n = rows.len() as f64;
    let mean = |f: fn(&AudioRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let (mean_mse, mean_ber_pre, mean_ber_post, mean_rr) =
        (mean(|r| r.mse), mean(|r| r.ber_pre), mean(|r| r.ber_post), mean(|r| r.rr));
    let mut table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.file.clone(),
                t.to_string(),
                r.payload_bytes.to_string(),
                r.mse.to_string(),
                r.ber_pre.to_string(),
                r.ber_post.to_string(),
                r.rr.to_string(),
            ]
        })
        .collect();
    table.push(vec![
        "mean".into(),
        t.to_string(),
        String::new(),
        mean_mse.to_string(),
        mean_ber_pre.to_string(),
        mean_ber_post.to_string(),
        mean_rr.to_string(),
    ]);
    let files = vec![write_table(
        outdir,
        "audio",
        &["file", "t", "payload_bytes", "mse", "ber_pre", "ber_post", "rr"],
        &table,
    )?];
    Ok(AudioOutput {
        t,
        rows,
        mean_mse,
        mean_ber_pre,
        mean_ber_post,
        mean_rr,
        skipped,
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(model_dir: &Path) -> ExperimentConfig {
        ExperimentConfig::parse_str(&format!(
            "shape = 3x8x8\ntrain_images = 24\ncontainers = 4\nhorizon = 8\nt_grid = 2, 4, 8\n\
             diffusion_epochs = 1\nvae_epochs = 1\nhider_epochs = 1\nbatch_size = 8\n\
             audio_clips = 2\naudio_train_clips = 1\naudio_len = 5000\naudio_epochs = 1\n\
             model_dir = {}\n",
            model_dir.display()
        ))
        .unwrap()
    }

    #[test]
    fn splits_are_disjoint() {
        let dir = tempfile::tempdir().unwrap();
        let d = load_image_data(&tiny(dir.path())).unwrap();
        assert_eq!((d.train.len(), d.covers.len(), d.secrets.len()), (24, 4, 4));
        for c in &d.covers {
            assert!(!d.secrets.contains(c) && !d.train.contains(c));
        }
    }

    #[test]
    fn rq1_rows_none_row_and_verdicts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path());
        let out = run_rq1(&cfg, &dir.path().join("out")).unwrap();
        assert_eq!(out.rows.len(), cfg.hide_methods.len() * (cfg.sanitizers.len() + 1));
        let none = out.rows.iter().find(|r| r.hide == "lsb" && r.sanitizer == "none").unwrap();
        assert!(none.ip.ncc >= 0.95, "{}", none.ip.ncc);
        assert!(none.t.is_none() && none.time_ms.is_none());
        for r in &out.rows {
            assert_eq!(r.verdict, verdict(r.ip.ncc, r.se.ncc, cfg.theta_ip, cfg.theta_se));
        }
        let text = std::fs::read_to_string(&out.files[0]).unwrap();
        assert_eq!(text.lines().count(), out.rows.len() + 1);
    }

    #[test]
    fn runs_are_byte_identical_and_models_are_cached() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(dir.path());
        cfg.hide_methods = vec![HideMethod::Lsb];
        let a = run_rq3(&cfg, &dir.path().join("a")).unwrap();
        cfg.train = false;
        let b = run_rq3(&cfg, &dir.path().join("b")).unwrap();
        for (fa, fb) in a.files.iter().zip(&b.files) {
            assert_eq!(std::fs::read(fa).unwrap(), std::fs::read(fb).unwrap(), "{}", fa.display());
        }
        let direct: Vec<_> = a.rows.iter().filter(|r| r.sanitizer == "dm_suds_direct").collect();
        assert_eq!(direct.len(), 3);
        assert!(a.files.iter().any(|f| f.ends_with("rq3.svg")));
        assert!(a.files.iter().any(|f| f.ends_with("rq3_paired.csv")));
    }

    #[test]
    fn missing_model_without_training_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(dir.path());
        cfg.train = false;
        assert!(matches!(run_rq2(&cfg, dir.path()), Err(Error::Config(_))));
    }

    #[test]
    fn seed_changes_results() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(dir.path());
        cfg.hide_methods = vec![HideMethod::Lsb];
        cfg.sanitizers = vec![Method::Gaussian];
        let a = run_rq1(&cfg, dir.path()).unwrap();
        cfg.seed = 1;
        let b = run_rq1(&cfg, dir.path()).unwrap();
        assert_ne!(a.rows, b.rows);
    }

    #[test]
    fn trend_helpers() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path());
        let out = run_rq2(&cfg, dir.path()).unwrap();
        let (ip, se) = mean_ncc_at(&out.rows, "dm_suds", 8).unwrap();
        let at8: Vec<_> = out.rows.iter().filter(|r| r.t == Some(8)).collect();
        assert_eq!(at8.len(), 2);
        assert!((ip - (at8[0].ip.ncc + at8[1].ip.ncc) / 2.0).abs() < 1e-12);
        assert!((se - (at8[0].se.ncc + at8[1].se.ncc) / 2.0).abs() < 1e-12);
        assert!(mean_ncc_at(&out.rows, "dm_suds", 3).is_none());
        assert!(se_trend(&out.rows, "dm_suds", Some("lsb")).is_some());
    }

    #[test]
    fn audio_case_reports_per_file_rows() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny(dir.path());
        let out = run_audio_case(&cfg, dir.path()).unwrap();
        assert_eq!(out.rows.len(), 2);
        assert_eq!(out.t, 4);
        assert!(out.rows.iter().all(|r| r.ber_pre == 0.0));
        assert!((out.mean_rr - (out.rows[0].rr + out.rows[1].rr) / 2.0).abs() < 1e-12);
        let text = std::fs::read_to_string(&out.files[0]).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().last().unwrap().starts_with("mean,"));
    }
}
