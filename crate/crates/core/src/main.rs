use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use stegsan::diffusion::{train_denoiser, DiffTrainConfig, DiffusionModel};
use stegsan::harness::{
    gen_synthetic_images, mean_ncc_at, run_audio_case, run_rq1, run_rq2, run_rq3, se_trend, ExperimentConfig,
    ExperimentOutput,
};
use stegsan::hider::{ddh_hide, ddh_reveal, train_hide_pair, HidePair, HideTrainConfig};
use stegsan::media::{load_png, load_wav, save_png, save_wav, ImageTensor, SeededRng};
use stegsan::metrics::QualityMetrics;
use stegsan::sanitize::{
    train_audio_denoiser, train_vae, Media, Method, ModelRef, SanitizeRequest, VaeConfig, VaeModel,
    DEFAULT_NOISE_SIGMA,
};
use stegsan::stego::{audio_lsb_hide, audio_lsb_reveal, lsb_hide, lsb_reveal, TextPayload};
use stegsan::{Error, Result};

#[derive(Parser)]
#[command(name = "stegsan", version, about = "Hide, reveal and sanitize steganographic payloads")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum HideKind {
    Lsb,
    #[value(alias = "ddh")]
    DdhToy,
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Rq1,
    Rq2,
    Rq3,
    Audio,
}

#[derive(Subcommand)]
enum Command {
    /// Embed a secret image (or, for WAV covers, a text) into a cover.
    Hide {
        #[arg(long)]
        cover: PathBuf,
        #[arg(long, required_unless_present = "text")]
        secret: Option<PathBuf>,
        #[arg(long, conflicts_with = "secret")]
        text: Option<String>,
        /// Defaults to 4 for images and 1 for audio.
        #[arg(long)]
        bits: Option<u8>,
        #[arg(long, value_enum, default_value = "lsb")]
        method: HideKind,
        /// Trained hider, for `--method ddh-toy`.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recover a secret image, or print the text hidden in a WAV.
    Reveal {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        bits: Option<u8>,
        #[arg(long, value_enum, default_value = "lsb")]
        method: HideKind,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Required for images; for audio the text goes here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the learned hide/reveal pair.
    TrainHider {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "hider.bin")]
        out: PathBuf,
    },
    /// Train a diffusion denoiser on PNGs (image model) or WAVs (audio model).
    TrainDiffusion {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long = "T", default_value_t = 200)]
        horizon: usize,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        #[arg(long, default_value_t = 2e-3)]
        lr: f64,
        #[arg(long, default_value = "denoiser.bin")]
        out: PathBuf,
    },
    /// Train the reconstruction VAE baseline.
    TrainVae {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 15)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "vae.bin")]
        out: PathBuf,
    },
    /// Sanitize one image or WAV.
    Sanitize {
        #[arg(long)]
        method: Method,
        #[arg(long)]
        t: Option<usize>,
        /// Noise standard deviation in pixel (or 16-bit sample) units.
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Compare two images: MSE, PSNR, SSIM and NCC.
    Eval {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Run an experiment and write CSV/SVG reports.
    Experiment {
        #[arg(value_enum)]
        which: Experiment,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args)]
struct DataArgs {
    /// Directory of training PNGs (or WAVs for `train-diffusion`).
    #[arg(long, required_unless_present = "synthetic")]
    data: Option<PathBuf>,
    /// Train on this many synthetic 16x16 RGB images instead.
    #[arg(long, conflicts_with = "data")]
    synthetic: Option<usize>,
}

fn is_wav(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav"))
}

fn files_with(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext)))
        .collect();
    v.sort();
    Ok(v)
}

fn images(data: &DataArgs, seed: u64) -> Result<Vec<ImageTensor>> {
    match (&data.data, data.synthetic) {
        (_, Some(n)) => gen_synthetic_images(n, (3, 16, 16), seed),
        (Some(dir), None) => {
            let v = files_with(dir, "png")?.iter().map(load_png).collect::<Result<Vec<_>>>()?;
            if v.is_empty() {
                return Err(Error::InvalidArgument(format!("no PNG files in {}", dir.display())));
            }
            Ok(v)
        }
        (None, None) => unreachable!("clap requires one of --data/--synthetic"),
    }
}

fn load_hider(model: &Option<PathBuf>) -> Result<HidePair> {
    let p = model
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("--method ddh-toy needs --model".into()))?;
    HidePair::load(p)
}

fn print_summary(which: &str, out: &ExperimentOutput) {
    for f in &out.files {
        println!("wrote {}", f.display());
    }
    if which == "rq1" {
        for r in &out.rows {
            println!(
                "{:8} {:15} IP NCC {:.4}  SE NCC {:.4}  {}/{}",
                r.hide,
                r.sanitizer,
                r.ip.ncc,
                r.se.ncc,
                stegsan::metrics::Verdict::label(r.verdict.ip_success),
                stegsan::metrics::Verdict::label(r.verdict.se_success)
            );
        }
        return;
    }
    let mut ts: Vec<usize> = out.rows.iter().filter_map(|r| r.t).collect();
    ts.sort_unstable();
    ts.dedup();
    for san in ["dm_suds", "dm_suds_direct"] {
        if let Some(rho) = se_trend(&out.rows, san, None) {
            println!("{san}: Spearman(mean SE NCC, t) = {rho:.4}");
        }
        for &t in ts.first().into_iter().chain(ts.last()) {
            if let Some((ip, se)) = mean_ncc_at(&out.rows, san, t) {
                println!("{san}: t={t} mean IP NCC {ip:.4}  mean SE NCC {se:.4}");
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Hide {
            cover,
            secret,
            text,
            bits,
            method,
            model,
            out,
        } => {
            if is_wav(&cover) {
                let text = text.ok_or_else(|| Error::InvalidArgument("audio covers take --text".into()))?;
                let ct = audio_lsb_hide(&load_wav(&cover)?, &TextPayload::new(&text), bits.unwrap_or(1))?;
                return save_wav(&ct, &out);
            }
            let secret = secret.ok_or_else(|| Error::InvalidArgument("image covers take --secret".into()))?;
            let (c, s) = (load_png(&cover)?, load_png(&secret)?);
            let ct = match method {
                HideKind::Lsb => lsb_hide(&c, &s, bits.unwrap_or(4))?,
                HideKind::DdhToy => ddh_hide(&load_hider(&model)?, &c, &s)?,
            };
            save_png(&ct, &out)
        }
        Command::Reveal {
            input,
            bits,
            method,
            model,
            out,
        } => {
            if is_wav(&input) {
                let r = audio_lsb_reveal(&load_wav(&input)?, bits.unwrap_or(1))?;
                if r.malformed {
                    log::warn!("length header claims {} bits; payload truncated", r.declared_bits);
                }
                let text = r.text().unwrap_or_else(|| String::from_utf8_lossy(&r.bytes()).into_owned());
                return match out {
                    Some(p) => Ok(std::fs::write(p, text)?),
                    None => {
                        println!("{text}");
                        Ok(())
                    }
                };
            }
            let out = out.ok_or_else(|| Error::InvalidArgument("image reveal needs --out".into()))?;
            let ct = load_png(&input)?;
            let s = match method {
                HideKind::Lsb => lsb_reveal(&ct, bits.unwrap_or(4))?,
                HideKind::DdhToy => ddh_reveal(&load_hider(&model)?, &ct)?,
            };
            save_png(&s, &out)
        }
        Command::TrainHider { data, epochs, seed, out } => {
            let cfg = HideTrainConfig {
                epochs,
                seed,
                ..Default::default()
            };
            let pair = train_hide_pair(&images(&data, seed)?, &cfg)?;
            if let Some((c, s)) = pair.losses.last() {
                println!("final cover loss {c:.6}, secret loss {s:.6}");
            }
            pair.save(&out)
        }
        Command::TrainDiffusion {
            data,
            horizon,
            epochs,
            seed,
            batch_size,
            lr,
            out,
        } => {
            let cfg = DiffTrainConfig {
                epochs,
                batch_size,
                lr,
                seed,
                horizon,
                ..Default::default()
            };
            let wavs = match &data.data {
                Some(dir) => files_with(dir, "wav")?,
                None => Vec::new(),
            };
            let (model, hist) = if wavs.is_empty() {
                train_denoiser(&images(&data, seed)?, None, &cfg)?
            } else {
                let clips = wavs.iter().map(load_wav).collect::<Result<Vec<_>>>()?;
                train_audio_denoiser(&clips, &cfg)?
            };
            println!("epoch losses: {:?}", hist.epoch_losses);
            model.save(&out)
        }
        Command::TrainVae { data, epochs, seed, out } => {
            let cfg = VaeConfig {
                epochs,
                seed,
                ..Default::default()
            };
            train_vae(&images(&data, seed)?, &cfg)?.save(&out)
        }
        Command::Sanitize {
            method,
            t,
            sigma,
            model,
            input,
            out,
            seed,
        } => {
            let diffusion;
            let vae;
            let model_ref = match (method, &model) {
                (Method::DmSuds | Method::DmSudsDirect, Some(p)) => {
                    diffusion = DiffusionModel::load(p)?;
                    ModelRef::Diffusion(&diffusion)
                }
                (Method::Vae, Some(p)) => {
                    vae = VaeModel::load(p)?;
                    ModelRef::Vae(&vae)
                }
                _ => ModelRef::None,
            };
            let media = if is_wav(&input) {
                Media::Audio(load_wav(&input)?)
            } else {
                Media::Image(load_png(&input)?)
            };
            let sigma = sigma.or(method.uses_sigma().then_some(DEFAULT_NOISE_SIGMA));
            let req = SanitizeRequest {
                input: media,
                method,
                t,
                sigma,
                model: model_ref,
            };
            match req.run(&mut SeededRng::new(seed))? {
                Media::Image(img) => save_png(&img, &out),
                Media::Audio(clip) => save_wav(&clip, &out),
            }
        }
        Command::Eval { reference, test, json } => {
            let m = QualityMetrics::compute_strict(&load_png(&reference)?, &load_png(&test)?)?;
            if json {
                println!("{}", serde_json::to_string(&m).expect("metrics serialize"));
            } else {
                println!("mse     {}\npsnr_db {}\nssim    {}\nncc     {}", m.mse, m.psnr_db, m.ssim, m.ncc);
            }
            Ok(())
        }
        Command::Experiment { which, config, out } => {
            let cfg = match config {
                Some(p) => ExperimentConfig::load(p)?,
                None => {
                    let mut c = ExperimentConfig::default();
                    c.apply_env()?;
                    c
                }
            };
            match which {
                Experiment::Rq1 => print_summary("rq1", &run_rq1(&cfg, &out)?),
                Experiment::Rq2 => print_summary("rq2", &run_rq2(&cfg, &out)?),
                Experiment::Rq3 => print_summary("rq3", &run_rq3(&cfg, &out)?),
                Experiment::Audio => {
                    let a = run_audio_case(&cfg, &out)?;
                    for f in &a.files {
                        println!("wrote {}", f.display());
                    }
                    println!(
                        "t={} files={} skipped={} mean MSE {:.6}  BER pre {}  BER post {:.4}  mean RR {:.4}",
                        a.t,
                        a.rows.len(),
                        a.skipped.len(),
                        a.mean_mse,
                        a.mean_ber_pre,
                        a.mean_ber_post,
                        a.mean_rr
                    );
                }
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
