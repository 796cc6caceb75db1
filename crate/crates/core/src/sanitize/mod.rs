//! Sanitizers: diffusion (with and without forward noise), pixel and DCT
//! Gaussian noise, and a reconstruction VAE.

mod dct;
mod noise;
mod suds;
mod vae;

pub use self::dct::{dct2, idct2};
pub use self::noise::{dct_noise_sanitize, gaussian_sanitize, DEFAULT_NOISE_SIGMA};
pub use self::suds::{
    dm_suds, dm_suds_audio, dm_suds_batch, dm_suds_direct, dm_suds_direct_batch, dm_suds_with, train_audio_denoiser,
    AUDIO_FRAME,
};
pub use self::vae::{train_vae, vae_sanitize, vae_sanitize_batch, VaeConfig, VaeModel, VAE_KIND};

use crate::diffusion::DiffusionModel;
use crate::error::{Error, Result};
use crate::media::{AudioClip, ImageTensor, SeededRng};

/// Which sanitizer to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    DmSuds,
    DmSudsDirect,
    Gaussian,
    DctNoise,
    Vae,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::DmSuds,
        Method::DmSudsDirect,
        Method::Gaussian,
        Method::DctNoise,
        Method::Vae,
    ];

    /// Name used on the command line and in reports.
    pub fn name(self) -> &'static str {
        match self {
            Method::DmSuds => "dm_suds",
            Method::DmSudsDirect => "dm_suds_direct",
            Method::Gaussian => "gaussian",
            Method::DctNoise => "dct_noise",
            Method::Vae => "vae",
        }
    }

    pub fn uses_timestep(self) -> bool {
        matches!(self, Method::DmSuds | Method::DmSudsDirect)
    }

    pub fn uses_sigma(self) -> bool {
        matches!(self, Method::Gaussian | Method::DctNoise)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown sanitizer {s}")))
    }
}

/// Image or audio input to a sanitizer.
#[derive(Clone, Debug, PartialEq)]
pub enum Media {
    Image(ImageTensor),
    Audio(AudioClip),
}

/// Trained model handed to the sanitizer, if it needs one.
#[derive(Clone, Copy, Debug)]
pub enum ModelRef<'a> {
    None,
    Diffusion(&'a DiffusionModel),
    Vae(&'a VaeModel),
}

/// One sanitization call with its method-specific parameters.
#[derive(Clone, Debug)]
pub struct SanitizeRequest<'a> {
    pub input: Media,
    pub method: Method,
    pub t: Option<usize>,
    pub sigma: Option<f64>,
    pub model: ModelRef<'a>,
}

impl SanitizeRequest<'_> {
    /// Checks that every parameter the method needs is present and in range.
    pub fn validate(&self) -> Result<()> {
        let missing = |what: &str| Err(Error::InvalidArgument(format!("{} needs {what}", self.method)));
        match (self.method, self.model) {
            (Method::DmSuds | Method::DmSudsDirect, ModelRef::Diffusion(m)) => match self.t {
                Some(t) => m.schedule.check_t(t),
                None => missing("a timestep"),
            },
            (Method::DmSuds | Method::DmSudsDirect, _) => missing("a diffusion model"),
            (Method::Vae, ModelRef::Vae(_)) => Ok(()),
            (Method::Vae, _) => missing("a VAE model"),
            (Method::Gaussian | Method::DctNoise, _) => match self.sigma {
                Some(s) if s.is_finite() && s >= 0.0 => Ok(()),
                Some(s) => Err(Error::InvalidArgument(format!("sigma must be >= 0, got {s}"))),
                None => missing("sigma"),
            },
        }
    }

    pub fn run(&self, rng: &mut SeededRng) -> Result<Media> {
        self.validate()?;
        let t = self.t.unwrap_or(0);
        let sigma = self.sigma.unwrap_or(0.0);
        match (&self.input, self.model) {
            (Media::Image(x), model) => Ok(Media::Image(match (self.method, model) {
                (Method::DmSuds, ModelRef::Diffusion(m)) => dm_suds(x, t, m, rng)?,
                (Method::DmSudsDirect, ModelRef::Diffusion(m)) => dm_suds_direct(x, t, m)?,
                (Method::Vae, ModelRef::Vae(m)) => vae_sanitize(x, m)?,
                (Method::Gaussian, _) => gaussian_sanitize(x, sigma, rng)?,
                (Method::DctNoise, _) => dct_noise_sanitize(x, sigma, rng)?,
                _ => unreachable!("validated above"),
            })),
            (Media::Audio(clip), ModelRef::Diffusion(m)) if self.method == Method::DmSuds => {
                Ok(Media::Audio(dm_suds_audio(clip, t, m, rng)?))
            }
            (Media::Audio(clip), _) if self.method == Method::Gaussian => {
                let s: Vec<i16> = clip
                    .samples()
                    .iter()
                    .map(|&v| (v as f64 + sigma * rng.normal() as f64).round().clamp(-32768.0, 32767.0) as i16)
                    .collect();
                Ok(Media::Audio(AudioClip::new(s, clip.sample_rate())?))
            }
            (Media::Audio(_), _) => Err(Error::InvalidArgument(format!(
                "{} is not available for audio",
                self.method
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!("dm-suds".parse::<Method>().unwrap(), Method::DmSuds);
        assert!("suds".parse::<Method>().is_err());
    }

    #[test]
    fn request_validation() {
        let img = Media::Image(ImageTensor::zeros(1, 4, 4).unwrap());
        let mut req = SanitizeRequest {
            input: img,
            method: Method::Gaussian,
            t: None,
            sigma: None,
            model: ModelRef::None,
        };
        assert!(req.validate().is_err());
        req.sigma = Some(0.0);
        let out = req.run(&mut SeededRng::new(0)).unwrap();
        assert_eq!(out, req.input);
        req.method = Method::DmSuds;
        assert!(req.validate().is_err());
        req.method = Method::Vae;
        assert!(req.run(&mut SeededRng::new(0)).is_err());
        let audio = SanitizeRequest {
            input: Media::Audio(AudioClip::new(vec![1, 2, 3], 8000).unwrap()),
            method: Method::DctNoise,
            t: None,
            sigma: Some(1.0),
            model: ModelRef::None,
        };
        assert!(audio.run(&mut SeededRng::new(0)).is_err());
    }
}
