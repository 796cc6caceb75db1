use super::dct::{dct2, idct2};
use crate::error::{Error, Result};
use crate::media::{ImageTensor, SeededRng};

/// Default pixel-scale standard deviation of both noise baselines.
pub const DEFAULT_NOISE_SIGMA: f64 = 20.0;

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("sigma must be finite and >= 0, got {sigma}")))
    }
}

fn quantize(x: &ImageTensor, values: &[f64]) -> Result<ImageTensor> {
    let (c, h, w) = x.shape();
    ImageTensor::new(c, h, w, values.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect())
}

/// Pixels plus `N(0, sigma^2)`, before clamping and rounding.
pub(crate) fn gaussian_perturb(x: &ImageTensor, sigma: f64, rng: &mut SeededRng) -> Vec<f64> {
    x.data().iter().map(|&p| p as f64 + sigma * rng.normal() as f64).collect()
}

/// Adds i.i.d. Gaussian noise in the pixel domain, then clamps and rounds.
pub fn gaussian_sanitize(x: &ImageTensor, sigma: f64, rng: &mut SeededRng) -> Result<ImageTensor> {
    check_sigma(sigma)?;
    quantize(x, &gaussian_perturb(x, sigma, rng))
}

/// Noisy pixels before clamping, and the total energy of the noise that was
/// added to the coefficients.
pub(crate) fn dct_perturb(x: &ImageTensor, sigma: f64, rng: &mut SeededRng) -> (Vec<f64>, f64) {
    let (c, h, w) = x.shape();
    let pixels: Vec<f64> = x.data().iter().map(|&p| p as f64).collect();
    let mut coefs = dct2(&pixels, c, h, w);
    let mut energy = 0.0;
    for v in &mut coefs {
        let n = sigma * rng.normal() as f64;
        energy += n * n;
        *v += n;
    }
    (idct2(&coefs, c, h, w), energy)
}

/// Adds i.i.d. Gaussian noise to every coefficient of the per-channel
/// orthonormal DCT, inverts, then clamps and rounds.
pub fn dct_noise_sanitize(x: &ImageTensor, sigma: f64, rng: &mut SeededRng) -> Result<ImageTensor> {
    check_sigma(sigma)?;
    quantize(x, &dct_perturb(x, sigma, rng).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ncc;
    use crate::stego::{lsb_hide, lsb_reveal};

    fn ramp() -> ImageTensor {
        ImageTensor::new(3, 16, 16, (0..768).map(|i| (i % 200 + 20) as u8).collect()).unwrap()
    }

    #[test]
    fn zero_sigma_is_identity() {
        let x = ramp();
        let mut rng = SeededRng::new(0);
        assert_eq!(gaussian_sanitize(&x, 0.0, &mut rng).unwrap(), x);
        let d = dct_noise_sanitize(&x, 0.0, &mut rng).unwrap();
        for (a, b) in d.data().iter().zip(x.data()) {
            assert!((*a as i32 - *b as i32).abs() <= 1);
        }
        assert!(gaussian_sanitize(&x, -1.0, &mut rng).is_err());
        assert!(dct_noise_sanitize(&x, f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn pixel_noise_std_matches_sigma() {
        let x = ramp();
        let mut rng = SeededRng::new(1);
        let sigma = 7.5;
        let mut sum2 = 0.0;
        let mut n = 0usize;
        for _ in 0..40 {
            let y = gaussian_perturb(&x, sigma, &mut rng);
            for (a, &b) in y.iter().zip(x.data()) {
                sum2 += (a - b as f64).powi(2);
                n += 1;
            }
        }
        let std = (sum2 / n as f64).sqrt();
        // Standard error of a sample std is sigma / sqrt(2n).
        let se = sigma / (2.0 * n as f64).sqrt();
        assert!((std - sigma).abs() < 4.0 * se, "std {std}");
    }

    #[test]
    fn parseval_noise_energy() {
        let x = ramp();
        let mut rng = SeededRng::new(2);
        for _ in 0..10 {
            let (y, energy) = dct_perturb(&x, 12.0, &mut rng);
            let pixel: f64 = y.iter().zip(x.data()).map(|(a, &b)| (a - b as f64).powi(2)).sum();
            assert!((pixel - energy).abs() < 1e-6 * energy);
        }
        // Mean injected MSE tracks sigma^2.
        let mut acc = 0.0;
        for _ in 0..50 {
            acc += dct_perturb(&x, 12.0, &mut rng).1 / x.len() as f64;
        }
        let mean = acc / 50.0;
        let se = 144.0 * (2.0 / (50.0 * x.len() as f64)).sqrt();
        assert!((mean - 144.0).abs() < 4.0 * se, "mse {mean}");
    }

    #[test]
    fn one_bit_lsb_destroyed_by_small_noise() {
        let mut rng = SeededRng::new(3);
        let cover = ramp();
        let secret = ImageTensor::new(3, 16, 16, (0..768).map(|_| rng.below(0, 256) as u8).collect()).unwrap();
        let cont = lsb_hide(&cover, &secret, 1).unwrap();
        assert!(ncc(&secret, &lsb_reveal(&cont, 1).unwrap()).unwrap() > 0.5);
        let out = gaussian_sanitize(&cont, 2.0, &mut rng).unwrap();
        let r = ncc(&secret, &lsb_reveal(&out, 1).unwrap()).unwrap();
        assert!(r <= 0.3, "ncc {r}");
    }
}
