use crate::error::{Error, Result};
use crate::media::{AudioClip, ImageTensor, SeededRng};

/// Gaussian blur applied to synthetic images by default, in pixels.
pub const DEFAULT_BLUR: f64 = 2.0;

/// Procedural stand-in for natural images: a two-colour linear gradient
/// background with one to three filled rectangles or discs on top, softened
/// by a Gaussian blur of [`DEFAULT_BLUR`] pixels.
///
/// Image `i` is drawn from stream `i` of `seed`, so a dataset is a pure
/// function of `(n, shape, seed)` and prefixes agree across sizes.
pub fn gen_synthetic_images(n: usize, shape: (usize, usize, usize), seed: u64) -> Result<Vec<ImageTensor>> {
    gen_synthetic_images_blurred(n, shape, seed, DEFAULT_BLUR)
}

/// [`gen_synthetic_images`] with an explicit blur; `0` keeps hard edges.
pub fn gen_synthetic_images_blurred(
    n: usize,
    shape: (usize, usize, usize),
    seed: u64,
    blur: f64,
) -> Result<Vec<ImageTensor>> {
    if n == 0 {
        return Err(Error::InvalidArgument("image count must be positive".into()));
    }
    if !(blur >= 0.0) {
        return Err(Error::InvalidArgument(format!("blur must be >= 0, got {blur}")));
    }
    let root = SeededRng::new(seed);
    (0..n)
        .map(|i| synth_one(shape, blur as f32, &mut root.split(i as u64)))
        .collect()
}

/// Tonal stand-in for field recordings: one to three partials with smooth
/// amplitude envelopes over a faint noise floor, RMS roughly 0.03 to 0.15 of
/// full scale. Clip `i` uses stream `i` of `seed`.
pub fn gen_synthetic_audio(n: usize, len: usize, sample_rate: u32, seed: u64) -> Result<Vec<AudioClip>> {
    if n == 0 || len == 0 || sample_rate == 0 {
        return Err(Error::InvalidArgument("clip count, length and rate must be positive".into()));
    }
    let root = SeededRng::new(seed);
    (0..n)
        .map(|i| {
            let mut rng = root.split(i as u64);
            let sr = sample_rate as f32;
            let mut x = vec![0f32; len];
            let tones = 1 + rng.below(0, 3);
            for _ in 0..tones {
                let f = 80.0 * 2f32.powf(rng.uniform() * 4.0);
                let amp = 0.03 + rng.uniform() * 0.12;
                let phase = rng.uniform() * std::f32::consts::TAU;
                // Envelope: raised-cosine bump over a random span.
                let start = rng.uniform() * 0.5;
                let span = 0.3 + rng.uniform() * 0.7;
                let harmonics = 1 + rng.below(0, 3);
                for (k, v) in x.iter_mut().enumerate() {
                    let u = (k as f32 / len as f32 - start) / span;
                    if !(0.0..=1.0).contains(&u) {
                        continue;
                    }
                    let env = 0.5 - 0.5 * (std::f32::consts::TAU * u).cos();
                    let tt = k as f32 / sr;
                    for hm in 1..=harmonics {
                        let w = std::f32::consts::TAU * f * hm as f32;
                        *v += amp * env * (w * tt + phase).sin() / hm as f32;
                    }
                }
            }
            for v in &mut x {
                *v += 0.002 * rng.normal();
            }
            AudioClip::from_normalized(&x, sample_rate)
        })
        .collect()
}

fn color(rng: &mut SeededRng, c: usize) -> Vec<f32> {
    (0..c).map(|_| rng.uniform() * 255.0).collect()
}

fn synth_one((c, h, w): (usize, usize, usize), blur_sigma: f32, rng: &mut SeededRng) -> Result<ImageTensor> {
    let plane = h * w;
    let mut px = vec![0f32; c * plane];
    let (c0, c1) = (color(rng, c), color(rng, c));
    let angle = rng.uniform() * std::f32::consts::TAU;
    let (dx, dy) = (angle.cos(), angle.sin());
    let span = (w as f32 * dx.abs() + h as f32 * dy.abs()).max(1.0);
    for y in 0..h {
        for x in 0..w {
            let proj = (x as f32 - w as f32 / 2.0) * dx + (y as f32 - h as f32 / 2.0) * dy;
            let u = (proj / span + 0.5).clamp(0.0, 1.0);
            for ch in 0..c {
                px[ch * plane + y * w + x] = c0[ch] * (1.0 - u) + c1[ch] * u;
            }
        }
    }
    let shapes = 1 + rng.below(0, 3);
    for _ in 0..shapes {
        let fill = color(rng, c);
        let inside: Box<dyn Fn(usize, usize) -> bool> = if rng.uniform() < 0.5 {
            let x0 = rng.below(0, w);
            let y0 = rng.below(0, h);
            let x1 = (x0 + 2 + rng.below(0, w / 2 + 1)).min(w);
            let y1 = (y0 + 2 + rng.below(0, h / 2 + 1)).min(h);
            Box::new(move |x, y| x >= x0 && x < x1 && y >= y0 && y < y1)
        } else {
            let cx = rng.uniform() * w as f32;
            let cy = rng.uniform() * h as f32;
            let r = 1.5 + rng.uniform() * (h.min(w) as f32 / 3.0);
            Box::new(move |x, y| {
                let (ex, ey) = (x as f32 + 0.5 - cx, y as f32 + 0.5 - cy);
                ex * ex + ey * ey <= r * r
            })
        };
        for y in 0..h {
            for x in 0..w {
                if inside(x, y) {
                    for ch in 0..c {
                        px[ch * plane + y * w + x] = fill[ch];
                    }
                }
            }
        }
    }
    if blur_sigma > 0.0 {
        px = blur(&px, c, h, w, blur_sigma);
    }
    ImageTensor::new(c, h, w, px.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect())
}

fn blur(px: &[f32], c: usize, h: usize, w: usize, sigma: f32) -> Vec<f32> {
    let r = (3.0 * sigma).ceil() as isize;
    let k: Vec<f32> = (-r..=r).map(|i| (-(i * i) as f32 / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f32 = k.iter().sum();
    let k: Vec<f32> = k.iter().map(|v| v / norm).collect();
    let clampi = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0f32; px.len()];
    let mut out = vec![0f32; px.len()];
    for ch in 0..c {
        let p = ch * h * w;
        for y in 0..h {
            for x in 0..w {
                tmp[p + y * w + x] = (-r..=r).map(|d| k[(d + r) as usize] * px[p + y * w + clampi(x as isize + d, w)]).sum();
            }
        }
        for y in 0..h {
            for x in 0..w {
                out[p + y * w + x] = (-r..=r).map(|d| k[(d + r) as usize] * tmp[p + clampi(y as isize + d, h) * w + x]).sum();
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let a = gen_synthetic_images(5, (3, 16, 16), 11).unwrap();
        let b = gen_synthetic_images(5, (3, 16, 16), 11).unwrap();
        assert_eq!(a, b);
        let c = gen_synthetic_images(5, (3, 16, 16), 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn single_image() {
        let v = gen_synthetic_images(1, (3, 16, 16), 0).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].shape(), (3, 16, 16));
        assert!(gen_synthetic_images(0, (3, 16, 16), 0).is_err());
    }

    #[test]
    fn audio_clips_are_deterministic_and_bounded() {
        let a = gen_synthetic_audio(4, 4096, 8000, 3).unwrap();
        assert_eq!(a, gen_synthetic_audio(4, 4096, 8000, 3).unwrap());
        for clip in &a {
            assert_eq!(clip.len(), 4096);
            let rms = (clip.to_normalized().iter().map(|v| v * v).sum::<f32>() / 4096.0).sqrt();
            assert!(rms > 0.001 && rms < 0.3, "rms {rms}");
        }
        assert!(gen_synthetic_audio(0, 10, 8000, 0).is_err());
    }

    #[test]
    fn blur_smooths() {
        let sharp = gen_synthetic_images_blurred(10, (3, 16, 16), 4, 0.0).unwrap();
        let soft = gen_synthetic_images_blurred(10, (3, 16, 16), 4, 1.5).unwrap();
        let tv = |imgs: &[ImageTensor]| -> u64 {
            imgs.iter()
                .flat_map(|i| i.data().windows(2).map(|w| (w[0] as i32 - w[1] as i32).unsigned_abs() as u64))
                .sum()
        };
        assert!(tv(&soft) < tv(&sharp));
        assert!(gen_synthetic_images_blurred(1, (3, 4, 4), 0, -1.0).is_err());
    }

    #[test]
    fn histogram_entropy_above_one_bit() {
        for img in gen_synthetic_images(20, (3, 16, 16), 5).unwrap() {
            let mut hist = [0usize; 256];
            img.data().iter().for_each(|&p| hist[p as usize] += 1);
            let n = img.len() as f64;
            let h: f64 = hist
                .iter()
                .filter(|&&k| k > 0)
                .map(|&k| {
                    let p = k as f64 / n;
                    -p * p.log2()
                })
                .sum();
            assert!(h > 1.0, "entropy {h}");
        }
    }
}
