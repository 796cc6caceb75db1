//! A small reverse-mode differentiation engine for the convolutional
//! networks used by the denoiser, the VAE baseline and the learned hider.
//!
//! Convolutional activations are stored channel-major across the batch,
//! `[C, N, H, W]`, so that every convolution is a single GEMM over
//! `N * H * W` columns. Dense activations are `[N, F]`.

mod adam;
pub mod gradcheck;
mod layers;
mod params;
mod scalar;
pub mod serialize;
mod tape;
mod tensor;

pub use self::adam::{Adam, AdamConfig};
pub use self::layers::{Conv, Dense, ResBlock};
pub use self::params::{ParamId, ParamStore};
pub use self::scalar::Scalar;
pub use self::tape::{Grads, Tape, Var};
pub use self::tensor::Tensor;

/// Packs equally sized `[C, H, W]` samples into a `[C, N, H, W]` tensor.
pub fn pack_cnhw<T: Scalar>(samples: &[&[f32]], c: usize, h: usize, w: usize) -> Tensor<T> {
    let plane = h * w;
    let n = samples.len();
    let mut data = vec![T::zero(); c * n * plane];
    for (b, s) in samples.iter().enumerate() {
        assert_eq!(s.len(), c * plane, "sample size mismatch");
        for ch in 0..c {
            let dst = (ch * n + b) * plane;
            for (d, &v) in data[dst..dst + plane].iter_mut().zip(&s[ch * plane..(ch + 1) * plane]) {
                *d = T::lit(v as f64);
            }
        }
    }
    Tensor::new(vec![c, n, h, w], data)
}

/// Inverse of [`pack_cnhw`].
pub fn unpack_cnhw<T: Scalar>(t: &Tensor<T>) -> Vec<Vec<f32>> {
    let s = t.shape();
    let (c, n, plane) = (s[0], s[1], s[2] * s[3]);
    (0..n)
        .map(|b| {
            (0..c)
                .flat_map(|ch| {
                    let src = (ch * n + b) * plane;
                    t.data()[src..src + plane].iter().map(|v| v.as_f64() as f32)
                })
                .collect()
        })
        .collect()
}

/// Sinusoidal timestep features, `[N, dim]`: first half `sin(t w_i)`, second
/// half `cos(t w_i)` with `w_i = 10000^(-i / (dim/2))`.
pub fn timestep_features<T: Scalar>(ts: &[f64], dim: usize) -> Tensor<T> {
    assert!(dim >= 2 && dim.is_multiple_of(2), "embedding dim must be even");
    let half = dim / 2;
    let mut data = Vec::with_capacity(ts.len() * dim);
    for &t in ts {
        let freqs = (0..half).map(|i| (-(10_000f64.ln()) * i as f64 / half as f64).exp());
        let args: Vec<f64> = freqs.map(|w| t * w).collect();
        data.extend(args.iter().map(|a| T::lit(a.sin())));
        data.extend(args.iter().map(|a| T::lit(a.cos())));
    }
    Tensor::new(vec![ts.len(), dim], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timestep_features_shape_and_zero() {
        let f: Tensor<f64> = timestep_features(&[0.0, 3.0], 8);
        assert_eq!(f.shape(), &[2, 8]);
        assert_eq!(&f.data()[..4], &[0.0; 4]);
        assert_eq!(&f.data()[4..8], &[1.0; 4]);
        assert!((f.data()[8] - 3f64.sin()).abs() < 1e-12);
    }
}
