//! Orthonormal two-dimensional DCT-II and its inverse (DCT-III), applied per
//! channel plane.

/// `n x n` orthonormal DCT-II matrix, row `k` holding basis vector `k`.
fn basis(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for k in 0..n {
        let a = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        for i in 0..n {
            m[k * n + i] = a * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos();
        }
    }
    m
}

/// `out = L * x * R^T` for row-major `h x w` planes, where `L` is `h x h`
/// and `R` is `w x w`, optionally transposing both.
fn sandwich(x: &[f64], h: usize, w: usize, l: &[f64], r: &[f64], transpose: bool) -> Vec<f64> {
    let at = |m: &[f64], n: usize, i: usize, j: usize| if transpose { m[j * n + i] } else { m[i * n + j] };
    let mut tmp = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            tmp[i * w + j] = (0..w).map(|k| x[i * w + k] * at(r, w, j, k)).sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            out[i * w + j] = (0..h).map(|k| at(l, h, i, k) * tmp[k * w + j]).sum();
        }
    }
    out
}

/// Forward transform of a `channels x h x w` buffer.
pub fn dct2(data: &[f64], channels: usize, h: usize, w: usize) -> Vec<f64> {
    let (bh, bw) = (basis(h), basis(w));
    data.chunks(h * w)
        .take(channels)
        .flat_map(|p| sandwich(p, h, w, &bh, &bw, false))
        .collect()
}

/// Inverse of [`dct2`].
pub fn idct2(coefs: &[f64], channels: usize, h: usize, w: usize) -> Vec<f64> {
    let (bh, bw) = (basis(h), basis(w));
    coefs
        .chunks(h * w)
        .take(channels)
        .flat_map(|p| sandwich(p, h, w, &bh, &bw, true))
        .collect()
}
