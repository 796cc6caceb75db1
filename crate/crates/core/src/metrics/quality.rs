use crate::error::{shape_err, Error, Result};
use crate::media::ImageTensor;

pub fn mse_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(shape_err(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::Undefined("mse of empty input"));
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(sum / a.len() as f64)
}

/// Mean squared pixel difference.
pub fn mse(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let sum: u64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    Ok(sum as f64 / a.len() as f64)
}

/// `10 log10(max^2 / mse)`; `+inf` when the inputs are identical.
pub fn psnr_from_mse(mse: f64, max: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (max * max / mse).log10()
    }
}

pub fn psnr(a: &ImageTensor, b: &ImageTensor, max: f64) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?, max))
}

/// Pearson correlation over all elements. Undefined (error) when either
/// side is constant.
pub fn ncc_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(shape_err(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::Undefined("ncc of empty input"));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Undefined("ncc with a constant input"));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

pub fn ncc(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let fa: Vec<f64> = a.data().iter().map(|&v| v as f64).collect();
    let fb: Vec<f64> = b.data().iter().map(|&v| v as f64).collect();
    ncc_slices(&fa, &fb)
}

/// Fraction of positions where the bitstreams differ.
pub fn ber(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(shape_err(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::Undefined("ber of empty bitstreams"));
    }
    let wrong = a.iter().zip(b).filter(|(x, y)| x != y).count();
    Ok(wrong as f64 / a.len() as f64)
}

/// Removal rate `1 - |2 ber - 1|`: zero for an intact or fully inverted
/// stream, one for a coin-flip stream.
pub fn rr(ber: f64) -> f64 {
    1.0 - (2.0 * ber - 1.0).abs()
}
