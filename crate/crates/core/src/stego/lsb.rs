use crate::error::{Error, Result};
use crate::media::ImageTensor;

pub const DEFAULT_IMAGE_BITS: u8 = 4;

/// Bit depths for image and audio LSB embedding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LsbConfig {
    pub n_bits: u8,
    pub n_bits_audio: u8,
}

impl Default for LsbConfig {
    fn default() -> Self {
        Self {
            n_bits: DEFAULT_IMAGE_BITS,
            n_bits_audio: 1,
        }
    }
}

impl LsbConfig {
    pub fn validate(&self) -> Result<()> {
        check_image_bits(self.n_bits)?;
        if !(1..=4).contains(&self.n_bits_audio) {
            return Err(Error::InvalidArgument(format!(
                "audio n_bits must be in [1, 4], got {}",
                self.n_bits_audio
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_image_bits(n_bits: u8) -> Result<()> {
    if !(1..=8).contains(&n_bits) {
        return Err(Error::InvalidArgument(format!(
            "image n_bits must be in [1, 8], got {n_bits}"
        )));
    }
    Ok(())
}

// `u8 >> 8` overflows, so widen first.
fn low_mask(n: u8) -> u8 {
    ((1u16 << n) - 1) as u8
}

/// Replaces the `n_bits` low bits of each cover pixel with the `n_bits` high
/// bits of the matching secret pixel.
pub fn lsb_hide(cover: &ImageTensor, secret: &ImageTensor, n_bits: u8) -> Result<ImageTensor> {
    check_image_bits(n_bits)?;
    cover.ensure_same_shape(secret)?;
    let keep = !low_mask(n_bits);
    let shift = 8 - n_bits as u32;
    let data = cover
        .data()
        .iter()
        .zip(secret.data())
        .map(|(&c, &s)| (c & keep) | ((s as u16 >> shift) as u8))
        .collect();
    Ok(cover.with_data(data))
}

/// Moves the `n_bits` low bits of each pixel to the top; the rest are zero.
pub fn lsb_reveal(container: &ImageTensor, n_bits: u8) -> Result<ImageTensor> {
    check_image_bits(n_bits)?;
    let mask = low_mask(n_bits);
    let shift = 8 - n_bits as u32;
    Ok(container.map(|&p| ((((p & mask) as u16) << shift) & 0xff) as u8))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn px(v: u8) -> ImageTensor {
        ImageTensor::new(1, 1, 1, vec![v]).unwrap()
    }

    #[test]
    fn worked_nibble_example() {
        let ct = lsb_hide(&px(0b1011_0010), &px(0b1101_0111), 4).unwrap();
        assert_eq!(ct.data()[0], 0b1011_1101);
        assert_eq!(ct.data()[0], 189);
        assert_eq!(lsb_reveal(&px(189), 4).unwrap().data()[0], 0b1101_0000);
        assert_eq!(lsb_reveal(&px(189), 4).unwrap().data()[0], 208);
    }

    #[test]
    fn full_depth_is_replacement_and_identity() {
        let c = ImageTensor::new(3, 2, 2, (0..12).map(|v| v * 20).collect()).unwrap();
        let s = ImageTensor::new(3, 2, 2, (0..12).map(|v| 255 - v * 7).collect()).unwrap();
        assert_eq!(lsb_hide(&c, &s, 8).unwrap(), s);
        assert_eq!(lsb_reveal(&s, 8).unwrap(), s);
    }

    #[test]
    fn zero_secret_one_bit_clears_lsb() {
        let c = ImageTensor::new(1, 1, 4, vec![0, 1, 254, 255]).unwrap();
        let s = ImageTensor::zeros(1, 1, 4).unwrap();
        assert_eq!(lsb_hide(&c, &s, 1).unwrap().data(), &[0, 0, 254, 254]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = ImageTensor::zeros(1, 2, 2).unwrap();
        let b = ImageTensor::zeros(3, 2, 2).unwrap();
        assert!(matches!(lsb_hide(&a, &b, 4), Err(Error::ShapeMismatch { .. })));
        assert!(lsb_hide(&a, &a, 0).is_err());
        assert!(lsb_hide(&a, &a, 9).is_err());
        assert!(lsb_reveal(&a, 0).is_err());
        assert!(LsbConfig { n_bits: 4, n_bits_audio: 5 }.validate().is_err());
        assert!(LsbConfig::default().validate().is_ok());
    }

    proptest! {
        #[test]
        fn reveal_inverts_hide_and_bounds_distortion(
            pairs in prop::collection::vec((any::<u8>(), any::<u8>()), 1..64),
            n in 1u8..=8,
        ) {
            let (c, s): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
            let len = c.len();
            let cover = ImageTensor::new(1, 1, len, c).unwrap();
            let secret = ImageTensor::new(1, 1, len, s).unwrap();
            let ct = lsb_hide(&cover, &secret, n).unwrap();
            let revealed = lsb_reveal(&ct, n).unwrap();
            let top = !low_mask(8 - n);
            for i in 0..len {
                prop_assert_eq!(revealed.data()[i], secret.data()[i] & top);
                let d = (ct.data()[i] as i32 - cover.data()[i] as i32).unsigned_abs();
                prop_assert!(d < (1u32 << n));
            }
        }
    }
}
