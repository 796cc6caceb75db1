use crate::error::{Error, Result};
use crate::media::AudioClip;

const HEADER_BITS: usize = 32;

/// Text secret framed by a 32-bit big-endian bit-count header.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TextPayload {
    bytes: Vec<u8>,
}

impl TextPayload {
    pub fn new(text: &str) -> Self {
        Self {
            bytes: text.as_bytes().to_vec(),
        }
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Self { bytes }
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn bit_len(&self) -> usize {
        self.bytes.len() * 8
    }

    pub fn length_header(&self) -> u32 {
        self.bit_len() as u32
    }

    /// Header followed by payload, most significant bit first.
    pub fn framed_bits(&self) -> Vec<bool> {
        let mut bits = Vec::with_capacity(HEADER_BITS + self.bit_len());
        bits.extend(bytes_to_bits(&self.length_header().to_be_bytes()));
        bits.extend(bytes_to_bits(&self.bytes));
        bits
    }
}

/// Bits recovered from a clip. `malformed` is set when the header claims
/// more bits than the clip can hold; `bits` is then whatever fit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RevealedText {
    pub declared_bits: u32,
    pub bits: Vec<bool>,
    pub malformed: bool,
}

impl RevealedText {
    /// Payload bits packed into bytes; a trailing partial byte is zero-padded.
    pub fn bytes(&self) -> Vec<u8> {
        bits_to_bytes(&self.bits)
    }

    /// The payload as UTF-8, if it is.
    pub fn text(&self) -> Option<String> {
        String::from_utf8(self.bytes()).ok()
    }
}

fn check_audio_bits(n_bits: u8) -> Result<()> {
    if !(1..=4).contains(&n_bits) {
        return Err(Error::InvalidArgument(format!(
            "audio n_bits must be in [1, 4], got {n_bits}"
        )));
    }
    Ok(())
}

pub(crate) fn bytes_to_bits(bytes: &[u8]) -> impl Iterator<Item = bool> + '_ {
    bytes
        .iter()
        .flat_map(|b| (0..8).rev().map(move |i| (b >> i) & 1 == 1))
}

pub(crate) fn bits_to_bytes(bits: &[bool]) -> Vec<u8> {
    bits.chunks(8)
        .map(|chunk| {
            chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | ((b as u8) << (7 - i)))
        })
        .collect()
}

/// Writes the framed payload into the `n_bits` lowest bits of consecutive
/// samples. Within a sample the first bit lands in the highest of those
/// positions. Samples past the payload are untouched.
pub fn audio_lsb_hide(clip: &AudioClip, text: &TextPayload, n_bits: u8) -> Result<AudioClip> {
    check_audio_bits(n_bits)?;
    let bits = text.framed_bits();
    let n = n_bits as usize;
    let available = n * clip.len();
    if bits.len() > available {
        return Err(Error::CapacityExceeded {
            needed: bits.len(),
            available,
        });
    }
    let mut samples = clip.samples().to_vec();
    for (sample, chunk) in samples.iter_mut().zip(bits.chunks(n)) {
        let mut word = *sample as u16;
        for (i, &bit) in chunk.iter().enumerate() {
            let pos = n - 1 - i;
            word = (word & !(1 << pos)) | ((bit as u16) << pos);
        }
        *sample = word as i16;
    }
    Ok(clip.with_samples(samples))
}

/// Reads `count` bits starting at bit offset zero of the embedding layout.
pub fn read_embedded_bits(clip: &AudioClip, n_bits: u8, count: usize) -> Result<Vec<bool>> {
    check_audio_bits(n_bits)?;
    let n = n_bits as usize;
    let available = n * clip.len();
    if count > available {
        return Err(Error::CapacityExceeded {
            needed: count,
            available,
        });
    }
    Ok(clip
        .samples()
        .iter()
        .flat_map(|&s| (0..n).rev().map(move |pos| (s as u16 >> pos) & 1 == 1))
        .take(count)
        .collect())
}

/// Inverse of [`audio_lsb_hide`]. Never fails on scrambled content: an
/// oversized header yields a truncated, flagged bitstream.
pub fn audio_lsb_reveal(clip: &AudioClip, n_bits: u8) -> Result<RevealedText> {
    check_audio_bits(n_bits)?;
    let available = n_bits as usize * clip.len();
    if available < HEADER_BITS {
        return Err(Error::InvalidArgument(format!(
            "clip holds {available} bits, fewer than the {HEADER_BITS}-bit header"
        )));
    }
    let all = read_embedded_bits(clip, n_bits, available)?;
    let declared_bits = all[..HEADER_BITS]
        .iter()
        .fold(0u32, |acc, &b| (acc << 1) | b as u32);
    let room = available - HEADER_BITS;
    let malformed = declared_bits as usize > room;
    let take = (declared_bits as usize).min(room);
    Ok(RevealedText {
        declared_bits,
        bits: all[HEADER_BITS..HEADER_BITS + take].to_vec(),
        malformed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::SeededRng;
    use crate::metrics::ber;
    use proptest::prelude::*;

    fn ramp(n: usize) -> AudioClip {
        AudioClip::new((0..n).map(|i| (i as i16).wrapping_mul(97)).collect(), 8000).unwrap()
    }

    #[test]
    fn hello_round_trip() {
        let clip = ramp(200);
        let ct = audio_lsb_hide(&clip, &TextPayload::new("Hello"), 1).unwrap();
        let out = audio_lsb_reveal(&ct, 1).unwrap();
        assert!(!out.malformed);
        assert_eq!(out.declared_bits, 40);
        assert_eq!(out.text().as_deref(), Some("Hello"));
        let sent: Vec<bool> = bytes_to_bits(b"Hello").collect();
        assert_eq!(ber(&sent, &out.bits).unwrap(), 0.0);
    }

    #[test]
    fn empty_text_writes_zero_header_only() {
        let clip = AudioClip::new(vec![-1; 40], 8000).unwrap();
        let ct = audio_lsb_hide(&clip, &TextPayload::new(""), 1).unwrap();
        assert!(ct.samples()[..32].iter().all(|&s| s == -2));
        assert!(ct.samples()[32..].iter().all(|&s| s == -1));
        let out = audio_lsb_reveal(&ct, 1).unwrap();
        assert_eq!(out.declared_bits, 0);
        assert!(out.bits.is_empty());
    }

    #[test]
    fn capacity_enforced() {
        let clip = ramp(32 + 7);
        assert!(matches!(
            audio_lsb_hide(&clip, &TextPayload::new("a"), 1),
            Err(Error::CapacityExceeded { needed: 40, available: 39 })
        ));
        assert!(audio_lsb_hide(&clip, &TextPayload::new("a"), 2).is_ok());
        assert!(audio_lsb_reveal(&ramp(31), 1).is_err());
    }

    #[test]
    fn noise_clip_reveals_malformed() {
        let mut rng = SeededRng::new(3);
        let samples: Vec<i16> = (0..500).map(|_| rng.next_u32() as i16).collect();
        // Force a huge header.
        let mut samples = samples;
        samples[0] |= 1;
        let clip = AudioClip::new(samples, 8000).unwrap();
        let out = audio_lsb_reveal(&clip, 1).unwrap();
        assert!(out.malformed);
        assert_eq!(out.bits.len(), 500 - 32);
    }

    #[test]
    fn one_bit_changes_every_value_by_at_most_one() {
        let all: Vec<i16> = (i16::MIN..=i16::MAX).collect();
        let clip = AudioClip::new(all, 8000).unwrap();
        // Alternating payload reaches both bit values at every position.
        let text = TextPayload::from_bytes(vec![0b1010_1010; clip.len() / 8 - 4]);
        let ct = audio_lsb_hide(&clip, &text, 1).unwrap();
        for (a, b) in clip.samples().iter().zip(ct.samples()) {
            assert!((*a as i32 - *b as i32).abs() <= 1);
        }
    }

    proptest! {
        #[test]
        fn round_trip_any_bytes_any_depth(
            bytes in prop::collection::vec(any::<u8>(), 0..40),
            n in 1u8..=4,
            seed in any::<u64>(),
        ) {
            let mut rng = SeededRng::new(seed);
            let len = 32 + bytes.len() * 8 + 50;
            let clip = AudioClip::new((0..len).map(|_| rng.next_u32() as i16).collect(), 8000).unwrap();
            let text = TextPayload::from_bytes(bytes.clone());
            let ct = audio_lsb_hide(&clip, &text, n).unwrap();
            let out = audio_lsb_reveal(&ct, n).unwrap();
            prop_assert_eq!(out.bytes(), bytes);
            prop_assert!(!out.malformed);
            let mask = !((1u16 << n) - 1);
            for (a, b) in clip.samples().iter().zip(ct.samples()) {
                prop_assert_eq!(*a as u16 & mask, *b as u16 & mask);
            }
        }
    }
}
