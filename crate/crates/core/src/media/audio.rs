use crate::error::{Error, Result};

/// Mono 16-bit PCM audio.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AudioClip {
    samples: Vec<i16>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<i16>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument("audio clip has no samples".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[i16] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub(crate) fn with_samples(&self, samples: Vec<i16>) -> Self {
        debug_assert_eq!(samples.len(), self.samples.len());
        Self {
            samples,
            sample_rate: self.sample_rate,
        }
    }

    /// Samples scaled to `[-1, 1)` by `s / 32768`.
    pub fn to_normalized(&self) -> Vec<f32> {
        self.samples.iter().map(|&s| s as f32 / 32768.0).collect()
    }

    /// Inverse of [`to_normalized`](Self::to_normalized): clamp, scale,
    /// round half away from zero.
    pub fn from_normalized(values: &[f32], sample_rate: u32) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        let samples = values
            .iter()
            .map(|v| (v * 32768.0).round().clamp(i16::MIN as f32, i16::MAX as f32) as i16)
            .collect();
        Self::new(samples, sample_rate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invariants() {
        assert!(AudioClip::new(vec![], 8000).is_err());
        assert!(AudioClip::new(vec![1], 0).is_err());
        assert!(AudioClip::new(vec![1], 8000).is_ok());
    }

    #[test]
    fn normalized_round_trip_exact() {
        let all: Vec<i16> = (i16::MIN..=i16::MAX).step_by(7).collect();
        let clip = AudioClip::new(all, 16_000).unwrap();
        let back = AudioClip::from_normalized(&clip.to_normalized(), 16_000).unwrap();
        assert_eq!(back, clip);
    }
}
