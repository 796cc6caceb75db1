use crate::error::{shape_err, Error, Result};

/// Channel-major 8-bit image, `data[(c * height + y) * width + x]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ImageTensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl ImageTensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if height == 0 || width == 0 {
            return Err(Error::InvalidArgument("image must be non-empty".into()));
        }
        if data.len() != channels * height * width {
            return Err(shape_err(channels * height * width, data.len()));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Result<Self> {
        Self::new(channels, height, width, vec![0; channels * height * width])
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(channels, height, width)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> u8 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Builds an image of the same shape from a per-pixel map.
    pub fn map(&self, f: impl FnMut(&u8) -> u8) -> Self {
        self.with_data(self.data.iter().map(f).collect())
    }

    pub(crate) fn with_data(&self, data: Vec<u8>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        Self {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data,
        }
    }

    pub fn ensure_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(shape_err(self.shape(), other.shape()));
        }
        Ok(())
    }

    /// Maps `[0, 255]` onto `[-1, 1]` via `x / 127.5 - 1`.
    pub fn to_model_range(&self) -> FloatImage {
        FloatImage {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&p| p as f64 / 127.5 - 1.0).collect(),
        }
    }
}

/// Floating working view of an image, nominally in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatImage {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FloatImage {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidArgument("image must be non-empty".into()));
        }
        if data.len() != channels * height * width {
            return Err(shape_err(channels * height * width, data.len()));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Single-precision copy for feeding a network.
    pub fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32).collect()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ensure_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(shape_err(self.shape(), other.shape()));
        }
        Ok(())
    }

    /// Same shape, new values. Caller guarantees the length.
    pub(crate) fn with_data(&self, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        Self {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data,
        }
    }

    /// Elementwise `a * self + b * other`.
    pub fn affine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        self.ensure_same_shape(other)?;
        Ok(self.with_data(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        ))
    }

    pub fn scale(&self, a: f64) -> Self {
        self.with_data(self.data.iter().map(|x| a * x).collect())
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Self {
        self.with_data(self.data.iter().map(|x| x.clamp(lo, hi)).collect())
    }

    /// Clamps to `[-1, 1]`, maps to `(x + 1) * 127.5` and rounds half away
    /// from zero.
    pub fn from_model_range(&self) -> Result<ImageTensor> {
        if let Some(index) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::InvalidArgument(format!(
                "channels must be 1 or 3, got {}",
                self.channels
            )));
        }
        let data = self
            .data
            .iter()
            .map(|v| ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8)
            .collect();
        ImageTensor::new(self.channels, self.height, self.width, data)
    }
}
