//! Dense feature tensors and the numeric primitives shared by every kernel.
//!
//! A [`FeatureMap`] stores `f64` values in channel-major, row-major order:
//! element `(c, y, x)` lives at flat index `c·H·W + y·W + x`. Reading the
//! channel vector of one pixel is therefore a strided gather with stride `H·W`.

use std::ops::Deref;

use crate::error::{CsaError, Result};

/// Norm floor used by [`cosine`] unless a caller supplies its own.
pub const DEFAULT_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(CsaError::Shape(format!(
                "extents must be positive, got {channels}x{height}x{width}"
            )));
        }
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(CsaError::Shape(format!(
                "data length {} does not match {channels}x{height}x{width} = {expected}",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Result<Self> {
        Self::new(
            channels,
            height,
            width,
            vec![0.0; channels * height * width],
        )
    }

    /// Builds a map by evaluating `f(c, y, x)` at every element.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(channels, height, width, data)
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

    pub fn plane_len(&self) -> usize {
        self.height * self.width
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

    #[inline]
    pub fn index(&self, c: usize, y: usize, x: usize) -> usize {
        c * self.height * self.width + y * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(c, y, x)]
    }

    pub fn same_shape(&self, other: &FeatureMap) -> bool {
        self.shape() == other.shape()
    }

    fn check_coord(&self, y: usize, x: usize) -> Result<()> {
        if y >= self.height || x >= self.width {
            return Err(CsaError::Range(format!(
                "pixel ({y}, {x}) outside {}x{} grid",
                self.height, self.width
            )));
        }
        Ok(())
    }

    /// The channel vector at `(y, x)`.
    pub fn pixel_vector(&self, y: usize, x: usize) -> Result<ChannelVector> {
        self.check_coord(y, x)?;
        let plane = self.plane_len();
        let base = y * self.width + x;
        Ok(ChannelVector(
            (0..self.channels)
                .map(|c| self.data[c * plane + base])
                .collect(),
        ))
    }

    pub fn set_pixel_vector(&mut self, y: usize, x: usize, values: &[f64]) -> Result<()> {
        self.check_coord(y, x)?;
        if values.len() != self.channels {
            return Err(CsaError::Shape(format!(
                "vector of length {} written into {}-channel map",
                values.len(),
                self.channels
            )));
        }
        let plane = self.plane_len();
        let base = y * self.width + x;
        for (c, &v) in values.iter().enumerate() {
            self.data[c * plane + base] = v;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// The values of one `1×1` patch (or a flattened `k×k` patch) across channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector(Vec<f64>);

impl ChannelVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(CsaError::Shape("channel vector must be non-empty".into()));
        }
        Ok(Self(values))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ChannelVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for ChannelVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine correlation given already-computed norms.
///
/// Bitwise equal to [`cosine`] when `norm_a`/`norm_b` came from [`norm`].
#[inline]
pub fn cosine_with_norms(a: &[f64], b: &[f64], norm_a: f64, norm_b: f64, eps: f64) -> f64 {
    dot(a, b) / (norm_a.max(eps) * norm_b.max(eps))
}

/// `⟨a,b⟩ / (max(‖a‖, eps) · max(‖b‖, eps))`.
pub fn cosine(a: &[f64], b: &[f64], eps: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(CsaError::Shape(format!(
            "cosine of vectors with lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if !(eps > 0.0) {
        return Err(CsaError::Argument(format!(
            "eps must be positive, got {eps}"
        )));
    }
    Ok(cosine_with_norms(a, b, norm(a), norm(b), eps))
}
