//! Flat image container shared by every numeric component.
//!
//! Data is stored channel-interleaved: the flat index of (row y, column x,
//! channel c) on an H x W x C grid is `(y * W + x) * C + c`. Operators,
//! transforms and measurement layouts all assume this ordering.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    data: Vec<f64>,
    height: usize,
    width: usize,
    channels: usize,
}

impl Image {
    /// Wraps a flat buffer. The length must equal H*W*C and every value must
    /// be finite.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(Error::ShapeMismatch {
                expected: format!("{expected} values for {height}x{width}x{channels}"),
                got: format!("{}", data.len()),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "image contains a non-finite value".into(),
            ));
        }
        Ok(Self {
            data,
            height,
            width,
            channels,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::constant(height, width, channels, 0.0)
    }

    pub fn constant(height: usize, width: usize, channels: usize, value: f64) -> Self {
        assert!(
            height > 0 && width > 0 && channels > 0,
            "dimensions must be positive"
        );
        Self {
            data: vec![value; height * width * channels],
            height,
            width,
            channels,
        }
    }

    /// Draws every element independently from N(0, 1).
    pub fn standard_normal<R: Rng + ?Sized>(
        height: usize,
        width: usize,
        channels: usize,
        rng: &mut R,
    ) -> Self {
        let data = (0..height * width * channels)
            .map(|_| StandardNormal.sample(rng))
            .collect();
        Self {
            data,
            height,
            width,
            channels,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    /// Number of scalar elements, H*W*C.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn idx(&self, y: usize, x: usize, c: usize) -> usize {
        debug_assert!(y < self.height && x < self.width && c < self.channels);
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.idx(y, x, c)]
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

    pub fn same_shape(&self, other: &Image) -> bool {
        self.shape() == other.shape()
    }

    /// Elementwise map into a new image of the same shape.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            data: self.data.iter().map(|&v| f(v)).collect(),
            height: self.height,
            width: self.width,
            channels: self.channels,
        }
    }

    /// Elementwise combination with another image of identical shape.
    pub fn zip_with(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Result<Image> {
        if !self.same_shape(other) {
            return Err(shape_mismatch(self, other));
        }
        Ok(Image {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            height: self.height,
            width: self.width,
            channels: self.channels,
        })
    }

    /// Squared Euclidean distance to another image of identical shape.
    pub fn dist_sq(&self, other: &Image) -> Result<f64> {
        if !self.same_shape(other) {
            return Err(shape_mismatch(self, other));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }

    pub fn norm_sq(&self) -> f64 {
        crate::util::norm_sq(&self.data)
    }
}

pub(crate) fn shape_mismatch(a: &Image, b: &Image) -> Error {
    Error::ShapeMismatch {
        expected: format!("{:?}", a.shape()),
        got: format!("{:?}", b.shape()),
    }
}
