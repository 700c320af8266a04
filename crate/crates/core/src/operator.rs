//! Linear measurement operators with closed-form adjoints and pseudo-inverses.
//!
//! Every operator maps an H x W x C image (channel-interleaved, see `Image`)
//! to a flat measurement vector of length m <= n = H*W*C. None of them
//! materializes a matrix; `apply`, `apply_adjoint` and `apply_pinv` are exact
//! closed forms:
//!
//! - `Mask`: keeps a subset of pixels (all channels together). Rows are
//!   orthonormal, so the pseudo-inverse equals the adjoint.
//! - `AvgPool`: s x s block averaging per channel. A Aᵀ = (1/s²) I, so
//!   A† = s² Aᵀ (replicate each measurement into its block).
//! - `CirculantBlur`: periodic convolution, diagonal in the 2-D DFT basis.
//!   The pseudo-inverse divides by the frequency response, zeroing
//!   frequencies whose magnitude falls at or below eps_rel times the peak.
//! - `BlockCompressed`: one seeded row-orthonormal matrix applied to every
//!   8x8 (configurable) block per channel. A Aᵀ = I, so A† = Aᵀ.
//! - `ChannelMean`: per-pixel channel average. A† = C Aᵀ.
//! - `Composed`: a base operator observing a transformed image,
//!   A_f = A ∘ T_f⁻¹; its adjoint and pseudo-inverse pick up T_f on the left
//!   because permutations are orthogonal.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::transform::Transform;

#[derive(Clone)]
pub enum LinearOperator {
    Mask {
        height: usize,
        width: usize,
        channels: usize,
        /// Pixel-level mask, length H*W; channels of a kept pixel are all
        /// observed.
        keep: Vec<bool>,
        /// Ascending indices of kept pixels (derived from `keep`).
        kept: Vec<usize>,
    },
    AvgPool {
        height: usize,
        width: usize,
        channels: usize,
        factor: usize,
    },
    CirculantBlur(CirculantBlur),
    BlockCompressed {
        height: usize,
        width: usize,
        channels: usize,
        block: usize,
        /// Rows kept per block.
        rows: usize,
        /// Row-orthonormal sensing matrix, rows x block², row-major.
        matrix: Arc<Vec<f64>>,
    },
    ChannelMean {
        height: usize,
        width: usize,
        channels: usize,
    },
    Composed {
        base: Box<LinearOperator>,
        transform: Transform,
    },
}

impl fmt::Debug for LinearOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LinearOperator::Mask {
                height,
                width,
                channels,
                kept,
                ..
            } => write!(
                f,
                "Mask({height}x{width}x{channels}, {} kept pixels)",
                kept.len()
            ),
            LinearOperator::AvgPool {
                height,
                width,
                channels,
                factor,
            } => {
                write!(f, "AvgPool({height}x{width}x{channels}, factor {factor})")
            }
            LinearOperator::CirculantBlur(b) => write!(
                f,
                "CirculantBlur({}x{}x{}, eps_rel {})",
                b.height, b.width, b.channels, b.eps_rel
            ),
            LinearOperator::BlockCompressed {
                height,
                width,
                channels,
                block,
                rows,
                ..
            } => {
                write!(
                    f,
                    "BlockCompressed({height}x{width}x{channels}, {rows}/{} rows per {block}x{block} block)",
                    block * block
                )
            }
            LinearOperator::ChannelMean {
                height,
                width,
                channels,
            } => {
                write!(f, "ChannelMean({height}x{width}x{channels})")
            }
            LinearOperator::Composed { base, transform } => {
                write!(f, "Composed({base:?} after inverse {transform})")
            }
        }
    }
}

impl LinearOperator {
    // ------------------------------------------------------------------
    // Constructors
    // ------------------------------------------------------------------

    /// Pixel mask from an explicit keep vector (length H*W, at least one
    /// kept pixel).
    pub fn mask(height: usize, width: usize, channels: usize, keep: Vec<bool>) -> Result<Self> {
        check_dims(height, width, channels)?;
        if keep.len() != height * width {
            return Err(Error::Operator(format!(
                "mask length {} does not match {height}x{width} pixels",
                keep.len()
            )));
        }
        let kept: Vec<usize> = keep
            .iter()
            .enumerate()
            .filter_map(|(i, &k)| k.then_some(i))
            .collect();
        if kept.is_empty() {
            return Err(Error::Operator("mask keeps no pixels".into()));
        }
        Ok(LinearOperator::Mask {
            height,
            width,
            channels,
            keep,
            kept,
        })
    }

    /// Seeded random mask keeping each pixel with probability `keep_prob`,
    /// with an optional rectangular hole (y, x, h, w) forced to unobserved.
    pub fn random_mask(
        height: usize,
        width: usize,
        channels: usize,
        keep_prob: f64,
        hole: Option<(usize, usize, usize, usize)>,
        seed: u64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&keep_prob) {
            return Err(Error::Operator(format!(
                "keep probability {keep_prob} outside [0, 1]"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut keep: Vec<bool> = (0..height * width)
            .map(|_| rand::Rng::random::<f64>(&mut rng) < keep_prob)
            .collect();
        if let Some((hy, hx, hh, hw)) = hole {
            if hy + hh > height || hx + hw > width {
                return Err(Error::Operator(format!(
                    "hole ({hy},{hx})+{hh}x{hw} exceeds {height}x{width} grid"
                )));
            }
            for y in hy..hy + hh {
                for x in hx..hx + hw {
                    keep[y * width + x] = false;
                }
            }
        }
        if !keep.iter().any(|&k| k) {
            // Degenerate draw; observe one pixel so m >= 1 holds.
            keep[0] = true;
        }
        Self::mask(height, width, channels, keep)
    }

    /// Block-averaging downsampler; H and W must be divisible by `factor`.
    pub fn avg_pool(height: usize, width: usize, channels: usize, factor: usize) -> Result<Self> {
        check_dims(height, width, channels)?;
        if factor == 0 || !height.is_multiple_of(factor) || !width.is_multiple_of(factor) {
            return Err(Error::Operator(format!(
                "pool factor {factor} must divide {height}x{width}"
            )));
        }
        Ok(LinearOperator::AvgPool {
            height,
            width,
            channels,
            factor,
        })
    }

    /// Periodic blur from explicit taps (dy, dx, weight); offsets wrap.
    pub fn circulant_blur(
        height: usize,
        width: usize,
        channels: usize,
        taps: &[(isize, isize, f64)],
        eps_rel: f64,
    ) -> Result<Self> {
        check_dims(height, width, channels)?;
        if taps.is_empty() {
            return Err(Error::Operator("blur kernel has no taps".into()));
        }
        if !(0.0..1.0).contains(&eps_rel) {
            return Err(Error::Operator(format!(
                "pseudo-inverse tolerance {eps_rel} outside [0, 1)"
            )));
        }
        Ok(LinearOperator::CirculantBlur(CirculantBlur::new(
            height, width, channels, taps, eps_rel,
        )?))
    }

    /// Normalized Gaussian blur on an odd `support` x `support` footprint.
    pub fn gaussian_blur(
        height: usize,
        width: usize,
        channels: usize,
        sigma: f64,
        support: usize,
        eps_rel: f64,
    ) -> Result<Self> {
        if sigma <= 0.0 || !sigma.is_finite() {
            return Err(Error::Operator(format!(
                "blur sigma {sigma} must be positive"
            )));
        }
        if support == 0 || support.is_multiple_of(2) {
            return Err(Error::Operator(format!(
                "blur support {support} must be odd"
            )));
        }
        let r = (support / 2) as isize;
        let mut taps = Vec::new();
        let mut total = 0.0;
        for dy in -r..=r {
            for dx in -r..=r {
                let w = (-((dy * dy + dx * dx) as f64) / (2.0 * sigma * sigma)).exp();
                taps.push((dy, dx, w));
                total += w;
            }
        }
        for t in &mut taps {
            t.2 /= total;
        }
        Self::circulant_blur(height, width, channels, &taps, eps_rel)
    }

    /// Block compressed sensing: a seeded Gaussian matrix orthonormalized by
    /// modified Gram-Schmidt, keeping ceil(ratio * block²) rows, applied to
    /// every block of every channel.
    pub fn block_compressed(
        height: usize,
        width: usize,
        channels: usize,
        block: usize,
        ratio: f64,
        seed: u64,
    ) -> Result<Self> {
        check_dims(height, width, channels)?;
        if block == 0 || !height.is_multiple_of(block) || !width.is_multiple_of(block) {
            return Err(Error::Operator(format!(
                "block size {block} must divide {height}x{width}"
            )));
        }
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(Error::Operator(format!(
                "sampling ratio {ratio} outside (0, 1]"
            )));
        }
        let dim = block * block;
        let rows = ((ratio * dim as f64).ceil() as usize).clamp(1, dim);
        let matrix = orthonormal_rows(rows, dim, seed)?;
        Ok(LinearOperator::BlockCompressed {
            height,
            width,
            channels,
            block,
            rows,
            matrix: Arc::new(matrix),
        })
    }

    /// Channel averaging (grayscale projection for C = 3).
    pub fn channel_mean(height: usize, width: usize, channels: usize) -> Result<Self> {
        check_dims(height, width, channels)?;
        Ok(LinearOperator::ChannelMean {
            height,
            width,
            channels,
        })
    }

    /// A ∘ T⁻¹: the base operator observing the un-transformed view of its
    /// input. Adjoint and pseudo-inverse gain T on the left.
    pub fn composed(base: LinearOperator, transform: Transform) -> Result<Self> {
        let (h, w, _) = base.input_shape();
        if matches!(transform, Transform::Rotate90 { .. }) && h != w {
            return Err(Error::Operator(
                "rotation composition requires a square grid".into(),
            ));
        }
        Ok(LinearOperator::Composed {
            base: Box::new(base),
            transform,
        })
    }

    // ------------------------------------------------------------------
    // Shape queries
    // ------------------------------------------------------------------

    pub fn input_shape(&self) -> (usize, usize, usize) {
        match self {
            LinearOperator::Mask {
                height,
                width,
                channels,
                ..
            }
            | LinearOperator::AvgPool {
                height,
                width,
                channels,
                ..
            }
            | LinearOperator::BlockCompressed {
                height,
                width,
                channels,
                ..
            }
            | LinearOperator::ChannelMean {
                height,
                width,
                channels,
            } => (*height, *width, *channels),
            LinearOperator::CirculantBlur(b) => (b.height, b.width, b.channels),
            LinearOperator::Composed { base, .. } => base.input_shape(),
        }
    }

    /// Input dimension n = H*W*C.
    pub fn n(&self) -> usize {
        let (h, w, c) = self.input_shape();
        h * w * c
    }

    /// Measurement dimension m <= n.
    pub fn m(&self) -> usize {
        match self {
            LinearOperator::Mask { channels, kept, .. } => kept.len() * channels,
            LinearOperator::AvgPool {
                height,
                width,
                channels,
                factor,
            } => (height / factor) * (width / factor) * channels,
            LinearOperator::CirculantBlur(b) => b.height * b.width * b.channels,
            LinearOperator::BlockCompressed {
                height,
                width,
                channels,
                block,
                rows,
                ..
            } => (height / block) * (width / block) * channels * rows,
            LinearOperator::ChannelMean { height, width, .. } => height * width,
            LinearOperator::Composed { base, .. } => base.m(),
        }
    }

    fn check_input(&self, x: &Image) -> Result<()> {
        if x.shape() != self.input_shape() {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", self.input_shape()),
                got: format!("{:?}", x.shape()),
            });
        }
        Ok(())
    }

    fn check_measurement(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.m() {
            return Err(Error::ShapeMismatch {
                expected: format!("measurement of length {}", self.m()),
                got: format!("{}", y.len()),
            });
        }
        Ok(())
    }

    // ------------------------------------------------------------------
    // Forward / adjoint / pseudo-inverse
    // ------------------------------------------------------------------

    pub fn apply(&self, x: &Image) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(match self {
            LinearOperator::Mask { channels, kept, .. } => {
                let c = *channels;
                let mut y = Vec::with_capacity(kept.len() * c);
                for &p in kept {
                    y.extend_from_slice(&x.data()[p * c..(p + 1) * c]);
                }
                y
            }
            LinearOperator::AvgPool {
                height,
                width,
                channels,
                factor,
            } => {
                let (s, c, w) = (*factor, *channels, *width);
                let norm = 1.0 / (s * s) as f64;
                let (oh, ow) = (height / s, width / s);
                let mut y = vec![0.0; oh * ow * c];
                for by in 0..oh {
                    for bx in 0..ow {
                        for ch in 0..c {
                            let mut acc = 0.0;
                            for iy in 0..s {
                                for ix in 0..s {
                                    acc += x.data()[((by * s + iy) * w + bx * s + ix) * c + ch];
                                }
                            }
                            y[(by * ow + bx) * c + ch] = acc * norm;
                        }
                    }
                }
                y
            }
            LinearOperator::CirculantBlur(b) => b.convolve(x.data(), Spectrum::Forward),
            LinearOperator::BlockCompressed {
                height,
                width,
                channels,
                block,
                rows,
                matrix,
            } => {
                let (b, c, w) = (*block, *channels, *width);
                let dim = b * b;
                let (bh, bw) = (height / b, width / b);
                let mut y = Vec::with_capacity(bh * bw * c * rows);
                let mut v = vec![0.0; dim];
                for by in 0..bh {
                    for bx in 0..bw {
                        for ch in 0..c {
                            gather_block(x.data(), &mut v, by, bx, b, w, c, ch);
                            for r in 0..*rows {
                                let row = &matrix[r * dim..(r + 1) * dim];
                                y.push(row.iter().zip(&v).map(|(a, b)| a * b).sum());
                            }
                        }
                    }
                }
                y
            }
            LinearOperator::ChannelMean {
                height,
                width,
                channels,
            } => {
                let c = *channels;
                let norm = 1.0 / c as f64;
                (0..height * width)
                    .map(|p| x.data()[p * c..(p + 1) * c].iter().sum::<f64>() * norm)
                    .collect()
            }
            LinearOperator::Composed { base, transform } => {
                base.apply(&transform.apply_inverse(x)?)?
            }
        })
    }

    pub fn apply_adjoint(&self, y: &[f64]) -> Result<Image> {
        self.check_measurement(y)?;
        let (h, w, c) = self.input_shape();
        match self {
            LinearOperator::Mask { kept, channels, .. } => {
                let mut data = vec![0.0; h * w * c];
                for (mi, &p) in kept.iter().enumerate() {
                    data[p * channels..(p + 1) * channels]
                        .copy_from_slice(&y[mi * channels..(mi + 1) * channels]);
                }
                Image::new(h, w, c, data)
            }
            LinearOperator::AvgPool { factor, .. } => {
                self.spread_pooled(y, 1.0 / (*factor * *factor) as f64)
            }
            LinearOperator::CirculantBlur(b) => {
                Image::new(h, w, c, b.convolve(y, Spectrum::Adjoint))
            }
            LinearOperator::BlockCompressed {
                block,
                rows,
                matrix,
                ..
            } => {
                let b = *block;
                let dim = b * b;
                let (bh, bw) = (h / b, w / b);
                let mut data = vec![0.0; h * w * c];
                let mut v = vec![0.0; dim];
                let mut yi = 0;
                for by in 0..bh {
                    for bx in 0..bw {
                        for ch in 0..c {
                            v.iter_mut().for_each(|e| *e = 0.0);
                            for r in 0..*rows {
                                let row = &matrix[r * dim..(r + 1) * dim];
                                let yv = y[yi];
                                yi += 1;
                                for (e, a) in v.iter_mut().zip(row) {
                                    *e += a * yv;
                                }
                            }
                            scatter_block(&mut data, &v, by, bx, b, w, c, ch);
                        }
                    }
                }
                Image::new(h, w, c, data)
            }
            LinearOperator::ChannelMean { channels, .. } => {
                let norm = 1.0 / *channels as f64;
                let mut data = vec![0.0; h * w * c];
                for (p, &yv) in y.iter().enumerate() {
                    for ch in 0..*channels {
                        data[p * channels + ch] = yv * norm;
                    }
                }
                Image::new(h, w, c, data)
            }
            LinearOperator::Composed { base, transform } => {
                transform.apply(&base.apply_adjoint(y)?)
            }
        }
    }

    pub fn apply_pinv(&self, y: &[f64]) -> Result<Image> {
        self.check_measurement(y)?;
        let (h, w, c) = self.input_shape();
        match self {
            // Orthonormal rows: pseudo-inverse equals adjoint.
            LinearOperator::Mask { .. } | LinearOperator::BlockCompressed { .. } => {
                self.apply_adjoint(y)
            }
            LinearOperator::AvgPool { .. } => self.spread_pooled(y, 1.0),
            LinearOperator::CirculantBlur(b) => {
                Image::new(h, w, c, b.convolve(y, Spectrum::PseudoInverse))
            }
            LinearOperator::ChannelMean { channels, .. } => {
                let mut data = vec![0.0; h * w * c];
                for (p, &yv) in y.iter().enumerate() {
                    for ch in 0..*channels {
                        data[p * channels + ch] = yv;
                    }
                }
                Image::new(h, w, c, data)
            }
            LinearOperator::Composed { base, transform } => transform.apply(&base.apply_pinv(y)?),
        }
    }

    /// Shared by the pool adjoint (gain 1/s²) and pseudo-inverse (gain 1).
    fn spread_pooled(&self, y: &[f64], gain: f64) -> Result<Image> {
        let LinearOperator::AvgPool {
            height,
            width,
            channels,
            factor,
        } = self
        else {
            unreachable!("spread_pooled is only called on AvgPool");
        };
        let (h, w, c, s) = (*height, *width, *channels, *factor);
        let ow = w / s;
        let mut data = vec![0.0; h * w * c];
        for y_pix in 0..h {
            for x_pix in 0..w {
                let block = (y_pix / s) * ow + x_pix / s;
                for ch in 0..c {
                    data[(y_pix * w + x_pix) * c + ch] = y[block * c + ch] * gain;
                }
            }
        }
        Image::new(h, w, c, data)
    }
}

fn check_dims(height: usize, width: usize, channels: usize) -> Result<()> {
    if height == 0 || width == 0 || channels == 0 {
        return Err(Error::Operator(format!(
            "image dimensions must be positive, got {height}x{width}x{channels}"
        )));
    }
    Ok(())
}

#[inline]
#[allow(clippy::too_many_arguments)]
fn gather_block(
    data: &[f64],
    v: &mut [f64],
    by: usize,
    bx: usize,
    b: usize,
    w: usize,
    c: usize,
    ch: usize,
) {
    for iy in 0..b {
        for ix in 0..b {
            v[iy * b + ix] = data[((by * b + iy) * w + bx * b + ix) * c + ch];
        }
    }
}

#[inline]
#[allow(clippy::too_many_arguments)]
fn scatter_block(
    data: &mut [f64],
    v: &[f64],
    by: usize,
    bx: usize,
    b: usize,
    w: usize,
    c: usize,
    ch: usize,
) {
    for iy in 0..b {
        for ix in 0..b {
            data[((by * b + iy) * w + bx * b + ix) * c + ch] = v[iy * b + ix];
        }
    }
}

/// Modified Gram-Schmidt with re-orthogonalization on seeded Gaussian
/// columns; returns `rows` orthonormal rows of length `dim`, row-major.
fn orthonormal_rows(rows: usize, dim: usize, seed: u64) -> Result<Vec<f64>> {
    assert!(rows <= dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(rows);
    for _ in 0..rows {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        for _ in 0..2 {
            for u in &q {
                let d: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi -= d * ui;
                }
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm < 1e-10 {
            return Err(Error::Operator(
                "degenerate Gaussian draw during orthonormalization".into(),
            ));
        }
        v.iter_mut().for_each(|a| *a /= norm);
        q.push(v);
    }
    Ok(q.into_iter().flatten().collect())
}

// ----------------------------------------------------------------------
// Circulant blur internals
// ----------------------------------------------------------------------

#[derive(Clone, Copy)]
enum Spectrum {
    Forward,
    Adjoint,
    PseudoInverse,
}

#[derive(Clone)]
pub struct CirculantBlur {
    height: usize,
    width: usize,
    channels: usize,
    /// 2-D frequency response, H*W row-major.
    freq: Vec<Complex<f64>>,
    max_mag: f64,
    eps_rel: f64,
    fft_row: Arc<dyn Fft<f64>>,
    fft_row_inv: Arc<dyn Fft<f64>>,
    fft_col: Arc<dyn Fft<f64>>,
    fft_col_inv: Arc<dyn Fft<f64>>,
}

impl CirculantBlur {
    fn new(
        height: usize,
        width: usize,
        channels: usize,
        taps: &[(isize, isize, f64)],
        eps_rel: f64,
    ) -> Result<Self> {
        let mut planner = FftPlanner::new();
        let fft_row = planner.plan_fft_forward(width);
        let fft_row_inv = planner.plan_fft_inverse(width);
        let fft_col = planner.plan_fft_forward(height);
        let fft_col_inv = planner.plan_fft_inverse(height);

        // Wrap the taps onto the periodic grid and take their 2-D DFT.
        let mut kernel = vec![Complex::new(0.0, 0.0); height * width];
        for &(dy, dx, wt) in taps {
            if !wt.is_finite() {
                return Err(Error::Operator("blur tap weight is not finite".into()));
            }
            let y = dy.rem_euclid(height as isize) as usize;
            let x = dx.rem_euclid(width as isize) as usize;
            kernel[y * width + x] += Complex::new(wt, 0.0);
        }
        fft2(&mut kernel, height, width, &fft_row, &fft_col);
        let max_mag = kernel.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if max_mag == 0.0 {
            return Err(Error::Operator("blur kernel is identically zero".into()));
        }
        Ok(Self {
            height,
            width,
            channels,
            freq: kernel,
            max_mag,
            eps_rel,
            fft_row,
            fft_row_inv,
            fft_col,
            fft_col_inv,
        })
    }

    /// Applies the requested spectral multiplier channel by channel.
    fn convolve(&self, data: &[f64], mode: Spectrum) -> Vec<f64> {
        let (h, w, c) = (self.height, self.width, self.channels);
        let plane_len = h * w;
        let thresh = self.eps_rel * self.max_mag;
        let scale = 1.0 / plane_len as f64;
        let mut out = vec![0.0; data.len()];
        let mut plane = vec![Complex::new(0.0, 0.0); plane_len];
        for ch in 0..c {
            for p in 0..plane_len {
                plane[p] = Complex::new(data[p * c + ch], 0.0);
            }
            fft2(&mut plane, h, w, &self.fft_row, &self.fft_col);
            for (v, k) in plane.iter_mut().zip(&self.freq) {
                *v = match mode {
                    Spectrum::Forward => *v * k,
                    Spectrum::Adjoint => *v * k.conj(),
                    Spectrum::PseudoInverse => {
                        if k.norm() > thresh {
                            *v / k
                        } else {
                            Complex::new(0.0, 0.0)
                        }
                    }
                };
            }
            fft2(&mut plane, h, w, &self.fft_row_inv, &self.fft_col_inv);
            for p in 0..plane_len {
                out[p * c + ch] = plane[p].re * scale;
            }
        }
        out
    }

    /// Magnitude of the smallest retained frequency; useful for conditioning
    /// diagnostics.
    pub fn min_response(&self) -> f64 {
        self.freq
            .iter()
            .map(|c| c.norm())
            .fold(f64::INFINITY, f64::min)
    }
}

/// In-place 2-D FFT: rows with `fft_w`, then columns via transpose.
fn fft2(
    plane: &mut [Complex<f64>],
    h: usize,
    w: usize,
    fft_w: &Arc<dyn Fft<f64>>,
    fft_h: &Arc<dyn Fft<f64>>,
) {
    fft_w.process(plane);
    let mut t = vec![Complex::new(0.0, 0.0); h * w];
    for y in 0..h {
        for x in 0..w {
            t[x * h + y] = plane[y * w + x];
        }
    }
    fft_h.process(&mut t);
    for y in 0..h {
        for x in 0..w {
            plane[y * w + x] = t[x * h + y];
        }
    }
}

// ----------------------------------------------------------------------
// Task construction
// ----------------------------------------------------------------------

/// Knobs for the standard restoration tasks. Fields irrelevant to a task are
/// ignored by it.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskParams {
    /// Measurement noise level added by the harness.
    pub sigma_y: f64,
    /// Inpainting: per-pixel keep probability.
    pub mask_keep: f64,
    /// Inpainting: optional rectangular hole (y, x, height, width).
    pub hole: Option<(usize, usize, usize, usize)>,
    /// Super-resolution pooling factor.
    pub sr_factor: usize,
    /// Compressed sensing: kept fraction of block coefficients.
    pub cs_ratio: f64,
    /// Compressed sensing: block edge length.
    pub cs_block: usize,
    /// Blur kernel width in pixels.
    pub blur_sigma: f64,
    /// Blur kernel footprint (odd).
    pub blur_support: usize,
    /// Relative spectral cutoff for the blur pseudo-inverse.
    pub blur_eps_pinv: f64,
}

impl Default for TaskParams {
    fn default() -> Self {
        Self {
            sigma_y: 0.0,
            mask_keep: 0.5,
            hole: None,
            sr_factor: 4,
            cs_ratio: 0.25,
            cs_block: 8,
            blur_sigma: 1.5,
            blur_support: 5,
            blur_eps_pinv: 1e-3,
        }
    }
}

pub const TASK_NAMES: [&str; 5] = ["inpaint", "sr", "cs", "gaussian-deblur", "colorize"];

/// Builds the named degradation operator for an H x W x C image and returns
/// it with the configured measurement noise level.
pub fn build_task(
    name: &str,
    height: usize,
    width: usize,
    channels: usize,
    params: &TaskParams,
    seed: u64,
) -> Result<(LinearOperator, f64)> {
    if params.sigma_y < 0.0 || !params.sigma_y.is_finite() {
        return Err(Error::Operator(format!(
            "noise level {} must be non-negative",
            params.sigma_y
        )));
    }
    let op = match name {
        "inpaint" => LinearOperator::random_mask(
            height,
            width,
            channels,
            params.mask_keep,
            params.hole,
            seed,
        )?,
        "sr" => LinearOperator::avg_pool(height, width, channels, params.sr_factor)?,
        "cs" => LinearOperator::block_compressed(
            height,
            width,
            channels,
            params.cs_block,
            params.cs_ratio,
            seed,
        )?,
        "gaussian-deblur" => LinearOperator::gaussian_blur(
            height,
            width,
            channels,
            params.blur_sigma,
            params.blur_support,
            params.blur_eps_pinv,
        )?,
        "colorize" => {
            if channels != 3 {
                return Err(Error::Operator(format!(
                    "colorization expects 3 channels, got {channels}"
                )));
            }
            LinearOperator::channel_mean(height, width, channels)?
        }
        other => {
            return Err(Error::Operator(format!(
                "unknown task '{other}' (expected one of {TASK_NAMES:?})"
            )))
        }
    };
    debug_assert!(op.m() <= op.n());
    Ok((op, params.sigma_y))
}
