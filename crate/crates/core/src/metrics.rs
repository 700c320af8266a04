//! Reconstruction quality metrics.
//!
//! PSNR is reported in dB against a caller-supplied peak value and returns
//! infinity for identical inputs; callers are expected to flag that case
//! rather than average it. SSIM uses uniform 8x8 windows at stride 1 with
//! population moments, the usual stabilizers C1 = (0.01 peak)² and
//! C2 = (0.03 peak)², computed per channel and averaged over all windows
//! and channels. Consistency is the squared measurement residual
//! ‖A x − y‖².

use crate::error::{Error, Result};
use crate::image::Image;
use crate::operator::LinearOperator;

const SSIM_WINDOW: usize = 8;

/// Mean squared error over all coordinates.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    Ok(a.dist_sq(b)? / a.len() as f64)
}

/// 10 log10(peak² / MSE) in dB; infinite when the images coincide.
pub fn psnr(x: &Image, reference: &Image, peak: f64) -> Result<f64> {
    if !(peak.is_finite() && peak > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "peak value {peak} must be positive"
        )));
    }
    let err = mse(x, reference)?;
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / err).log10())
}

/// Mean structural similarity over dense 8x8 windows, per channel.
pub fn ssim(x: &Image, reference: &Image, peak: f64) -> Result<f64> {
    if !(peak.is_finite() && peak > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "peak value {peak} must be positive"
        )));
    }
    if x.shape() != reference.shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", x.shape()),
            got: format!("{:?}", reference.shape()),
        });
    }
    let (h, w, c) = x.shape();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "structural similarity needs at least {SSIM_WINDOW}x{SSIM_WINDOW} images, got {h}x{w}"
        )));
    }
    let c1 = (0.01 * peak) * (0.01 * peak);
    let c2 = (0.03 * peak) * (0.03 * peak);
    let inv_area = 1.0 / (SSIM_WINDOW * SSIM_WINDOW) as f64;

    let mut total = 0.0;
    let mut windows = 0usize;
    for ch in 0..c {
        for y0 in 0..=h - SSIM_WINDOW {
            for x0 in 0..=w - SSIM_WINDOW {
                let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in 0..SSIM_WINDOW {
                    for dx in 0..SSIM_WINDOW {
                        let i = ((y0 + dy) * w + x0 + dx) * c + ch;
                        let a = x.data()[i];
                        let b = reference.data()[i];
                        sx += a;
                        sy += b;
                        sxx += a * a;
                        syy += b * b;
                        sxy += a * b;
                    }
                }
                let mx = sx * inv_area;
                let my = sy * inv_area;
                let vx = sxx * inv_area - mx * mx;
                let vy = syy * inv_area - my * my;
                let cov = sxy * inv_area - mx * my;
                total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                windows += 1;
            }
        }
    }
    Ok(total / windows as f64)
}

/// Squared measurement residual ‖A x − y‖².
pub fn cons(operator: &LinearOperator, x: &Image, y: &[f64]) -> Result<f64> {
    let ax = operator.apply(x)?;
    if ax.len() != y.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("measurement of length {}", ax.len()),
            got: format!("{}", y.len()),
        });
    }
    Ok(ax
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = a - b;
            r * r
        })
        .sum())
}
