//! Measurement guidance applied to the clean estimate between denoising
//! steps.
//!
//! All modes produce a correction g and the sampler forms x̃ = x0 + λ g:
//!
//! - pseudo-inverse: g = A†(y − A x0), exact data consistency at λ = 1
//!   whenever A A† = I;
//! - transpose: g = Aᵀ(y − A x0), a gradient step on ½‖y − A x0‖²;
//! - gradient: g = −∇_{x_t} ‖y − A D(x_t)‖² by central finite differences
//!   through the denoiser, 2n extra denoiser evaluations per step;
//! - none: x̃ = x0.
//!
//! With noisy measurements the configured weight is shrunk once per run to
//! λ / (1 + σ_y² m).

use crate::error::{Error, Result};
use crate::image::Image;
use crate::operator::LinearOperator;

/// Central finite differences touch every coordinate twice; above this input
/// dimension the cost is almost always a mistake, so it must be opted into.
pub const MAX_GRADIENT_DIM: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuidanceMode {
    PseudoInverse,
    Transpose,
    Gradient,
    None,
}

impl GuidanceMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pinv" => Ok(GuidanceMode::PseudoInverse),
            "transpose" => Ok(GuidanceMode::Transpose),
            "gradient" => Ok(GuidanceMode::Gradient),
            "none" => Ok(GuidanceMode::None),
            other => Err(Error::InvalidArgument(format!(
                "unknown guidance mode '{other}' (expected pinv, transpose, gradient or none)"
            ))),
        }
    }
}

impl std::fmt::Display for GuidanceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GuidanceMode::PseudoInverse => "pinv",
            GuidanceMode::Transpose => "transpose",
            GuidanceMode::Gradient => "gradient",
            GuidanceMode::None => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceConfig {
    pub mode: GuidanceMode,
    /// Base guidance weight λ.
    pub weight: f64,
    /// Step size for finite-difference gradients.
    pub fd_step: f64,
    /// Permit gradient mode beyond `MAX_GRADIENT_DIM` inputs.
    pub allow_large_gradient: bool,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            mode: GuidanceMode::None,
            weight: 1.0,
            fd_step: 1e-4,
            allow_large_gradient: false,
        }
    }
}

impl GuidanceConfig {
    /// Checks the configuration against an input dimension n.
    pub fn validate(&self, n: usize) -> Result<()> {
        if !self.weight.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "guidance weight {} is not finite",
                self.weight
            )));
        }
        if !(self.fd_step.is_finite() && self.fd_step > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "finite-difference step {} must be positive",
                self.fd_step
            )));
        }
        if self.mode == GuidanceMode::Gradient && n > MAX_GRADIENT_DIM && !self.allow_large_gradient
        {
            return Err(Error::InvalidArgument(format!(
                "gradient guidance over {n} coordinates needs {} denoiser calls per step; \
                 set allow_large_gradient to accept the cost",
                2 * n
            )));
        }
        Ok(())
    }
}

/// λ_eff = λ / (1 + σ_y² m): noisier measurements get weaker corrections.
pub fn effective_weight(weight: f64, sigma_y: f64, m: usize) -> f64 {
    if sigma_y > 0.0 {
        weight / (1.0 + sigma_y * sigma_y * m as f64)
    } else {
        weight
    }
}

/// g = A†(y − A x0).
pub fn guide_pinv(operator: &LinearOperator, y: &[f64], x0: &Image) -> Result<Image> {
    operator.apply_pinv(&residual(operator, y, x0)?)
}

/// g = Aᵀ(y − A x0).
pub fn guide_transpose(operator: &LinearOperator, y: &[f64], x0: &Image) -> Result<Image> {
    operator.apply_adjoint(&residual(operator, y, x0)?)
}

fn residual(operator: &LinearOperator, y: &[f64], x0: &Image) -> Result<Vec<f64>> {
    let mut r = operator.apply(x0)?;
    if r.len() != y.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("measurement of length {}", r.len()),
            got: format!("{}", y.len()),
        });
    }
    for (ri, yi) in r.iter_mut().zip(y) {
        *ri = yi - *ri;
    }
    Ok(r)
}

/// Central finite-difference gradient of ‖y − A D(x_t)‖² with respect to
/// x_t. Returns the raw loss gradient (callers negate for a descent
/// direction) and the number of denoiser evaluations spent (2n).
pub fn guide_gradient<F>(
    operator: &LinearOperator,
    y: &[f64],
    x_t: &Image,
    denoise: F,
    fd_step: f64,
) -> Result<(Image, usize)>
where
    F: Fn(&Image) -> Result<Image>,
{
    if !(fd_step.is_finite() && fd_step > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step {fd_step} must be positive"
        )));
    }
    let loss = |img: &Image| -> Result<f64> {
        let ax = operator.apply(&denoise(img)?)?;
        Ok(ax
            .iter()
            .zip(y)
            .map(|(a, b)| {
                let r = a - b;
                r * r
            })
            .sum())
    };
    let n = x_t.len();
    let mut grad = vec![0.0; n];
    let mut probe = x_t.clone();
    for (j, g) in grad.iter_mut().enumerate() {
        let orig = probe.data()[j];
        probe.data_mut()[j] = orig + fd_step;
        let fp = loss(&probe)?;
        probe.data_mut()[j] = orig - fd_step;
        let fm = loss(&probe)?;
        probe.data_mut()[j] = orig;
        *g = (fp - fm) / (2.0 * fd_step);
    }
    let (h, w, c) = x_t.shape();
    Ok((Image::new(h, w, c, grad)?, 2 * n))
}

/// x̃ = x0 + weight · g.
pub fn apply_guidance(x0: &Image, g: &Image, weight: f64) -> Result<Image> {
    x0.zip_with(g, |a, b| a + weight * b)
}
