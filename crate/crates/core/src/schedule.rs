//! Variance schedule of the forward noising process.
//!
//! A schedule of length T holds beta[t] in (0,1) for t = 1..=T, alpha[t] =
//! 1 - beta[t], and the running product alpha_bar[t] = alpha_bar[t-1] *
//! alpha[t]. The product is computed exactly by that recurrence, so the
//! recurrence holds to machine precision by construction and alpha_bar is
//! strictly decreasing. Step index 0 denotes the clean-data endpoint:
//! `alpha_bar(0) == 1`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    /// Builds a schedule from explicit per-step betas.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::InvalidSchedule(
                "schedule length must be at least 1".into(),
            ));
        }
        for (i, &b) in betas.iter().enumerate() {
            if !(b > 0.0 && b < 1.0) || !b.is_finite() {
                return Err(Error::InvalidSchedule(format!(
                    "beta[{}] = {b} is outside (0, 1)",
                    i + 1
                )));
            }
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(betas.len());
        let mut prod = 1.0;
        for &a in &alphas {
            prod *= a;
            alpha_bars.push(prod);
        }
        // With beta < 1 each factor is positive; underflow to zero (or a
        // non-decreasing pair) can only happen for astronomically long
        // schedules, but the downstream math divides by these values.
        let mut prev = 1.0;
        for (i, &ab) in alpha_bars.iter().enumerate() {
            if !(ab > 0.0 && ab < prev) {
                return Err(Error::InvalidSchedule(format!(
                    "alpha_bar[{}] = {ab} is not strictly decreasing from {prev}",
                    i + 1
                )));
            }
            prev = ab;
        }
        Ok(Self {
            betas,
            alphas,
            alpha_bars,
        })
    }

    /// Linear beta ramp from `beta_start` to `beta_end` over `t_total` steps.
    pub fn linear(t_total: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if t_total == 0 {
            return Err(Error::InvalidSchedule(
                "schedule length must be at least 1".into(),
            ));
        }
        if beta_start > beta_end {
            return Err(Error::InvalidSchedule(format!(
                "beta_start {beta_start} exceeds beta_end {beta_end}"
            )));
        }
        let betas = if t_total == 1 {
            vec![beta_start]
        } else {
            let step = (beta_end - beta_start) / (t_total - 1) as f64;
            (0..t_total).map(|i| beta_start + step * i as f64).collect()
        };
        Self::from_betas(betas)
    }

    /// Conventional default: T = 1000, beta from 1e-4 to 2e-2.
    pub fn default_linear() -> Self {
        Self::linear(1000, 1e-4, 2e-2).expect("default schedule parameters are valid")
    }

    /// Number of steps T.
    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// beta at step t (1-based).
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    /// alpha at step t (1-based).
    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    /// alpha_bar at step t; `alpha_bar(0)` is the clean endpoint 1.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    /// Validates that t is a usable step index (1..=T).
    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.len() {
            return Err(Error::InvalidArgument(format!(
                "step {t} outside schedule range 1..={}",
                self.len()
            )));
        }
        Ok(())
    }
}
