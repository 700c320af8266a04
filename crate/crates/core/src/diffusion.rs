//! Forward noising, clean-signal estimation, and the generalized reverse step.
//!
//! The forward marginal at step t is N(sqrt(abar_t) x0, (1 - abar_t) I). A
//! noise prediction eps relates to the clean-signal estimate through
//!
//!   x0_hat = (x_t - sqrt(1 - abar_t) eps) / sqrt(abar_t)
//!
//! and to the score of the noised marginal through eps = -sqrt(1 - abar_t) s.
//! The reverse step implements the eta-parameterized family: eta = 1 on
//! adjacent steps reproduces the ancestral posterior q(x_{t-1} | x_t, x0)
//! exactly, eta = 0 is the deterministic jump to any earlier step.

use crate::error::{Error, Result};
use crate::image::{shape_mismatch, Image};
use crate::schedule::NoiseSchedule;

/// Lower clamp for denominators such as sqrt(1 - abar_t); the schedule
/// invariants keep the true values well above this, the clamp only guards
/// against pathological hand-built schedules.
pub const DENOM_FLOOR: f64 = 1e-12;

fn floored(v: f64) -> f64 {
    v.max(DENOM_FLOOR)
}

/// Draws x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) noise.
pub fn forward_sample(x0: &Image, t: usize, sched: &NoiseSchedule, noise: &Image) -> Result<Image> {
    sched.check_step(t)?;
    let ab = sched.alpha_bar(t);
    let (sa, sn) = (ab.sqrt(), (1.0 - ab).sqrt());
    x0.zip_with(noise, |x, e| sa * x + sn * e)
}

/// Inverts the forward relation: x0_hat = (x_t - sqrt(1 - abar_t) eps) / sqrt(abar_t).
pub fn estimate_x0(x_t: &Image, eps_hat: &Image, t: usize, sched: &NoiseSchedule) -> Result<Image> {
    sched.check_step(t)?;
    let ab = sched.alpha_bar(t);
    let sa = floored(ab.sqrt());
    let sn = (1.0 - ab).sqrt();
    x_t.zip_with(eps_hat, |x, e| (x - sn * e) / sa)
}

/// eps = -sqrt(1 - abar_t) * score.
pub fn eps_from_score(score: &Image, t: usize, sched: &NoiseSchedule) -> Result<Image> {
    sched.check_step(t)?;
    let sn = (1.0 - sched.alpha_bar(t)).sqrt();
    Ok(score.map(|s| -sn * s))
}

/// score = -eps / sqrt(1 - abar_t).
pub fn score_from_eps(eps: &Image, t: usize, sched: &NoiseSchedule) -> Result<Image> {
    sched.check_step(t)?;
    let sn = floored((1.0 - sched.alpha_bar(t)).sqrt());
    Ok(eps.map(|e| -e / sn))
}

/// Generalized reverse transition from step t to `t_next` < t (0 denotes the
/// clean endpoint).
///
/// The noise prediction is re-derived from the supplied clean estimate,
/// eps_hat = (x_t - sqrt(abar_t) x0_hat) / sqrt(1 - abar_t), so a guided
/// x0_hat also steers the leftover-noise direction. The update is
///
///   x_next = sqrt(abar_next) x0_hat + sqrt(1 - abar_next - sigma^2) eps_hat
///            + sigma * noise,
///   sigma^2 = eta^2 * (1 - abar_next)/(1 - abar_t) * (1 - abar_t/abar_next).
///
/// On adjacent steps with eta = 1 this equals the ancestral posterior mean
/// mu_tilde(x_t, x0_hat) with variance (1 - abar_{t-1})/(1 - abar_t) * beta_t;
/// with eta = 0 the noise term vanishes and the step is the deterministic
/// jump. A jump to t_next = 0 returns x0_hat itself (abar_0 = 1).
pub fn reverse_step(
    x_t: &Image,
    x0_hat: &Image,
    t: usize,
    t_next: usize,
    sched: &NoiseSchedule,
    eta: f64,
    noise: &Image,
) -> Result<Image> {
    sched.check_step(t)?;
    if t_next >= t {
        return Err(Error::InvalidArgument(format!(
            "reverse step requires t_next < t, got {t_next} >= {t}"
        )));
    }
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidArgument(format!(
            "eta = {eta} outside [0, 1]"
        )));
    }
    if !x_t.same_shape(x0_hat) {
        return Err(shape_mismatch(x_t, x0_hat));
    }
    if !x_t.same_shape(noise) {
        return Err(shape_mismatch(x_t, noise));
    }

    let ab_t = sched.alpha_bar(t);
    let ab_n = sched.alpha_bar(t_next);
    let one_minus_t = 1.0 - ab_t;
    let one_minus_n = 1.0 - ab_n;

    let sigma_sq = eta * eta * (one_minus_n / floored(one_minus_t)) * (1.0 - ab_t / ab_n);
    let dir = (one_minus_n - sigma_sq).max(0.0).sqrt();
    let sigma = sigma_sq.max(0.0).sqrt();
    let sa_n = ab_n.sqrt();
    let sa_t = ab_t.sqrt();
    let sn_t = floored(one_minus_t.sqrt());

    let mut out = Vec::with_capacity(x_t.len());
    let (xs, x0s, zs) = (x_t.data(), x0_hat.data(), noise.data());
    for i in 0..xs.len() {
        let eps = (xs[i] - sa_t * x0s[i]) / sn_t;
        out.push(sa_n * x0s[i] + dir * eps + sigma * zs[i]);
    }
    let (h, w, c) = x_t.shape();
    Image::new(h, w, c, out)
}
