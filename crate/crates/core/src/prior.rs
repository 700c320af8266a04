//! Analytic priors with exact scores.
//!
//! An isotropic Gaussian mixture stays a Gaussian mixture under forward
//! noising: component k contributes N(sqrt(abar_t) mu_k, v_k I) with
//! v_k = abar_t sigma_k^2 + (1 - abar_t) at step t. The marginal score and
//! the posterior mean of the clean signal are therefore available in closed
//! form, standing in for a learned denoiser while keeping every sampler
//! claim checkable against conjugate-Gaussian algebra.
//!
//! Two independent routes to the denoised estimate exist deliberately:
//! `score` feeds the generic estimate_x0 identity, while `posterior_mean`
//! computes the responsibility-weighted conjugate component means directly.
//! Tests compare them; production code must not merge them.

use crate::diffusion::DENOM_FLOOR;
use crate::error::{Error, Result};
use crate::image::{shape_mismatch, Image};
use crate::schedule::NoiseSchedule;
use crate::transform::TransformGroup;

/// Anything that predicts the forward-process noise from a noisy state.
/// The samplers only consume this interface, so an imperfect or tabulated
/// denoiser can slot in alongside the analytic mixtures.
pub trait NoisePredictor: Send + Sync {
    fn predict_eps(&self, x_t: &Image, t: usize, sched: &NoiseSchedule) -> Result<Image>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixturePrior {
    weights: Vec<f64>,
    means: Vec<Image>,
    variances: Vec<f64>,
}

const WEIGHT_SUM_TOL: f64 = 1e-12;

impl GaussianMixturePrior {
    /// Builds a mixture. Weights must be positive and sum to 1 within 1e-12;
    /// variances must be positive; all means must share one shape.
    pub fn new(weights: Vec<f64>, means: Vec<Image>, variances: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != variances.len() {
            return Err(Error::InvalidArgument(format!(
                "mixture needs matching non-empty weights/means/variances, got {}/{}/{}",
                weights.len(),
                means.len(),
                variances.len()
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidArgument(format!(
                "mixture weights sum to {sum}, expected 1 within {WEIGHT_SUM_TOL:e}"
            )));
        }
        if weights.iter().any(|&w| w <= 0.0 || !w.is_finite()) {
            return Err(Error::InvalidArgument(
                "mixture weights must be positive".into(),
            ));
        }
        if variances.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "component variances must be positive".into(),
            ));
        }
        let shape = means[0].shape();
        if means.iter().any(|m| m.shape() != shape) {
            return Err(Error::InvalidArgument(
                "component means must share one shape".into(),
            ));
        }
        Ok(Self {
            weights,
            means,
            variances,
        })
    }

    /// Single-component convenience constructor.
    pub fn single(mean: Image, variance: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![variance])
    }

    pub fn num_components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Image] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.means[0].shape()
    }

    /// Draws a component index according to the weights from a uniform draw
    /// in [0, 1).
    pub fn component_from_uniform(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (k, &w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return k;
            }
        }
        self.weights.len() - 1
    }

    fn check_input(&self, x_t: &Image, t: usize, sched: &NoiseSchedule) -> Result<()> {
        sched.check_step(t)?;
        if x_t.shape() != self.shape() {
            return Err(shape_mismatch(&self.means[0], x_t));
        }
        Ok(())
    }

    /// Log responsibilities of each component at the noised state, computed
    /// with the log-sum-exp trick so huge quadratic terms never overflow.
    fn log_responsibilities(&self, x_t: &Image, t: usize, sched: &NoiseSchedule) -> Vec<f64> {
        let ab = sched.alpha_bar(t);
        let sa = ab.sqrt();
        let n = x_t.len() as f64;
        let mut logs: Vec<f64> = (0..self.num_components())
            .map(|k| {
                let v = ab * self.variances[k] + (1.0 - ab);
                let dist_sq: f64 = x_t
                    .data()
                    .iter()
                    .zip(self.means[k].data())
                    .map(|(x, m)| {
                        let d = x - sa * m;
                        d * d
                    })
                    .sum();
                self.weights[k].ln()
                    - 0.5 * n * (2.0 * std::f64::consts::PI * v).ln()
                    - dist_sq / (2.0 * v)
            })
            .collect();
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        for l in &mut logs {
            *l -= lse;
        }
        logs
    }

    /// Exact score of the noised marginal, grad_x log p_t(x_t).
    pub fn score(&self, x_t: &Image, t: usize, sched: &NoiseSchedule) -> Result<Image> {
        self.check_input(x_t, t, sched)?;
        let ab = sched.alpha_bar(t);
        let sa = ab.sqrt();
        let resp: Vec<f64> = self
            .log_responsibilities(x_t, t, sched)
            .iter()
            .map(|l| l.exp())
            .collect();
        let mut out = vec![0.0; x_t.len()];
        for (k, &r) in resp.iter().enumerate() {
            let v = (ab * self.variances[k] + (1.0 - ab)).max(DENOM_FLOOR);
            if r == 0.0 {
                continue;
            }
            for (o, (x, m)) in out
                .iter_mut()
                .zip(x_t.data().iter().zip(self.means[k].data()))
            {
                *o -= r * (x - sa * m) / v;
            }
        }
        let (h, w, c) = x_t.shape();
        Image::new(h, w, c, out)
    }

    /// Posterior mean of the clean signal, E[x0 | x_t], via the conjugate
    /// closed form: responsibilities weight the per-component means
    /// (sqrt(abar_t) sigma_k^2 x_t + (1 - abar_t) mu_k) / v_k.
    pub fn posterior_mean(&self, x_t: &Image, t: usize, sched: &NoiseSchedule) -> Result<Image> {
        self.check_input(x_t, t, sched)?;
        let ab = sched.alpha_bar(t);
        let sa = ab.sqrt();
        let one_minus = 1.0 - ab;
        let resp: Vec<f64> = self
            .log_responsibilities(x_t, t, sched)
            .iter()
            .map(|l| l.exp())
            .collect();
        let mut out = vec![0.0; x_t.len()];
        for (k, &r) in resp.iter().enumerate() {
            let sk = self.variances[k];
            let v = (ab * sk + one_minus).max(DENOM_FLOOR);
            if r == 0.0 {
                continue;
            }
            for (o, (x, m)) in out
                .iter_mut()
                .zip(x_t.data().iter().zip(self.means[k].data()))
            {
                *o += r * (sa * sk * x + one_minus * m) / v;
            }
        }
        let (h, w, c) = x_t.shape();
        Image::new(h, w, c, out)
    }

    /// Closes the mixture under a transform group: each component is replaced
    /// by its orbit with the weight split evenly across orbit members, then
    /// bitwise-identical components are merged. The resulting density is
    /// invariant under every group member, which makes the posterior-mean map
    /// equivariant.
    pub fn symmetrize(&self, group: &TransformGroup) -> Result<GaussianMixturePrior> {
        let mut weights = Vec::new();
        let mut means: Vec<Image> = Vec::new();
        let mut variances = Vec::new();

        for k in 0..self.num_components() {
            let orbit = orbit_closure(&self.means[k], group)?;
            let share = self.weights[k] / orbit.len() as f64;
            for member in orbit {
                // Merge with an existing identical component if present.
                if let Some(j) = means.iter().enumerate().position(|(j, m)| {
                    variances[j] == self.variances[k] && m.data() == member.data()
                }) {
                    weights[j] += share;
                } else {
                    weights.push(share);
                    means.push(member);
                    variances.push(self.variances[k]);
                }
            }
        }
        // Defensive renormalization; the shares sum to the original weights up
        // to rounding.
        let sum: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= sum;
        }
        GaussianMixturePrior::new(weights, means, variances)
    }
}

/// Breadth-first closure of one image under repeated application of the group
/// transforms, with bitwise dedup. Transforms are permutations, so the orbit
/// is finite and the closure exact.
fn orbit_closure(seed: &Image, group: &TransformGroup) -> Result<Vec<Image>> {
    let mut orbit: Vec<Image> = vec![seed.clone()];
    let mut frontier = vec![seed.clone()];
    let cap = 16 * seed.len().max(4) * group.len();
    while let Some(img) = frontier.pop() {
        for t in group.transforms() {
            let next = t.apply(&img)?;
            if !orbit.iter().any(|m| m.data() == next.data()) {
                orbit.push(next.clone());
                frontier.push(next);
                if orbit.len() > cap {
                    return Err(Error::InvalidArgument(
                        "transform orbit failed to close".into(),
                    ));
                }
            }
        }
    }
    Ok(orbit)
}

impl NoisePredictor for GaussianMixturePrior {
    /// eps prediction from the exact score: eps = -sqrt(1 - abar_t) * score.
    fn predict_eps(&self, x_t: &Image, t: usize, sched: &NoiseSchedule) -> Result<Image> {
        let score = self.score(x_t, t, sched)?;
        crate::diffusion::eps_from_score(&score, t, sched)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::Transform;

    fn sched() -> NoiseSchedule {
        NoiseSchedule::linear(100, 1e-3, 2e-2).unwrap()
    }

    #[test]
    fn rejects_bad_mixtures() {
        let m = Image::zeros(1, 2, 1);
        assert!(GaussianMixturePrior::new(vec![], vec![], vec![]).is_err());
        assert!(GaussianMixturePrior::new(
            vec![0.5, 0.6],
            vec![m.clone(), m.clone()],
            vec![1.0, 1.0]
        )
        .is_err());
        assert!(GaussianMixturePrior::new(vec![1.0], vec![m.clone()], vec![0.0]).is_err());
        assert!(GaussianMixturePrior::new(vec![1.0], vec![m.clone()], vec![-1.0]).is_err());
        let other = Image::zeros(2, 1, 1);
        assert!(
            GaussianMixturePrior::new(vec![0.5, 0.5], vec![m.clone(), other], vec![1.0, 1.0])
                .is_err()
        );
        assert!(GaussianMixturePrior::new(vec![1.0 + 1e-10], vec![m], vec![1.0]).is_err());
    }

    #[test]
    fn single_component_score_is_linear() {
        let s = sched();
        let mu = Image::new(1, 2, 1, vec![0.4, -0.2]).unwrap();
        let prior = GaussianMixturePrior::single(mu.clone(), 0.5).unwrap();
        let x = Image::new(1, 2, 1, vec![1.0, 0.3]).unwrap();
        let t = 30;
        let ab = s.alpha_bar(t);
        let v = ab * 0.5 + (1.0 - ab);
        let score = prior.score(&x, t, &s).unwrap();
        for i in 0..2 {
            let want = -(x.data()[i] - ab.sqrt() * mu.data()[i]) / v;
            assert!((score.data()[i] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn log_domain_survives_huge_inputs() {
        let s = sched();
        let means = vec![
            Image::constant(4, 4, 1, 0.2),
            Image::constant(4, 4, 1, 0.8),
            Image::constant(4, 4, 1, -0.3),
        ];
        let prior =
            GaussianMixturePrior::new(vec![0.2, 0.5, 0.3], means, vec![0.3, 0.6, 1.1]).unwrap();
        // norm(x) = 1e3: naive densities underflow, log-domain must not.
        let x = Image::constant(4, 4, 1, 250.0);
        let score = prior.score(&x, 50, &s).unwrap();
        assert!(score.data().iter().all(|v| v.is_finite()));
        // Far in the tail the nearest component dominates; the score must be
        // strongly negative (pointing back toward the means).
        assert!(score.data()[0] < -100.0);
        let pm = prior.posterior_mean(&x, 50, &s).unwrap();
        assert!(pm.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn posterior_mean_single_component_closed_form() {
        let s = sched();
        let mu = Image::new(1, 2, 1, vec![0.1, 0.9]).unwrap();
        let var = 0.4;
        let prior = GaussianMixturePrior::single(mu.clone(), var).unwrap();
        let x = Image::new(1, 2, 1, vec![-0.5, 1.5]).unwrap();
        let t = 60;
        let ab = s.alpha_bar(t);
        let v = ab * var + (1.0 - ab);
        let pm = prior.posterior_mean(&x, t, &s).unwrap();
        for i in 0..2 {
            let want = (ab.sqrt() * var * x.data()[i] + (1.0 - ab) * mu.data()[i]) / v;
            assert!((pm.data()[i] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn posterior_mean_tiny_variance_returns_component_mean() {
        let s = sched();
        let mu = Image::new(1, 2, 1, vec![0.25, -0.75]).unwrap();
        let prior = GaussianMixturePrior::single(mu.clone(), 1e-12).unwrap();
        let x = Image::new(1, 2, 1, vec![3.0, 2.0]).unwrap();
        let pm = prior.posterior_mean(&x, 40, &s).unwrap();
        for i in 0..2 {
            assert!((pm.data()[i] - mu.data()[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn eps_prediction_matches_tweedie_identity() {
        // estimate_x0 applied to predict_eps must equal the conjugate
        // posterior mean; this is the one-mixture version of the full test in
        // the integration suite.
        let s = sched();
        let means = vec![
            Image::new(2, 2, 1, vec![0.1, 0.2, 0.3, 0.4]).unwrap(),
            Image::new(2, 2, 1, vec![0.9, 0.8, 0.7, 0.6]).unwrap(),
        ];
        let prior = GaussianMixturePrior::new(vec![0.4, 0.6], means, vec![0.2, 0.7]).unwrap();
        let x = Image::new(2, 2, 1, vec![0.5, -0.1, 1.2, 0.0]).unwrap();
        for t in [1, 25, 99] {
            let eps = prior.predict_eps(&x, t, &s).unwrap();
            let via_eps = crate::diffusion::estimate_x0(&x, &eps, t, &s).unwrap();
            let direct = prior.posterior_mean(&x, t, &s).unwrap();
            for (a, b) in via_eps.data().iter().zip(direct.data()) {
                assert!((a - b).abs() < 1e-10 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn symmetrize_flip_splits_weight() {
        let mu = Image::new(1, 2, 1, vec![1.0, 0.0]).unwrap();
        let prior = GaussianMixturePrior::single(mu.clone(), 0.3).unwrap();
        let sym = prior
            .symmetrize(&TransformGroup::horizontal_flip())
            .unwrap();
        assert_eq!(sym.num_components(), 2);
        assert!((sym.weights()[0] - 0.5).abs() < 1e-15);
        assert!((sym.weights()[1] - 0.5).abs() < 1e-15);
        let flipped = Transform::HorizontalFlip.apply(&mu).unwrap();
        assert!(sym.means().iter().any(|m| m.data() == mu.data()));
        assert!(sym.means().iter().any(|m| m.data() == flipped.data()));
    }

    #[test]
    fn symmetrize_fixed_point() {
        let mu = Image::new(1, 2, 1, vec![1.0, 0.0]).unwrap();
        let flipped = Transform::HorizontalFlip.apply(&mu).unwrap();
        let prior =
            GaussianMixturePrior::new(vec![0.5, 0.5], vec![mu.clone(), flipped], vec![0.3, 0.3])
                .unwrap();
        let sym = prior
            .symmetrize(&TransformGroup::horizontal_flip())
            .unwrap();
        assert_eq!(sym.num_components(), 2);
        for k in 0..2 {
            let j = sym
                .means()
                .iter()
                .position(|m| m.data() == prior.means()[k].data())
                .unwrap();
            assert!((sym.weights()[j] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetrize_generated_group_closure() {
        // A single rot90 generator must close over all four rotations.
        let mut data = vec![0.0; 9];
        data[1] = 1.0;
        let mu = Image::new(3, 3, 1, data).unwrap();
        let prior = GaussianMixturePrior::single(mu, 0.2).unwrap();
        let group = TransformGroup::new(vec![Transform::Rotate90 { turns: 1 }]).unwrap();
        let sym = prior.symmetrize(&group).unwrap();
        assert_eq!(sym.num_components(), 4);
        for w in sym.weights() {
            assert!((w - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn symmetric_mean_does_not_split() {
        // A flip-symmetric mean has a singleton orbit.
        let mu = Image::new(1, 3, 1, vec![0.2, 0.9, 0.2]).unwrap();
        let prior = GaussianMixturePrior::single(mu, 0.3).unwrap();
        let sym = prior
            .symmetrize(&TransformGroup::horizontal_flip())
            .unwrap();
        assert_eq!(sym.num_components(), 1);
        assert!((sym.weights()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn component_sampling_follows_weights() {
        let means = vec![Image::zeros(1, 1, 1), Image::zeros(1, 1, 1)];
        let prior = GaussianMixturePrior::new(vec![0.25, 0.75], means, vec![1.0, 1.0]).unwrap();
        assert_eq!(prior.component_from_uniform(0.0), 0);
        assert_eq!(prior.component_from_uniform(0.2499), 0);
        assert_eq!(prior.component_from_uniform(0.2501), 1);
        assert_eq!(prior.component_from_uniform(0.9999), 1);
    }
}
