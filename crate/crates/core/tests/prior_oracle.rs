//! Validates the mixture prior's analytic quantities against independent
//! numerics: the score against central finite differences of an
//! independently written log density, and the posterior mean against the Tweedie
//! identity.

use dmir_core::image::Image;
use dmir_core::prior::GaussianMixturePrior;
use dmir_core::schedule::NoiseSchedule;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Log of the noisy-data density, written from scratch: each component k
/// contributes w_k N(x; √ᾱ μ_k, v_k I) with v_k = ᾱ σ_k² + 1 − ᾱ.
fn log_density(prior: &GaussianMixturePrior, x: &[f64], t: usize, sched: &NoiseSchedule) -> f64 {
    let ab = sched.alpha_bar(t);
    let n = x.len() as f64;
    let mut terms = Vec::new();
    for ((w, mean), var) in prior
        .weights()
        .iter()
        .zip(prior.means())
        .zip(prior.variances())
    {
        let v = ab * var + 1.0 - ab;
        let mut dist = 0.0;
        for (xi, mi) in x.iter().zip(mean.data()) {
            let d = xi - ab.sqrt() * mi;
            dist += d * d;
        }
        terms.push(w.ln() - 0.5 * n * (2.0 * std::f64::consts::PI * v).ln() - dist / (2.0 * v));
    }
    let peak = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    peak + terms.iter().map(|t| (t - peak).exp()).sum::<f64>().ln()
}

fn random_mixture(k: usize, h: usize, w: usize, c: usize, seed: u64) -> GaussianMixturePrior {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.2).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|r| r / total).collect();
    let means: Vec<Image> = (0..k)
        .map(|_| Image::standard_normal(h, w, c, &mut rng).map(|v| 0.5 * v))
        .collect();
    let variances: Vec<f64> = (0..k).map(|_| 0.05 + rng.random::<f64>()).collect();
    GaussianMixturePrior::new(weights, means, variances).unwrap()
}

#[test]
fn score_matches_finite_differences() {
    let sched = NoiseSchedule::linear(100, 1e-3, 2e-2).unwrap();
    let h = 1e-5;
    for (seed, k) in [(1u64, 1usize), (2, 3), (3, 5)] {
        let prior = random_mixture(k, 3, 3, 1, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
        for t in [1usize, 17, 50, 99] {
            let x = Image::standard_normal(3, 3, 1, &mut rng);
            let score = prior.score(&x, t, &sched).unwrap();
            let mut probe = x.data().to_vec();
            for j in 0..probe.len() {
                let orig = probe[j];
                probe[j] = orig + h;
                let fp = log_density(&prior, &probe, t, &sched);
                probe[j] = orig - h;
                let fm = log_density(&prior, &probe, t, &sched);
                probe[j] = orig;
                let fd = (fp - fm) / (2.0 * h);
                let tol = 1e-5 * score.data()[j].abs().max(1.0);
                assert!(
                    (score.data()[j] - fd).abs() <= tol,
                    "k={k} t={t} coord {j}: analytic {} vs fd {fd}",
                    score.data()[j]
                );
            }
        }
    }
}

#[test]
fn posterior_mean_satisfies_tweedie_identity() {
    // E[x0 | x_t] = (x_t + (1 − ᾱ) score) / √ᾱ must hold coordinate-wise.
    let sched = NoiseSchedule::default_linear();
    let prior = random_mixture(5, 2, 4, 2, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for t in [1usize, 100, 500, 1000] {
        let ab = sched.alpha_bar(t);
        let x = Image::standard_normal(2, 4, 2, &mut rng);
        let pm = prior.posterior_mean(&x, t, &sched).unwrap();
        let score = prior.score(&x, t, &sched).unwrap();
        for j in 0..x.len() {
            let tweedie = (x.data()[j] + (1.0 - ab) * score.data()[j]) / ab.sqrt();
            let tol = 1e-10 * tweedie.abs().max(1.0);
            assert!(
                (pm.data()[j] - tweedie).abs() <= tol,
                "t={t} coord {j}: {} vs {tweedie}",
                pm.data()[j]
            );
        }
    }
}

#[test]
fn predicted_noise_is_scaled_negative_score() {
    use dmir_core::prior::NoisePredictor;
    let sched = NoiseSchedule::default_linear();
    let prior = random_mixture(3, 3, 2, 1, 21);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for t in [1usize, 250, 999] {
        let x = Image::standard_normal(3, 2, 1, &mut rng);
        let eps = prior.predict_eps(&x, t, &sched).unwrap();
        let score = prior.score(&x, t, &sched).unwrap();
        let s = (1.0 - sched.alpha_bar(t)).sqrt();
        for j in 0..x.len() {
            let want = -s * score.data()[j];
            assert!((eps.data()[j] - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
    }
}

#[test]
fn symmetrized_prior_density_is_invariant() {
    // After closing over the flip group, log p(T x) == log p(x).
    use dmir_core::transform::{Transform, TransformGroup};
    let sched = NoiseSchedule::linear(50, 1e-3, 2e-2).unwrap();
    let prior = random_mixture(3, 4, 4, 1, 33)
        .symmetrize(&TransformGroup::horizontal_flip())
        .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    for t in [1usize, 25, 50] {
        let x = Image::standard_normal(4, 4, 1, &mut rng);
        let xf = Transform::HorizontalFlip.apply(&x).unwrap();
        let a = log_density(&prior, x.data(), t, &sched);
        let b = log_density(&prior, xf.data(), t, &sched);
        assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{a} vs {b}");
    }
}
