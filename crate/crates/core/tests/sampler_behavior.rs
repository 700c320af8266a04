//! End-to-end sampler behavior: trajectory equivalences, guidance effects,
//! initialization options, and a posterior-mean consistency check against
//! the conjugate closed form.

use dmir_core::guidance::{GuidanceConfig, GuidanceMode};
use dmir_core::image::Image;
use dmir_core::metrics::cons;
use dmir_core::operator::LinearOperator;
use dmir_core::prior::GaussianMixturePrior;
use dmir_core::sampler::{sample, SamplerConfig, ScheduleKind};
use dmir_core::schedule::NoiseSchedule;
use dmir_core::transform::TransformGroup;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn pinv_guidance() -> GuidanceConfig {
    GuidanceConfig {
        mode: GuidanceMode::PseudoInverse,
        ..GuidanceConfig::default()
    }
}

fn mixture(h: usize, w: usize, k: usize, seed: u64) -> GaussianMixturePrior {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = vec![1.0 / k as f64; k];
    let means: Vec<Image> = (0..k)
        .map(|_| Image::standard_normal(h, w, 1, &mut rng).map(|v| 0.4 * v))
        .collect();
    let variances: Vec<f64> = (0..k).map(|_| 0.1 + 0.2 * rng.random::<f64>()).collect();
    GaussianMixturePrior::new(weights, means, variances).unwrap()
}

#[test]
fn symmetric_prior_makes_equivariant_trajectory_redundant() {
    // When the denoiser is exactly flip-equivariant (symmetrized prior),
    // routing steps through the flip changes nothing beyond float noise.
    let group = TransformGroup::horizontal_flip();
    let prior = mixture(4, 4, 3, 50).symmetrize(&group).unwrap();
    let op = LinearOperator::random_mask(4, 4, 1, 0.5, None, 51).unwrap();
    let sched = NoiseSchedule::linear(100, 1e-3, 2e-2).unwrap();
    let x_true = Image::constant(4, 4, 1, 0.25);
    let y = op.apply(&x_true).unwrap();

    let base = SamplerConfig {
        nfe: 20,
        eta: 1.0,
        guidance: pinv_guidance(),
        seed: 99,
        ..SamplerConfig::default()
    };
    let eq = SamplerConfig {
        equivariant: true,
        group,
        ..base.clone()
    };
    let a = sample(&prior, &op, &y, &sched, &base).unwrap();
    let b = sample(&prior, &op, &y, &sched, &eq).unwrap();
    for (va, vb) in a.x0.data().iter().zip(b.x0.data()) {
        assert!((va - vb).abs() <= 1e-8, "outputs diverged: {va} vs {vb}");
    }
    for (da, db) in a.diagnostics.iter().zip(&b.diagnostics) {
        assert!((da.residual_pre - db.residual_pre).abs() <= 1e-8);
    }
}

#[test]
fn masked_posterior_mean_matches_conjugate_value() {
    // K = 1 prior and a pixel mask factorize per coordinate: observed
    // pixels are pinned to y, unobserved ones marginally follow the prior,
    // so the sample mean over seeds must approach the prior mean there.
    let mu = 0.35;
    let var = 0.2;
    let prior = GaussianMixturePrior::single(Image::constant(2, 2, 1, mu), var).unwrap();
    let op = LinearOperator::mask(2, 2, 1, vec![true, false, true, false]).unwrap();
    let sched = NoiseSchedule::linear(100, 1e-3, 2e-2).unwrap();
    let x_true = Image::new(2, 2, 1, vec![0.8, 0.1, -0.2, 0.5]).unwrap();
    let y = op.apply(&x_true).unwrap();

    let seeds = 2000usize;
    let mut sums = [0.0f64; 4];
    for seed in 0..seeds {
        let config = SamplerConfig {
            nfe: 25,
            eta: 1.0,
            guidance: pinv_guidance(),
            seed: seed as u64,
            ..SamplerConfig::default()
        };
        let report = sample(&prior, &op, &y, &sched, &config).unwrap();
        for (s, v) in sums.iter_mut().zip(report.x0.data()) {
            *s += v;
        }
        // Observed coordinates are exact every run.
        assert!((report.x0.data()[0] - 0.8).abs() < 1e-10);
        assert!((report.x0.data()[2] + 0.2).abs() < 1e-10);
    }
    let se = var.sqrt() / (seeds as f64).sqrt();
    for idx in [1usize, 3] {
        let mean = sums[idx] / seeds as f64;
        assert!(
            (mean - mu).abs() <= 4.0 * se + 0.01,
            "coordinate {idx}: sample mean {mean} vs prior mean {mu} (4se={})",
            4.0 * se
        );
    }
}

#[test]
fn pinv_guidance_never_increases_residual() {
    // Guided estimates project the residual; squared norm cannot grow.
    let prior = mixture(4, 4, 2, 60);
    let sched = NoiseSchedule::linear(100, 1e-3, 2e-2).unwrap();
    for op in [
        LinearOperator::random_mask(4, 4, 1, 0.4, None, 61).unwrap(),
        LinearOperator::avg_pool(4, 4, 1, 2).unwrap(),
        LinearOperator::channel_mean(4, 4, 1).unwrap(),
    ] {
        let y = op.apply(&Image::constant(4, 4, 1, 0.3)).unwrap();
        let config = SamplerConfig {
            nfe: 15,
            eta: 1.0,
            guidance: pinv_guidance(),
            seed: 5,
            ..SamplerConfig::default()
        };
        let report = sample(&prior, &op, &y, &sched, &config).unwrap();
        for d in &report.diagnostics {
            assert!(
                d.residual_post <= d.residual_pre + 1e-12,
                "{op:?} t={}: {} -> {}",
                d.t,
                d.residual_pre,
                d.residual_post
            );
        }
    }
}

#[test]
fn warm_start_changes_trajectory_but_stays_deterministic() {
    let prior = mixture(4, 4, 2, 70);
    let op = LinearOperator::avg_pool(4, 4, 1, 2).unwrap();
    let sched = NoiseSchedule::linear(100, 1e-3, 2e-2).unwrap();
    let y = op.apply(&Image::constant(4, 4, 1, 0.6)).unwrap();
    let cold = SamplerConfig {
        nfe: 10,
        guidance: pinv_guidance(),
        seed: 3,
        ..SamplerConfig::default()
    };
    let warm = SamplerConfig {
        init_from_pinv: true,
        ..cold.clone()
    };
    let a = sample(&prior, &op, &y, &sched, &cold).unwrap();
    let b1 = sample(&prior, &op, &y, &sched, &warm).unwrap();
    let b2 = sample(&prior, &op, &y, &sched, &warm).unwrap();
    assert_eq!(b1.x0.data(), b2.x0.data());
    assert_ne!(a.x0.data(), b1.x0.data());
}

#[test]
fn guidance_modes_improve_final_consistency() {
    let prior = mixture(4, 4, 2, 80);
    let op = LinearOperator::random_mask(4, 4, 1, 0.5, None, 81).unwrap();
    let sched = NoiseSchedule::linear(100, 1e-3, 2e-2).unwrap();
    let y = op.apply(&Image::constant(4, 4, 1, 0.7)).unwrap();

    let run = |guidance: GuidanceConfig| {
        let config = SamplerConfig {
            nfe: 20,
            eta: 0.0,
            guidance,
            seed: 8,
            ..SamplerConfig::default()
        };
        let report = sample(&prior, &op, &y, &sched, &config).unwrap();
        cons(&op, &report.x0, &y).unwrap()
    };

    let none = run(GuidanceConfig::default());
    let transpose = run(GuidanceConfig {
        mode: GuidanceMode::Transpose,
        weight: 0.5,
        ..GuidanceConfig::default()
    });
    let gradient = run(GuidanceConfig {
        mode: GuidanceMode::Gradient,
        weight: 0.25,
        ..GuidanceConfig::default()
    });
    assert!(
        transpose < none,
        "transpose guidance should tighten consistency: {transpose} vs {none}"
    );
    assert!(
        gradient < none,
        "gradient guidance should tighten consistency: {gradient} vs {none}"
    );
}

#[test]
fn quadratic_schedule_spends_steps_near_the_end() {
    // Same budget, same seed: the quadratic sub-sequence visits smaller
    // timesteps in its second half than the uniform one.
    let uni = dmir_core::sampler::make_subsequence(1000, 20, ScheduleKind::Uniform).unwrap();
    let quad = dmir_core::sampler::make_subsequence(1000, 20, ScheduleKind::Quadratic).unwrap();
    let small_uni = uni.iter().filter(|&&t| t <= 100).count();
    let small_quad = quad.iter().filter(|&&t| t <= 100).count();
    assert!(
        small_quad > 2 * small_uni,
        "quadratic {small_quad} vs uniform {small_uni} steps below t=100"
    );
}
