//! Guided reverse-diffusion sampling over a decreasing timestep
//! sub-sequence, with an optional transform-averaged trajectory.
//!
//! Each step denoises once, applies measurement guidance to the clean
//! estimate, records consistency diagnostics, then takes the stochastic
//! reverse step. When the equivariant trajectory is enabled, every
//! odd-indexed step routes the denoiser through a group transform:
//! x0 = T⁻¹ D(T x_t). Transforms rotate round-robin through the configured
//! group, so an identity-only group reproduces the standard trajectory bit
//! for bit. Noise is drawn from the seeded stream unconditionally every
//! step, which keeps runs with different trajectories or guidance modes
//! sample-aligned for paired comparisons.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diffusion::{estimate_x0, reverse_step};
use crate::error::{Error, Result};
use crate::guidance::{
    apply_guidance, effective_weight, guide_gradient, guide_pinv, guide_transpose, GuidanceConfig,
    GuidanceMode,
};
use crate::image::Image;
use crate::metrics::cons;
use crate::operator::LinearOperator;
use crate::prior::NoisePredictor;
use crate::schedule::NoiseSchedule;
use crate::transform::{Transform, TransformGroup};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Uniform,
    Quadratic,
}

impl ScheduleKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(ScheduleKind::Uniform),
            "quadratic" => Ok(ScheduleKind::Quadratic),
            other => Err(Error::InvalidArgument(format!(
                "unknown schedule kind '{other}' (expected uniform or quadratic)"
            ))),
        }
    }
}

impl std::fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScheduleKind::Uniform => "uniform",
            ScheduleKind::Quadratic => "quadratic",
        })
    }
}

/// Strictly decreasing timesteps from T down to 1 (single-step chains keep
/// just T). Uniform spacing is even over [1, T]; quadratic spacing
/// t_i = round(T (i/N)²) concentrates steps at small t where the reverse
/// dynamics change fastest.
pub fn make_subsequence(t_total: usize, nfe: usize, kind: ScheduleKind) -> Result<Vec<usize>> {
    if nfe == 0 {
        return Err(Error::InvalidArgument(
            "step budget must be positive".into(),
        ));
    }
    if nfe > t_total {
        return Err(Error::InvalidArgument(format!(
            "step budget {nfe} exceeds schedule length {t_total}"
        )));
    }
    if nfe == 1 {
        return Ok(vec![t_total]);
    }
    let t = t_total as f64;
    let n = nfe as f64;
    let mut s: Vec<i64> = (0..nfe)
        .map(|j| {
            let raw = match kind {
                ScheduleKind::Uniform => t - j as f64 * (t - 1.0) / (n - 1.0),
                ScheduleKind::Quadratic => {
                    let frac = (nfe - j) as f64 / n;
                    t * frac * frac
                }
            };
            raw.round() as i64
        })
        .collect();
    // Rounding can create ties; enforce strict decrease without moving the
    // endpoints: clamp forward, pin the tail at 1, then push back up.
    s[0] = t_total as i64;
    for j in 1..nfe {
        s[j] = s[j].min(s[j - 1] - 1);
    }
    s[nfe - 1] = 1;
    for j in (0..nfe - 1).rev() {
        s[j] = s[j].max(s[j + 1] + 1);
    }
    debug_assert_eq!(s[0], t_total as i64);
    Ok(s.into_iter().map(|v| v as usize).collect())
}

#[derive(Debug, Clone)]
pub struct SamplerConfig {
    /// Number of denoiser-driven steps (equals the sub-sequence length).
    pub nfe: usize,
    pub schedule: ScheduleKind,
    /// Stochasticity knob in [0, 1]; 0 is deterministic, 1 is ancestral.
    pub eta: f64,
    pub guidance: GuidanceConfig,
    /// Route odd-indexed steps through group transforms.
    pub equivariant: bool,
    pub group: TransformGroup,
    pub seed: u64,
    /// Measurement noise level, shrinks the guidance weight.
    pub sigma_y: f64,
    /// Start from √ᾱ_T A†y + √(1−ᾱ_T) z instead of pure noise.
    pub init_from_pinv: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            nfe: 50,
            schedule: ScheduleKind::Uniform,
            eta: 0.0,
            guidance: GuidanceConfig::default(),
            equivariant: false,
            group: TransformGroup::horizontal_flip(),
            seed: 0,
            sigma_y: 0.0,
            init_from_pinv: false,
        }
    }
}

/// Per-step telemetry: measurement residuals before and after guidance and
/// which trajectory the step took.
#[derive(Debug, Clone)]
pub struct StepDiagnostic {
    pub t: usize,
    pub t_next: usize,
    /// ‖A x0 − y‖² for the raw clean estimate.
    pub residual_pre: f64,
    /// ‖A x̃ − y‖² after guidance.
    pub residual_post: f64,
    pub equivariant: bool,
    pub transform: Option<Transform>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub x0: Image,
    pub diagnostics: Vec<StepDiagnostic>,
    /// Denoiser evaluations spent driving the chain (one per step).
    pub nfe_used: usize,
    /// Extra denoiser evaluations spent on finite-difference guidance.
    pub fd_evals: usize,
    /// Effective guidance weight after the noise-level shrink.
    pub weight_used: f64,
    pub timesteps: Vec<usize>,
}

pub fn sample(
    predictor: &dyn NoisePredictor,
    operator: &LinearOperator,
    y: &[f64],
    schedule: &NoiseSchedule,
    config: &SamplerConfig,
) -> Result<RunReport> {
    let (h, w, c) = operator.input_shape();
    let m = operator.m();
    if y.len() != m {
        return Err(Error::ShapeMismatch {
            expected: format!("measurement of length {m}"),
            got: format!("{}", y.len()),
        });
    }
    if !(config.eta.is_finite() && (0.0..=1.0).contains(&config.eta)) {
        return Err(Error::InvalidArgument(format!(
            "eta {} outside [0, 1]",
            config.eta
        )));
    }
    if !(config.sigma_y.is_finite() && config.sigma_y >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise level {} must be non-negative",
            config.sigma_y
        )));
    }
    config.guidance.validate(h * w * c)?;
    let timesteps = make_subsequence(schedule.len(), config.nfe, config.schedule)?;
    let weight_used = effective_weight(config.guidance.weight, config.sigma_y, m);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let z = Image::standard_normal(h, w, c, &mut rng);
    let mut x = if config.init_from_pinv {
        let ab = schedule.alpha_bar(timesteps[0]);
        let anchor = operator.apply_pinv(y)?;
        anchor.zip_with(&z, |a, zi| ab.sqrt() * a + (1.0 - ab).sqrt() * zi)?
    } else {
        z
    };

    let mut diagnostics = Vec::with_capacity(timesteps.len());
    let mut eq_counter = 0usize;
    let mut fd_evals = 0usize;

    for (i, &t) in timesteps.iter().enumerate() {
        let t_next = timesteps.get(i + 1).copied().unwrap_or(0);
        let is_eq_step = config.equivariant && i % 2 == 1;
        let transform: Option<Transform> = if is_eq_step {
            let f = config.group.next_transform(eq_counter);
            eq_counter += 1;
            Some(f)
        } else {
            None
        };

        // One denoiser evaluation either way.
        let x0_hat = match &transform {
            Some(f) => {
                let xt_f = f.apply(&x)?;
                let eps_f = predictor.predict_eps(&xt_f, t, schedule)?;
                let x0_f = estimate_x0(&xt_f, &eps_f, t, schedule)?;
                f.apply_inverse(&x0_f)?
            }
            None => {
                let eps = predictor.predict_eps(&x, t, schedule)?;
                estimate_x0(&x, &eps, t, schedule)?
            }
        };

        let residual_pre = cons(operator, &x0_hat, y)?;

        let x_tilde = match config.guidance.mode {
            GuidanceMode::None => x0_hat,
            GuidanceMode::PseudoInverse => {
                let g = guide_pinv(operator, y, &x0_hat)?;
                apply_guidance(&x0_hat, &g, weight_used)?
            }
            GuidanceMode::Transpose => {
                let g = guide_transpose(operator, y, &x0_hat)?;
                apply_guidance(&x0_hat, &g, weight_used)?
            }
            GuidanceMode::Gradient => {
                let (grad, evals) = guide_gradient(
                    operator,
                    y,
                    &x,
                    |img| {
                        let eps = predictor.predict_eps(img, t, schedule)?;
                        estimate_x0(img, &eps, t, schedule)
                    },
                    config.guidance.fd_step,
                )?;
                fd_evals += evals;
                // Descend the measurement loss.
                apply_guidance(&x0_hat, &grad, -weight_used)?
            }
        };

        let residual_post = cons(operator, &x_tilde, y)?;
        diagnostics.push(StepDiagnostic {
            t,
            t_next,
            residual_pre,
            residual_post,
            equivariant: is_eq_step,
            transform,
        });

        // Drawn even when eta or the step variance is zero so that seeded
        // streams stay aligned across configurations.
        let noise = Image::standard_normal(h, w, c, &mut rng);
        x = reverse_step(&x, &x_tilde, t, t_next, schedule, config.eta, &noise)?;
    }

    Ok(RunReport {
        nfe_used: timesteps.len(),
        fd_evals,
        weight_used,
        x0: x,
        diagnostics,
        timesteps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::GaussianMixturePrior;

    fn setup(h: usize, w: usize) -> (GaussianMixturePrior, LinearOperator, NoiseSchedule) {
        let mean = Image::constant(h, w, 1, 0.3);
        let prior = GaussianMixturePrior::single(mean, 0.5).unwrap();
        let keep: Vec<bool> = (0..h * w).map(|i| i % 2 == 0).collect();
        let op = LinearOperator::mask(h, w, 1, keep).unwrap();
        let sched = NoiseSchedule::linear(100, 1e-4, 2e-2).unwrap();
        (prior, op, sched)
    }

    #[test]
    fn quadratic_subsequence_frozen_example() {
        let s = make_subsequence(100, 10, ScheduleKind::Quadratic).unwrap();
        assert_eq!(s, vec![100, 81, 64, 49, 36, 25, 16, 9, 4, 1]);
    }

    #[test]
    fn uniform_subsequence_frozen_example() {
        let s = make_subsequence(100, 10, ScheduleKind::Uniform).unwrap();
        assert_eq!(s, vec![100, 89, 78, 67, 56, 45, 34, 23, 12, 1]);
    }

    #[test]
    fn subsequence_endpoints_and_monotonicity() {
        for kind in [ScheduleKind::Uniform, ScheduleKind::Quadratic] {
            for (t_total, nfe) in [(1000, 50), (1000, 2), (100, 100), (5, 5), (7, 3)] {
                let s = make_subsequence(t_total, nfe, kind).unwrap();
                assert_eq!(s.len(), nfe);
                assert_eq!(s[0], t_total);
                assert_eq!(*s.last().unwrap(), 1);
                for k in 1..s.len() {
                    assert!(s[k] < s[k - 1], "{kind:?} {t_total}/{nfe}: {s:?}");
                }
            }
        }
        assert_eq!(
            make_subsequence(50, 1, ScheduleKind::Uniform).unwrap(),
            vec![50]
        );
        assert!(make_subsequence(10, 0, ScheduleKind::Uniform).is_err());
        assert!(make_subsequence(10, 11, ScheduleKind::Uniform).is_err());
    }

    #[test]
    fn full_length_subsequence_counts_down() {
        let want: Vec<usize> = (1..=20).rev().collect();
        for kind in [ScheduleKind::Uniform, ScheduleKind::Quadratic] {
            assert_eq!(make_subsequence(20, 20, kind).unwrap(), want);
        }
    }

    #[test]
    fn nfe_accounting_matches_budget() {
        let (prior, op, sched) = setup(2, 2);
        let y = op.apply(&Image::constant(2, 2, 1, 0.4)).unwrap();
        let config = SamplerConfig {
            nfe: 5,
            ..SamplerConfig::default()
        };
        let report = sample(&prior, &op, &y, &sched, &config).unwrap();
        assert_eq!(report.nfe_used, 5);
        assert_eq!(report.fd_evals, 0);
        assert_eq!(report.diagnostics.len(), 5);
        assert_eq!(report.timesteps.len(), 5);
        assert_eq!(report.timesteps[0], 100);
        assert_eq!(report.diagnostics[0].t, 100);
        assert_eq!(report.diagnostics[4].t_next, 0);
    }

    #[test]
    fn runs_are_bitwise_deterministic() {
        let (prior, op, sched) = setup(4, 4);
        let y = op.apply(&Image::constant(4, 4, 1, 0.6)).unwrap();
        let config = SamplerConfig {
            nfe: 8,
            eta: 1.0,
            guidance: GuidanceConfig {
                mode: GuidanceMode::PseudoInverse,
                ..GuidanceConfig::default()
            },
            seed: 42,
            ..SamplerConfig::default()
        };
        let a = sample(&prior, &op, &y, &sched, &config).unwrap();
        let b = sample(&prior, &op, &y, &sched, &config).unwrap();
        assert_eq!(a.x0.data(), b.x0.data());
        for (da, db) in a.diagnostics.iter().zip(&b.diagnostics) {
            assert_eq!(da.residual_pre.to_bits(), db.residual_pre.to_bits());
            assert_eq!(da.residual_post.to_bits(), db.residual_post.to_bits());
        }
    }

    #[test]
    fn identity_group_matches_standard_trajectory_bitwise() {
        let (prior, op, sched) = setup(4, 4);
        let y = op.apply(&Image::constant(4, 4, 1, 0.2)).unwrap();
        let base = SamplerConfig {
            nfe: 10,
            eta: 1.0,
            guidance: GuidanceConfig {
                mode: GuidanceMode::PseudoInverse,
                ..GuidanceConfig::default()
            },
            seed: 7,
            ..SamplerConfig::default()
        };
        let eq = SamplerConfig {
            equivariant: true,
            group: TransformGroup::identity(),
            ..base.clone()
        };
        let a = sample(&prior, &op, &y, &sched, &base).unwrap();
        let b = sample(&prior, &op, &y, &sched, &eq).unwrap();
        assert_eq!(a.x0.data(), b.x0.data());
        assert!(b.diagnostics[1].equivariant);
        assert!(!b.diagnostics[0].equivariant);
    }

    #[test]
    fn pinv_guidance_keeps_every_step_consistent() {
        let (prior, op, sched) = setup(4, 4);
        let y = op.apply(&Image::constant(4, 4, 1, 0.9)).unwrap();
        let config = SamplerConfig {
            nfe: 10,
            guidance: GuidanceConfig {
                mode: GuidanceMode::PseudoInverse,
                ..GuidanceConfig::default()
            },
            ..SamplerConfig::default()
        };
        let report = sample(&prior, &op, &y, &sched, &config).unwrap();
        for d in &report.diagnostics {
            assert!(
                d.residual_post < 1e-16,
                "step t={} residual {}",
                d.t,
                d.residual_post
            );
        }
        // Output is the final guided estimate.
        let final_res = cons(&op, &report.x0, &y).unwrap();
        assert_eq!(
            final_res.to_bits(),
            report.diagnostics.last().unwrap().residual_post.to_bits()
        );
    }

    #[test]
    fn equivariant_steps_rotate_through_group() {
        let (prior, op, sched) = setup(4, 4);
        let y = op.apply(&Image::constant(4, 4, 1, 0.1)).unwrap();
        let group = TransformGroup::parse("hflip+vflip").unwrap();
        let config = SamplerConfig {
            nfe: 6,
            equivariant: true,
            group,
            ..SamplerConfig::default()
        };
        let report = sample(&prior, &op, &y, &sched, &config).unwrap();
        let transforms: Vec<_> = report
            .diagnostics
            .iter()
            .filter_map(|d| d.transform)
            .collect();
        assert_eq!(transforms.len(), 3); // steps 1, 3, 5
        assert_eq!(transforms[0], Transform::HorizontalFlip);
        assert_eq!(transforms[1], Transform::VerticalFlip);
        assert_eq!(transforms[2], Transform::HorizontalFlip);
    }

    #[test]
    fn rejects_bad_arguments() {
        let (prior, op, sched) = setup(2, 2);
        let y = vec![0.0; op.m()];
        let bad_eta = SamplerConfig {
            eta: 1.5,
            ..SamplerConfig::default()
        };
        assert!(sample(&prior, &op, &y, &sched, &bad_eta).is_err());
        let bad_nfe = SamplerConfig {
            nfe: 0,
            ..SamplerConfig::default()
        };
        assert!(sample(&prior, &op, &y, &sched, &bad_nfe).is_err());
        assert!(sample(&prior, &op, &y[..1], &sched, &SamplerConfig::default()).is_err());
    }
}
