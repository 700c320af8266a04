//! Builds the experiment's mixture priors: smooth random component means
//! (low-resolution Gaussian grids upsampled bilinearly), optional group
//! symmetrization, and an optional asymmetric perturbation applied only to
//! the sampler's copy so the data prior stays exact.

use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use dmir_core::image::Image;
use dmir_core::prior::GaussianMixturePrior;
use dmir_core::transform::TransformGroup;

use crate::config::{ExperimentSpec, PriorSpec};

/// Bilinearly upsamples a g x g x c grid of values to h x w x c.
fn upsample(grid: &[f64], g: usize, h: usize, w: usize, c: usize) -> Image {
    let pos = |out: usize, len: usize| -> (usize, usize, f64) {
        if len == 1 || g == 1 {
            return (0, 0, 0.0);
        }
        let t = out as f64 * (g - 1) as f64 / (len - 1) as f64;
        let lo = (t.floor() as usize).min(g - 2);
        (lo, lo + 1, t - lo as f64)
    };
    let mut data = vec![0.0; h * w * c];
    for y in 0..h {
        let (y0, y1, fy) = pos(y, h);
        for x in 0..w {
            let (x0, x1, fx) = pos(x, w);
            for ch in 0..c {
                let at = |gy: usize, gx: usize| grid[(gy * g + gx) * c + ch];
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bot = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                data[(y * w + x) * c + ch] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    Image::new(h, w, c, data).expect("constructed with matching length")
}

/// Smooth random mean image centered on mid-gray.
pub fn smooth_mean(
    h: usize,
    w: usize,
    c: usize,
    grid: usize,
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> Image {
    let g = grid.max(1);
    let coarse: Vec<f64> = (0..g * g * c)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect();
    upsample(&coarse, g, h, w, c).map(|v| 0.5 + v)
}

fn base_means(spec: &PriorSpec, h: usize, w: usize, c: usize) -> Vec<Image> {
    if !spec.constant_means.is_empty() {
        return spec
            .constant_means
            .iter()
            .map(|&v| Image::constant(h, w, c, v))
            .collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.mean_seed);
    (0..spec.components)
        .map(|_| smooth_mean(h, w, c, spec.grid, spec.scale, &mut rng))
        .collect()
}

/// Returns (data prior, sampler prior). They coincide unless a perturbation
/// is configured, in which case the sampler sees component means shifted by
/// seeded rough noise, breaking any symmetry the data prior has.
pub fn build_priors(spec: &ExperimentSpec) -> Result<(GaussianMixturePrior, GaussianMixturePrior)> {
    let (h, w, c) = (spec.height, spec.width, spec.channels);
    let means = base_means(&spec.prior, h, w, c);
    let k = means.len();
    let weights = vec![1.0 / k as f64; k];
    let variances = vec![spec.prior.variance; k];
    let mut data_prior =
        GaussianMixturePrior::new(weights, means, variances).context("building mixture prior")?;
    if let Some(group_name) = &spec.prior.symmetrize {
        let group = TransformGroup::parse(group_name).context("prior symmetrization group")?;
        data_prior = data_prior
            .symmetrize(&group)
            .context("symmetrizing prior")?;
    }

    let sampler_prior = if spec.prior.perturb > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.prior.perturb_seed);
        let eps = spec.prior.perturb;
        let means: Vec<Image> = data_prior
            .means()
            .iter()
            .map(|m| {
                let noise = Image::standard_normal(h, w, c, &mut rng);
                m.zip_with(&noise, |a, z| a + eps * z).expect("same shape")
            })
            .collect();
        GaussianMixturePrior::new(
            data_prior.weights().to_vec(),
            means,
            data_prior.variances().to_vec(),
        )
        .context("perturbing sampler prior")?
    } else {
        data_prior.clone()
    };
    Ok((data_prior, sampler_prior))
}

/// Draws a ground-truth image from the mixture: pick a component by its
/// weight, then add isotropic component noise.
pub fn sample_ground_truth(prior: &GaussianMixturePrior, rng: &mut ChaCha8Rng) -> Image {
    let u: f64 = rng.random();
    let k = prior.component_from_uniform(u);
    let sd = prior.variances()[k].sqrt();
    let (h, w, c) = prior.shape();
    let noise = Image::standard_normal(h, w, c, rng);
    prior.means()[k]
        .zip_with(&noise, |m, z| m + sd * z)
        .expect("matching shapes")
}
