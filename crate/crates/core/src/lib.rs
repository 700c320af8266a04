//! Diffusion-model image restoration: schedules, exact mixture priors,
//! linear measurement operators with closed-form pseudo-inverses, guided
//! reverse sampling with an equivariant trajectory option, quality metrics,
//! and PNM image I/O.
//!
//! Everything is deterministic given explicit seeds: samplers and operator
//! constructors take a seed and derive their streams from ChaCha8, so equal
//! configurations reproduce results bit for bit.

pub mod diffusion;
pub mod error;
pub mod guidance;
pub mod image;
pub mod metrics;
pub mod operator;
pub mod pnm;
pub mod prior;
pub mod sampler;
pub mod schedule;
pub mod transform;
mod util;

pub use error::{Error, Result};
pub use image::Image;
pub use schedule::NoiseSchedule;
pub use util::mix_seed;
