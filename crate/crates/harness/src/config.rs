//! Experiment configuration: one TOML file describes the task grid, the
//! prior, the sampler settings, and the output location. Every run echoes
//! the fully resolved configuration (defaults filled in) back into the
//! output directory for provenance.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use dmir_core::guidance::{GuidanceConfig, GuidanceMode};
use dmir_core::operator::{TaskParams, TASK_NAMES};
use dmir_core::sampler::ScheduleKind;
use dmir_core::schedule::NoiseSchedule;
use dmir_core::transform::TransformGroup;

/// The method matrix: trajectory toggle x step-spacing toggle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Baseline,
    Equivariant,
    Quadratic,
    EquivariantQuadratic,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Baseline,
        Method::Equivariant,
        Method::Quadratic,
        Method::EquivariantQuadratic,
    ];

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "baseline" => Method::Baseline,
            "equivariant" => Method::Equivariant,
            "quadratic" => Method::Quadratic,
            "equivariant+quadratic" | "quadratic+equivariant" => Method::EquivariantQuadratic,
            other => bail!(
                "unknown method '{other}' (expected baseline, equivariant, quadratic \
                 or equivariant+quadratic)"
            ),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Equivariant => "equivariant",
            Method::Quadratic => "quadratic",
            Method::EquivariantQuadratic => "equivariant+quadratic",
        }
    }

    pub fn equivariant(&self) -> bool {
        matches!(self, Method::Equivariant | Method::EquivariantQuadratic)
    }

    pub fn schedule_kind(&self) -> ScheduleKind {
        match self {
            Method::Baseline | Method::Equivariant => ScheduleKind::Uniform,
            Method::Quadratic | Method::EquivariantQuadratic => ScheduleKind::Quadratic,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSpec {
    pub t_total: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            t_total: 1000,
            beta_start: 1e-4,
            beta_end: 2e-2,
        }
    }
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<NoiseSchedule> {
        Ok(NoiseSchedule::linear(
            self.t_total,
            self.beta_start,
            self.beta_end,
        )?)
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamsSpec {
    pub sigma_y: f64,
    pub mask_keep: f64,
    /// Optional rectangular hole [y, x, height, width] for inpainting.
    pub hole: Option<[usize; 4]>,
    pub sr_factor: usize,
    pub cs_ratio: f64,
    pub cs_block: usize,
    pub blur_sigma: f64,
    pub blur_support: usize,
    pub blur_eps_pinv: f64,
}

impl Default for ParamsSpec {
    fn default() -> Self {
        let d = TaskParams::default();
        Self {
            sigma_y: d.sigma_y,
            mask_keep: d.mask_keep,
            hole: None,
            sr_factor: d.sr_factor,
            cs_ratio: d.cs_ratio,
            cs_block: d.cs_block,
            blur_sigma: d.blur_sigma,
            blur_support: d.blur_support,
            blur_eps_pinv: d.blur_eps_pinv,
        }
    }
}

impl ParamsSpec {
    pub fn to_task_params(&self) -> TaskParams {
        TaskParams {
            sigma_y: self.sigma_y,
            mask_keep: self.mask_keep,
            hole: self.hole.map(|h| (h[0], h[1], h[2], h[3])),
            sr_factor: self.sr_factor,
            cs_ratio: self.cs_ratio,
            cs_block: self.cs_block,
            blur_sigma: self.blur_sigma,
            blur_support: self.blur_support,
            blur_eps_pinv: self.blur_eps_pinv,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSpec {
    /// Guidance mode: pinv, transpose, gradient or none.
    pub guidance: String,
    pub weight: f64,
    pub fd_step: f64,
    pub allow_large_gradient: bool,
    /// Transform group for the equivariant trajectory, e.g. "hflip" or
    /// "hflip+vflip".
    pub group: String,
    pub init_from_pinv: bool,
}

impl Default for SamplerSpec {
    fn default() -> Self {
        Self {
            guidance: "pinv".into(),
            weight: 1.0,
            fd_step: 1e-4,
            allow_large_gradient: false,
            group: "hflip".into(),
            init_from_pinv: false,
        }
    }
}

impl SamplerSpec {
    pub fn guidance_config(&self) -> Result<GuidanceConfig> {
        Ok(GuidanceConfig {
            mode: GuidanceMode::parse(&self.guidance)?,
            weight: self.weight,
            fd_step: self.fd_step,
            allow_large_gradient: self.allow_large_gradient,
        })
    }

    pub fn transform_group(&self) -> Result<TransformGroup> {
        Ok(TransformGroup::parse(&self.group)?)
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSpec {
    /// Number of base mixture components before symmetrization.
    pub components: usize,
    /// Seed for the smooth random component means.
    pub mean_seed: u64,
    /// Low-resolution grid side for smooth mean generation.
    pub grid: usize,
    /// Amplitude of the generated means around the mid-gray level.
    pub scale: f64,
    /// Shared per-component variance.
    pub variance: f64,
    /// Explicit constant means; overrides generation when non-empty.
    pub constant_means: Vec<f64>,
    /// Transform group to close the mixture over, or absent for none.
    pub symmetrize: Option<String>,
    /// Asymmetric perturbation applied to the sampler's copy of the prior
    /// only; 0 keeps sampler and data priors identical.
    pub perturb: f64,
    pub perturb_seed: u64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            components: 4,
            mean_seed: 7,
            grid: 4,
            scale: 0.6,
            variance: 0.05,
            constant_means: Vec::new(),
            symmetrize: Some("hflip".into()),
            perturb: 0.0,
            perturb_seed: 99,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub master_seed: u64,
    pub nfe: usize,
    /// Step budgets exercised by the nfe-sweep subcommand.
    pub nfe_sweep: Vec<usize>,
    pub eta: f64,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub tasks: Vec<String>,
    pub methods: Vec<String>,
    /// Write restored/true images and per-step diagnostics next to the CSV.
    pub write_images: bool,
    pub schedule: ScheduleSpec,
    pub params: ParamsSpec,
    pub sampler: SamplerSpec,
    pub prior: PriorSpec,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            out_dir: PathBuf::from("runs/experiment"),
            seeds: (0..8).collect(),
            master_seed: 0,
            nfe: 25,
            nfe_sweep: vec![5, 10, 25, 50],
            eta: 1.0,
            height: 16,
            width: 16,
            channels: 1,
            tasks: vec!["inpaint".into(), "sr".into(), "cs".into()],
            methods: Method::ALL.iter().map(|m| m.name().into()).collect(),
            write_images: true,
            schedule: ScheduleSpec::default(),
            params: ParamsSpec::default(),
            sampler: SamplerSpec::default(),
            prior: PriorSpec::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let spec: ExperimentSpec =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("seeds list is empty");
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            bail!("seeds must be distinct");
        }
        if self.nfe == 0 || self.nfe > self.schedule.t_total {
            bail!(
                "step budget {} outside 1..={}",
                self.nfe,
                self.schedule.t_total
            );
        }
        for n in &self.nfe_sweep {
            if *n == 0 || *n > self.schedule.t_total {
                bail!(
                    "swept step budget {n} outside 1..={}",
                    self.schedule.t_total
                );
            }
        }
        if self.height == 0 || self.width == 0 {
            bail!("image size must be positive");
        }
        if !(self.channels == 1 || self.channels == 3) {
            bail!("channels must be 1 or 3 for image artifacts");
        }
        if self.tasks.is_empty() {
            bail!("tasks list is empty");
        }
        for t in &self.tasks {
            if !TASK_NAMES.contains(&t.as_str()) {
                bail!("unknown task '{t}' (expected one of {TASK_NAMES:?})");
            }
        }
        if self.methods.is_empty() {
            bail!("methods list is empty");
        }
        for m in &self.methods {
            Method::parse(m)?;
        }
        if !(self.eta.is_finite() && (0.0..=1.0).contains(&self.eta)) {
            bail!("eta {} outside [0, 1]", self.eta);
        }
        if self.prior.components == 0 && self.prior.constant_means.is_empty() {
            bail!("prior needs at least one component");
        }
        if self.prior.variance <= 0.0 {
            bail!("prior variance must be positive");
        }
        if self.prior.grid == 0 {
            bail!("prior mean grid must be positive");
        }
        if self.prior.perturb < 0.0 {
            bail!("prior perturbation must be non-negative");
        }
        self.sampler.guidance_config()?;
        self.sampler.transform_group()?;
        self.schedule.build()?;
        Ok(())
    }

    pub fn parsed_methods(&self) -> Vec<Method> {
        self.methods
            .iter()
            .map(|m| Method::parse(m).expect("validated"))
            .collect()
    }

    /// Serializes the resolved configuration (defaults included) for
    /// provenance.
    pub fn echo_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}
