//! Grid runner: expands a config into (task x seed x method x step-budget)
//! cells, runs them on a small worker pool, and writes metrics CSV plus
//! per-cell artifacts (restored images, step diagnostics, resolved config).
//!
//! Pairing contract: the ground truth, measurement noise and chain seed of
//! a cell depend only on (master seed, task, seed), never on the method or
//! the step budget. Method comparisons are therefore matched per seed,
//! which the paired sign tests downstream rely on.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::json;

use dmir_core::image::Image;
use dmir_core::metrics::{cons, mse, psnr, ssim};
use dmir_core::mix_seed;
use dmir_core::operator::{build_task, LinearOperator};
use dmir_core::pnm::{save_pnm, BitDepth};
use dmir_core::prior::GaussianMixturePrior;
use dmir_core::sampler::{sample, RunReport, SamplerConfig};
use dmir_core::schedule::NoiseSchedule;

use crate::config::{ExperimentSpec, Method};
use crate::priors::{build_priors, sample_ground_truth};

/// Images live in [0, 1]; PSNR and SSIM use this peak.
pub const PEAK: f64 = 1.0;

pub const CSV_SCHEMA: &str = "dmir-metrics-v1";

pub const CSV_HEADER: [&str; 11] = [
    "task",
    "method",
    "seed",
    "nfe",
    "psnr_db",
    "ssim",
    "cons",
    "mse",
    "objective",
    "wall_ms",
    "status",
];

/// One CSV row. Metrics are absent when the cell failed; `status` is "ok"
/// or an error description.
#[derive(Debug, Clone)]
pub struct MetricRow {
    pub task: String,
    pub method: Method,
    pub seed: u64,
    pub nfe: usize,
    pub psnr_db: Option<f64>,
    pub ssim: Option<f64>,
    pub cons: Option<f64>,
    pub mse: Option<f64>,
    /// Sum over steps of the pre-guidance residual ‖A x_{0|t} − y‖².
    pub objective: Option<f64>,
    pub wall_ms: u128,
    pub status: String,
}

impl MetricRow {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

pub struct GridOutcome {
    pub rows: Vec<MetricRow>,
    /// Cells whose status is not "ok".
    pub failed: usize,
    pub csv_path: PathBuf,
    pub out_dir: PathBuf,
}

/// One degraded problem instance, shared by every method and step budget.
struct Instance {
    task: String,
    seed: u64,
    operator: LinearOperator,
    sigma_y: f64,
    x_true: Image,
    y: Vec<f64>,
    chain_seed: u64,
    /// Set when writing the ground-truth image failed; cells report it.
    soft_error: Option<String>,
}

struct Cell {
    instance: usize,
    method: Method,
    nfe: usize,
}

fn image_extension(channels: usize) -> &'static str {
    if channels == 3 {
        "ppm"
    } else {
        "pgm"
    }
}

fn build_instances(
    spec: &ExperimentSpec,
    data_prior: &GaussianMixturePrior,
    out_dir: &Path,
) -> Result<Vec<Instance>> {
    let (h, w, c) = (spec.height, spec.width, spec.channels);
    let params = spec.params.to_task_params();
    let mut instances = Vec::with_capacity(spec.tasks.len() * spec.seeds.len());
    for (task_idx, task) in spec.tasks.iter().enumerate() {
        let task_dir = out_dir.join(task);
        if spec.write_images {
            std::fs::create_dir_all(&task_dir)
                .with_context(|| format!("creating {}", task_dir.display()))?;
        }
        for &seed in &spec.seeds {
            let salts = |slot: u64| [task_idx as u64, seed, slot];
            let op_seed = mix_seed(spec.master_seed, &salts(0));
            let (operator, sigma_y) = build_task(task, h, w, c, &params, op_seed)
                .with_context(|| format!("building task '{task}'"))?;

            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.master_seed, &salts(1)));
            let x_true = sample_ground_truth(data_prior, &mut rng);
            let mut y = operator.apply(&x_true).context("degrading ground truth")?;
            if sigma_y > 0.0 {
                for v in &mut y {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v += sigma_y * z;
                }
            }

            let mut soft_error = None;
            if spec.write_images {
                let path = task_dir.join(format!("true_seed{seed}.{}", image_extension(c)));
                if let Err(e) = save_pnm(&path, &x_true, BitDepth::Sixteen) {
                    soft_error = Some(format!("writing {}: {e}", path.display()));
                }
            }

            instances.push(Instance {
                task: task.clone(),
                seed,
                operator,
                sigma_y,
                x_true,
                y,
                chain_seed: mix_seed(spec.master_seed, &salts(2)),
                soft_error,
            });
        }
    }
    Ok(instances)
}

fn write_cell_artifacts(
    spec: &ExperimentSpec,
    inst: &Instance,
    method: Method,
    nfe: usize,
    report: &RunReport,
    out_dir: &Path,
) -> Result<()> {
    let stem = format!("{}_seed{}_n{}", method.name(), inst.seed, nfe);
    let task_dir = out_dir.join(&inst.task);
    let image_path = task_dir.join(format!("{stem}.{}", image_extension(spec.channels)));
    save_pnm(&image_path, &report.x0, BitDepth::Sixteen)
        .with_context(|| format!("writing {}", image_path.display()))?;

    let steps: Vec<serde_json::Value> = report
        .diagnostics
        .iter()
        .map(|d| {
            json!({
                "t": d.t,
                "t_next": d.t_next,
                "residual_pre": d.residual_pre,
                "residual_post": d.residual_post,
                "equivariant": d.equivariant,
                "transform": d.transform.map(|t| t.to_string()),
            })
        })
        .collect();
    let doc = json!({
        "task": inst.task,
        "method": method.name(),
        "seed": inst.seed,
        "nfe_used": report.nfe_used,
        "fd_evals": report.fd_evals,
        "weight_used": report.weight_used,
        "timesteps": report.timesteps,
        "steps": steps,
    });
    let json_path = task_dir.join(format!("{stem}.json"));
    std::fs::write(&json_path, serde_json::to_string_pretty(&doc)?)
        .with_context(|| format!("writing {}", json_path.display()))?;
    Ok(())
}

fn run_cell(
    spec: &ExperimentSpec,
    schedule: &NoiseSchedule,
    sampler_prior: &GaussianMixturePrior,
    inst: &Instance,
    method: Method,
    nfe: usize,
    out_dir: &Path,
) -> MetricRow {
    let started = Instant::now();
    let outcome = (|| -> Result<(RunReport, [f64; 5])> {
        if let Some(err) = &inst.soft_error {
            bail!("{err}");
        }
        let config = SamplerConfig {
            nfe,
            schedule: method.schedule_kind(),
            eta: spec.eta,
            guidance: spec.sampler.guidance_config()?,
            equivariant: method.equivariant(),
            group: spec.sampler.transform_group()?,
            seed: inst.chain_seed,
            sigma_y: inst.sigma_y,
            init_from_pinv: spec.sampler.init_from_pinv,
        };
        let report = sample(sampler_prior, &inst.operator, &inst.y, schedule, &config)?;
        if report.nfe_used != nfe {
            bail!(
                "denoiser call count {} does not match step budget {nfe}",
                report.nfe_used
            );
        }
        let metrics = [
            psnr(&report.x0, &inst.x_true, PEAK)?,
            ssim(&report.x0, &inst.x_true, PEAK)?,
            cons(&inst.operator, &report.x0, &inst.y)?,
            mse(&report.x0, &inst.x_true)?,
            report.diagnostics.iter().map(|d| d.residual_pre).sum(),
        ];
        if spec.write_images {
            write_cell_artifacts(spec, inst, method, nfe, &report, out_dir)?;
        }
        Ok((report, metrics))
    })();
    let wall_ms = started.elapsed().as_millis();
    match outcome {
        Ok((_, [psnr_db, ssim_v, cons_v, mse_v, objective])) => MetricRow {
            task: inst.task.clone(),
            method,
            seed: inst.seed,
            nfe,
            psnr_db: Some(psnr_db),
            ssim: Some(ssim_v),
            cons: Some(cons_v),
            mse: Some(mse_v),
            objective: Some(objective),
            wall_ms,
            status: "ok".into(),
        },
        Err(e) => MetricRow {
            task: inst.task.clone(),
            method,
            seed: inst.seed,
            nfe,
            psnr_db: None,
            ssim: None,
            cons: None,
            mse: None,
            objective: None,
            wall_ms,
            status: format!("error: {e:#}"),
        },
    }
}

fn worker_count(cells: usize) -> usize {
    let configured = std::env::var("DMIR_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1);
    let n =
        configured.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    n.min(cells).max(1)
}

/// Shortest-round-trip decimal for a metric cell; empty when absent.
fn metric_field(v: Option<f64>) -> String {
    match v {
        None => String::new(),
        Some(x) if x == f64::INFINITY => "inf".into(),
        Some(x) if x == f64::NEG_INFINITY => "-inf".into(),
        Some(x) => format!("{x}"),
    }
}

fn write_csv(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut buf = BufWriter::new(file);
    writeln!(buf, "# schema={CSV_SCHEMA}")?;
    let mut writer = csv::Writer::from_writer(buf);
    writer.write_record(CSV_HEADER)?;
    for row in rows {
        writer.write_record([
            row.task.as_str(),
            row.method.name(),
            &row.seed.to_string(),
            &row.nfe.to_string(),
            &metric_field(row.psnr_db),
            &metric_field(row.ssim),
            &metric_field(row.cons),
            &metric_field(row.mse),
            &metric_field(row.objective),
            &row.wall_ms.to_string(),
            row.status.as_str(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a metrics CSV into records with the wall-time column removed, for
/// determinism comparisons. The schema line is kept as the first record.
pub fn comparable_rows(path: &Path) -> Result<Vec<Vec<String>>> {
    let wall_idx = CSV_HEADER
        .iter()
        .position(|&h| h == "wall_ms")
        .expect("header has wall_ms");
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let mut fields: Vec<String> = record.iter().map(str::to_owned).collect();
        if fields.len() == CSV_HEADER.len() {
            fields.remove(wall_idx);
        }
        out.push(fields);
    }
    if out.first().map(|r| r.join(",")) != Some(format!("# schema={CSV_SCHEMA}")) {
        bail!("{} is missing the schema marker", path.display());
    }
    Ok(out)
}

/// Runs the full grid described by `spec` at each step budget in `nfes`.
/// Every cell produces a row; failures are recorded, not fatal.
pub fn run_grid(spec: &ExperimentSpec, nfes: &[usize]) -> Result<GridOutcome> {
    spec.validate()?;
    if nfes.is_empty() {
        bail!("no step budgets requested");
    }
    for &n in nfes {
        if n == 0 || n > spec.schedule.t_total {
            bail!("step budget {n} outside 1..={}", spec.schedule.t_total);
        }
    }
    let out_dir = spec.out_dir.clone();
    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    std::fs::write(out_dir.join("config.resolved.toml"), spec.echo_toml()?)
        .context("echoing resolved config")?;

    let schedule = spec.schedule.build()?;
    let (data_prior, sampler_prior) = build_priors(spec)?;
    let instances = build_instances(spec, &data_prior, &out_dir)?;
    let methods = spec.parsed_methods();

    let mut cells = Vec::new();
    for instance in 0..instances.len() {
        for &method in &methods {
            for &nfe in nfes {
                cells.push(Cell {
                    instance,
                    method,
                    nfe,
                });
            }
        }
    }

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<MetricRow>>> = Mutex::new(vec![None; cells.len()]);
    std::thread::scope(|scope| {
        for _ in 0..worker_count(cells.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cell) = cells.get(i) else { break };
                let row = run_cell(
                    spec,
                    &schedule,
                    &sampler_prior,
                    &instances[cell.instance],
                    cell.method,
                    cell.nfe,
                    &out_dir,
                );
                results.lock().expect("poisoned results")[i] = Some(row);
            });
        }
    });
    let rows: Vec<MetricRow> = results
        .into_inner()
        .expect("poisoned results")
        .into_iter()
        .map(|r| r.expect("every cell produced a row"))
        .collect();

    let csv_path = out_dir.join("metrics.csv");
    write_csv(&csv_path, &rows)?;
    let failed = rows.iter().filter(|r| !r.ok()).count();
    Ok(GridOutcome {
        rows,
        failed,
        csv_path,
        out_dir,
    })
}
