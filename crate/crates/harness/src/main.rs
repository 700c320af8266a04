//! Command-line entry point for the restoration experiment harness.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use dmir_core::operator::{build_task, TaskParams};
use dmir_core::pnm::{load_pnm, save_pnm, BitDepth};
use dmir_core::sampler::{make_subsequence, ScheduleKind};
use dmir_harness::config::{ExperimentSpec, Method};
use dmir_harness::runner::run_grid;

#[derive(Parser)]
#[command(
    name = "dmir",
    about = "Diffusion-prior image restoration experiment harness",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment grid described by a TOML config file.
    Run { spec: PathBuf },
    /// Run the grid with all four methods enabled, regardless of config.
    Ablate { spec: PathBuf },
    /// Run the grid once per step budget in the config's nfe_sweep list.
    NfeSweep { spec: PathBuf },
    /// Print the reverse-process timestep sub-sequence.
    Schedule {
        /// Total diffusion steps T.
        t_total: usize,
        /// Step budget N.
        nfe: usize,
        /// Spacing: uniform or quadratic.
        kind: String,
    },
    /// Apply a degradation operator and its pseudo-inverse to a PNM image.
    Degrade {
        /// One of: inpaint, sr, cs, gaussian-deblur, colorize.
        task: String,
        /// Input image (binary PGM or PPM).
        image: PathBuf,
        /// Seed for randomized operators (mask pattern, sensing matrix).
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run_and_report(spec: &ExperimentSpec, nfes: &[usize]) -> Result<bool> {
    let outcome = run_grid(spec, nfes)?;
    for row in outcome.rows.iter().filter(|r| !r.ok()) {
        eprintln!(
            "FAILED {} {} seed={} n={}: {}",
            row.task, row.method, row.seed, row.nfe, row.status
        );
    }
    println!(
        "wrote {} ({} rows, {} failed)",
        outcome.csv_path.display(),
        outcome.rows.len(),
        outcome.failed
    );
    Ok(outcome.failed == 0)
}

fn cmd_grid(spec_path: &Path, ablate: bool, sweep: bool) -> Result<bool> {
    let mut spec = ExperimentSpec::load(spec_path)?;
    if ablate {
        spec.methods = Method::ALL.iter().map(|m| m.name().into()).collect();
    }
    let nfes: Vec<usize> = if sweep {
        spec.nfe_sweep.clone()
    } else {
        vec![spec.nfe]
    };
    run_and_report(&spec, &nfes)
}

fn cmd_schedule(t_total: usize, nfe: usize, kind: &str) -> Result<()> {
    let kind = ScheduleKind::parse(kind)?;
    let steps = make_subsequence(t_total, nfe, kind)?;
    let rendered: Vec<String> = steps.iter().map(|t| t.to_string()).collect();
    println!("{}", rendered.join(" "));
    Ok(())
}

fn cmd_degrade(task: &str, image_path: &Path, seed: u64) -> Result<()> {
    let image =
        load_pnm(image_path).with_context(|| format!("loading {}", image_path.display()))?;
    let (h, w, c) = image.shape();
    let params = TaskParams::default();
    let (operator, _) = build_task(task, h, w, c, &params, seed)?;
    let y = operator.apply(&image)?;
    let restored = operator.apply_pinv(&y)?;
    let residual = dmir_core::metrics::cons(&operator, &restored, &y)?;

    let ext = if c == 3 { "pinv.ppm" } else { "pinv.pgm" };
    let out_path = image_path.with_extension(ext);
    save_pnm(&out_path, &restored, BitDepth::Sixteen)
        .with_context(|| format!("writing {}", out_path.display()))?;
    println!(
        "task={task} m={} n={} cons={}",
        operator.m(),
        operator.n(),
        residual
    );
    println!("wrote {}", out_path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { spec } => cmd_grid(spec, false, false),
        Command::Ablate { spec } => cmd_grid(spec, true, false),
        Command::NfeSweep { spec } => cmd_grid(spec, false, true),
        Command::Schedule { t_total, nfe, kind } => {
            cmd_schedule(*t_total, *nfe, kind).map(|()| true)
        }
        Command::Degrade { task, image, seed } => cmd_degrade(task, image, *seed).map(|()| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
