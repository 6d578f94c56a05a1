//! Command-line driver for the stochastic Stokes-Brinkman reduced-basis
//! ANOVA pipeline.
//!
//! Thread count follows `RAYON_NUM_THREADS` (all available cores by
//! default). Exit code is nonzero on failure, with the failing phase named
//! in the diagnostic.

use anyhow::Context;
use brinkman_rom::driver::{
    build_problem, format_report, monte_carlo_reference, report_from_dir, run_effectivity,
    run_experiment, save_moments, ExperimentConfig, MomentFields,
};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "brinkman",
    about = "Certified reduced-basis / adaptive anchored-ANOVA solver for the stochastic \
             Stokes-Brinkman equations",
    after_help = "Set RAYON_NUM_THREADS to bound the worker thread count."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full experiment pipeline from a config file.
    Run { config: PathBuf },
    /// Train only the stability-constant bounds and write their artifacts.
    ScmTrain { config: PathBuf },
    /// Compute the quasi-Monte-Carlo reference moments.
    McRef {
        config: PathBuf,
        /// sample count (overrides the config)
        #[arg(long)]
        n: Option<usize>,
    },
    /// Sample effectivities of the certified error bounds.
    Effectivity {
        config: PathBuf,
        /// number of random parameters to test
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
    /// Recompute the moment-error table from a finished output directory.
    Report { dir: PathBuf },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)
                .with_context(|| format!("loading {}", config.display()))?;
            let report = run_experiment(&cfg)?;
            print!("{}", format_report(&report));
            println!("artifacts in {}", cfg.output.dir.display());
        }
        Command::ScmTrain { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            std::fs::create_dir_all(&cfg.output.dir)?;
            let problem = build_problem(&cfg)?;
            let stability =
                brinkman_rom::driver::train_stability(&cfg, &problem, &cfg.output.dir)?;
            println!(
                "beta = {:.6e}, coercivity exact set {}, continuity exact set {}",
                stability.beta,
                stability.coercivity.exact_points.len(),
                stability.continuity.exact_points.len()
            );
            println!("artifacts in {}", cfg.output.dir.display());
        }
        Command::McRef { config, n } => {
            let cfg = ExperimentConfig::load(&config)?;
            std::fs::create_dir_all(&cfg.output.dir)?;
            let samples = n.unwrap_or(cfg.monte_carlo.samples);
            let problem = build_problem(&cfg)?;
            let mc = monte_carlo_reference(
                &problem.ops,
                &problem.dec,
                samples,
                Some(&cfg.output.dir.join("mc_checkpoint.json")),
            )?;
            let moments = MomentFields {
                mean_u: mc.mean_u.iter().copied().collect(),
                mean_p: mc.mean_p.iter().copied().collect(),
                variance_u: mc.variance_u.iter().copied().collect(),
                variance_p: mc.variance_p.iter().copied().collect(),
                hf_solves: samples,
                collocation_points: samples,
            };
            save_moments(&cfg.output.dir.join("moments_ref.json"), &moments)?;
            println!(
                "reference moments from {samples} solves written to {}",
                cfg.output.dir.join("moments_ref.json").display()
            );
        }
        Command::Effectivity { config, samples } => {
            let cfg = ExperimentConfig::load(&config)?;
            let rows = run_effectivity(&cfg, samples)?;
            let min = rows
                .iter()
                .map(|r| {
                    r.effectivity_u
                        .min(r.effectivity_p)
                        .min(r.effectivity_combined)
                })
                .fold(f64::INFINITY, f64::min);
            println!(
                "{} samples, smallest effectivity {min:.3}; table in {}",
                rows.len(),
                cfg.output.dir.join("effectivity.csv").display()
            );
        }
        Command::Report { dir } => {
            let report = report_from_dir(&dir)?;
            print!("{}", format_report(&report));
        }
    }
    Ok(())
}
