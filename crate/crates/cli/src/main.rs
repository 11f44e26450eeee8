//! `mfld`: run particle-descent experiments from config files or shipped
//! presets, print the closed-form bounds for a configuration, and run the
//! oracle verification suite.

use mfld::{config, experiment, presets, verify};

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "mfld", version, about = "mean-field Langevin particle engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file.
    Run {
        /// Config file path.
        #[arg(long)]
        config: PathBuf,
        /// Override the seed from [dynamics].
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: config, then MFLD_THREADS, then all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run a shipped preset, optionally overriding individual keys
    /// (`key=value`, e.g. `steps=1000 seed=3`).
    Preset {
        /// Preset name; pass `list` to enumerate.
        name: String,
        /// key=value overrides applied on top of the preset config.
        overrides: Vec<String>,
        /// Override the seed from [dynamics].
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run the oracle verification suite and exit nonzero on any failure.
    Verify,
    /// Print the LSI bounds and theory constants for a config without
    /// running it.
    Bounds {
        #[arg(long)]
        config: PathBuf,
    },
}

fn report(result: &experiment::ExperimentResult) {
    let last = result.output.trace.last().expect("trace has at least one row");
    println!(
        "wrote {} ({} trace rows; final energy {:.6}, model metric {:.6})",
        result.out_dir.display(),
        result.output.trace.len(),
        last.energy,
        last.model_metric
    );
    if result.output.eta_warnings.ratio_exceeded {
        eprintln!("warning: eta exceeds lambda1/(4 lambda2)");
    }
    if result.output.eta_warnings.contraction_exceeded {
        eprintln!("warning: lambda * alpha * eta exceeds 1/4");
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, seed, out, threads } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let cfg = config::parse_config(&text).map_err(|e| anyhow!("{e}"))?;
            for w in &cfg.warnings {
                eprintln!("warning: {w}");
            }
            let base = config.parent().map(Path::to_path_buf);
            let result = experiment::run_experiment(
                &cfg,
                base.as_deref(),
                None,
                threads,
                out.as_deref(),
                seed,
            )?;
            report(&result);
            Ok(())
        }
        Command::Preset { name, overrides, seed, out, threads } => {
            if name == "list" {
                for p in presets::PRESETS {
                    println!("{:<12} {}", p.name, p.summary);
                }
                return Ok(());
            }
            let preset = presets::find(&name).ok_or_else(|| {
                anyhow!(
                    "unknown preset `{name}`; available: {}",
                    presets::PRESETS.iter().map(|p| p.name).collect::<Vec<_>>().join(", ")
                )
            })?;
            let mut raw = config::RawConfig::parse(preset.config).map_err(|e| anyhow!("{e}"))?;
            for o in &overrides {
                raw.apply_override(o).map_err(|e| anyhow!("{e}"))?;
            }
            let cfg = config::typed_config(&raw).map_err(|e| anyhow!("{e}"))?;
            let result =
                experiment::run_experiment(&cfg, None, Some(&name), threads, out.as_deref(), seed)?;
            report(&result);
            Ok(())
        }
        Command::Verify => {
            let failures = verify::run_verify();
            if failures > 0 {
                bail!("{failures} verification check(s) failed");
            }
            Ok(())
        }
        Command::Bounds { config } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let cfg = config::parse_config(&text).map_err(|e| anyhow!("{e}"))?;
            let base = config.parent().map(Path::to_path_buf);
            let model = experiment::build_model(&cfg, base.as_deref())?;
            let reg = mfld_core::Regularizer::new(cfg.reg_weight).map_err(|e| anyhow!("{e}"))?;
            // the moment inputs use the configured Gaussian init analytically
            let d = model.dim() as f64;
            let init_moment = d * (cfg.init_std * cfg.init_std + cfg.init_mean * cfg.init_mean);
            print!("{}", experiment::render_bounds_report(model.as_ref(), &reg, &cfg, init_moment));
            Ok(())
        }
    }
}
