use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use srflow_cli::error::{EXIT_OK, EXIT_USAGE};
use srflow_cli::restore::format_timings;
use srflow_cli::{
    cmd_ablate, cmd_evaluate, cmd_gradcheck, cmd_restore, cmd_synth_data, cmd_train, exit_code, CliError, CotSource,
    RestoreRequest, RunConfig, TrainOptions,
};

#[derive(Debug, Parser)]
#[command(name = "srflow", version, about = "Speech bandwidth restoration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize the corpus with its train/val/test manifests.
    SynthData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `corpus.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model on a synthesized corpus.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Directory written by `synth-data`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `training.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from a saved state stem such as `<out>/last`.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop after this many completed steps without changing the schedule.
        #[arg(long)]
        stop_after: Option<u64>,
    },
    /// Restore one degraded WAV.
    Restore {
        /// Saved state stem, e.g. `runs/x/best`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Degraded 16 kHz mono WAV.
        #[arg(long)]
        input: PathBuf,
        /// Record text describing the input.
        #[arg(long, conflicts_with_all = ["cot_cache", "id"])]
        cot: Option<String>,
        /// Record store to take the record from, with `--id`.
        #[arg(long, requires = "id")]
        cot_cache: Option<PathBuf>,
        /// Utterance id of the record in `--cot-cache`.
        #[arg(long, requires = "cot_cache")]
        id: Option<String>,
        /// Output WAV; a JSON sidecar is written next to it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = srflow_flow::DEFAULT_STEPS)]
        steps: usize,
        /// Noise seed of the sampler.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate a saved state on a manifest.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `evaluation.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train and evaluate the full model and the three ablations.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `training.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check tape gradients against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Coordinates of the training loss to check.
        #[arg(long, default_value_t = 400)]
        samples: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &Path, update: impl FnOnce(&mut RunConfig)) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    update(&mut cfg);
    Ok(cfg)
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::SynthData { config, out, seed } => {
            let cfg = load(&config, |c| c.corpus.seed = seed.unwrap_or(c.corpus.seed))?;
            let s = cmd_synth_data(&cfg, &out)?;
            for split in &s.splits {
                println!("{}: {} utterances, {} speakers", split.name, split.utterances, split.speakers.len());
            }
        }
        Command::Train {
            config,
            data,
            out,
            seed,
            resume,
            stop_after,
        } => {
            let cfg = load(&config, |c| c.training.seed = seed.unwrap_or(c.training.seed))?;
            let s = cmd_train(&cfg, &data, &out, &TrainOptions { resume, stop_after })?;
            println!(
                "{} steps: loss {:.4} -> {:.4}, best validation {:.4} at step {}",
                s.steps, s.initial_loss_avg, s.final_loss_avg, s.best_val_loss, s.best_step
            );
        }
        Command::Restore {
            checkpoint,
            input,
            cot,
            cot_cache,
            id,
            out,
            steps,
            seed,
        } => {
            let cot = match (cot, cot_cache, id) {
                (Some(text), None, None) => CotSource::Text(text),
                (None, Some(store), Some(id)) => CotSource::Cached { store, id },
                _ => return Err(CliError::Usage("give either --cot or --cot-cache with --id".into()).into()),
            };
            let req = RestoreRequest {
                checkpoint,
                input,
                cot,
                output: out,
                steps,
                seed,
            };
            let (r, timings) = cmd_restore(&req)?;
            print!("{}", format_timings(&timings));
            println!("estimated cutoff {:.0} Hz, median F0 {:.1} Hz", r.estimated_cutoff_hz, r.median_f0_hz);
        }
        Command::Evaluate {
            config,
            checkpoint,
            manifest,
            out,
            seed,
        } => {
            let cfg = load(&config, |c| c.evaluation.seed = seed.unwrap_or(c.evaluation.seed))?;
            print!("{}", cmd_evaluate(&cfg, &checkpoint, &manifest, &out)?.render_table());
        }
        Command::Ablate { config, data, out, seed } => {
            let cfg = load(&config, |c| c.training.seed = seed.unwrap_or(c.training.seed))?;
            print!("{}", cmd_ablate(&cfg, &data, &out)?.render());
        }
        Command::Gradcheck { seed, samples, out } => {
            let s = cmd_gradcheck(seed, samples, out.as_deref())?;
            print!("{}", s.render());
            if !s.all_passed() {
                anyhow::bail!("gradient check failed");
            }
        }
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            return ExitCode::from(code as u8);
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
