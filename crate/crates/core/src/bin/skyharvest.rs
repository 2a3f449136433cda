use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use skyharvest::harness::{self, exit, Design, RunConfig, TrainOptions, GRADCHECK_TOLERANCE};
use skyharvest::{ConfigError, Error};

/// UAV data collection and wireless charging simulator with a multi-objective DDPG trainer.
#[derive(Parser)]
#[command(name = "skyharvest", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a policy and write logs, checkpoints and a manifest to DIR.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Continue from the newest checkpoint in DIR.
        #[arg(long)]
        resume: bool,
        /// Stop after this many episodes (the run can be resumed later).
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Evaluate a saved actor without exploration noise.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Defaults to `eval_episodes` from the config.
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write propulsion, harvester and LoS curves as CSV.
    Curves {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate every preset for every seed and tabulate the results.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated preset names.
        #[arg(long, default_value = "sodr,soec")]
        preset: String,
        /// Inclusive range `A..B` or a comma-separated list.
        #[arg(long, default_value = "1..5")]
        seeds: String,
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
        /// Worker threads; defaults to the number of CPUs.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Check backpropagation against finite differences on random networks.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load(path: Option<&Path>) -> Result<RunConfig, ConfigError> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn run(cli: Cli) -> Result<i32, Error> {
    match cli.command {
        Command::Train { config, seed, out, resume, stop_after } => {
            let mut cfg = load(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let summary = harness::cmd_train(&cfg, &out, &TrainOptions { resume, stop_after })?;
            println!("trained {} episodes into {}", summary.episodes, out.display());
        }
        Command::Eval { checkpoint, config, episodes, seed, out } => {
            let mut cfg = load(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let report = harness::cmd_eval(&checkpoint, &cfg, episodes.unwrap_or(cfg.eval_episodes))?;
            let csv = report.to_csv();
            match out {
                Some(path) => std::fs::write(&path, csv).map_err(|e| Error::io(format!("writing {}", path.display()), e))?,
                None => print!("{csv}"),
            }
        }
        Command::Curves { config, out } => {
            let cfg = load(config.as_deref())?;
            for path in harness::cmd_curves(&cfg, &out)? {
                println!("{}", path.display());
            }
        }
        Command::Sweep { config, preset, seeds, out, jobs } => {
            let cfg = load(config.as_deref())?;
            let designs = preset.split(',').map(|p| Design::preset(p.trim())).collect::<Result<Vec<_>, _>>()?;
            let seeds = harness::parse_seeds(&seeds).map_err(Error::InvalidArgument)?;
            let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let outcome = harness::cmd_sweep(&cfg, &designs, &seeds, &out, jobs)?;
            println!("{}", out.join(harness::COMPARISON_FILE).display());
            if outcome.failures() > 0 {
                eprintln!("{} of {} runs failed", outcome.failures(), outcome.rows.len());
                return Ok(exit::PARTIAL_SWEEP);
            }
        }
        Command::Gradcheck { cases, seed } => {
            let errors = harness::cmd_gradcheck(cases, seed)?;
            let mut failed = 0;
            for (i, e) in errors.iter().enumerate() {
                let ok = *e < GRADCHECK_TOLERANCE;
                failed += usize::from(!ok);
                println!("case {i:>3}: max relative error {e:.3e} {}", if ok { "ok" } else { "FAIL" });
            }
            if failed > 0 {
                eprintln!("{failed} of {cases} cases exceed {GRADCHECK_TOLERANCE:e}");
                return Ok(exit::RUNTIME);
            }
        }
    }
    Ok(exit::OK)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SKYHARVEST_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE as u8 } else { exit::OK as u8 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(harness::exit_code(&e) as u8)
        }
    }
}
