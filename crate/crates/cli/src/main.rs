use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use morphx_cli::{cmd_analyze, cmd_run, parse_config, replay, Experiment, ExperimentConfig, CONFIG_COPY};

#[derive(Parser)]
#[command(name = "morphx", version, about = "Morphology and controller co-optimization experiments")]
struct Cli {
    /// Worker threads (default: all cores)
    #[arg(long, global = true, env = "MORPHX_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every schedule of a config for all repetitions
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: experiment.output from the config)
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed_offset: u64,
    },
    /// Summarize the logs of one experiment
    Analyze {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        experiment: Experiment,
        /// Config to analyze against (default: the copy stored in --out)
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed_offset: u64,
    },
    /// Re-simulate one logged design
    Replay {
        log: PathBuf,
        /// Data row, 0-based, header excluded
        row: usize,
        /// Where to write the per-step trace (default: stdout)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: &Path) -> Result<(String, ExperimentConfig)> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let config = parse_config(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    Ok((text, config))
}

fn execute(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global()?;
    }
    match cli.command {
        Command::Run { config, out, seed_offset } => {
            let (text, parsed) = load_config(&config)?;
            let out = out
                .or_else(|| parsed.output.clone())
                .ok_or_else(|| anyhow!("no output directory: pass --out or set experiment.output"))?;
            for summary in cmd_run(&text, &parsed, &out, seed_offset)? {
                println!("{}", summary.line());
            }
        }
        Command::Analyze { out, experiment, config, seed_offset } => {
            let path = config.unwrap_or_else(|| out.join(CONFIG_COPY));
            let (_, parsed) = load_config(&path)?;
            let report = cmd_analyze(&parsed, &out, experiment, seed_offset)?;
            print!("{}", report.summary);
            for (path, _) in &report.files {
                println!("wrote {}", path.display());
            }
        }
        Command::Replay { log, row, out } => {
            let r = replay(&log, row)?;
            match out {
                Some(path) => fs::write(&path, &r.trace).with_context(|| format!("cannot write {}", path.display()))?,
                None => print!("{}", r.trace),
            }
            eprintln!("frames={} objective={} logged={}", r.frames, r.objective, r.logged);
            if !r.reproduces_log() {
                return Err(anyhow!("replayed objective {} differs from logged {}", r.objective, r.logged));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
