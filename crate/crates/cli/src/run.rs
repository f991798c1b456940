//! `morphx run`: every (schedule, repetition) pair, one CSV log each.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use morphx_core::engine::{parse_rows, run_schedule_with, RunLog, CSV_HEADER};
use morphx_core::{DeskEnvironment, ScheduleConfig};
use rayon::prelude::*;

use crate::config::{Arm, ExperimentConfig};

/// Name of the config copy kept next to the logs.
pub const CONFIG_COPY: &str = "experiment.cfg";

pub fn log_path(out_dir: &Path, arm: &str, seed: u64) -> PathBuf {
    out_dir.join(format!("{arm}_{seed}.csv"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Fresh,
    Resumed { kept_rows: usize },
    AlreadyComplete,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub arm: String,
    pub seed: u64,
    pub status: RunStatus,
    pub log: RunLog,
}

impl RunSummary {
    pub fn line(&self) -> String {
        let l = &self.log.ledger;
        let status = match self.status {
            RunStatus::Fresh => String::new(),
            RunStatus::Resumed { kept_rows } => format!(" (resumed after {kept_rows} rows)"),
            RunStatus::AlreadyComplete => " (already complete)".to_string(),
        };
        format!(
            "{} seed={} used={}/{} phase1={} retrain={} designs={} final={}{}",
            self.arm,
            self.seed,
            l.used_steps(),
            l.max_steps(),
            l.phase1_steps(),
            l.retrain_steps(),
            self.log.rows_of(morphx_core::EventKind::DesignEval).count(),
            self.log.final_objective(),
            status
        )
    }
}

fn probe_writable(out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).with_context(|| format!("cannot create output directory {}", out_dir.display()))?;
    let probe = out_dir.join(".morphx-write-probe");
    File::create(&probe)
        .and_then(|mut f| f.write_all(b"ok"))
        .with_context(|| format!("output directory {} is not writable", out_dir.display()))?;
    fs::remove_file(&probe).ok();
    Ok(())
}

/// The complete lines of a partially written log, header included.
fn complete_prefix(text: &str) -> &str {
    match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    }
}

/// Runs (or resumes) one log, appending each row as soon as it exists.
pub fn run_one(arm: &Arm, seed: u64, out_dir: &Path) -> Result<RunSummary> {
    let config: ScheduleConfig = arm.config.with_seed(seed);
    let path = log_path(out_dir, &arm.name, seed);
    let existing = match fs::read_to_string(&path) {
        Ok(text) => Some(text),
        Err(e) if e.kind() == io::ErrorKind::NotFound => None,
        Err(e) => return Err(e).with_context(|| format!("cannot read {}", path.display())),
    };

    let mut kept = Vec::new();
    if let Some(text) = &existing {
        let prefix = complete_prefix(text);
        if !prefix.is_empty() {
            kept = parse_rows(prefix).with_context(|| format!("{} is not a run log", path.display()))?;
            let log = RunLog::from_csv(config, prefix)?;
            if log.final_row().is_some() {
                return Ok(RunSummary { arm: arm.name.clone(), seed, status: RunStatus::AlreadyComplete, log });
            }
        }
        // Drop any torn trailing line before appending.
        fs::write(&path, if prefix.is_empty() { format!("{CSV_HEADER}\n") } else { prefix.to_string() })?;
    } else {
        fs::write(&path, format!("{CSV_HEADER}\n"))?;
    }

    let mut file = OpenOptions::new().append(true).open(&path)?;
    let mut index = 0;
    let env = DeskEnvironment::default();
    let log = run_schedule_with(&config, &env, |row| {
        let line = row.to_csv_line();
        if let Some(old) = kept.get(index) {
            if old.to_csv_line() != line {
                return Err(morphx_core::Error::Contract(format!(
                    "{} row {} does not match its recomputation; delete the file to start over",
                    path.display(),
                    index + 1
                )));
            }
        } else {
            writeln!(file, "{line}")
                .and_then(|_| file.flush())
                .map_err(|e| morphx_core::Error::Contract(e.to_string()))?;
        }
        index += 1;
        Ok(())
    })?;
    if kept.len() > log.rows.len() {
        bail!("{} has more rows than its recomputation", path.display());
    }
    let status = if existing.is_some() { RunStatus::Resumed { kept_rows: kept.len() } } else { RunStatus::Fresh };
    info!("finished {} seed {}", arm.name, seed);
    Ok(RunSummary { arm: arm.name.clone(), seed, status, log })
}

/// Executes every run of `config`. Seeds are `seed_offset + repetition`.
pub fn cmd_run(
    config_text: &str,
    config: &ExperimentConfig,
    out_dir: &Path,
    seed_offset: u64,
) -> Result<Vec<RunSummary>> {
    probe_writable(out_dir)?;
    let copy = out_dir.join(CONFIG_COPY);
    match fs::read_to_string(&copy) {
        Ok(old) if old != config_text => {
            bail!("{} holds runs of a different configuration ({} differs)", out_dir.display(), copy.display())
        }
        Ok(_) => {}
        Err(_) => fs::write(&copy, config_text).with_context(|| format!("cannot write {}", copy.display()))?,
    }

    let jobs: Vec<(&Arm, u64)> =
        config.arms.iter().flat_map(|arm| (0..config.repetitions).map(move |rep| (arm, seed_offset + rep))).collect();
    jobs.par_iter().map(|(arm, seed)| run_one(arm, *seed, out_dir)).collect()
}
