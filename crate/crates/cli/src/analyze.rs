//! `morphx analyze`: curve CSVs and text summaries for Experiments 1-4.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use morphx_core::analysis::{
    checkpoint_grid, common_checkpoints, complexity_curve, difference_curve, objective_curve, write_curves_csv,
    BootstrapSettings, CurveBundle, Interval, FIRST_CHECKPOINT,
};
use morphx_core::engine::ProbabilityPoint;
use morphx_core::{improvement_probability, DeskEnvironment, RunLog, Schedule};

use crate::config::{Arm, ExperimentConfig};
use crate::run::log_path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Experiment {
    Exp1,
    Exp2,
    Exp3,
    Exp4,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Exp1 => "exp1",
            Experiment::Exp2 => "exp2",
            Experiment::Exp3 => "exp3",
            Experiment::Exp4 => "exp4",
        }
    }
}

/// Schedule and reduction factors an experiment needs, with its label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmSpec {
    pub label: &'static str,
    pub schedule: Schedule,
    pub quantity: f64,
    pub length: f64,
}

const fn spec(label: &'static str, schedule: Schedule, quantity: f64, length: f64) -> ArmSpec {
    ArmSpec { label, schedule, quantity, length }
}

use Schedule::{RetrainEnd as RE, RetrainEveryNewBest as RENB, SinglePhase as SP};

pub const EXP1: [ArmSpec; 3] = [
    spec("single_phase_standard", SP, 1.0, 1.0),
    spec("single_phase_reduced_quantity", SP, 0.25, 1.0),
    spec("two_phase", RE, 0.25, 1.0),
];
pub const EXP2: [ArmSpec; 7] = [
    spec("standard", SP, 1.0, 1.0),
    spec("quantity_0.5", RE, 0.5, 1.0),
    spec("quantity_0.25", RE, 0.25, 1.0),
    spec("quantity_0.1", RE, 0.1, 1.0),
    spec("length_0.5", RE, 1.0, 0.5),
    spec("length_0.25", RE, 1.0, 0.25),
    spec("length_0.1", RE, 1.0, 0.1),
];
/// Pairs of (retrain every new best, retrain end) at equal reduction.
pub const EXP3_PAIRS: [(ArmSpec, ArmSpec); 3] = [
    (spec("every_new_best_0.5", RENB, 0.5, 1.0), spec("end_0.5", RE, 0.5, 1.0)),
    (spec("every_new_best_0.25", RENB, 0.25, 1.0), spec("end_0.25", RE, 0.25, 1.0)),
    (spec("every_new_best_0.1", RENB, 0.1, 1.0), spec("end_0.1", RE, 0.1, 1.0)),
];
/// Single-phase arms across the reduction factors of Experiments 3 and 4.
pub const QUANTITY_SWEEP: [ArmSpec; 4] = [
    spec("quantity_1", SP, 1.0, 1.0),
    spec("quantity_0.5", SP, 0.5, 1.0),
    spec("quantity_0.25", SP, 0.25, 1.0),
    spec("quantity_0.1", SP, 0.1, 1.0),
];

pub fn required_arms(experiment: Experiment) -> Vec<ArmSpec> {
    match experiment {
        Experiment::Exp1 => EXP1.to_vec(),
        Experiment::Exp2 => EXP2.to_vec(),
        Experiment::Exp3 => EXP3_PAIRS.iter().flat_map(|(a, b)| [*a, *b]).chain(QUANTITY_SWEEP).collect(),
        Experiment::Exp4 => QUANTITY_SWEEP.to_vec(),
    }
}

/// Loaded logs of one arm, ordered by seed.
pub struct ArmLogs<'a> {
    pub spec: ArmSpec,
    pub arm: &'a Arm,
    pub logs: Vec<RunLog>,
}

fn describe(spec: &ArmSpec) -> String {
    format!("{} with reduced_quantity={} reduced_length={}", spec.schedule.name(), spec.quantity, spec.length)
}

/// Loads every log the specs need; fails listing all that are missing.
pub fn load_arms<'a>(
    config: &'a ExperimentConfig,
    specs: &[ArmSpec],
    out_dir: &Path,
    seed_offset: u64,
) -> Result<Vec<ArmLogs<'a>>> {
    let mut problems = Vec::new();
    let mut loaded = Vec::new();
    for spec in specs {
        let Some(arm) = config.find_arm(spec.schedule, spec.quantity, spec.length) else {
            problems.push(format!("no schedule in the config is {}", describe(spec)));
            continue;
        };
        let mut logs = Vec::new();
        for seed in seed_offset..seed_offset + config.repetitions {
            let path = log_path(out_dir, &arm.name, seed);
            match fs::read_to_string(&path) {
                Ok(text) => match RunLog::from_csv(arm.config.with_seed(seed), &text) {
                    Ok(log) if log.final_row().is_some() => logs.push(log),
                    Ok(_) => problems.push(format!("{} (incomplete)", path.display())),
                    Err(e) => problems.push(format!("{} ({e})", path.display())),
                },
                Err(_) => problems.push(format!("{} (missing)", path.display())),
            }
        }
        loaded.push(ArmLogs { spec: *spec, arm, logs });
    }
    if !problems.is_empty() {
        bail!("cannot analyze, missing inputs:\n  {}", problems.join("\n  "));
    }
    Ok(loaded)
}

/// Everything an analysis produced, written only once complete.
#[derive(Debug, Clone)]
pub struct Report {
    pub files: Vec<(PathBuf, String)>,
    pub summary: String,
}

impl Report {
    pub fn write(&self) -> Result<Vec<PathBuf>> {
        for (path, text) in &self.files {
            fs::write(path, text)?;
        }
        Ok(self.files.iter().map(|(p, _)| p.clone()).collect())
    }
}

fn curves_text(curves: &[(&str, &CurveBundle)]) -> Result<String> {
    let mut out = Vec::new();
    write_curves_csv(&mut out, curves)?;
    Ok(String::from_utf8(out)?)
}

fn interval_text(ci: Option<Interval>) -> String {
    match ci {
        Some(c) => format!("{:.4} [{:.4}, {:.4}]", c.mean, c.lower, c.upper),
        None => "n/a".to_string(),
    }
}

/// Labels ordered by final-checkpoint mean, best first.
pub fn dominance_line(entries: &[(&str, Option<Interval>)]) -> String {
    let mut sorted: Vec<(&str, f64)> = entries.iter().filter_map(|(l, c)| c.map(|c| (*l, c.mean))).collect();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1));
    let parts: Vec<String> = sorted.iter().map(|(l, m)| format!("{l} ({m:.4})")).collect();
    format!("final-checkpoint means in dominance order: {}", parts.join(" > "))
}

/// Difference of two bundles over the checkpoints both define.
pub fn paired_difference(a: &CurveBundle, b: &CurveBundle, settings: &BootstrapSettings) -> Result<CurveBundle> {
    let shared = common_checkpoints(a, b);
    Ok(difference_curve(&a.restrict_to(&shared)?, &b.restrict_to(&shared)?, settings)?)
}

pub struct Analysis<'a> {
    pub config: &'a ExperimentConfig,
    pub checkpoints: Vec<u64>,
    pub settings: BootstrapSettings,
    pub env: DeskEnvironment,
}

impl<'a> Analysis<'a> {
    pub fn new(config: &'a ExperimentConfig) -> Self {
        Self {
            config,
            checkpoints: checkpoint_grid(config.checkpoints, FIRST_CHECKPOINT, config.max_steps),
            settings: BootstrapSettings { resamples: config.bootstrap_resamples, ..Default::default() },
            env: DeskEnvironment::default(),
        }
    }

    pub fn objective(&self, arm: &ArmLogs) -> Result<CurveBundle> {
        Ok(objective_curve(&arm.logs, &self.checkpoints, &self.env, &self.settings)?)
    }

    pub fn complexity(&self, arm: &ArmLogs) -> Result<CurveBundle> {
        Ok(complexity_curve(&arm.logs, &self.checkpoints, &self.settings)?)
    }

    pub fn probability(&self, arm: &ArmLogs) -> Result<Vec<ProbabilityPoint>> {
        let c = &arm.arm.config;
        Ok(improvement_probability(&arm.logs, c.retrain_budget, c.controller_algo, &self.env, &self.checkpoints)?)
    }

    fn header(&self, title: &str) -> String {
        format!("{title}\nruns per arm: {}, budget: {} steps\n", self.config.repetitions, self.config.max_steps)
    }

    fn objective_report(
        &self,
        experiment: Experiment,
        arms: &[ArmLogs],
        out_dir: &Path,
        title: &str,
    ) -> Result<Report> {
        let curves: Vec<CurveBundle> = arms.iter().map(|a| self.objective(a)).collect::<Result<_>>()?;
        let labelled: Vec<(&str, &CurveBundle)> = arms.iter().map(|a| a.spec.label).zip(&curves).collect();
        let mut summary = self.header(title);
        let finals: Vec<(&str, Option<Interval>)> = labelled.iter().map(|(l, c)| (*l, c.final_interval())).collect();
        for (label, ci) in &finals {
            writeln!(summary, "{label:<32} {}", interval_text(*ci))?;
        }
        writeln!(summary, "{}", dominance_line(&finals))?;
        let name = experiment.name();
        match experiment {
            Experiment::Exp1 => {
                let d = paired_difference(&curves[2], &curves[0], &self.settings)?;
                writeln!(
                    summary,
                    "paired difference two_phase - single_phase_standard: {}",
                    interval_text(d.final_interval())
                )?;
            }
            _ => {
                for k in 0..3 {
                    let (q, l) = (&curves[1 + k], &curves[4 + k]);
                    let d = paired_difference(q, l, &self.settings)?;
                    writeln!(
                        summary,
                        "paired difference {} - {}: {}",
                        arms[1 + k].spec.label,
                        arms[4 + k].spec.label,
                        interval_text(d.final_interval())
                    )?;
                }
            }
        }
        Ok(Report {
            files: vec![
                (out_dir.join(format!("{name}_objective.csv")), curves_text(&labelled)?),
                (out_dir.join(format!("{name}_summary.txt")), summary.clone()),
            ],
            summary,
        })
    }

    fn exp3(&self, arms: &[ArmLogs], out_dir: &Path) -> Result<Report> {
        let mut summary = self.header("experiment 3: retrain every new best vs retrain end");
        let mut diffs = Vec::new();
        for k in 0..EXP3_PAIRS.len() {
            let every = self.objective(&arms[2 * k])?;
            let end = self.objective(&arms[2 * k + 1])?;
            diffs.push(paired_difference(&every, &end, &self.settings)?);
        }
        let labels = ["difference_0.5", "difference_0.25", "difference_0.1"];
        for (label, d) in labels.iter().zip(&diffs) {
            writeln!(summary, "{label:<32} {}", interval_text(d.final_interval()))?;
        }
        let mut prob_csv = String::from("steps,probability,runs,series\n");
        writeln!(summary, "probability that the latest new best wins after retraining, at the final checkpoint:")?;
        for arm in &arms[2 * EXP3_PAIRS.len()..] {
            let points = self.probability(arm)?;
            for p in &points {
                writeln!(prob_csv, "{},{},{},{}", p.steps, p.probability, p.runs, arm.spec.label)?;
            }
            let last = points.last().map_or("n/a".to_string(), |p| format!("{:.4} ({} runs)", p.probability, p.runs));
            writeln!(summary, "{:<32} {last}", arm.spec.label)?;
        }
        let labelled: Vec<(&str, &CurveBundle)> = labels.iter().copied().zip(&diffs).collect();
        Ok(Report {
            files: vec![
                (out_dir.join("exp3_difference.csv"), curves_text(&labelled)?),
                (out_dir.join("exp3_probability.csv"), prob_csv),
                (out_dir.join("exp3_summary.txt"), summary.clone()),
            ],
            summary,
        })
    }

    fn exp4(&self, arms: &[ArmLogs], out_dir: &Path) -> Result<Report> {
        let curves: Vec<CurveBundle> = arms.iter().map(|a| self.complexity(a)).collect::<Result<_>>()?;
        let labelled: Vec<(&str, &CurveBundle)> = arms.iter().map(|a| a.spec.label).zip(&curves).collect();
        let mut summary = self.header("experiment 4: complexity of the best design");
        for (label, c) in &labelled {
            writeln!(summary, "{label:<32} {}", interval_text(c.final_interval()))?;
        }
        Ok(Report {
            files: vec![
                (out_dir.join("exp4_complexity.csv"), curves_text(&labelled)?),
                (out_dir.join("exp4_summary.txt"), summary.clone()),
            ],
            summary,
        })
    }

    pub fn report(&self, experiment: Experiment, out_dir: &Path, seed_offset: u64) -> Result<Report> {
        let arms = load_arms(self.config, &required_arms(experiment), out_dir, seed_offset)?;
        match experiment {
            Experiment::Exp1 => {
                self.objective_report(experiment, &arms, out_dir, "experiment 1: single-phase vs two-phase")
            }
            Experiment::Exp2 => {
                self.objective_report(experiment, &arms, out_dir, "experiment 2: reduced quantity vs reduced length")
            }
            Experiment::Exp3 => self.exp3(&arms, out_dir),
            Experiment::Exp4 => self.exp4(&arms, out_dir),
        }
    }
}

/// Analyzes the logs in `out_dir` and writes the report files.
pub fn cmd_analyze(
    config: &ExperimentConfig,
    out_dir: &Path,
    experiment: Experiment,
    seed_offset: u64,
) -> Result<Report> {
    let report = Analysis::new(config).report(experiment, out_dir, seed_offset)?;
    report.write()?;
    Ok(report)
}
