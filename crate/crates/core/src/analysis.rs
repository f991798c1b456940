//! Aggregation of run logs into anytime curves with bootstrap confidence
//! bands: best objective, paired strategy differences, design complexity.

use std::collections::HashMap;
use std::io::{self, Write};

use rand::Rng;
use rayon::prelude::*;

use crate::controller::train_controller_capped;
use crate::engine::{EventKind, RunLog, Schedule};
use crate::error::{Error, Result};
use crate::genome::GenomeId;
use crate::physics::Environment;
use crate::rng::{SeedTree, StreamKind};

pub const DEFAULT_CONFIDENCE: f64 = 0.95;
pub const DEFAULT_RESAMPLES: usize = 10_000;
pub const DEFAULT_CHECKPOINTS: usize = 64;
pub const FIRST_CHECKPOINT: u64 = 1_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapSettings {
    pub confidence: f64,
    pub resamples: usize,
    pub seed: u64,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        Self { confidence: DEFAULT_CONFIDENCE, resamples: DEFAULT_RESAMPLES, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap interval for the mean of `sample`.
pub fn bootstrap_ci<R: Rng + ?Sized>(
    sample: &[f64],
    confidence: f64,
    resamples: usize,
    rng: &mut R,
) -> Result<Interval> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(confidence > 0.0 && confidence < 1.0) || resamples == 0 {
        return Err(Error::InvalidConfig(format!(
            "bootstrap needs 0 < confidence < 1 and at least one resample, got {confidence} and {resamples}"
        )));
    }
    let n = sample.len();
    let mean = sample.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Ok(Interval { mean, lower: mean, upper: mean });
    }
    let mut means: Vec<f64> =
        (0..resamples).map(|_| (0..n).map(|_| sample[rng.random_range(0..n)]).sum::<f64>() / n as f64).collect();
    means.sort_by(f64::total_cmp);
    let alpha = 1.0 - confidence;
    let lower = quantile(&means, alpha / 2.0).min(mean);
    let upper = quantile(&means, 1.0 - alpha / 2.0).max(mean);
    Ok(Interval { mean, lower, upper })
}

/// `count` log-spaced step counts from `from` to `to`, strictly increasing
/// and ending at `to`.
pub fn checkpoint_grid(count: usize, from: u64, to: u64) -> Vec<u64> {
    if to <= from || count < 2 {
        return vec![to];
    }
    let (lf, lt) = ((from as f64).ln(), (to as f64).ln());
    let mut grid: Vec<u64> =
        (0..count).map(|i| (lf + (lt - lf) * i as f64 / (count - 1) as f64).exp().round() as u64).collect();
    *grid.last_mut().expect("count >= 2") = to;
    grid.dedup();
    grid
}

/// Per-run values at shared checkpoints plus their bootstrap summary.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveBundle {
    pub checkpoints: Vec<u64>,
    /// `values[run][i]` is run `run` at `checkpoints[i]`.
    pub values: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl CurveBundle {
    /// Summarizes per-run series. Checkpoints where any run has no value yet
    /// are dropped.
    pub fn from_series(checkpoints: &[u64], series: &[Vec<Option<f64>>], settings: &BootstrapSettings) -> Result<Self> {
        if series.is_empty() {
            return Err(Error::EmptySample);
        }
        if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Contract("checkpoints must be strictly increasing".into()));
        }
        if series.iter().any(|s| s.len() != checkpoints.len()) {
            return Err(Error::CheckpointMismatch);
        }
        let keep: Vec<usize> = (0..checkpoints.len()).filter(|&i| series.iter().all(|s| s[i].is_some())).collect();
        let values: Vec<Vec<f64>> =
            series.iter().map(|s| keep.iter().map(|&i| s[i].expect("filtered")).collect()).collect();
        Self::summarize(keep.iter().map(|&i| checkpoints[i]).collect(), values, settings)
    }

    fn summarize(checkpoints: Vec<u64>, values: Vec<Vec<f64>>, settings: &BootstrapSettings) -> Result<Self> {
        let seeds = SeedTree::new(settings.seed);
        let intervals: Vec<Interval> = (0..checkpoints.len())
            .into_par_iter()
            .map(|i| {
                let column: Vec<f64> = values.iter().map(|v| v[i]).collect();
                let mut rng = seeds.stream(StreamKind::Bootstrap(i as u64));
                bootstrap_ci(&column, settings.confidence, settings.resamples, &mut rng)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            checkpoints,
            values,
            mean: intervals.iter().map(|c| c.mean).collect(),
            lower: intervals.iter().map(|c| c.lower).collect(),
            upper: intervals.iter().map(|c| c.upper).collect(),
        })
    }

    pub fn runs(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checkpoints.is_empty()
    }

    pub fn final_interval(&self) -> Option<Interval> {
        let i = self.checkpoints.len().checked_sub(1)?;
        Some(Interval { mean: self.mean[i], lower: self.lower[i], upper: self.upper[i] })
    }

    /// Keeps only the listed checkpoints, which must all be present.
    pub fn restrict_to(&self, checkpoints: &[u64]) -> Result<Self> {
        let idx: Vec<usize> = checkpoints
            .iter()
            .map(|c| self.checkpoints.binary_search(c).map_err(|_| Error::CheckpointMismatch))
            .collect::<Result<_>>()?;
        let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        Ok(Self {
            checkpoints: checkpoints.to_vec(),
            values: self.values.iter().map(|v| pick(v)).collect(),
            mean: pick(&self.mean),
            lower: pick(&self.lower),
            upper: pick(&self.upper),
        })
    }
}

/// Checkpoints present in both bundles.
pub fn common_checkpoints(a: &CurveBundle, b: &CurveBundle) -> Vec<u64> {
    a.checkpoints.iter().copied().filter(|c| b.checkpoints.binary_search(c).is_ok()).collect()
}

/// Paired per-run differences `a - b`. Both bundles must hold the same runs
/// in the same order at identical checkpoints.
pub fn difference_curve(a: &CurveBundle, b: &CurveBundle, settings: &BootstrapSettings) -> Result<CurveBundle> {
    if a.checkpoints != b.checkpoints {
        return Err(Error::CheckpointMismatch);
    }
    if a.runs() != b.runs() {
        return Err(Error::Contract(format!("cannot pair {} runs with {}", a.runs(), b.runs())));
    }
    let values =
        a.values.iter().zip(&b.values).map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x - y).collect()).collect();
    CurveBundle::summarize(a.checkpoints.clone(), values, settings)
}

/// (used_steps, objective, complexity) each time the run's incumbent changed.
fn incumbent_changes(log: &RunLog) -> Vec<(u64, f64, usize)> {
    let schedule = if log.config.retraining_is_replay() { Schedule::SinglePhase } else { log.config.schedule };
    let mut out: Vec<(u64, f64, usize)> = Vec::new();
    let event = match schedule {
        Schedule::RetrainEveryNewBest => EventKind::Retrain,
        _ => EventKind::NewBest,
    };
    for row in log.rows_of(event) {
        if out.last().is_none_or(|(_, best, _)| row.objective > *best) {
            out.push((row.used_steps, row.objective, row.complexity));
        }
    }
    out
}

fn carry_forward<T: Copy>(changes: &[(u64, T)], checkpoints: &[u64]) -> Vec<Option<T>> {
    checkpoints.iter().map(|&t| changes.iter().take_while(|(s, _)| *s <= t).last().map(|(_, v)| *v)).collect()
}

/// Best objective a run of this schedule would report if stopped at each
/// checkpoint.
///
/// For retraining at the end, stopping at `t` means the first phase ends at
/// `t - reserve` and its best design is then retrained; those retrainings
/// are recomputed here with the run's own retraining stream.
pub fn objective_series<E: Environment + ?Sized>(
    log: &RunLog,
    checkpoints: &[u64],
    env: &E,
) -> Result<Vec<Option<f64>>> {
    let cfg = &log.config;
    if cfg.schedule != Schedule::RetrainEnd || cfg.retraining_is_replay() {
        let changes: Vec<(u64, f64)> = incumbent_changes(log).into_iter().map(|(s, o, _)| (s, o)).collect();
        return Ok(carry_forward(&changes, checkpoints));
    }
    let reserve = cfg.retrain_budget.steps();
    let phase_one: Vec<(u64, &crate::engine::Payload)> = log
        .rows_of(EventKind::NewBest)
        .enumerate()
        .map(|(k, r)| r.payload.as_ref().map(|p| (r.used_steps, p)).ok_or(Error::MissingPayload(k)))
        .collect::<Result<_>>()?;
    let mut cache: HashMap<GenomeId, f64> =
        log.rows_of(EventKind::Retrain).filter_map(|r| r.genome_id.map(|id| (id, r.objective))).collect();
    let seeds = SeedTree::new(cfg.master_seed);
    let mut out = Vec::with_capacity(checkpoints.len());
    for &t in checkpoints {
        if t <= reserve {
            out.push(None);
            continue;
        }
        let Some((_, payload)) = phase_one.iter().take_while(|(s, _)| *s <= t - reserve).last() else {
            out.push(None);
            continue;
        };
        let id = payload.genome.genome_id;
        let score = match cache.get(&id) {
            Some(&v) => v,
            None => {
                let mut rng = seeds.stream(StreamKind::Retraining(0));
                let v = train_controller_capped(
                    env,
                    &payload.genome.graph,
                    cfg.retrain_budget,
                    cfg.controller_algo,
                    &mut rng,
                    None,
                )?
                .objective;
                cache.insert(id, v);
                v
            }
        };
        out.push(Some(score));
    }
    Ok(out)
}

pub fn objective_curve<E: Environment + ?Sized>(
    logs: &[RunLog],
    checkpoints: &[u64],
    env: &E,
    settings: &BootstrapSettings,
) -> Result<CurveBundle> {
    let series: Vec<Vec<Option<f64>>> =
        logs.par_iter().map(|log| objective_series(log, checkpoints, env)).collect::<Result<_>>()?;
    CurveBundle::from_series(checkpoints, &series, settings)
}

/// Complexity of each run's incumbent design over the budget.
pub fn complexity_curve(logs: &[RunLog], checkpoints: &[u64], settings: &BootstrapSettings) -> Result<CurveBundle> {
    let series: Vec<Vec<Option<f64>>> = logs
        .iter()
        .map(|log| {
            let changes: Vec<(u64, f64)> = incumbent_changes(log).into_iter().map(|(s, _, c)| (s, c as f64)).collect();
            carry_forward(&changes, checkpoints)
        })
        .collect();
    CurveBundle::from_series(checkpoints, &series, settings)
}

/// Writes `checkpoint,mean,lower,upper,series` rows for every bundle.
pub fn write_curves_csv<W: Write>(out: &mut W, curves: &[(&str, &CurveBundle)]) -> io::Result<()> {
    writeln!(out, "checkpoint,mean,lower,upper,series")?;
    for (label, c) in curves {
        for i in 0..c.checkpoints.len() {
            writeln!(out, "{},{},{},{},{}", c.checkpoints[i], c.mean[i], c.lower[i], c.upper[i], label)?;
        }
    }
    Ok(())
}
