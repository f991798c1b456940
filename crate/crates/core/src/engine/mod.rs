//! From-scratch co-optimization schedules: single-phase, two-phase with
//! retraining at the end, and two-phase with retraining of every new best.
//!
//! Every design is scored by training a fresh controller for it. All
//! simulated steps, including retraining, are charged to one ledger.

mod runlog;
mod search;

use std::fmt;

use rayon::prelude::*;

pub use runlog::{parse_rows, EventKind, Payload, RunLog, RunRow, CSV_HEADER};

use crate::budget::{effective_budget, BudgetLedger, ChargeCategory, ReductionConfig};
use crate::controller::{
    train_controller_capped, ControllerAlgorithm, ControllerParams, TrainingBudget, TrainingOutcome,
};
use crate::error::{Error, Result};
use crate::genome::{complexity, MorphologyGenome, DEFAULT_SIZE_BIAS};
use crate::optimizers::EsConfig;
use crate::physics::Environment;
use crate::rng::{SeedTree, StreamKind};
use search::DesignSearch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Schedule {
    SinglePhase,
    RetrainEnd,
    RetrainEveryNewBest,
}

impl Schedule {
    pub const ALL: [Schedule; 3] = [Schedule::SinglePhase, Schedule::RetrainEnd, Schedule::RetrainEveryNewBest];

    pub fn name(self) -> &'static str {
        match self {
            Schedule::SinglePhase => "single_phase",
            Schedule::RetrainEnd => "retrain_end",
            Schedule::RetrainEveryNewBest => "retrain_every_new_best",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown schedule {s:?}")))
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleConfig {
    pub schedule: Schedule,
    pub reduction: ReductionConfig,
    /// Budget for full retraining; must cover the reduced per-design budget.
    pub retrain_budget: TrainingBudget,
    pub design_algo: EsConfig,
    pub controller_algo: ControllerAlgorithm,
    pub max_steps: u64,
    pub size_bias: f64,
    pub master_seed: u64,
}

impl ScheduleConfig {
    /// Defaults: retraining with the unreduced base budget, (8 + 16) design
    /// search, CMA-ES controllers.
    pub fn new(schedule: Schedule, reduction: ReductionConfig, max_steps: u64, master_seed: u64) -> Self {
        Self {
            schedule,
            retrain_budget: reduction.base_budget(),
            reduction,
            design_algo: EsConfig::DESIGN,
            controller_algo: ControllerAlgorithm::Cmaes,
            max_steps,
            size_bias: DEFAULT_SIZE_BIAS,
            master_seed,
        }
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn with_seed(mut self, master_seed: u64) -> Self {
        self.master_seed = master_seed;
        self
    }

    pub fn training_budget(&self) -> TrainingBudget {
        effective_budget(&self.reduction)
    }

    /// Retraining with exactly the phase-one budget and the same seed
    /// reproduces phase-one training, so it is never re-run.
    pub fn retraining_is_replay(&self) -> bool {
        self.retrain_budget == self.training_budget()
    }

    pub fn validate(&self) -> Result<()> {
        self.reduction.validate()?;
        self.design_algo.validate()?;
        TrainingBudget::new(self.retrain_budget.episodes, self.retrain_budget.episode_steps)?;
        if !self.retrain_budget.covers(&self.training_budget()) {
            return Err(Error::InvalidConfig(format!(
                "retrain budget {:?} is smaller than the per-design budget {:?}",
                self.retrain_budget,
                self.training_budget()
            )));
        }
        if !(0.0..=1.0).contains(&self.size_bias) {
            return Err(Error::InvalidConfig(format!("size bias must lie in [0, 1], got {}", self.size_bias)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Incumbent {
    genome: MorphologyGenome,
    controller: ControllerParams,
    objective: f64,
    episode_steps: u64,
}

impl Incumbent {
    fn row(&self, used_steps: u64, event: EventKind) -> RunRow {
        RunRow {
            used_steps,
            event,
            genome_id: Some(self.genome.genome_id),
            objective: self.objective,
            complexity: complexity(&self.genome),
            payload: Some(Payload {
                episode_steps: self.episode_steps,
                genome: self.genome.clone(),
                controller: self.controller.clone(),
            }),
        }
    }
}

struct Evaluated {
    genome: MorphologyGenome,
    outcome: TrainingOutcome,
    complete: bool,
}

impl Evaluated {
    fn incumbent(&self, episode_steps: u64) -> Incumbent {
        Incumbent {
            genome: self.genome.clone(),
            controller: self.outcome.params.clone(),
            objective: self.outcome.objective,
            episode_steps,
        }
    }
}

struct Run<'a, E: ?Sized, S> {
    config: ScheduleConfig,
    env: &'a E,
    seeds: SeedTree,
    ledger: BudgetLedger,
    search: DesignSearch,
    rows: Vec<RunRow>,
    sink: S,
    designs: u64,
    retrainings: u64,
}

impl<'a, E, S> Run<'a, E, S>
where
    E: Environment + ?Sized,
    S: FnMut(&RunRow) -> Result<()>,
{
    fn new(config: ScheduleConfig, env: &'a E, sink: S) -> Result<Self> {
        config.validate()?;
        let seeds = SeedTree::new(config.master_seed);
        Ok(Self {
            search: DesignSearch::new(config.design_algo, config.size_bias, &seeds),
            ledger: BudgetLedger::new(config.max_steps),
            config,
            env,
            seeds,
            rows: Vec::new(),
            sink,
            designs: 0,
            retrainings: 0,
        })
    }

    fn emit(&mut self, row: RunRow) -> Result<()> {
        (self.sink)(&row)?;
        self.rows.push(row);
        Ok(())
    }

    fn finish(mut self, best: Option<Incumbent>) -> Result<RunLog> {
        let used = self.ledger.used_steps();
        let row = match best {
            Some(inc) => inc.row(used, EventKind::Final),
            None => RunRow {
                used_steps: used,
                event: EventKind::Final,
                genome_id: None,
                objective: f64::NEG_INFINITY,
                complexity: 0,
                payload: None,
            },
        };
        self.emit(row)?;
        Ok(RunLog { config: self.config, rows: self.rows, ledger: self.ledger })
    }

    /// Trains the next design under the reduced budget, leaving `reserve`
    /// steps untouched. Returns `None` once nothing is left to spend.
    fn evaluate_next_design(&mut self, reserve: u64) -> Result<Option<Evaluated>> {
        let available = self.ledger.remaining().saturating_sub(reserve);
        if available == 0 {
            return Ok(None);
        }
        let genome = self.search.next_design()?;
        let mut rng = self.seeds.stream(StreamKind::ControllerTraining(self.designs));
        self.designs += 1;
        let outcome = train_controller_capped(
            self.env,
            &genome.graph,
            self.config.training_budget(),
            self.config.controller_algo,
            &mut rng,
            Some(available),
        )?;
        self.ledger.charge(outcome.steps_used, ChargeCategory::Phase1);
        // A design cut short by the budget is logged but never ranked.
        let complete = !outcome.truncated;
        self.search.report(if complete { outcome.objective } else { f64::NEG_INFINITY });
        self.emit(RunRow {
            used_steps: self.ledger.used_steps(),
            event: EventKind::DesignEval,
            genome_id: Some(genome.genome_id),
            objective: outcome.objective,
            complexity: complexity(&genome),
            payload: None,
        })?;
        Ok(Some(Evaluated { genome, outcome, complete }))
    }

    /// Full-budget retraining from a fresh controller initialization.
    fn retrain(&mut self, genome: &MorphologyGenome) -> Result<TrainingOutcome> {
        let mut rng = self.seeds.stream(StreamKind::Retraining(self.retrainings));
        self.retrainings += 1;
        let outcome = train_controller_capped(
            self.env,
            &genome.graph,
            self.config.retrain_budget,
            self.config.controller_algo,
            &mut rng,
            Some(self.ledger.remaining()),
        )?;
        self.ledger.charge(outcome.steps_used, ChargeCategory::Retrain);
        Ok(outcome)
    }

    /// Plain co-optimization until `reserve` steps remain.
    fn phase_one(&mut self, reserve: u64) -> Result<Option<Incumbent>> {
        let steps = self.config.training_budget().episode_steps;
        let mut best: Option<Incumbent> = None;
        while let Some(ev) = self.evaluate_next_design(reserve)? {
            if !ev.complete {
                continue;
            }
            if best.as_ref().is_none_or(|b| ev.outcome.objective > b.objective) {
                let inc = ev.incumbent(steps);
                self.emit(inc.row(self.ledger.used_steps(), EventKind::NewBest))?;
                best = Some(inc);
            }
        }
        Ok(best)
    }

    fn single_phase(mut self) -> Result<RunLog> {
        let best = self.phase_one(0)?;
        self.finish(best)
    }

    fn retrain_end(mut self) -> Result<RunLog> {
        if self.config.retraining_is_replay() {
            return self.single_phase();
        }
        let reserve = self.config.retrain_budget.steps();
        let phase_one_best = if self.config.max_steps > reserve { self.phase_one(reserve)? } else { None };
        let genome = match phase_one_best {
            Some(inc) => inc.genome,
            // Not enough budget for a first phase: retrain a random design.
            None => self.search.next_design()?,
        };
        let outcome = self.retrain(&genome)?;
        let retrained = Incumbent {
            genome,
            controller: outcome.params,
            objective: outcome.objective,
            episode_steps: self.config.retrain_budget.episode_steps,
        };
        self.emit(retrained.row(self.ledger.used_steps(), EventKind::Retrain))?;
        self.finish(Some(retrained))
    }

    fn retrain_every_new_best(mut self) -> Result<RunLog> {
        if self.config.retraining_is_replay() {
            return self.single_phase();
        }
        let reduced_steps = self.config.training_budget().episode_steps;
        let mut incumbent: Option<Incumbent> = None;
        while let Some(ev) = self.evaluate_next_design(0)? {
            if !ev.complete {
                continue;
            }
            if incumbent.as_ref().is_some_and(|inc| ev.outcome.objective <= inc.objective) {
                continue;
            }
            let candidate = ev.incumbent(reduced_steps);
            self.emit(candidate.row(self.ledger.used_steps(), EventKind::NewBest))?;
            let outcome = self.retrain(&ev.genome)?;
            if outcome.truncated {
                continue;
            }
            let retrained = Incumbent {
                genome: ev.genome,
                controller: outcome.params,
                objective: outcome.objective,
                episode_steps: self.config.retrain_budget.episode_steps,
            };
            self.emit(retrained.row(self.ledger.used_steps(), EventKind::Retrain))?;
            if incumbent.as_ref().is_none_or(|inc| retrained.objective > inc.objective) {
                incumbent = Some(retrained);
            }
        }
        self.finish(incumbent)
    }
}

/// Runs `config.schedule`, passing each row to `sink` as soon as it exists.
pub fn run_schedule_with<E, S>(config: &ScheduleConfig, env: &E, sink: S) -> Result<RunLog>
where
    E: Environment + ?Sized,
    S: FnMut(&RunRow) -> Result<()>,
{
    let run = Run::new(*config, env, sink)?;
    match config.schedule {
        Schedule::SinglePhase => run.single_phase(),
        Schedule::RetrainEnd => run.retrain_end(),
        Schedule::RetrainEveryNewBest => run.retrain_every_new_best(),
    }
}

pub fn run_schedule<E: Environment + ?Sized>(config: &ScheduleConfig, env: &E) -> Result<RunLog> {
    run_schedule_with(config, env, |_| Ok(()))
}

pub fn run_single_phase<E: Environment + ?Sized>(config: &ScheduleConfig, env: &E) -> Result<RunLog> {
    run_schedule(&config.with_schedule(Schedule::SinglePhase), env)
}

pub fn run_retrain_end<E: Environment + ?Sized>(config: &ScheduleConfig, env: &E) -> Result<RunLog> {
    run_schedule(&config.with_schedule(Schedule::RetrainEnd), env)
}

pub fn run_retrain_every_new_best<E: Environment + ?Sized>(config: &ScheduleConfig, env: &E) -> Result<RunLog> {
    run_schedule(&config.with_schedule(Schedule::RetrainEveryNewBest), env)
}

/// Fraction of runs whose latest new best still wins after retraining.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbabilityPoint {
    pub steps: u64,
    pub probability: f64,
    /// Runs that had found at least one design by this checkpoint.
    pub runs: usize,
}

/// For each new-best design of each log, retrains it and every earlier new
/// best with `retrain_budget` and records whether the newest one wins.
/// Retrained scores use per-design streams and are computed once per design.
pub fn improvement_probability<E>(
    logs: &[RunLog],
    retrain_budget: TrainingBudget,
    algorithm: ControllerAlgorithm,
    env: &E,
    checkpoints: &[u64],
) -> Result<Vec<ProbabilityPoint>>
where
    E: Environment + ?Sized,
{
    let outcomes: Vec<Vec<(u64, bool)>> = logs
        .par_iter()
        .map(|log| {
            let seeds = SeedTree::new(log.master_seed());
            let mut events = Vec::new();
            let mut best_so_far = f64::NEG_INFINITY;
            for (k, row) in log.rows_of(EventKind::NewBest).enumerate() {
                let payload = row.payload.as_ref().ok_or(Error::MissingPayload(k))?;
                let mut rng = seeds.stream(StreamKind::Reassessment(payload.genome.genome_id.0));
                let score =
                    train_controller_capped(env, &payload.genome.graph, retrain_budget, algorithm, &mut rng, None)?
                        .objective;
                events.push((row.used_steps, k == 0 || score > best_so_far));
                best_so_far = best_so_far.max(score);
            }
            Ok(events)
        })
        .collect::<Result<_>>()?;

    Ok(checkpoints
        .iter()
        .filter_map(|&t| {
            let latest: Vec<bool> = outcomes
                .iter()
                .filter_map(|events| events.iter().take_while(|(s, _)| *s <= t).last().map(|(_, w)| *w))
                .collect();
            (!latest.is_empty()).then(|| ProbabilityPoint {
                steps: t,
                probability: latest.iter().filter(|w| **w).count() as f64 / latest.len() as f64,
                runs: latest.len(),
            })
        })
        .collect())
}
