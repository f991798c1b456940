use std::collections::HashSet;
use std::sync::atomic::{AtomicU64, Ordering};

use morphx_core::controller::TrainingBudget;
use morphx_core::engine::{Payload, RunLog};
use morphx_core::physics::{EpisodeResult, MorphologyGraph};
use morphx_core::{
    improvement_probability, run_retrain_end, run_retrain_every_new_best, run_schedule, run_single_phase,
    ControllerAlgorithm, ControllerParams, DeskEnvironment, Environment, EventKind, ReductionConfig, Result, Schedule,
    ScheduleConfig,
};

fn reduction(q: f64, l: f64, episodes: u64, steps: u64) -> ReductionConfig {
    ReductionConfig { reduced_quantity: q, reduced_length: l, base_episodes: episodes, base_episode_steps: steps }
}

fn small(schedule: Schedule, q: f64, seed: u64) -> ScheduleConfig {
    ScheduleConfig::new(schedule, reduction(q, 1.0, 16, 100), 30_000, seed)
}

/// Wraps the desk environment and tallies every simulated step.
#[derive(Default)]
struct Counting {
    inner: DeskEnvironment,
    steps: AtomicU64,
}

impl Environment for Counting {
    fn episode(&self, graph: &MorphologyGraph, controller: &ControllerParams, steps: u64) -> Result<EpisodeResult> {
        let r = self.inner.episode(graph, controller, steps)?;
        self.steps.fetch_add(r.steps_consumed, Ordering::Relaxed);
        Ok(r)
    }
}

fn check_row_order(log: &RunLog) {
    assert!(log.rows.windows(2).all(|w| w[0].used_steps <= w[1].used_steps));
    assert_eq!(log.rows.last().unwrap().event, EventKind::Final);
    assert_eq!(log.rows_of(EventKind::Final).count(), 1);
}

#[test]
fn ledger_matches_simulated_steps_for_every_schedule() {
    for schedule in Schedule::ALL {
        for q in [1.0, 0.25] {
            for seed in 0..4 {
                let env = Counting::default();
                let cfg = small(schedule, q, seed);
                let log = run_schedule(&cfg, &env).unwrap();
                let simulated = env.steps.load(Ordering::Relaxed);
                assert_eq!(log.ledger.used_steps(), simulated, "{schedule:?} q={q} seed={seed}");
                assert_eq!(log.final_row().unwrap().used_steps, simulated);
                assert!(simulated <= cfg.max_steps);
                assert_eq!(log.ledger.phase1_steps() + log.ledger.retrain_steps(), simulated);
                check_row_order(&log);
            }
        }
    }
}

#[test]
fn budget_of_five_designs() {
    // 4 episodes of 500 steps cost 2000 per design unless the design is
    // passive, which takes a single episode.
    let mut checked = 0;
    for seed in 0..20 {
        let cfg = ScheduleConfig::new(Schedule::SinglePhase, reduction(1.0, 1.0, 4, 500), 10_000, seed);
        let log = run_single_phase(&cfg, &DeskEnvironment::default()).unwrap();
        let evals: Vec<_> = log.rows_of(EventKind::DesignEval).collect();
        if evals.iter().all(|r| r.complexity > 0) {
            assert_eq!(evals.len(), 5, "seed {seed}");
            let steps: Vec<u64> = evals.iter().map(|r| r.used_steps).collect();
            assert_eq!(steps, vec![2000, 4000, 6000, 8000, 10_000]);
            checked += 1;
        }
        assert!(log.ledger.is_exhausted());
    }
    assert!(checked >= 5, "only {checked} seeds had no passive design");
}

#[test]
fn schedules_are_deterministic() {
    for schedule in Schedule::ALL {
        let cfg = small(schedule, 0.25, 11);
        let env = DeskEnvironment::default();
        let a = run_schedule(&cfg, &env).unwrap();
        let b = run_schedule(&cfg, &env).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv(), b.to_csv());
    }
}

#[test]
fn unreduced_two_phase_equals_single_phase() {
    let env = DeskEnvironment::default();
    for seed in 0..5 {
        let cfg = small(Schedule::SinglePhase, 1.0, seed);
        let single = run_single_phase(&cfg, &env).unwrap();
        let end = run_retrain_end(&cfg, &env).unwrap();
        let every = run_retrain_every_new_best(&cfg, &env).unwrap();
        assert_eq!(single.rows, end.rows);
        assert_eq!(single.rows, every.rows);
        assert_eq!(single.to_csv(), end.to_csv());
    }
}

#[test]
fn best_so_far_only_improves() {
    for seed in 0..5 {
        let log = run_single_phase(&small(Schedule::SinglePhase, 0.5, seed), &DeskEnvironment::default()).unwrap();
        let best: Vec<f64> = log.rows_of(EventKind::NewBest).map(|r| r.objective).collect();
        assert!(!best.is_empty());
        assert!(best.windows(2).all(|w| w[0] < w[1]));
        let top = log.rows_of(EventKind::DesignEval).map(|r| r.objective).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(log.final_objective(), top);
    }
}

#[test]
fn retrain_end_retrains_the_phase_one_best_once() {
    for seed in 0..4 {
        let cfg = small(Schedule::RetrainEnd, 0.25, seed);
        let log = run_retrain_end(&cfg, &DeskEnvironment::default()).unwrap();
        let retrains: Vec<_> = log.rows_of(EventKind::Retrain).collect();
        assert_eq!(retrains.len(), 1);
        let last_best = log.rows_of(EventKind::NewBest).last().unwrap();
        assert_eq!(retrains[0].genome_id, last_best.genome_id);
        assert_eq!(log.final_objective(), retrains[0].objective);
        assert_eq!(log.ledger.retrain_steps(), cfg.retrain_budget.steps());
        let payload = log.final_row().unwrap().payload.as_ref().unwrap();
        assert_eq!(payload.episode_steps, cfg.retrain_budget.episode_steps);
    }
}

#[test]
fn retrain_end_without_room_for_a_first_phase() {
    let cfg = ScheduleConfig { max_steps: 1_000, ..small(Schedule::RetrainEnd, 0.25, 3) };
    let env = Counting::default();
    let log = run_retrain_end(&cfg, &env).unwrap();
    assert_eq!(log.rows_of(EventKind::DesignEval).count(), 0);
    assert_eq!(log.rows_of(EventKind::Retrain).count(), 1);
    assert_eq!(env.steps.load(Ordering::Relaxed), log.ledger.used_steps());
    assert!(log.ledger.used_steps() <= 1_000);
}

#[test]
fn retrain_every_new_best_keeps_the_best_retrained_design() {
    for seed in 0..4 {
        let cfg = small(Schedule::RetrainEveryNewBest, 0.25, seed);
        let log = run_retrain_every_new_best(&cfg, &DeskEnvironment::default()).unwrap();
        let mut seen = HashSet::new();
        let mut incumbent = f64::NEG_INFINITY;
        for row in &log.rows {
            match row.event {
                EventKind::NewBest => {
                    seen.insert(row.genome_id);
                }
                EventKind::Retrain => {
                    assert!(seen.contains(&row.genome_id), "retrain of an unannounced design");
                    incumbent = incumbent.max(row.objective);
                }
                _ => {}
            }
        }
        assert!(log.rows_of(EventKind::Retrain).count() >= 1);
        assert_eq!(log.final_objective(), incumbent);
        let payload: &Payload = log.final_row().unwrap().payload.as_ref().unwrap();
        assert_eq!(payload.episode_steps, cfg.retrain_budget.episode_steps);
    }
}

#[test]
fn reduced_quantity_evaluates_about_four_times_the_designs() {
    let env = DeskEnvironment::default();
    let (mut full, mut quarter) = (0, 0);
    for seed in 0..6 {
        full += run_single_phase(&small(Schedule::SinglePhase, 1.0, seed), &env)
            .unwrap()
            .rows_of(EventKind::DesignEval)
            .count();
        quarter += run_retrain_end(&small(Schedule::RetrainEnd, 0.25, seed), &env)
            .unwrap()
            .rows_of(EventKind::DesignEval)
            .count();
    }
    let ratio = quarter as f64 / full as f64;
    assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn csv_round_trip() {
    let cfg = small(Schedule::RetrainEveryNewBest, 0.25, 2);
    let log = run_schedule(&cfg, &DeskEnvironment::default()).unwrap();
    let text = log.to_csv();
    assert!(text.starts_with("used_steps,event,genome_id,objective,complexity,payload\n"));
    let back = RunLog::from_csv(cfg, &text).unwrap();
    assert_eq!(back.rows, log.rows);
    assert_eq!(back.ledger.used_steps(), log.ledger.used_steps());
    assert_eq!(back.to_csv(), text);
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = small(Schedule::RetrainEnd, 0.25, 0);
    cfg.retrain_budget = TrainingBudget { episodes: 2, episode_steps: 100 };
    assert!(run_schedule(&cfg, &DeskEnvironment::default()).is_err());
    let mut cfg = small(Schedule::SinglePhase, 0.0, 0);
    cfg.reduction.reduced_quantity = 0.0;
    assert!(run_schedule(&cfg, &DeskEnvironment::default()).is_err());
}

#[test]
fn improvement_probability_is_a_probability() {
    let env = DeskEnvironment::default();
    let logs: Vec<RunLog> =
        (0..4).map(|s| run_single_phase(&small(Schedule::SinglePhase, 0.25, s), &env).unwrap()).collect();
    let budget = TrainingBudget::new(16, 100).unwrap();
    let checkpoints = [500, 5_000, 15_000, 30_000];
    let curve = improvement_probability(&logs, budget, ControllerAlgorithm::Cmaes, &env, &checkpoints).unwrap();
    assert!(!curve.is_empty());
    for p in &curve {
        assert!((0.0..=1.0).contains(&p.probability));
        assert!(p.runs >= 1 && p.runs <= logs.len());
    }
    assert!(improvement_probability(&[], budget, ControllerAlgorithm::Cmaes, &env, &checkpoints).unwrap().is_empty());
}

#[test]
fn lone_new_best_always_counts_as_an_improvement() {
    let env = DeskEnvironment::default();
    let mut logs = Vec::new();
    for s in 0..3 {
        let mut log = run_single_phase(&small(Schedule::SinglePhase, 1.0, s), &env).unwrap();
        let first = log.rows.iter().position(|r| r.event == EventKind::NewBest).unwrap();
        log.rows.retain(|r| r.event != EventKind::NewBest);
        let row = run_single_phase(&small(Schedule::SinglePhase, 1.0, s), &env).unwrap().rows[first].clone();
        log.rows.insert(first, row);
        logs.push(log);
    }
    let budget = TrainingBudget::new(16, 100).unwrap();
    let curve = improvement_probability(&logs, budget, ControllerAlgorithm::Cmaes, &env, &[30_000]).unwrap();
    assert_eq!(curve.len(), 1);
    assert_eq!(curve[0].probability, 1.0);
    assert_eq!(curve[0].runs, 3);
}
