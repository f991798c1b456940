//! Open-loop oscillator controllers and their from-scratch training for a
//! fixed design.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::optimizers::{cma_ask, cma_tell, default_lambda, es_step, gaussian_mutation, CmaState, EsConfig};
use crate::physics::{
    control_dim, Environment, EpisodeResult, MorphologyGraph, MAX_AMPLITUDE, MAX_OFFSET, PARAMS_PER_ACTUATOR,
};

/// Initial search spread, as a fraction of the parameter box width.
pub const INITIAL_SIGMA_FRACTION: f64 = 0.3;
/// Width of the normalized box `[-1, 1]` that optimizers search in.
const BOX_WIDTH: f64 = 2.0;

/// Per-actuator (amplitude, phase, offset) triples, flattened in edge order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ControllerParams {
    values: Vec<f64>,
}

impl ControllerParams {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn zeros(len: usize) -> Self {
        Self::new(vec![0.0; len])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Maps a point of the normalized search box onto physical parameters.
    pub fn decode(z: &[f64]) -> Self {
        let scale = [MAX_AMPLITUDE, PI, MAX_OFFSET];
        let values = z.iter().enumerate().map(|(i, v)| scale[i % PARAMS_PER_ACTUATOR] * v.clamp(-1.0, 1.0)).collect();
        Self { values }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TrainingBudget {
    pub episodes: u64,
    pub episode_steps: u64,
}

impl TrainingBudget {
    pub fn new(episodes: u64, episode_steps: u64) -> Result<Self> {
        if episodes == 0 || episode_steps == 0 {
            return Err(Error::InvalidConfig(format!(
                "training budget needs positive episodes and episode length, got {episodes} x {episode_steps}"
            )));
        }
        Ok(Self { episodes, episode_steps })
    }

    /// Simulation steps of a full training run without divergence.
    pub fn steps(&self) -> u64 {
        self.episodes * self.episode_steps
    }

    /// True when `self` grants at least as much as `other` on both axes.
    pub fn covers(&self, other: &TrainingBudget) -> bool {
        self.episodes >= other.episodes && self.episode_steps >= other.episode_steps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ControllerAlgorithm {
    #[default]
    Cmaes,
    MuCommaLambda,
}

impl ControllerAlgorithm {
    pub fn name(self) -> &'static str {
        match self {
            ControllerAlgorithm::Cmaes => "cmaes",
            ControllerAlgorithm::MuCommaLambda => "mu_comma_lambda",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cmaes" => Some(Self::Cmaes),
            "mu_comma_lambda" => Some(Self::MuCommaLambda),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutcome {
    pub params: ControllerParams,
    /// Best objective over every evaluated candidate.
    pub objective: f64,
    /// Exact sum of simulated steps.
    pub steps_used: u64,
    pub episodes_run: u64,
    /// Set when a step cap cut the training short.
    pub truncated: bool,
}

struct Tracker {
    best: Option<(ControllerParams, f64)>,
    steps_used: u64,
    episodes_run: u64,
    truncated: bool,
}

impl Tracker {
    fn record(&mut self, params: &ControllerParams, result: &EpisodeResult) {
        self.steps_used += result.steps_consumed;
        self.episodes_run += 1;
        let better = match &self.best {
            None => true,
            Some((_, f)) => result.objective > *f,
        };
        if better {
            self.best = Some((params.clone(), result.objective));
        }
    }
}

/// Budget bookkeeping for one training call. Episode `j` may simulate at
/// most `cap - j * episode_steps` steps, so a capped call never exceeds its
/// cap and its plan does not depend on evaluation order.
struct EpisodePlan {
    episode_steps: u64,
    cap: u64,
    next: u64,
}

impl EpisodePlan {
    fn allowances(&mut self, count: usize) -> Vec<u64> {
        (0..count)
            .map(|_| {
                let reserved = self.next.saturating_mul(self.episode_steps);
                self.next += 1;
                self.cap.saturating_sub(reserved).min(self.episode_steps)
            })
            .collect()
    }
}

/// Squared distance outside the search box. Points outside decode to the same
/// controller as their projection, so ranking subtracts this to keep the
/// search from drifting across a flat region.
fn boundary_penalty(z: &[f64]) -> f64 {
    z.iter().map(|v| (v - v.clamp(-1.0, 1.0)).powi(2)).sum()
}

/// Trains a controller of dimension `dim` against an arbitrary episode
/// scorer. `eval` receives the decoded controller and the number of steps it
/// may simulate.
pub fn optimize_controller<R, F>(
    dim: usize,
    budget: TrainingBudget,
    algorithm: ControllerAlgorithm,
    rng: &mut R,
    step_cap: Option<u64>,
    eval: F,
) -> Result<TrainingOutcome>
where
    R: Rng + ?Sized,
    F: Fn(&ControllerParams, u64) -> Result<EpisodeResult> + Sync,
{
    let mut plan = EpisodePlan { episode_steps: budget.episode_steps, cap: step_cap.unwrap_or(u64::MAX), next: 0 };
    let mut tracker = Tracker { best: None, steps_used: 0, episodes_run: 0, truncated: false };

    // Evaluates a batch in parallel; results are merged in candidate order.
    let mut run_batch = |points: &[Vec<f64>], tracker: &mut Tracker| -> Result<Option<Vec<f64>>> {
        let allowances = plan.allowances(points.len());
        let params: Vec<ControllerParams> = points.iter().map(|z| ControllerParams::decode(z)).collect();
        let results: Vec<Option<EpisodeResult>> = params
            .par_iter()
            .zip(allowances.par_iter())
            .map(|(p, &steps)| if steps == 0 { Ok(None) } else { eval(p, steps).map(Some) })
            .collect::<Result<_>>()?;
        let mut fitness = Vec::with_capacity(points.len());
        for (((p, r), &steps), z) in params.iter().zip(&results).zip(&allowances).zip(points) {
            match r {
                Some(r) => {
                    tracker.record(p, r);
                    fitness.push(r.objective - boundary_penalty(z));
                }
                None => fitness.push(f64::NEG_INFINITY),
            }
            if steps < budget.episode_steps {
                tracker.truncated = true;
            }
        }
        Ok((!tracker.truncated).then_some(fitness))
    };

    let total = budget.episodes as usize;
    let sigma0 = INITIAL_SIGMA_FRACTION * BOX_WIDTH;
    let lambda = default_lambda(dim);

    if dim == 0 {
        // A passive design gets a single scoring episode.
        run_batch(&[Vec::new()], &mut tracker)?;
    } else if total < lambda {
        let points: Vec<Vec<f64>> =
            (0..total).map(|_| (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect()).collect();
        run_batch(&points, &mut tracker)?;
    } else {
        let generations = total / lambda;
        let remainder = total % lambda;
        match algorithm {
            ControllerAlgorithm::Cmaes => {
                let mut state = CmaState::with_lambda(vec![0.0; dim], sigma0, lambda);
                for _ in 0..generations {
                    let xs = cma_ask(&state, rng);
                    match run_batch(&xs, &mut tracker)? {
                        Some(fs) => state = cma_tell(&state, &xs, &fs)?,
                        None => break,
                    }
                }
                if remainder > 0 && !tracker.truncated {
                    let xs = cma_ask(&state, rng);
                    run_batch(&xs[..remainder], &mut tracker)?;
                }
            }
            ControllerAlgorithm::MuCommaLambda => {
                let config = EsConfig { mu: lambda / 2, lambda, elitist: false, step_size: sigma0 };
                let mut pop: Vec<Vec<f64>> =
                    (0..lambda).map(|_| gaussian_mutation(&vec![0.0; dim], sigma0, rng)).collect();
                let mut fit: Vec<f64> = run_batch(&pop, &mut tracker)?.unwrap_or_default();
                let mut produced = 1;
                while !tracker.truncated && (produced < generations || (produced == generations && remainder > 0)) {
                    let step = config.step_size;
                    let offspring =
                        es_step(&pop, &fit, &config, |x: &Vec<f64>, r: &mut R| gaussian_mutation(x, step, r), rng)?;
                    let take = if produced < generations { lambda } else { remainder };
                    let children = &offspring.children[..take];
                    let Some(fs) = run_batch(children, &mut tracker)? else { break };
                    if take < lambda {
                        break;
                    }
                    (pop, fit) = offspring.into_pool(fs);
                    produced += 1;
                }
            }
        }
    }

    let (params, objective) = tracker.best.unwrap_or((ControllerParams::zeros(dim), f64::NEG_INFINITY));
    Ok(TrainingOutcome {
        params,
        objective,
        steps_used: tracker.steps_used,
        episodes_run: tracker.episodes_run,
        truncated: tracker.truncated,
    })
}

/// Trains a fresh controller for `graph` from scratch.
pub fn train_controller<E, R>(
    env: &E,
    graph: &MorphologyGraph,
    budget: TrainingBudget,
    algorithm: ControllerAlgorithm,
    rng: &mut R,
) -> Result<TrainingOutcome>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    train_controller_capped(env, graph, budget, algorithm, rng, None)
}

/// As [`train_controller`], never simulating more than `step_cap` steps.
pub fn train_controller_capped<E, R>(
    env: &E,
    graph: &MorphologyGraph,
    budget: TrainingBudget,
    algorithm: ControllerAlgorithm,
    rng: &mut R,
    step_cap: Option<u64>,
) -> Result<TrainingOutcome>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    let dim = control_dim(graph);
    optimize_controller(dim, budget, algorithm, rng, step_cap, |params, steps| env.episode(graph, params, steps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::atomic::{AtomicU64, Ordering};

    fn sphere_eval(params: &ControllerParams, steps: u64) -> Result<EpisodeResult> {
        let f = -params.values().iter().map(|v| v * v).sum::<f64>();
        Ok(EpisodeResult { objective: f, steps_consumed: steps, diverged: false })
    }

    #[test]
    fn sphere_proxy_converges() {
        let budget = TrainingBudget::new(4000, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let out = optimize_controller(8, budget, ControllerAlgorithm::Cmaes, &mut rng, None, sphere_eval).unwrap();
        assert!(out.objective > -1e-10, "{}", out.objective);
        assert_eq!(out.episodes_run, 4000);
        assert_eq!(out.steps_used, 4000);
    }

    #[test]
    fn passive_design_gets_one_episode() {
        let budget = TrainingBudget::new(64, 500).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = optimize_controller(0, budget, ControllerAlgorithm::Cmaes, &mut rng, None, sphere_eval).unwrap();
        assert!(out.params.is_empty());
        assert_eq!(out.steps_used, 500);
        assert_eq!(out.episodes_run, 1);
    }

    #[test]
    fn uses_exactly_the_episode_budget() {
        for algorithm in [ControllerAlgorithm::Cmaes, ControllerAlgorithm::MuCommaLambda] {
            for episodes in [1, 3, 12, 16, 64, 100] {
                let budget = TrainingBudget::new(episodes, 7).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(episodes);
                let out = optimize_controller(18, budget, algorithm, &mut rng, None, sphere_eval).unwrap();
                assert_eq!(out.episodes_run, episodes, "{algorithm:?}");
                assert_eq!(out.steps_used, episodes * 7);
                assert!(!out.truncated);
            }
        }
    }

    #[test]
    fn reported_objective_is_best_seen() {
        let seen = std::sync::Mutex::new(Vec::new());
        let budget = TrainingBudget::new(40, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let out = optimize_controller(6, budget, ControllerAlgorithm::MuCommaLambda, &mut rng, None, |p, s| {
            let r = sphere_eval(p, s)?;
            seen.lock().unwrap().push(r.objective);
            Ok(r)
        })
        .unwrap();
        let max = seen.into_inner().unwrap().into_iter().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(out.objective, max);
        assert_eq!(sphere_eval(&out.params, 1).unwrap().objective, out.objective);
    }

    #[test]
    fn step_cap_truncates_training() {
        let counter = AtomicU64::new(0);
        let budget = TrainingBudget::new(64, 500).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = optimize_controller(6, budget, ControllerAlgorithm::Cmaes, &mut rng, Some(10_250), |p, s| {
            counter.fetch_add(s, Ordering::Relaxed);
            sphere_eval(p, s)
        })
        .unwrap();
        assert!(out.truncated);
        assert_eq!(out.steps_used, counter.load(Ordering::Relaxed));
        assert!(out.steps_used <= 10_250);
    }

    #[test]
    fn training_is_deterministic() {
        let budget = TrainingBudget::new(30, 1).unwrap();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            optimize_controller(9, budget, ControllerAlgorithm::Cmaes, &mut rng, None, sphere_eval).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn decode_respects_the_box() {
        let p = ControllerParams::decode(&[5.0, -5.0, 5.0, 0.5, 0.5, -0.5]);
        assert_eq!(p.values(), &[0.4, -PI, 0.2, 0.2, 0.5 * PI, -0.1]);
    }
}
