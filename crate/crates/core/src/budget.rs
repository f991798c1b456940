//! Step-exact accounting of computation time and the reduced-quantity /
//! reduced-length budget arithmetic.

use crate::controller::TrainingBudget;
use crate::error::{Error, Result};

/// Global stopping criterion used by full-scale experiments.
pub const FULL_SCALE_MAX_STEPS: u64 = 8_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChargeCategory {
    Phase1,
    Retrain,
}

/// Result of a single [`BudgetLedger::charge`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Charge {
    pub charged: u64,
    /// The ledger has no steps left after this charge.
    pub exhausted: bool,
}

/// Monotone counter of simulated steps against a hard cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BudgetLedger {
    max_steps: u64,
    used_steps: u64,
    phase1_steps: u64,
    retrain_steps: u64,
}

impl BudgetLedger {
    pub fn new(max_steps: u64) -> Self {
        Self { max_steps, used_steps: 0, phase1_steps: 0, retrain_steps: 0 }
    }

    pub fn max_steps(&self) -> u64 {
        self.max_steps
    }

    pub fn used_steps(&self) -> u64 {
        self.used_steps
    }

    pub fn phase1_steps(&self) -> u64 {
        self.phase1_steps
    }

    pub fn retrain_steps(&self) -> u64 {
        self.retrain_steps
    }

    pub fn remaining(&self) -> u64 {
        self.max_steps - self.used_steps
    }

    pub fn is_exhausted(&self) -> bool {
        self.used_steps >= self.max_steps
    }

    /// Records `steps`, truncating at the cap.
    pub fn charge(&mut self, steps: u64, category: ChargeCategory) -> Charge {
        let charged = steps.min(self.remaining());
        self.used_steps += charged;
        match category {
            ChargeCategory::Phase1 => self.phase1_steps += charged,
            ChargeCategory::Retrain => self.retrain_steps += charged,
        }
        Charge { charged, exhausted: charged < steps || self.is_exhausted() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionConfig {
    /// Fraction of the base number of episodes per design.
    pub reduced_quantity: f64,
    /// Fraction of the base episode length.
    pub reduced_length: f64,
    pub base_episodes: u64,
    pub base_episode_steps: u64,
}

impl ReductionConfig {
    pub fn unreduced(base_episodes: u64, base_episode_steps: u64) -> Self {
        Self { reduced_quantity: 1.0, reduced_length: 1.0, base_episodes, base_episode_steps }
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| v > 0.0 && v <= 1.0;
        if !in_unit(self.reduced_quantity) || !in_unit(self.reduced_length) {
            return Err(Error::InvalidConfig(format!(
                "reduction fractions must lie in (0, 1], got quantity={} length={}",
                self.reduced_quantity, self.reduced_length
            )));
        }
        if self.base_episodes == 0 || self.base_episode_steps == 0 {
            return Err(Error::InvalidConfig("base episodes and episode length must be at least 1".into()));
        }
        Ok(())
    }

    /// The unreduced training budget.
    pub fn base_budget(&self) -> TrainingBudget {
        TrainingBudget { episodes: self.base_episodes, episode_steps: self.base_episode_steps }
    }
}

fn scale(base: u64, fraction: f64) -> u64 {
    ((base as f64 * fraction + 0.5).floor() as u64).max(1)
}

/// Per-design training budget after applying both reduction factors
/// (round half up, never below one).
pub fn effective_budget(config: &ReductionConfig) -> TrainingBudget {
    TrainingBudget {
        episodes: scale(config.base_episodes, config.reduced_quantity),
        episode_steps: scale(config.base_episode_steps, config.reduced_length),
    }
}
