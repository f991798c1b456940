//! Experiment configuration files.
//!
//! One `key = value` pair per line; `#` starts a comment. Keys:
//!
//! ```text
//! experiment.max_steps            total simulated steps per run (required)
//! experiment.repetitions          runs per schedule, default 60
//! experiment.base_episodes        unreduced episodes per design, default 64
//! experiment.base_episode_steps   unreduced episode length, default 500
//! experiment.checkpoints          analysis grid size, default 64
//! experiment.bootstrap_resamples  default 10000
//! experiment.size_bias            initial design size in [0, 1], default 0.5
//! experiment.controller           cmaes | mu_comma_lambda
//! experiment.output               default output directory
//! schedule.<name>.kind            single_phase | retrain_end | retrain_every_new_best
//! schedule.<name>.reduced_quantity     default 1.0
//! schedule.<name>.reduced_length       default 1.0
//! schedule.<name>.retrain_episodes     default base_episodes
//! schedule.<name>.retrain_episode_steps  default base_episode_steps
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use morphx_core::controller::TrainingBudget;
use morphx_core::{ControllerAlgorithm, ReductionConfig, Schedule, ScheduleConfig};

pub const DEFAULT_REPETITIONS: u64 = 60;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, key: &str, message: impl Into<String>) -> Self {
        Self { line: Some(line), key: Some(key.to_string()), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(key) = &self.key {
            write!(f, "{key}: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

/// A named schedule arm of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Arm {
    pub name: String,
    /// Configuration with master seed 0; runs substitute their own seed.
    pub config: ScheduleConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub arms: Vec<Arm>,
    pub repetitions: u64,
    pub max_steps: u64,
    pub checkpoints: usize,
    pub bootstrap_resamples: usize,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn arm(&self, name: &str) -> Option<&Arm> {
        self.arms.iter().find(|a| a.name == name)
    }

    /// First arm with the given schedule and reduction factors.
    pub fn find_arm(&self, schedule: Schedule, quantity: f64, length: f64) -> Option<&Arm> {
        self.arms.iter().find(|a| {
            a.config.schedule == schedule
                && a.config.reduction.reduced_quantity == quantity
                && a.config.reduction.reduced_length == length
        })
    }
}

struct Entry {
    line: usize,
    value: String,
}

fn parse_value<T: FromStr>(key: &str, e: &Entry) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    e.value.parse().map_err(|err| ConfigError::at(e.line, key, format!("invalid value {:?}: {err}", e.value)))
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut experiment: BTreeMap<String, Entry> = BTreeMap::new();
    let mut schedules: BTreeMap<String, BTreeMap<String, Entry>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError {
                line: Some(line),
                key: None,
                message: format!("expected `key = value`, got {content:?}"),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if value.is_empty() {
            return Err(ConfigError::at(line, key, "missing value"));
        }
        let entry = Entry { line, value: value.to_string() };
        let parts: Vec<&str> = key.split('.').collect();
        let previous = match parts.as_slice() {
            ["experiment", field] => experiment.insert(field.to_string(), entry),
            ["schedule", name, field] => {
                if !valid_name(name) {
                    return Err(ConfigError::at(line, key, "schedule names may only use letters, digits, '_' and '-'"));
                }
                if !schedules.contains_key(*name) {
                    order.push(name.to_string());
                }
                schedules.entry(name.to_string()).or_default().insert(field.to_string(), entry)
            }
            _ => return Err(ConfigError::at(line, key, "unknown key")),
        };
        if previous.is_some() {
            return Err(ConfigError::at(line, key, "duplicate key"));
        }
    }

    const EXPERIMENT_KEYS: [&str; 9] = [
        "max_steps",
        "repetitions",
        "base_episodes",
        "base_episode_steps",
        "checkpoints",
        "bootstrap_resamples",
        "size_bias",
        "controller",
        "output",
    ];
    for (field, e) in &experiment {
        if !EXPERIMENT_KEYS.contains(&field.as_str()) {
            return Err(ConfigError::at(e.line, &format!("experiment.{field}"), "unknown key"));
        }
    }

    let get = |field: &str| experiment.get(field).map(|e| (format!("experiment.{field}"), e));
    let max_steps: u64 = match get("max_steps") {
        Some((k, e)) => parse_value(&k, e)?,
        None => {
            return Err(ConfigError {
                line: None,
                key: Some("experiment.max_steps".into()),
                message: "required key is missing".into(),
            })
        }
    };
    let num = |field: &str, default: u64| -> Result<u64, ConfigError> {
        match get(field) {
            Some((k, e)) => {
                let v: u64 = parse_value(&k, e)?;
                if v == 0 {
                    return Err(ConfigError::at(e.line, &k, "must be at least 1"));
                }
                Ok(v)
            }
            None => Ok(default),
        }
    };
    let repetitions = num("repetitions", DEFAULT_REPETITIONS)?;
    let base_episodes = num("base_episodes", 64)?;
    let base_episode_steps = num("base_episode_steps", 500)?;
    let checkpoints = num("checkpoints", 64)? as usize;
    let bootstrap_resamples = num("bootstrap_resamples", 10_000)? as usize;
    if max_steps == 0 {
        let (k, e) = get("max_steps").expect("present");
        return Err(ConfigError::at(e.line, &k, "must be at least 1"));
    }
    let size_bias: f64 = match get("size_bias") {
        Some((k, e)) => parse_value(&k, e)?,
        None => morphx_core::genome::DEFAULT_SIZE_BIAS,
    };
    let controller = match get("controller") {
        Some((k, e)) => ControllerAlgorithm::parse(&e.value)
            .ok_or_else(|| ConfigError::at(e.line, &k, format!("unknown controller algorithm {:?}", e.value)))?,
        None => ControllerAlgorithm::Cmaes,
    };
    let output = get("output").map(|(_, e)| PathBuf::from(&e.value));

    let mut arms = Vec::new();
    for name in order {
        let fields = &schedules[&name];
        let key = |field: &str| format!("schedule.{name}.{field}");
        for (field, e) in fields {
            if !["kind", "reduced_quantity", "reduced_length", "retrain_episodes", "retrain_episode_steps"]
                .contains(&field.as_str())
            {
                return Err(ConfigError::at(e.line, &key(field), "unknown key"));
            }
        }
        let first_line = fields.values().map(|e| e.line).min();
        let schedule = match fields.get("kind") {
            Some(e) => {
                Schedule::parse(&e.value).map_err(|err| ConfigError::at(e.line, &key("kind"), err.to_string()))?
            }
            None => {
                return Err(ConfigError {
                    line: first_line,
                    key: Some(key("kind")),
                    message: "required key is missing".into(),
                })
            }
        };
        let frac = |field: &str| -> Result<f64, ConfigError> {
            fields.get(field).map_or(Ok(1.0), |e| parse_value(&key(field), e))
        };
        let reduction = ReductionConfig {
            reduced_quantity: frac("reduced_quantity")?,
            reduced_length: frac("reduced_length")?,
            base_episodes,
            base_episode_steps,
        };
        let count = |field: &str, default: u64| -> Result<u64, ConfigError> {
            fields.get(field).map_or(Ok(default), |e| parse_value(&key(field), e))
        };
        let mut config = ScheduleConfig::new(schedule, reduction, max_steps, 0);
        config.retrain_budget = TrainingBudget {
            episodes: count("retrain_episodes", base_episodes)?,
            episode_steps: count("retrain_episode_steps", base_episode_steps)?,
        };
        config.size_bias = size_bias;
        config.controller_algo = controller;
        config.validate().map_err(|err| ConfigError {
            line: first_line,
            key: Some(format!("schedule.{name}")),
            message: err.to_string(),
        })?;
        arms.push(Arm { name, config });
    }
    if arms.is_empty() {
        return Err(ConfigError { line: None, key: Some("schedule".into()), message: "no schedules defined".into() });
    }

    Ok(ExperimentConfig { arms, repetitions, max_steps, checkpoints, bootstrap_resamples, output })
}
