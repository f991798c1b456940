//! `morphx replay`: re-simulates one logged design and dumps its trajectory.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use morphx_core::engine::parse_rows;
use morphx_core::physics::Simulator;
use morphx_core::DEFAULT_DT;

#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    /// One line per simulated step: `step com_x x0 y0 x1 y1 ...`.
    pub trace: String,
    pub frames: u64,
    pub objective: f64,
    pub logged: f64,
}

impl Replay {
    /// Bit-exact agreement with the log (both -inf counts as a match).
    pub fn reproduces_log(&self) -> bool {
        self.objective.to_bits() == self.logged.to_bits()
    }
}

/// Replays data row `row` (0-based, header excluded) of the log at `path`.
pub fn replay(path: &Path, row: usize) -> Result<Replay> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let rows = parse_rows(&text).with_context(|| format!("{} is not a run log", path.display()))?;
    let Some(r) = rows.get(row) else {
        bail!("{} has {} rows, no row {row}", path.display(), rows.len());
    };
    let Some(payload) = &r.payload else {
        bail!("row {row} ({}) carries no design to replay", r.event.name());
    };

    let graph = &payload.genome.graph;
    let mut sim = Simulator::new(graph, &payload.controller, DEFAULT_DT)?;
    let start = sim.com_x();
    let mut trace = String::new();
    let mut frames = 0;
    let mut diverged = false;
    for _ in 0..payload.episode_steps {
        if !sim.step() {
            diverged = true;
            break;
        }
        frames += 1;
        write!(trace, "{} {}", frames, sim.com_x())?;
        for p in &sim.state().positions {
            write!(trace, " {} {}", p[0], p[1])?;
        }
        trace.push('\n');
    }
    let objective = if diverged { f64::NEG_INFINITY } else { sim.com_x() - start };
    Ok(Replay { trace, frames, objective, logged: r.objective })
}
