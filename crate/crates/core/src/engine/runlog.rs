//! Append-only run logs and their CSV form.

use std::fmt;

use crate::budget::BudgetLedger;
use crate::controller::ControllerParams;
use crate::engine::ScheduleConfig;
use crate::error::{Error, Result};
use crate::genome::{controller_from_record, controller_to_record, GenomeId, MorphologyGenome};

pub const CSV_HEADER: &str = "used_steps,event,genome_id,objective,complexity,payload";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    DesignEval,
    NewBest,
    Retrain,
    Final,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::DesignEval => "design_eval",
            EventKind::NewBest => "new_best",
            EventKind::Retrain => "retrain",
            EventKind::Final => "final",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "design_eval" => EventKind::DesignEval,
            "new_best" => EventKind::NewBest,
            "retrain" => EventKind::Retrain,
            "final" => EventKind::Final,
            other => return Err(Error::Parse(format!("unknown event {other:?}"))),
        })
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A design with the controller and episode length that produced a score.
#[derive(Debug, Clone, PartialEq)]
pub struct Payload {
    pub episode_steps: u64,
    pub genome: MorphologyGenome,
    pub controller: ControllerParams,
}

impl Payload {
    pub fn to_record(&self) -> String {
        format!("steps={} {} {}", self.episode_steps, self.genome.to_record(), controller_to_record(&self.controller))
    }

    pub fn from_record(record: &str) -> Result<Self> {
        let (steps, rest) = record
            .strip_prefix("steps=")
            .and_then(|r| r.split_once(' '))
            .ok_or_else(|| Error::Parse(format!("payload must start with steps=: {record:?}")))?;
        let episode_steps = steps.parse().map_err(|e| Error::Parse(format!("episode steps {steps:?}: {e}")))?;
        let (genome, ctrl) =
            rest.rsplit_once(' ').ok_or_else(|| Error::Parse("payload is missing its controller".into()))?;
        Ok(Self {
            episode_steps,
            genome: MorphologyGenome::from_record(genome)?,
            controller: controller_from_record(ctrl)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub used_steps: u64,
    pub event: EventKind,
    pub genome_id: Option<GenomeId>,
    pub objective: f64,
    pub complexity: usize,
    pub payload: Option<Payload>,
}

impl RunRow {
    pub fn to_csv_line(&self) -> String {
        let id = self.genome_id.map(|g| g.to_string()).unwrap_or_default();
        let payload = self.payload.as_ref().map(Payload::to_record).unwrap_or_default();
        format!("{},{},{},{},{},{}", self.used_steps, self.event, id, self.objective, self.complexity, payload)
    }

    pub fn from_csv_line(line: &str) -> Result<Self> {
        let cols: Vec<&str> = line.splitn(6, ',').collect();
        if cols.len() != 6 {
            return Err(Error::Parse(format!("expected 6 columns, got {}: {line:?}", cols.len())));
        }
        let num =
            |s: &str, what: &str| -> Result<u64> { s.parse().map_err(|e| Error::Parse(format!("{what} {s:?}: {e}"))) };
        Ok(Self {
            used_steps: num(cols[0], "used_steps")?,
            event: EventKind::parse(cols[1])?,
            genome_id: if cols[2].is_empty() { None } else { Some(cols[2].parse()?) },
            objective: cols[3].parse().map_err(|e| Error::Parse(format!("objective {:?}: {e}", cols[3])))?,
            complexity: num(cols[4], "complexity")? as usize,
            payload: if cols[5].is_empty() { None } else { Some(Payload::from_record(cols[5])?) },
        })
    }
}

/// Everything one schedule run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub config: ScheduleConfig,
    pub rows: Vec<RunRow>,
    pub ledger: BudgetLedger,
}

impl RunLog {
    pub fn master_seed(&self) -> u64 {
        self.config.master_seed
    }

    pub fn final_row(&self) -> Option<&RunRow> {
        self.rows.iter().rev().find(|r| r.event == EventKind::Final)
    }

    pub fn final_objective(&self) -> f64 {
        self.final_row().map_or(f64::NEG_INFINITY, |r| r.objective)
    }

    pub fn rows_of(&self, event: EventKind) -> impl Iterator<Item = &RunRow> {
        self.rows.iter().filter(move |r| r.event == event)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.to_csv_line());
            out.push('\n');
        }
        out
    }

    /// Parses a complete log written by [`RunLog::to_csv`]. The ledger is
    /// reconstructed from the last row.
    pub fn from_csv(config: ScheduleConfig, text: &str) -> Result<Self> {
        let rows = parse_rows(text)?;
        let mut ledger = BudgetLedger::new(config.max_steps);
        if let Some(last) = rows.last() {
            ledger.charge(last.used_steps, crate::budget::ChargeCategory::Phase1);
        }
        Ok(Self { config, rows, ledger })
    }
}

pub fn parse_rows(text: &str) -> Result<Vec<RunRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(Error::Parse(format!("unexpected header {other:?}"))),
    }
    lines.filter(|l| !l.is_empty()).map(RunRow::from_csv_line).collect()
}
