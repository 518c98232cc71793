//! Job records and the in-memory job table.
//!
//! State machine: `queued → running → {done, failed, cancelled}`, plus
//! `queued → cancelled` for jobs withdrawn before they start. Every
//! transition goes through [`JobTable::transition`], which rejects any other
//! edge.

use std::collections::BTreeMap;

use basin_alloc::CostWeights;
use basin_lp::SolveControl;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
    Cancelled,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed | JobState::Cancelled)
    }

    fn may_become(self, next: JobState) -> bool {
        use JobState::*;
        matches!(
            (self, next),
            (Queued, Running) | (Queued, Cancelled) | (Running, Done) | (Running, Failed) | (Running, Cancelled)
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    /// Simplex iterations performed so far.
    pub iterations: u64,
    /// Branch-and-bound nodes explored so far.
    pub nodes: u64,
}

/// Parameters of one optimisation request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRequest {
    pub scenario_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<CostWeights>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_days: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicographic: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job_id: String,
    pub scenario_id: String,
    /// Weights the run uses; the scenario's own when the request had none.
    pub weights: CostWeights,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon_days: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lexicographic: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments: Option<usize>,
    pub state: JobState,
    pub progress: Progress,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug)]
struct Entry {
    record: JobRecord,
    control: SolveControl,
}

#[derive(Debug, Default)]
pub struct JobTable {
    entries: BTreeMap<String, Entry>,
    next: u64,
}

#[derive(Debug, PartialEq, Eq)]
pub enum TransitionError {
    Unknown,
    Illegal { from: JobState, to: JobState },
}

impl JobTable {
    /// Rebuilds the table from persisted records. Jobs that were queued or
    /// running when the service stopped cannot resume and are marked failed.
    pub fn restore(records: Vec<JobRecord>) -> (Self, Vec<JobRecord>) {
        let mut table = JobTable::default();
        let mut changed = Vec::new();
        for mut r in records {
            if let Some(n) = r.job_id.strip_prefix("job-").and_then(|n| n.parse::<u64>().ok()) {
                table.next = table.next.max(n);
            }
            if !r.state.is_terminal() {
                r.state = JobState::Failed;
                r.error = Some("service restarted before the job finished".into());
                changed.push(r.clone());
            }
            table.entries.insert(
                r.job_id.clone(),
                Entry {
                    record: r,
                    control: SolveControl::new(),
                },
            );
        }
        (table, changed)
    }

    pub fn submit(&mut self, req: &JobRequest, weights: CostWeights) -> (JobRecord, SolveControl) {
        self.next += 1;
        let record = JobRecord {
            job_id: format!("job-{:06}", self.next),
            scenario_id: req.scenario_id.clone(),
            weights,
            horizon_days: req.horizon_days,
            lexicographic: req.lexicographic,
            segments: req.segments,
            state: JobState::Queued,
            progress: Progress::default(),
            plan_id: None,
            error: None,
        };
        let control = SolveControl::new();
        self.entries.insert(
            record.job_id.clone(),
            Entry {
                record: record.clone(),
                control: control.clone(),
            },
        );
        (record, control)
    }

    /// The record with live progress counters.
    pub fn get(&self, id: &str) -> Option<JobRecord> {
        self.entries.get(id).map(|e| {
            let mut r = e.record.clone();
            if r.state == JobState::Running {
                r.progress = Progress {
                    iterations: e.control.iterations(),
                    nodes: e.control.nodes(),
                };
            }
            r
        })
    }

    pub fn control(&self, id: &str) -> Option<SolveControl> {
        self.entries.get(id).map(|e| e.control.clone())
    }

    pub fn transition(
        &mut self,
        id: &str,
        to: JobState,
        plan_id: Option<String>,
        error: Option<String>,
    ) -> Result<JobRecord, TransitionError> {
        let e = self.entries.get_mut(id).ok_or(TransitionError::Unknown)?;
        let from = e.record.state;
        if !from.may_become(to) {
            return Err(TransitionError::Illegal { from, to });
        }
        debug_assert!(to != JobState::Done || plan_id.is_some(), "done implies a plan");
        e.record.state = to;
        e.record.plan_id = plan_id;
        e.record.error = error;
        if to.is_terminal() {
            e.record.progress = Progress {
                iterations: e.control.iterations(),
                nodes: e.control.nodes(),
            };
        }
        Ok(e.record.clone())
    }
}
