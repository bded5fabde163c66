//! Run transcript: configuration, seed layout, final slot table and the full
//! event log, as one JSON document.
//!
//! ```json
//! {
//!   "schema": "hybrid-opinion/transcript/v1",
//!   "run_id": "...",
//!   "config": { ...RunConfig... },
//!   "question": "...",
//!   "seed_layout": { "topology": {"rows":5,"cols":5}, "entries": [...], ... },
//!   "slots": [ {"iteration":1,"row":0,"col":0,"kind":"llm","status":"committed",
//!               "agent":"...","chosen_index":2,"text":"...","committed_at":123}, ... ],
//!   "events": [ {"seq":0,"at":1,"type":"dispatched","slot":{...},"agent":"..."}, ... ]
//! }
//! ```

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Millis;
use crate::engine::{AgentKind, EngineError, Event, RunConfig, RunState, SlotId, SlotStatus};
use crate::statements::SeedLayout;
use crate::topology::{GridTopology, NodeId};

pub const TRANSCRIPT_SCHEMA: &str = "hybrid-opinion/transcript/v1";

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("unsupported transcript schema {0:?}")]
    Schema(String),
    #[error("incomplete transcript: {0}")]
    Incomplete(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub iteration: u32,
    pub row: usize,
    pub col: usize,
    pub kind: AgentKind,
    pub status: SlotStatus,
    #[serde(default)]
    pub agent: Option<String>,
    #[serde(default)]
    pub chosen_index: Option<usize>,
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub committed_at: Option<Millis>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub schema: String,
    pub run_id: String,
    pub config: RunConfig,
    pub question: String,
    pub seed_layout: SeedLayout,
    pub slots: Vec<SlotRecord>,
    pub events: Vec<Event>,
}

impl Transcript {
    pub fn from_state(run_id: impl Into<String>, state: &RunState) -> Self {
        let slots = state
            .slots()
            .iter()
            .map(|s| SlotRecord {
                iteration: s.id.iteration,
                row: s.id.row,
                col: s.id.col,
                kind: s.kind,
                status: s.status,
                agent: s.assigned_agent.clone(),
                chosen_index: s.chosen_index,
                text: s.revised_text.clone(),
                committed_at: s.committed_at,
            })
            .collect();
        Transcript {
            schema: TRANSCRIPT_SCHEMA.to_string(),
            run_id: run_id.into(),
            config: state.config().clone(),
            question: state.question().to_string(),
            seed_layout: state.seed_layout().clone(),
            slots,
            events: state.events().to_vec(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self, TranscriptError> {
        let t: Transcript = serde_json::from_str(s)?;
        if t.schema != TRANSCRIPT_SCHEMA {
            return Err(TranscriptError::Schema(t.schema));
        }
        Ok(t)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcript serializes")
    }

    /// Rebuilds the engine state from the event log.
    pub fn to_state(&self) -> Result<RunState, EngineError> {
        RunState::replay(
            self.config.clone(),
            self.question.clone(),
            self.seed_layout.clone(),
            &self.events,
        )
    }

    pub fn topology(&self) -> GridTopology {
        self.seed_layout.topology
    }

    /// Identifier of the statement a node holds at an iteration.
    pub fn statement_id(node: NodeId, iteration: u32) -> String {
        format!("t{}-r{}-c{}", iteration, node.row, node.col)
    }

    pub fn committed_count(&self) -> usize {
        self.slots
            .iter()
            .filter(|s| s.status == SlotStatus::Committed)
            .count()
    }

    /// Revised texts, `table[t - 1][node]`, for iterations `1..=k` where `k`
    /// is the last iteration whose slots are all committed. Fails when the
    /// slot table does not cover every node-slot.
    pub fn statement_table(&self) -> Result<Vec<Vec<String>>, TranscriptError> {
        let topo = self.topology();
        let n = topo.node_count();
        let iterations = self.config.iterations as usize;
        if self.seed_layout.entries.len() != n {
            return Err(TranscriptError::Incomplete(format!(
                "seed layout has {} entries for {} nodes",
                self.seed_layout.entries.len(),
                n
            )));
        }
        let mut by_slot: HashMap<SlotId, &SlotRecord> = HashMap::new();
        for s in &self.slots {
            by_slot.insert(SlotId::new(NodeId::new(s.row, s.col), s.iteration), s);
        }
        let mut table = Vec::new();
        for t in 1..=iterations as u32 {
            let mut row = Vec::with_capacity(n);
            for v in topo.nodes() {
                let rec = by_slot.get(&SlotId::new(v, t)).ok_or_else(|| {
                    TranscriptError::Incomplete(format!("missing slot {}", SlotId::new(v, t)))
                })?;
                match (&rec.status, &rec.text) {
                    (SlotStatus::Committed, Some(text)) => row.push(text.clone()),
                    (SlotStatus::Committed, None) => {
                        return Err(TranscriptError::Incomplete(format!(
                            "committed slot {} has no text",
                            SlotId::new(v, t)
                        )))
                    }
                    _ => {}
                }
            }
            if row.len() == n && table.len() + 1 == t as usize {
                table.push(row);
            }
        }
        if by_slot.len() != n * iterations {
            return Err(TranscriptError::Incomplete(format!(
                "slot table has {} entries, expected {}",
                by_slot.len(),
                n * iterations
            )));
        }
        Ok(table)
    }
}
