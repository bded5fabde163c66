use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::clock::Millis;
use crate::statements::{seed_layout, SeedLayout, StatementPool};
use crate::text::word_count;
use crate::topology::GridTopology;

use super::config::{AgentKind, RunConfig};
use super::events::{Event, EventKind, ReleaseReason, SlotId};
use super::EngineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotStatus {
    Blocked,
    Ready,
    Dispatched,
    Committed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSlot {
    pub id: SlotId,
    pub kind: AgentKind,
    pub status: SlotStatus,
    pub assigned_agent: Option<String>,
    pub session: Option<String>,
    pub dispatched_at: Option<Millis>,
    pub chosen_index: Option<usize>,
    pub chosen_at: Option<Millis>,
    pub revised_text: Option<String>,
    pub committed_at: Option<Millis>,
}

/// Work handed to an agent. Observed statements carry no authorship.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub slot: SlotId,
    pub question: String,
    pub observed: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceAck {
    pub slot: SlotId,
    pub index: usize,
    /// Earliest time a revision is accepted for this slot.
    pub revision_not_before: Millis,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitResult {
    pub slot: SlotId,
    pub newly_ready: Vec<SlotId>,
    pub iteration_complete: bool,
    pub run_complete: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SlotCounts {
    pub blocked: usize,
    pub ready: usize,
    pub dispatched: usize,
    pub committed: usize,
}

impl SlotCounts {
    pub fn total(&self) -> usize {
        self.blocked + self.ready + self.dispatched + self.committed
    }
}

/// The run state machine. Every mutation appends to the event log, and the
/// log alone (with config and seed layout) reproduces the state.
#[derive(Debug, Clone)]
pub struct RunState {
    config: RunConfig,
    topology: GridTopology,
    question: String,
    seed: SeedLayout,
    slots: Vec<NodeSlot>,
    /// Uncommitted observed slots per slot.
    pending_deps: Vec<u8>,
    /// Ready slot indices per agent kind. Slot index order is iteration, then
    /// row-major node, which is the dispatch order.
    ready: [BTreeSet<usize>; 3],
    committed_per_iteration: Vec<usize>,
    committed: usize,
    events: Vec<Event>,
}

impl RunState {
    /// Seeds iteration 0 from the pool and marks iteration 1 ready.
    pub fn init_run(config: RunConfig, pool: &StatementPool) -> Result<Self, EngineError> {
        config.validate()?;
        let seed = seed_layout(pool, config.topology()?, config.imbalance, config.rng_seed)?;
        Self::from_seed(config, pool.question.clone(), seed)
    }

    pub fn from_seed(
        config: RunConfig,
        question: String,
        seed: SeedLayout,
    ) -> Result<Self, EngineError> {
        config.validate()?;
        let topology = config.topology()?;
        if seed.topology != topology || seed.entries.len() != topology.node_count() {
            return Err(EngineError::Config(
                "seed layout does not match the configured grid".into(),
            ));
        }
        let n = topology.node_count();
        let kinds = config.slot_kinds();
        let mut slots = Vec::with_capacity(kinds.len());
        let mut pending_deps = Vec::with_capacity(kinds.len());
        let mut ready: [BTreeSet<usize>; 3] = Default::default();
        for (idx, kind) in kinds.into_iter().enumerate() {
            let iteration = (idx / n) as u32 + 1;
            let node = topology.node(idx % n);
            let deps = if iteration == 1 {
                0
            } else {
                topology.observation_set(node)?.len() as u8
            };
            let status = if deps == 0 {
                ready[kind.slot()].insert(idx);
                SlotStatus::Ready
            } else {
                SlotStatus::Blocked
            };
            pending_deps.push(deps);
            slots.push(NodeSlot {
                id: SlotId::new(node, iteration),
                kind,
                status,
                assigned_agent: None,
                session: None,
                dispatched_at: None,
                chosen_index: None,
                chosen_at: None,
                revised_text: None,
                committed_at: None,
            });
        }
        Ok(RunState {
            committed_per_iteration: vec![0; config.iterations as usize],
            config,
            topology,
            question,
            seed,
            slots,
            pending_deps,
            ready,
            committed: 0,
            events: Vec::new(),
        })
    }

    /// Rebuilds a state by re-applying a logged event sequence.
    pub fn replay(
        config: RunConfig,
        question: String,
        seed: SeedLayout,
        events: &[Event],
    ) -> Result<Self, EngineError> {
        let mut state = Self::from_seed(config, question, seed)?;
        for e in events {
            state.apply(e).map_err(|source| EngineError::Replay {
                seq: e.seq,
                source: Box::new(source),
            })?;
        }
        Ok(state)
    }

    /// Applies one logged event with its recorded time and agent.
    pub fn apply(&mut self, event: &Event) -> Result<(), EngineError> {
        if event.seq != self.events.len() as u64 {
            return Err(EngineError::Config(format!(
                "event sequence gap: expected {}, found {}",
                self.events.len(),
                event.seq
            )));
        }
        let now = event.at;
        match &event.kind {
            EventKind::Dispatched {
                slot,
                agent,
                session,
            } => {
                let idx = self.index_of(*slot)?;
                self.expect_status(idx, SlotStatus::Ready)?;
                self.dispatch(idx, agent.clone(), session.clone(), now);
            }
            EventKind::ChoiceRecorded { slot, index } => {
                let agent = self.slot(*slot)?.assigned_agent.clone().unwrap_or_default();
                self.submit_choice(*slot, &agent, *index, now)?;
            }
            EventKind::Committed { slot, text } => {
                let agent = self.slot(*slot)?.assigned_agent.clone().unwrap_or_default();
                self.submit_revision(*slot, &agent, text, now)?;
            }
            EventKind::Released { slot, reason } => {
                let idx = self.index_of(*slot)?;
                self.expect_status(idx, SlotStatus::Dispatched)?;
                self.release(idx, *reason, now);
            }
            EventKind::VisibilityChanged { slot, hidden } => {
                self.log_visibility(*slot, *hidden, now)?;
            }
        }
        Ok(())
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn topology(&self) -> GridTopology {
        self.topology
    }

    pub fn question(&self) -> &str {
        &self.question
    }

    pub fn seed_layout(&self) -> &SeedLayout {
        &self.seed
    }

    pub fn slots(&self) -> &[NodeSlot] {
        &self.slots
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn last_event_time(&self) -> Option<Millis> {
        self.events.last().map(|e| e.at)
    }

    pub fn is_finished(&self) -> bool {
        self.committed == self.slots.len()
    }

    pub fn committed_count(&self) -> usize {
        self.committed
    }

    /// Highest iteration whose slots are all committed (0 if none).
    pub fn completed_iterations(&self) -> u32 {
        self.committed_per_iteration
            .iter()
            .take_while(|&&c| c == self.topology.node_count())
            .count() as u32
    }

    pub fn counts(&self) -> SlotCounts {
        let mut c = SlotCounts::default();
        for s in &self.slots {
            match s.status {
                SlotStatus::Blocked => c.blocked += 1,
                SlotStatus::Ready => c.ready += 1,
                SlotStatus::Dispatched => c.dispatched += 1,
                SlotStatus::Committed => c.committed += 1,
            }
        }
        c
    }

    pub fn slots_with_status(&self, status: SlotStatus) -> BTreeSet<SlotId> {
        self.slots
            .iter()
            .filter(|s| s.status == status)
            .map(|s| s.id)
            .collect()
    }

    /// Slots of `kind` not yet committed.
    pub fn outstanding(&self, kind: AgentKind) -> usize {
        self.slots
            .iter()
            .filter(|s| s.kind == kind && s.status != SlotStatus::Committed)
            .count()
    }

    pub fn ready_count(&self, kind: AgentKind) -> usize {
        self.ready[kind.slot()].len()
    }

    fn index_of(&self, slot: SlotId) -> Result<usize, EngineError> {
        if slot.iteration == 0
            || slot.iteration > self.config.iterations
            || !self.topology.contains(slot.node())
        {
            return Err(EngineError::UnknownSlot(slot));
        }
        Ok((slot.iteration as usize - 1) * self.topology.node_count()
            + self.topology.index(slot.node()))
    }

    pub fn slot(&self, slot: SlotId) -> Result<&NodeSlot, EngineError> {
        Ok(&self.slots[self.index_of(slot)?])
    }

    /// Text of a node's statement at an iteration, if it exists yet.
    pub fn statement_text(&self, slot: SlotId) -> Option<&str> {
        if slot.iteration == 0 {
            return self
                .topology
                .contains(slot.node())
                .then(|| self.seed.entry(slot.node()).text.as_str());
        }
        let idx = self.index_of(slot).ok()?;
        self.slots[idx].revised_text.as_deref()
    }

    /// Texts a slot's agent is shown, own previous statement first.
    pub fn observed_texts(&self, slot: SlotId) -> Result<Vec<String>, EngineError> {
        self.index_of(slot)?;
        self.topology
            .observation_set(slot.node())?
            .into_iter()
            .map(|r| {
                let prev = SlotId::new(r.node, slot.iteration - 1);
                self.statement_text(prev)
                    .map(str::to_string)
                    .ok_or(EngineError::NotReady(slot))
            })
            .collect()
    }

    fn expect_status(&self, idx: usize, want: SlotStatus) -> Result<(), EngineError> {
        let s = &self.slots[idx];
        if s.status != want {
            return Err(EngineError::WrongState {
                slot: s.id,
                status: s.status,
            });
        }
        Ok(())
    }

    fn expect_owner(&self, idx: usize, agent: &str) -> Result<(), EngineError> {
        self.expect_status(idx, SlotStatus::Dispatched)?;
        if self.slots[idx].assigned_agent.as_deref() != Some(agent) {
            return Err(EngineError::NotAssigned {
                slot: self.slots[idx].id,
            });
        }
        Ok(())
    }

    fn push(&mut self, at: Millis, kind: EventKind) {
        let seq = self.events.len() as u64;
        self.events.push(Event { seq, at, kind });
    }

    fn dispatch(&mut self, idx: usize, agent: String, session: Option<String>, now: Millis) {
        let kind = self.slots[idx].kind;
        self.ready[kind.slot()].remove(&idx);
        let s = &mut self.slots[idx];
        s.status = SlotStatus::Dispatched;
        s.assigned_agent = Some(agent.clone());
        s.session = session.clone();
        s.dispatched_at = Some(now);
        s.chosen_index = None;
        s.chosen_at = None;
        let slot = s.id;
        self.push(
            now,
            EventKind::Dispatched {
                slot,
                agent,
                session,
            },
        );
    }

    /// Hands the first ready slot of `kind` to `agent`, or `None` when no
    /// slot of that kind is ready.
    pub fn next_task(
        &mut self,
        kind: AgentKind,
        agent: &str,
        session: Option<String>,
        now: Millis,
    ) -> Result<Option<Task>, EngineError> {
        if self.is_finished() {
            return Err(EngineError::RunFinished);
        }
        let Some(&idx) = self.ready[kind.slot()].iter().next() else {
            return Ok(None);
        };
        let slot = self.slots[idx].id;
        let observed = self.observed_texts(slot)?;
        self.dispatch(idx, agent.to_string(), session, now);
        Ok(Some(Task {
            slot,
            question: self.question.clone(),
            observed,
        }))
    }

    pub fn submit_choice(
        &mut self,
        slot: SlotId,
        agent: &str,
        index: usize,
        now: Millis,
    ) -> Result<ChoiceAck, EngineError> {
        let idx = self.index_of(slot)?;
        self.expect_owner(idx, agent)?;
        if self.slots[idx].chosen_index.is_some() {
            return Err(EngineError::WrongState {
                slot,
                status: SlotStatus::Dispatched,
            });
        }
        let len = self.topology.observation_set(slot.node())?.len();
        if index >= len {
            return Err(EngineError::IndexOutOfRange { index, len });
        }
        let display = if self.slots[idx].kind == AgentKind::Human {
            self.config.display_period_ms
        } else {
            0
        };
        let s = &mut self.slots[idx];
        s.chosen_index = Some(index);
        s.chosen_at = Some(now);
        self.push(now, EventKind::ChoiceRecorded { slot, index });
        Ok(ChoiceAck {
            slot,
            index,
            revision_not_before: now.plus(display),
        })
    }

    pub fn submit_revision(
        &mut self,
        slot: SlotId,
        agent: &str,
        text: &str,
        now: Millis,
    ) -> Result<CommitResult, EngineError> {
        let idx = self.index_of(slot)?;
        self.expect_owner(idx, agent)?;
        let Some(chosen_at) = self.slots[idx].chosen_at else {
            return Err(EngineError::WrongState {
                slot,
                status: SlotStatus::Dispatched,
            });
        };
        if self.slots[idx].kind == AgentKind::Human {
            let not_before = chosen_at.plus(self.config.display_period_ms);
            if now < not_before {
                return Err(EngineError::TooEarly { not_before });
            }
        }
        let words = word_count(text);
        if words < self.config.min_words {
            return Err(EngineError::TooShort {
                words,
                min: self.config.min_words,
            });
        }

        let s = &mut self.slots[idx];
        s.status = SlotStatus::Committed;
        s.revised_text = Some(text.to_string());
        s.committed_at = Some(now);
        self.committed += 1;
        self.committed_per_iteration[slot.iteration as usize - 1] += 1;
        self.push(
            now,
            EventKind::Committed {
                slot,
                text: text.to_string(),
            },
        );

        // Dependents of (v, t) are the observers of v at t + 1, which by
        // symmetry of the lattice are exactly v's own observation set.
        let mut newly_ready = Vec::new();
        if slot.iteration < self.config.iterations {
            for r in self.topology.observation_set(slot.node())? {
                let dep = self.index_of(SlotId::new(r.node, slot.iteration + 1))?;
                self.pending_deps[dep] -= 1;
                if self.pending_deps[dep] == 0 && self.slots[dep].status == SlotStatus::Blocked {
                    self.slots[dep].status = SlotStatus::Ready;
                    self.ready[self.slots[dep].kind.slot()].insert(dep);
                    newly_ready.push(self.slots[dep].id);
                }
            }
        }
        newly_ready.sort();
        Ok(CommitResult {
            slot,
            newly_ready,
            iteration_complete: self.committed_per_iteration[slot.iteration as usize - 1]
                == self.topology.node_count(),
            run_complete: self.is_finished(),
        })
    }

    fn release(&mut self, idx: usize, reason: ReleaseReason, now: Millis) {
        let s = &mut self.slots[idx];
        s.status = SlotStatus::Ready;
        s.assigned_agent = None;
        s.session = None;
        s.dispatched_at = None;
        s.chosen_index = None;
        s.chosen_at = None;
        let slot = s.id;
        let kind = s.kind;
        self.ready[kind.slot()].insert(idx);
        self.push(now, EventKind::Released { slot, reason });
    }

    /// Returns a dispatched slot to ready once `deadline` has passed,
    /// discarding any recorded choice.
    pub fn release_timeout(
        &mut self,
        slot: SlotId,
        deadline: Millis,
        now: Millis,
    ) -> Result<(), EngineError> {
        let idx = self.index_of(slot)?;
        self.expect_status(idx, SlotStatus::Dispatched)?;
        if now < deadline {
            return Err(EngineError::DeadlineNotReached { deadline, now });
        }
        self.release(idx, ReleaseReason::Timeout, now);
        Ok(())
    }

    /// Releases every dispatched slot older than the session timeout.
    pub fn release_expired(&mut self, now: Millis) -> Vec<SlotId> {
        let timeout = self.config.session_timeout_ms;
        let expired: Vec<usize> = self
            .slots
            .iter()
            .enumerate()
            .filter(|(_, s)| {
                s.status == SlotStatus::Dispatched
                    && s.dispatched_at.is_some_and(|t| t.plus(timeout) <= now)
            })
            .map(|(i, _)| i)
            .collect();
        expired
            .into_iter()
            .map(|idx| {
                self.release(idx, ReleaseReason::Timeout, now);
                self.slots[idx].id
            })
            .collect()
    }

    /// Gives a slot back on behalf of the agent holding it.
    pub fn abandon(&mut self, slot: SlotId, agent: &str, now: Millis) -> Result<(), EngineError> {
        let idx = self.index_of(slot)?;
        self.expect_owner(idx, agent)?;
        self.release(idx, ReleaseReason::Abandoned, now);
        Ok(())
    }

    pub fn log_visibility(
        &mut self,
        slot: SlotId,
        hidden: bool,
        now: Millis,
    ) -> Result<(), EngineError> {
        self.index_of(slot)?;
        self.push(now, EventKind::VisibilityChanged { slot, hidden });
        Ok(())
    }
}
