//! Run orchestration: node-slot lifecycle, dependency release and the event log.
//!
//! A slot `(v, t)` becomes ready once every slot in the observation set of
//! `v` at `t - 1` is committed (iteration 0 is committed by seeding). Slots
//! move `blocked -> ready -> dispatched -> committed`, with `dispatched ->
//! ready` on timeout or abandonment.

mod config;
mod events;
mod handle;
mod state;

use thiserror::Error;

use crate::clock::Millis;
use crate::statements::SeedError;
use crate::topology::TopologyError;

pub use config::{AgentKind, AiBackendConfig, Condition, Framing, RunConfig, ScriptedPolicy};
pub use events::{check_schedule, Event, EventKind, ReleaseReason, ScheduleViolation, SlotId};
pub use handle::{EventSink, RunHandle};
pub use state::{ChoiceAck, CommitResult, NodeSlot, RunState, SlotCounts, SlotStatus, Task};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Seed(#[from] SeedError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("run is finished")]
    RunFinished,
    #[error("no slot {0}")]
    UnknownSlot(SlotId),
    #[error("slot {0} observes statements that are not committed yet")]
    NotReady(SlotId),
    #[error("slot {slot} is {status:?}, operation not allowed")]
    WrongState { slot: SlotId, status: SlotStatus },
    #[error("slot {slot} is not dispatched to this agent")]
    NotAssigned { slot: SlotId },
    #[error("choice {index} out of range for {len} observed statements")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("revision has {words} words, at least {min} required")]
    TooShort { words: usize, min: usize },
    #[error("revision not accepted before {not_before}")]
    TooEarly { not_before: Millis },
    #[error("deadline {deadline} not reached at {now}")]
    DeadlineNotReached { deadline: Millis, now: Millis },
    #[error("failed to persist events: {0}")]
    Persist(String),
    #[error("replay failed at event {seq}: {source}")]
    Replay {
        seq: u64,
        #[source]
        source: Box<EngineError>,
    },
}
