//! Opinion dynamics on grid-lattice social networks with human, LLM and
//! scripted participants.
//!
//! A run seeds every node with a pool statement, then for each iteration
//! every node is filled by a fresh agent that sees the previous-iteration
//! statements of the node and its lattice neighbors, picks one, and writes a
//! revision. Revisions are annotated into stances and summarized per
//! iteration by the polarization index and the neighbors correlation index.

pub mod agents;
pub mod baselines;
pub mod clock;
pub mod driver;
pub mod engine;
pub mod llm;
pub mod metrics;
pub mod stance;
pub mod statements;
pub mod text;
pub mod topology;
pub mod transcript;

pub use clock::{Clock, LogicalClock, ManualClock, Millis, SystemClock};
pub use engine::{
    AgentKind, Condition, EngineError, Event, EventKind, Framing, RunConfig, RunHandle, RunState,
    SlotId, SlotStatus, Task,
};
pub use metrics::{MetricsRecord, MetricsSeries, OpinionVector};
pub use statements::{Imbalance, SeedLayout, SeedStance, Statement, StatementPool};
pub use topology::{GridTopology, NodeId};
pub use transcript::Transcript;
