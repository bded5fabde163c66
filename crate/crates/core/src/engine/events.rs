use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::clock::Millis;
use crate::topology::{GridTopology, NodeId};

/// A node at an iteration (1-based; iteration 0 is the seed layout).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SlotId {
    pub iteration: u32,
    pub row: usize,
    pub col: usize,
}

impl SlotId {
    pub fn new(node: NodeId, iteration: u32) -> Self {
        SlotId {
            iteration,
            row: node.row,
            col: node.col,
        }
    }

    pub fn node(&self) -> NodeId {
        NodeId::new(self.row, self.col)
    }
}

impl std::fmt::Display for SlotId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "t{}:({}, {})", self.iteration, self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReleaseReason {
    Timeout,
    Abandoned,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    Dispatched {
        slot: SlotId,
        agent: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        session: Option<String>,
    },
    ChoiceRecorded {
        slot: SlotId,
        index: usize,
    },
    Committed {
        slot: SlotId,
        text: String,
    },
    Released {
        slot: SlotId,
        reason: ReleaseReason,
    },
    /// Client-reported page visibility change; informational only.
    VisibilityChanged {
        slot: SlotId,
        hidden: bool,
    },
}

impl EventKind {
    pub fn slot(&self) -> SlotId {
        match self {
            EventKind::Dispatched { slot, .. }
            | EventKind::ChoiceRecorded { slot, .. }
            | EventKind::Committed { slot, .. }
            | EventKind::Released { slot, .. }
            | EventKind::VisibilityChanged { slot, .. } => *slot,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub at: Millis,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScheduleViolation {
    /// A slot was dispatched before one of its observed slots was committed.
    EarlyDispatch { slot: SlotId, missing: SlotId },
    DoubleCommit { slot: SlotId },
    CommitWithoutDispatch { slot: SlotId },
}

/// Scans an event log for dependency-order and single-commit violations.
/// Works from the log alone, without the engine's readiness bookkeeping.
pub fn check_schedule(topo: &GridTopology, events: &[Event]) -> Vec<ScheduleViolation> {
    let mut committed: HashSet<SlotId> = HashSet::new();
    let mut dispatched: HashSet<SlotId> = HashSet::new();
    let mut out = Vec::new();
    for e in events {
        match &e.kind {
            EventKind::Dispatched { slot, .. } => {
                if slot.iteration > 1 {
                    let obs = topo.observation_set(slot.node()).unwrap_or_default();
                    for r in obs {
                        let dep = SlotId::new(r.node, slot.iteration - 1);
                        if !committed.contains(&dep) {
                            out.push(ScheduleViolation::EarlyDispatch {
                                slot: *slot,
                                missing: dep,
                            });
                        }
                    }
                }
                dispatched.insert(*slot);
            }
            EventKind::Committed { slot, .. } => {
                if !dispatched.contains(slot) {
                    out.push(ScheduleViolation::CommitWithoutDispatch { slot: *slot });
                }
                if !committed.insert(*slot) {
                    out.push(ScheduleViolation::DoubleCommit { slot: *slot });
                }
            }
            _ => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_json_shape() {
        let e = Event {
            seq: 3,
            at: Millis(10),
            kind: EventKind::Committed {
                slot: SlotId::new(NodeId::new(1, 2), 4),
                text: "hello there".into(),
            },
        };
        let s = serde_json::to_string(&e).unwrap();
        assert_eq!(
            s,
            r#"{"seq":3,"at":10,"type":"committed","slot":{"iteration":4,"row":1,"col":2},"text":"hello there"}"#
        );
        assert_eq!(serde_json::from_str::<Event>(&s).unwrap(), e);
    }

    #[test]
    fn detects_early_dispatch() {
        let topo = GridTopology::new(1, 2).unwrap();
        let ev = |seq, kind| Event { seq, at: Millis(seq as i64), kind };
        let a1 = SlotId::new(NodeId::new(0, 0), 1);
        let a2 = SlotId::new(NodeId::new(0, 0), 2);
        let events = vec![
            ev(0, EventKind::Dispatched { slot: a1, agent: "x".into(), session: None }),
            ev(1, EventKind::Committed { slot: a1, text: "a b c d e".into() }),
            ev(2, EventKind::Dispatched { slot: a2, agent: "y".into(), session: None }),
        ];
        let v = check_schedule(&topo, &events);
        assert_eq!(
            v,
            vec![ScheduleViolation::EarlyDispatch {
                slot: a2,
                missing: SlotId::new(NodeId::new(0, 1), 1)
            }]
        );
    }
}
