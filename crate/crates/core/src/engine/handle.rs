use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use crate::clock::{Clock, Millis};

use super::config::AgentKind;
use super::events::{Event, SlotId};
use super::state::{ChoiceAck, CommitResult, RunState, Task};
use super::EngineError;

/// Receives events as they are appended, while the state lock is held.
pub trait EventSink: Send {
    fn append(&mut self, events: &[Event]) -> std::io::Result<()>;
}

struct Inner {
    state: RunState,
    sink: Option<Box<dyn EventSink>>,
    flushed: usize,
}

/// Shared, linearizable access to a [`RunState`]. Every operation takes the
/// lock, reads the clock, transitions, persists new events, and wakes waiters.
/// Agent I/O happens outside the lock.
pub struct RunHandle {
    inner: Mutex<Inner>,
    changed: Condvar,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for RunHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RunHandle").field("clock", &self.clock).finish()
    }
}

impl RunHandle {
    pub fn new(state: RunState, clock: Arc<dyn Clock>) -> Self {
        let flushed = state.events().len();
        RunHandle {
            inner: Mutex::new(Inner {
                state,
                sink: None,
                flushed,
            }),
            changed: Condvar::new(),
            clock,
        }
    }

    /// Attaches a sink. Events already in the state are treated as persisted.
    pub fn with_sink(self, sink: Box<dyn EventSink>) -> Self {
        self.lock().sink = Some(sink);
        self
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn mutate<R>(
        &self,
        op: impl FnOnce(&mut RunState, Millis) -> Result<R, EngineError>,
    ) -> Result<R, EngineError> {
        let mut g = self.lock();
        let now = self.clock.now();
        let result = op(&mut g.state, now);
        let inner = &mut *g;
        let new = &inner.state.events()[inner.flushed..];
        if !new.is_empty() {
            if let Some(sink) = inner.sink.as_mut() {
                sink.append(new)
                    .map_err(|e| EngineError::Persist(e.to_string()))?;
            }
            inner.flushed = inner.state.events().len();
            self.changed.notify_all();
        }
        result
    }

    pub fn read<R>(&self, f: impl FnOnce(&RunState) -> R) -> R {
        f(&self.lock().state)
    }

    /// Consistent copy of the whole state.
    pub fn snapshot(&self) -> RunState {
        self.lock().state.clone()
    }

    pub fn is_finished(&self) -> bool {
        self.read(|s| s.is_finished())
    }

    pub fn next_task(
        &self,
        kind: AgentKind,
        agent: &str,
        session: Option<String>,
    ) -> Result<Option<Task>, EngineError> {
        self.mutate(|s, now| s.next_task(kind, agent, session, now))
    }

    /// Like [`RunHandle::next_task`] but waits up to `timeout` for a slot of
    /// `kind` to become ready. Returns `None` early once no slot of `kind` is
    /// outstanding.
    pub fn next_task_wait(
        &self,
        kind: AgentKind,
        agent: &str,
        timeout: Duration,
    ) -> Result<Option<Task>, EngineError> {
        let deadline = Instant::now() + timeout;
        let mut g = self.lock();
        loop {
            if g.state.is_finished() {
                return Err(EngineError::RunFinished);
            }
            if g.state.ready_count(kind) > 0 {
                drop(g);
                return self.next_task(kind, agent, None);
            }
            if g.state.outstanding(kind) == 0 {
                return Ok(None);
            }
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Ok(None);
            }
            g = self
                .changed
                .wait_timeout(g, left)
                .unwrap_or_else(|p| p.into_inner())
                .0;
        }
    }

    pub fn submit_choice(
        &self,
        slot: SlotId,
        agent: &str,
        index: usize,
    ) -> Result<ChoiceAck, EngineError> {
        self.mutate(|s, now| s.submit_choice(slot, agent, index, now))
    }

    pub fn submit_revision(
        &self,
        slot: SlotId,
        agent: &str,
        text: &str,
    ) -> Result<CommitResult, EngineError> {
        self.mutate(|s, now| s.submit_revision(slot, agent, text, now))
    }

    pub fn release_timeout(&self, slot: SlotId, deadline: Millis) -> Result<(), EngineError> {
        self.mutate(|s, now| s.release_timeout(slot, deadline, now))
    }

    pub fn release_expired(&self) -> Result<Vec<SlotId>, EngineError> {
        self.mutate(|s, now| Ok(s.release_expired(now)))
    }

    pub fn abandon(&self, slot: SlotId, agent: &str) -> Result<(), EngineError> {
        self.mutate(|s, now| s.abandon(slot, agent, now))
    }

    pub fn log_visibility(&self, slot: SlotId, hidden: bool) -> Result<(), EngineError> {
        self.mutate(|s, now| s.log_visibility(slot, hidden, now))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::LogicalClock;
    use crate::engine::{AiBackendConfig, Condition, RunConfig, ScriptedPolicy};
    use crate::statements::StatementPool;
    use std::collections::HashSet;

    struct VecSink(Arc<Mutex<Vec<Event>>>);

    impl EventSink for VecSink {
        fn append(&mut self, events: &[Event]) -> std::io::Result<()> {
            self.0.lock().unwrap().extend_from_slice(events);
            Ok(())
        }
    }

    fn handle() -> RunHandle {
        let cfg = RunConfig {
            condition: Condition::AiOnly,
            ai_backend: AiBackendConfig::Scripted {
                policy: ScriptedPolicy::Stubborn,
            },
            ..RunConfig::default()
        };
        let state = RunState::init_run(cfg, &StatementPool::default_pool()).unwrap();
        RunHandle::new(state, Arc::new(LogicalClock::default()))
    }

    #[test]
    fn sink_sees_every_event_once() {
        let log = Arc::new(Mutex::new(Vec::new()));
        let h = handle().with_sink(Box::new(VecSink(log.clone())));
        let t = h.next_task(AgentKind::Scripted, "a", None).unwrap().unwrap();
        h.submit_choice(t.slot, "a", 0).unwrap();
        // failed operations add nothing
        assert!(h.submit_choice(t.slot, "a", 0).is_err());
        h.submit_revision(t.slot, "a", "one two three four five").unwrap();
        assert_eq!(*log.lock().unwrap(), h.snapshot().events().to_vec());
        assert_eq!(log.lock().unwrap().len(), 3);
    }

    #[test]
    fn concurrent_next_task_gives_distinct_slots() {
        let h = Arc::new(handle());
        let got: Vec<SlotId> = std::thread::scope(|scope| {
            let joins: Vec<_> = (0..16)
                .map(|w| {
                    let h = h.clone();
                    scope.spawn(move || {
                        h.next_task(AgentKind::Scripted, &format!("w{w}"), None)
                            .unwrap()
                            .map(|t| t.slot)
                    })
                })
                .collect();
            joins.into_iter().filter_map(|j| j.join().unwrap()).collect()
        });
        assert_eq!(got.len(), 16);
        assert_eq!(got.iter().collect::<HashSet<_>>().len(), 16);
    }

    #[test]
    fn wait_returns_none_when_kind_has_no_work() {
        let h = handle();
        let r = h
            .next_task_wait(AgentKind::Human, "h", Duration::from_millis(5))
            .unwrap();
        assert_eq!(r, None);
    }
}
