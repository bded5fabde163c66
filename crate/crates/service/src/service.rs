//! Run registry, session tokens and AI worker supervision behind the HTTP
//! API. Every method is synchronous and holds engine locks only briefly.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::Duration;

use opinion_core::agents::{build_agent, PromptFraming, PromptTemplates};
use opinion_core::driver::{drive_handle, DriveOptions};
use opinion_core::engine::{AiBackendConfig, SlotCounts};
use opinion_core::llm::ChatTransport;
use opinion_core::metrics::series_for_run;
use opinion_core::stance::{Annotator, Lexicon, LexiconAnnotator};
use opinion_core::{
    AgentKind, Clock, Condition, EngineError, Millis, MetricsSeries, RunConfig, RunHandle, RunState, SlotId,
    SlotStatus, StatementPool, Transcript,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::persist::{PersistError, RunStore};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("{0}")]
    Gone(String),
    #[error("{0}")]
    Unauthorized(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("revision not accepted before {not_before}")]
    TooEarly { not_before: Millis },
    #[error("revision has {words} words, at least {min} required")]
    TooShort { words: usize, min: usize },
    #[error("{0}")]
    Internal(String),
}

impl From<EngineError> for ServiceError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(_) | EngineError::Seed(_) | EngineError::Topology(_) => {
                ServiceError::BadRequest(e.to_string())
            }
            EngineError::IndexOutOfRange { .. } => ServiceError::BadRequest(e.to_string()),
            EngineError::RunFinished => ServiceError::Gone(e.to_string()),
            EngineError::UnknownSlot(_) => ServiceError::NotFound(e.to_string()),
            EngineError::NotAssigned { .. } => ServiceError::Unauthorized(e.to_string()),
            EngineError::TooEarly { not_before } => ServiceError::TooEarly { not_before },
            EngineError::TooShort { words, min } => ServiceError::TooShort { words, min },
            EngineError::NotReady(_)
            | EngineError::WrongState { .. }
            | EngineError::DeadlineNotReached { .. } => ServiceError::Conflict(e.to_string()),
            EngineError::Persist(_) | EngineError::Replay { .. } => {
                ServiceError::Internal(e.to_string())
            }
        }
    }
}

impl From<PersistError> for ServiceError {
    fn from(e: PersistError) -> Self {
        ServiceError::Internal(e.to_string())
    }
}

/// Builds the transport for an LLM backend, or `None` when none is available.
pub type TransportFactory =
    Arc<dyn Fn(&AiBackendConfig) -> Option<Arc<dyn ChatTransport>> + Send + Sync>;

pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub pool: StatementPool,
    pub lexicon: Arc<Lexicon>,
    pub templates: Arc<PromptTemplates>,
    pub transports: TransportFactory,
    pub annotator: Arc<dyn Annotator>,
    /// Start AI workers for new and recovered runs.
    pub autostart_ai: bool,
    pub ai_workers: usize,
    /// Human slots one participant may hold or have filled in a run.
    pub max_slots_per_participant: usize,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        let lexicon = Lexicon::default_red_meat();
        ServiceConfig {
            data_dir: data_dir.into(),
            pool: StatementPool::default_pool(),
            lexicon: Arc::new(lexicon.clone()),
            templates: Arc::new(PromptTemplates::bundled()),
            transports: Arc::new(|_| None),
            annotator: Arc::new(LexiconAnnotator::new(lexicon)),
            autostart_ai: true,
            ai_workers: 4,
            max_slots_per_participant: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed { error: String },
}

#[derive(Debug, Clone)]
struct TokenInfo {
    run_id: String,
    slot: SlotId,
    participant: String,
    expires_at: Millis,
}

pub struct RunEntry {
    pub id: String,
    pub handle: RunHandle,
    idempotency_key: Option<String>,
    status: Mutex<RunStatus>,
    stop: AtomicBool,
    worker: Mutex<Option<JoinHandle<()>>>,
    admit: Mutex<()>,
    snapshot_at: AtomicUsize,
}

impl RunEntry {
    pub fn status(&self) -> RunStatus {
        self.status.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }

    fn set_status(&self, s: RunStatus) {
        *self.status.lock().unwrap_or_else(|p| p.into_inner()) = s;
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub status: RunStatus,
    pub config: RunConfig,
    pub counts: SlotCounts,
    pub committed: usize,
    pub total_slots: usize,
    pub completed_iterations: u32,
    #[serde(default)]
    pub idempotency_key: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Created {
    pub run_id: String,
    /// False when an earlier create with the same idempotency key is returned.
    pub created: bool,
    pub status: RunStatus,
}

/// What a participant sees: the question and the statements to pick from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskPayload {
    pub token: String,
    pub question: String,
    pub statements: Vec<String>,
    pub display_period_ms: i64,
    pub min_words: usize,
    pub expires_at: Millis,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChoiceReceipt {
    pub index: usize,
    pub revision_not_before: Millis,
    pub display_period_ms: i64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RevisionReceipt {
    pub committed: bool,
    pub iteration_complete: bool,
    pub run_complete: bool,
}

pub struct Service {
    config: ServiceConfig,
    clock: Arc<dyn Clock>,
    store: RunStore,
    runs: RwLock<BTreeMap<String, Arc<RunEntry>>>,
    tokens: Mutex<HashMap<String, TokenInfo>>,
    idempotency: Mutex<HashMap<String, String>>,
}

impl Service {
    /// Opens the data directory and recovers every run found in it.
    pub fn open(config: ServiceConfig, clock: Arc<dyn Clock>) -> Result<Arc<Self>, ServiceError> {
        let store = RunStore::new(&config.data_dir);
        let svc = Arc::new(Service {
            config,
            clock,
            store,
            runs: RwLock::new(BTreeMap::new()),
            tokens: Mutex::new(HashMap::new()),
            idempotency: Mutex::new(HashMap::new()),
        });
        for id in svc.store.list()? {
            let (header, state, sink) = svc.store.open(&id)?;
            if let Some(at) = state.last_event_time() {
                svc.clock.observe(at);
            }
            svc.restore_tokens(&id, &state);
            let finished = state.is_finished();
            let entry = svc.insert(id.clone(), header.idempotency_key, state, sink);
            if finished {
                entry.set_status(RunStatus::Complete);
            } else {
                svc.start_ai(&entry);
            }
            tracing::info!(run = %id, finished, "recovered run");
        }
        Ok(svc)
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn store(&self) -> &RunStore {
        &self.store
    }

    fn restore_tokens(&self, run_id: &str, state: &RunState) {
        let timeout = state.config().session_timeout_ms;
        let mut tokens = self.tokens.lock().unwrap_or_else(|p| p.into_inner());
        for s in state.slots() {
            if let (SlotStatus::Dispatched, AgentKind::Human, Some(tok), Some(agent), Some(at)) =
                (s.status, s.kind, &s.session, &s.assigned_agent, s.dispatched_at)
            {
                tokens.insert(
                    tok.clone(),
                    TokenInfo {
                        run_id: run_id.to_string(),
                        slot: s.id,
                        participant: agent.clone(),
                        expires_at: at.plus(timeout),
                    },
                );
            }
        }
    }

    fn insert(
        &self,
        id: String,
        idempotency_key: Option<String>,
        state: RunState,
        sink: crate::persist::FileSink,
    ) -> Arc<RunEntry> {
        let events = state.events().len();
        let entry = Arc::new(RunEntry {
            id: id.clone(),
            handle: RunHandle::new(state, self.clock.clone()).with_sink(Box::new(sink)),
            idempotency_key: idempotency_key.clone(),
            status: Mutex::new(RunStatus::Running),
            stop: AtomicBool::new(false),
            worker: Mutex::new(None),
            admit: Mutex::new(()),
            snapshot_at: AtomicUsize::new(events),
        });
        if let Some(k) = idempotency_key {
            self.idempotency
                .lock()
                .unwrap_or_else(|p| p.into_inner())
                .insert(k, id.clone());
        }
        self.runs
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id, entry.clone());
        entry
    }

    pub fn run(&self, run_id: &str) -> Result<Arc<RunEntry>, ServiceError> {
        self.runs
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(run_id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("run {run_id}")))
    }

    pub fn run_ids(&self) -> Vec<String> {
        self.runs
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .keys()
            .cloned()
            .collect()
    }

    pub fn create_run(
        &self,
        config: RunConfig,
        idempotency_key: Option<String>,
    ) -> Result<Created, ServiceError> {
        let mut keys = self.idempotency.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(id) = idempotency_key.as_ref().and_then(|k| keys.get(k)) {
            let entry = self.run(id)?;
            if entry.handle.read(|s| s.config() != &config) {
                return Err(ServiceError::Conflict(
                    "idempotency key was used with a different config".into(),
                ));
            }
            return Ok(Created {
                run_id: id.clone(),
                created: false,
                status: entry.status(),
            });
        }
        let state = RunState::init_run(config, &self.config.pool)?;
        if state.config().condition != Condition::HumanOnly {
            self.agent_for(state.config())?;
        }
        let run_id = uuid::Uuid::new_v4().simple().to_string();
        let sink = self.store.create(&run_id, idempotency_key.clone(), &state)?;
        if let Some(k) = &idempotency_key {
            keys.insert(k.clone(), run_id.clone());
        }
        drop(keys);
        let entry = self.insert(run_id.clone(), idempotency_key, state, sink);
        self.snapshot(&entry)?;
        self.start_ai(&entry);
        tracing::info!(run = %run_id, "created run");
        Ok(Created {
            run_id,
            created: true,
            status: entry.status(),
        })
    }

    fn agent_for(
        &self,
        config: &RunConfig,
    ) -> Result<Arc<dyn opinion_core::agents::Agent>, ServiceError> {
        let transport = (self.config.transports)(&config.ai_backend);
        build_agent(
            &config.ai_backend,
            PromptFraming::new(config.framing, self.config.templates.clone()),
            transport,
            self.config.lexicon.clone(),
            config.min_words,
        )
        .map_err(|e| ServiceError::BadRequest(e.to_string()))
    }

    fn start_ai(&self, entry: &Arc<RunEntry>) {
        if !self.config.autostart_ai {
            return;
        }
        let config = entry.handle.read(|s| s.config().clone());
        if config.condition == Condition::HumanOnly {
            return;
        }
        let agent = match self.agent_for(&config) {
            Ok(a) => a,
            Err(e) => {
                entry.set_status(RunStatus::Failed {
                    error: e.to_string(),
                });
                return;
            }
        };
        let options = DriveOptions {
            workers: self.config.ai_workers,
            poll: Duration::from_millis(200),
            max_agent_failures: 5,
            agent_prefix: format!("ai-{}", &entry.id[..entry.id.len().min(8)]),
        };
        let e = entry.clone();
        let store = self.store.clone();
        let handle = std::thread::spawn(move || {
            match drive_handle(&e.handle, agent.as_ref(), &options, &e.stop) {
                Ok(()) => {
                    if e.handle.is_finished() {
                        e.set_status(RunStatus::Complete);
                    }
                }
                Err(err) => {
                    tracing::error!(run = %e.id, error = %err, "ai worker failed");
                    e.set_status(RunStatus::Failed {
                        error: err.to_string(),
                    });
                }
            }
            let t = Transcript::from_state(&e.id, &e.handle.snapshot());
            if let Err(err) = store.write_transcript(&t) {
                tracing::error!(run = %e.id, error = %err, "writing transcript failed");
            }
        });
        *entry.worker.lock().unwrap_or_else(|p| p.into_inner()) = Some(handle);
    }

    /// Blocks until the run's AI worker (if any) has exited.
    pub fn wait_ai(&self, run_id: &str) -> Result<(), ServiceError> {
        let entry = self.run(run_id)?;
        let h = entry.worker.lock().unwrap_or_else(|p| p.into_inner()).take();
        if let Some(h) = h {
            h.join()
                .map_err(|_| ServiceError::Internal("ai worker panicked".into()))?;
        }
        Ok(())
    }

    pub fn summary(&self, run_id: &str) -> Result<RunSummary, ServiceError> {
        let entry = self.run(run_id)?;
        Ok(entry.handle.read(|s| RunSummary {
            run_id: entry.id.clone(),
            status: entry.status(),
            config: s.config().clone(),
            counts: s.counts(),
            committed: s.committed_count(),
            total_slots: s.slots().len(),
            completed_iterations: s.completed_iterations(),
            idempotency_key: entry.idempotency_key.clone(),
        }))
    }

    pub fn transcript(&self, run_id: &str) -> Result<Transcript, ServiceError> {
        let entry = self.run(run_id)?;
        Ok(Transcript::from_state(&entry.id, &entry.handle.snapshot()))
    }

    pub fn metrics(&self, run_id: &str) -> Result<MetricsSeries, ServiceError> {
        let t = self.transcript(run_id)?;
        series_for_run(&t, self.config.annotator.as_ref())
            .map_err(|e| ServiceError::Internal(e.to_string()))
    }

    pub fn next_task(
        &self,
        run_id: &str,
        participant: &str,
    ) -> Result<Option<TaskPayload>, ServiceError> {
        if participant.trim().is_empty() {
            return Err(ServiceError::BadRequest("participant_id is required".into()));
        }
        let entry = self.run(run_id)?;
        match entry.status() {
            RunStatus::Running => {}
            RunStatus::Complete => return Err(ServiceError::Gone(format!("run {run_id} is complete"))),
            RunStatus::Failed { error } => {
                return Err(ServiceError::Gone(format!("run {run_id} failed: {error}")))
            }
        }
        let _admit = entry.admit.lock().unwrap_or_else(|p| p.into_inner());
        let held = entry.handle.read(|s| {
            s.slots()
                .iter()
                .filter(|n| {
                    n.kind == AgentKind::Human
                        && n.assigned_agent.as_deref() == Some(participant)
                        && matches!(n.status, SlotStatus::Dispatched | SlotStatus::Committed)
                })
                .count()
        });
        if held >= self.config.max_slots_per_participant {
            return Err(ServiceError::Conflict(format!(
                "participant {participant} has already taken part in this run"
            )));
        }
        let token = uuid::Uuid::new_v4().simple().to_string();
        let task = entry
            .handle
            .next_task(AgentKind::Human, participant, Some(token.clone()))?;
        let Some(task) = task else {
            return Ok(None);
        };
        let (dispatched_at, cfg) = entry.handle.read(|s| {
            (
                s.slot(task.slot).ok().and_then(|n| n.dispatched_at).unwrap_or_default(),
                s.config().clone(),
            )
        });
        let expires_at = dispatched_at.plus(cfg.session_timeout_ms);
        self.tokens.lock().unwrap_or_else(|p| p.into_inner()).insert(
            token.clone(),
            TokenInfo {
                run_id: run_id.to_string(),
                slot: task.slot,
                participant: participant.to_string(),
                expires_at,
            },
        );
        Ok(Some(TaskPayload {
            token,
            question: task.question,
            statements: task.observed,
            display_period_ms: cfg.display_period_ms,
            min_words: cfg.min_words,
            expires_at,
        }))
    }

    fn token(&self, token: &str) -> Result<(TokenInfo, Arc<RunEntry>), ServiceError> {
        let info = self
            .tokens
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .get(token)
            .cloned()
            .ok_or_else(|| ServiceError::Unauthorized("invalid or already used session token".into()))?;
        let entry = self.run(&info.run_id)?;
        if self.clock.now() >= info.expires_at {
            self.drop_token(token);
            let _ = entry.handle.release_timeout(info.slot, info.expires_at);
            return Err(ServiceError::Unauthorized("session token has expired".into()));
        }
        Ok((info, entry))
    }

    fn drop_token(&self, token: &str) {
        self.tokens
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .remove(token);
    }

    pub fn submit_choice(&self, token: &str, index: usize) -> Result<ChoiceReceipt, ServiceError> {
        let (info, entry) = self.token(token)?;
        let ack = entry
            .handle
            .submit_choice(info.slot, &info.participant, index)?;
        Ok(ChoiceReceipt {
            index: ack.index,
            revision_not_before: ack.revision_not_before,
            display_period_ms: entry.handle.read(|s| s.config().display_period_ms),
        })
    }

    pub fn submit_revision(&self, token: &str, text: &str) -> Result<RevisionReceipt, ServiceError> {
        let (info, entry) = self.token(token)?;
        let r = entry
            .handle
            .submit_revision(info.slot, &info.participant, text.trim())?;
        self.drop_token(token);
        if r.run_complete {
            entry.set_status(RunStatus::Complete);
        }
        if r.iteration_complete {
            self.snapshot(&entry)?;
        }
        Ok(RevisionReceipt {
            committed: true,
            iteration_complete: r.iteration_complete,
            run_complete: r.run_complete,
        })
    }

    pub fn abandon(&self, token: &str) -> Result<(), ServiceError> {
        let (info, entry) = self.token(token)?;
        entry.handle.abandon(info.slot, &info.participant)?;
        self.drop_token(token);
        Ok(())
    }

    pub fn log_visibility(&self, token: &str, hidden: bool) -> Result<(), ServiceError> {
        let (info, entry) = self.token(token)?;
        entry.handle.log_visibility(info.slot, hidden)?;
        Ok(())
    }

    fn snapshot(&self, entry: &RunEntry) -> Result<(), ServiceError> {
        let state = entry.handle.snapshot();
        self.store
            .write_transcript(&Transcript::from_state(&entry.id, &state))?;
        entry.snapshot_at.store(state.events().len(), Ordering::SeqCst);
        Ok(())
    }

    /// Releases expired sessions, drops their tokens, marks finished runs and
    /// refreshes stale snapshots.
    pub fn sweep(&self) {
        let entries: Vec<Arc<RunEntry>> = self
            .runs
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .values()
            .cloned()
            .collect();
        for entry in entries {
            if entry.status() == RunStatus::Running {
                match entry.handle.release_expired() {
                    Ok(released) if !released.is_empty() => {
                        tracing::info!(run = %entry.id, count = released.len(), "released expired sessions");
                        self.tokens
                            .lock()
                            .unwrap_or_else(|p| p.into_inner())
                            .retain(|_, t| !(t.run_id == entry.id && released.contains(&t.slot)));
                    }
                    Ok(_) => {}
                    Err(e) => tracing::error!(run = %entry.id, error = %e, "sweep failed"),
                }
                if entry.handle.is_finished() {
                    entry.set_status(RunStatus::Complete);
                }
            }
            let events = entry.handle.read(|s| s.events().len());
            if events != entry.snapshot_at.load(Ordering::SeqCst) {
                if let Err(e) = self.snapshot(&entry) {
                    tracing::error!(run = %entry.id, error = %e, "snapshot failed");
                }
            }
        }
    }

    /// Stops AI workers and writes final snapshots.
    pub fn shutdown(&self) {
        let entries: Vec<Arc<RunEntry>> = self
            .runs
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .values()
            .cloned()
            .collect();
        for e in &entries {
            e.stop.store(true, Ordering::SeqCst);
        }
        for e in &entries {
            let h = e.worker.lock().unwrap_or_else(|p| p.into_inner()).take();
            if let Some(h) = h {
                let _ = h.join();
            }
            if let Err(err) = self.snapshot(e) {
                tracing::error!(run = %e.id, error = %err, "final snapshot failed");
            }
        }
    }
}
