//! Runs AI agents against a [`RunHandle`] from a pool of worker threads, and
//! executes batches of AI-only runs.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use thiserror::Error;

use crate::agents::{Agent, AgentError, TaskContext};
use crate::clock::Clock;
use crate::engine::{Condition, EngineError, Framing, RunConfig, RunHandle, RunState, SlotId};
use crate::statements::StatementPool;
use crate::transcript::Transcript;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("agent failed on slot {slot}: {source}")]
    Agent {
        slot: SlotId,
        #[source]
        source: AgentError,
    },
    #[error("run has human slots; only ai_only runs can be driven unattended")]
    NotAiOnly,
    #[error("stopped before the run finished")]
    Stopped,
}

#[derive(Debug, Clone)]
pub struct DriveOptions {
    pub workers: usize,
    /// How long a worker waits for a ready slot before rechecking `stop`.
    pub poll: Duration,
    /// Agent failures tolerated before the drive gives up. Each failed slot
    /// is released back to ready.
    pub max_agent_failures: usize,
    /// Prefix for agent ids in the event log.
    pub agent_prefix: String,
}

impl Default for DriveOptions {
    fn default() -> Self {
        DriveOptions {
            workers: 4,
            poll: Duration::from_millis(50),
            max_agent_failures: 0,
            agent_prefix: "ai".to_string(),
        }
    }
}

struct Shared<'a> {
    handle: &'a RunHandle,
    agent: &'a dyn Agent,
    options: &'a DriveOptions,
    stop: &'a AtomicBool,
    failures: AtomicUsize,
    first_error: Mutex<Option<DriverError>>,
}

impl Shared<'_> {
    fn fail(&self, err: DriverError) {
        let mut slot = self.first_error.lock().unwrap_or_else(|p| p.into_inner());
        if slot.is_none() {
            *slot = Some(err);
        }
        self.stop.store(true, Ordering::SeqCst);
    }
}

fn worker(shared: &Shared<'_>, w: usize) {
    let kind = shared.agent.kind();
    let run_seed = shared.handle.read(|s| s.config().rng_seed);
    let mut n = 0usize;
    while !shared.stop.load(Ordering::SeqCst) {
        // every task gets a fresh agent identity
        let agent_id = format!("{}-w{}-{}", shared.options.agent_prefix, w, n);
        let task = match shared.handle.next_task_wait(kind, &agent_id, shared.options.poll) {
            Ok(Some(task)) => task,
            Ok(None) => {
                if shared.handle.read(|s| s.outstanding(kind)) == 0 {
                    return;
                }
                continue;
            }
            Err(EngineError::RunFinished) => return,
            Err(e) => return shared.fail(e.into()),
        };
        n += 1;
        let ctx = TaskContext {
            slot: task.slot,
            run_seed,
        };
        let outcome = shared
            .agent
            .choose(&ctx, &task.question, &task.observed)
            .and_then(|i| {
                let chosen = task.observed.get(i).cloned().unwrap_or_default();
                Ok((i, shared.agent.revise(&ctx, &task.question, &chosen, &task.observed)?))
            });
        match outcome {
            Ok((index, text)) => {
                let r = shared
                    .handle
                    .submit_choice(task.slot, &agent_id, index)
                    .and_then(|_| shared.handle.submit_revision(task.slot, &agent_id, &text));
                if let Err(e) = r {
                    let _ = shared.handle.abandon(task.slot, &agent_id);
                    return shared.fail(e.into());
                }
            }
            Err(source) => {
                tracing::warn!(slot = %task.slot, error = %source, "agent failed, releasing slot");
                let _ = shared.handle.abandon(task.slot, &agent_id);
                let failures = shared.failures.fetch_add(1, Ordering::SeqCst) + 1;
                if failures > shared.options.max_agent_failures {
                    return shared.fail(DriverError::Agent {
                        slot: task.slot,
                        source,
                    });
                }
            }
        }
    }
}

/// Fills every ready slot of `agent.kind()` until none is outstanding, the
/// run finishes, `stop` is set, or an error occurs.
pub fn drive_handle(
    handle: &RunHandle,
    agent: &dyn Agent,
    options: &DriveOptions,
    stop: &AtomicBool,
) -> Result<(), DriverError> {
    let shared = Shared {
        handle,
        agent,
        options,
        stop,
        failures: AtomicUsize::new(0),
        first_error: Mutex::new(None),
    };
    std::thread::scope(|scope| {
        for w in 0..options.workers.max(1) {
            let shared = &shared;
            scope.spawn(move || worker(shared, w));
        }
    });
    match shared.first_error.into_inner().unwrap_or_else(|p| p.into_inner()) {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Seeds and completes one AI-only run.
pub fn drive_run(
    run_id: &str,
    config: RunConfig,
    pool: &StatementPool,
    agent: &dyn Agent,
    options: &DriveOptions,
    clock: Arc<dyn Clock>,
) -> Result<Transcript, DriverError> {
    if config.condition != Condition::AiOnly {
        return Err(DriverError::NotAiOnly);
    }
    let handle = RunHandle::new(RunState::init_run(config, pool)?, clock);
    let stop = AtomicBool::new(false);
    drive_handle(&handle, agent, options, &stop)?;
    let state = handle.snapshot();
    if !state.is_finished() {
        return Err(DriverError::Stopped);
    }
    Ok(Transcript::from_state(run_id, &state))
}

#[derive(Debug)]
pub struct BatchOutcome {
    pub index: usize,
    pub run_id: String,
    pub rng_seed: u64,
    pub framing: Framing,
    pub result: Result<Transcript, DriverError>,
}

#[derive(Debug, Clone)]
pub struct BatchOptions {
    /// Runs executing at once.
    pub parallelism: usize,
    pub drive: DriveOptions,
}

impl Default for BatchOptions {
    fn default() -> Self {
        BatchOptions {
            parallelism: 2,
            drive: DriveOptions::default(),
        }
    }
}

/// Executes AI-only runs, at most `parallelism` at a time. A failing run is
/// reported in its outcome and does not stop the others. `on_done` sees each
/// outcome as it completes, for persistence. Outcomes come back in input
/// order.
pub fn run_llm_batch<F>(
    configs: &[RunConfig],
    pool: &StatementPool,
    agent_for: F,
    options: &BatchOptions,
    clock: Arc<dyn Clock>,
    on_done: &(dyn Fn(&BatchOutcome) + Sync),
) -> Vec<BatchOutcome>
where
    F: Fn(&RunConfig) -> Result<Arc<dyn Agent>, AgentError> + Sync,
{
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<BatchOutcome>> = Mutex::new(Vec::with_capacity(configs.len()));
    std::thread::scope(|scope| {
        for _ in 0..options.parallelism.max(1).min(configs.len().max(1)) {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::SeqCst);
                let Some(config) = configs.get(index) else {
                    return;
                };
                let run_id = format!("batch-{index:03}-{}-{}", config.framing, config.rng_seed);
                let result = agent_for(config)
                    .map_err(|source| DriverError::Agent {
                        slot: SlotId::new(crate::topology::NodeId::new(0, 0), 1),
                        source,
                    })
                    .and_then(|agent| {
                        drive_run(
                            &run_id,
                            config.clone(),
                            pool,
                            agent.as_ref(),
                            &options.drive,
                            clock.clone(),
                        )
                    });
                if let Err(e) = &result {
                    tracing::error!(run = %run_id, error = %e, "batch run failed");
                }
                let outcome = BatchOutcome {
                    index,
                    run_id,
                    rng_seed: config.rng_seed,
                    framing: config.framing,
                    result,
                };
                on_done(&outcome);
                results.lock().unwrap_or_else(|p| p.into_inner()).push(outcome);
            });
        }
    });
    let mut out = results.into_inner().unwrap_or_else(|p| p.into_inner());
    out.sort_by_key(|o| o.index);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{LlmAgent, PromptFraming, ScriptedAgent};
    use crate::clock::LogicalClock;
    use crate::engine::{AiBackendConfig, ScriptedPolicy};
    use crate::llm::{ChatRequest, FnTransport, TransportError};
    use crate::stance::Lexicon;

    fn scripted(policy: ScriptedPolicy) -> ScriptedAgent {
        ScriptedAgent::new(policy, Arc::new(Lexicon::default_red_meat()))
    }

    fn cfg(seed: u64) -> RunConfig {
        RunConfig::ai_only(
            AiBackendConfig::Scripted {
                policy: ScriptedPolicy::MajorityCopy,
            },
            seed,
        )
    }

    #[test]
    fn scripted_run_completes_and_is_deterministic() {
        let pool = StatementPool::default_pool();
        let agent = scripted(ScriptedPolicy::MajorityCopy);
        let run = |workers| {
            let opts = DriveOptions {
                workers,
                ..DriveOptions::default()
            };
            drive_run("r", cfg(5), &pool, &agent, &opts, Arc::new(LogicalClock::default())).unwrap()
        };
        let a = run(1);
        let b = run(6);
        assert_eq!(a.committed_count(), 200);
        let texts = |t: &Transcript| t.statement_table().unwrap();
        assert_eq!(texts(&a), texts(&b));
    }

    #[test]
    fn hybrid_is_rejected() {
        let pool = StatementPool::default_pool();
        let agent = scripted(ScriptedPolicy::Stubborn);
        let c = RunConfig::default();
        assert!(matches!(
            drive_run("r", c, &pool, &agent, &DriveOptions::default(), Arc::new(LogicalClock::default())),
            Err(DriverError::NotAiOnly)
        ));
    }

    #[test]
    fn batch_isolates_failures() {
        let pool = StatementPool::default_pool();
        let configs: Vec<RunConfig> = (0..3)
            .map(|i| {
                RunConfig::ai_only(
                    AiBackendConfig::Llm {
                        model: if i == 1 { "broken".into() } else { "stub".into() },
                        temperature: 1.0,
                        endpoint: None,
                    },
                    i,
                )
            })
            .collect();
        let transport = Arc::new(FnTransport(|req: &ChatRequest| {
            if req.model == "broken" {
                return Err(TransportError::Request("connection refused".into()));
            }
            let last = &req.messages.last().unwrap().content;
            Ok(if last.contains("answer:") {
                "answer: 1".to_string()
            } else {
                "Red meat is fine to eat in moderation.".to_string()
            })
        }));
        let seen = AtomicUsize::new(0);
        let out = run_llm_batch(
            &configs,
            &pool,
            |c| {
                Ok(Arc::new(LlmAgent::new(
                    transport.clone(),
                    match &c.ai_backend {
                        AiBackendConfig::Llm { model, .. } => model.clone(),
                        _ => unreachable!(),
                    },
                    PromptFraming::bundled(c.framing),
                )) as Arc<dyn Agent>)
            },
            &BatchOptions::default(),
            Arc::new(LogicalClock::default()),
            &|_| {
                seen.fetch_add(1, Ordering::SeqCst);
            },
        );
        assert_eq!(seen.load(Ordering::SeqCst), 3);
        assert_eq!(out.iter().map(|o| o.index).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!(out[0].result.is_ok());
        assert!(matches!(out[1].result, Err(DriverError::Agent { .. })));
        assert!(out[2].result.is_ok());
        assert_eq!(out[2].rng_seed, 2);
    }
}
