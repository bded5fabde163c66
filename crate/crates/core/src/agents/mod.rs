//! Agent abstraction with scripted, LLM and human backends.

mod llm_agent;
pub mod prompts;
mod scripted;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::engine::{AgentKind, AiBackendConfig, SlotId};
use crate::llm::{ChatTransport, TransportError};
use crate::stance::Lexicon;

pub use llm_agent::{parse_choice, LlmAgent};
pub use prompts::{PromptFraming, PromptTemplates};
pub use scripted::{paraphrase, strip_paraphrase, ScriptedAgent, PARAPHRASE_PREFIXES};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("no observed statements to choose from")]
    EmptyObserved,
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("could not read a choice from the model reply {reply:?}")]
    Unparseable { reply: String },
    #[error("revision has {words} words, at least {min} required")]
    TooShort { words: usize, min: usize },
    #[error("human slots are filled through the participant service")]
    HumanBackend,
    #[error("llm backend requires a transport")]
    MissingTransport,
}

/// Identifies the slot an agent is working on, for per-slot randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskContext {
    pub slot: SlotId,
    pub run_seed: u64,
}

impl TaskContext {
    /// RNG that depends only on the run seed, the slot and `purpose`, so
    /// scripted behavior does not depend on dispatch order.
    pub fn rng(&self, purpose: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.run_seed);
        let slot = ((self.slot.iteration as u64) << 40)
            ^ ((self.slot.row as u64) << 20)
            ^ self.slot.col as u64;
        rng.set_stream(slot.wrapping_mul(4).wrapping_add(purpose).wrapping_add(16));
        rng
    }
}

/// One participant: picks a statement, then rewrites it.
pub trait Agent: Send + Sync {
    fn kind(&self) -> AgentKind;

    fn choose(&self, ctx: &TaskContext, question: &str, observed: &[String])
        -> Result<usize, AgentError>;

    fn revise(
        &self,
        ctx: &TaskContext,
        question: &str,
        chosen: &str,
        observed: &[String],
    ) -> Result<String, AgentError>;
}

/// Placeholder for slots filled through the participant service.
#[derive(Debug, Default, Clone, Copy)]
pub struct HumanAgent;

impl Agent for HumanAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Human
    }

    fn choose(&self, _: &TaskContext, _: &str, _: &[String]) -> Result<usize, AgentError> {
        Err(AgentError::HumanBackend)
    }

    fn revise(&self, _: &TaskContext, _: &str, _: &str, _: &[String]) -> Result<String, AgentError> {
        Err(AgentError::HumanBackend)
    }
}

/// Builds the AI agent a run config asks for. LLM backends need a transport.
pub fn build_agent(
    backend: &AiBackendConfig,
    framing: PromptFraming,
    transport: Option<Arc<dyn ChatTransport>>,
    lexicon: Arc<Lexicon>,
    min_words: usize,
) -> Result<Arc<dyn Agent>, AgentError> {
    Ok(match backend {
        AiBackendConfig::Scripted { policy } => Arc::new(ScriptedAgent::new(*policy, lexicon)),
        AiBackendConfig::Llm {
            model, temperature, ..
        } => {
            let transport = transport.ok_or(AgentError::MissingTransport)?;
            Arc::new(
                LlmAgent::new(transport, model.clone(), framing)
                    .with_temperature(*temperature)
                    .with_min_words(min_words),
            )
        }
    })
}
