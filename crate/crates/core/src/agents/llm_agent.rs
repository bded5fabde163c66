use std::sync::{Arc, OnceLock};

use regex::Regex;

use crate::engine::AgentKind;
use crate::llm::{ChatMessage, ChatRequest, ChatTransport};
use crate::text::{word_count, MIN_WORDS};

use super::{Agent, AgentError, PromptFraming, TaskContext};

/// Reads `answer: <k>` (1-based) from a reply. Exactly one distinct in-range
/// answer must be present.
pub fn parse_choice(reply: &str, observed: usize) -> Option<usize> {
    static ANSWER: OnceLock<Regex> = OnceLock::new();
    let re = ANSWER.get_or_init(|| Regex::new(r"(?i)answer\s*:\s*\**\s*(\d+)").unwrap());
    let mut found: Option<usize> = None;
    for c in re.captures_iter(reply) {
        let k: usize = c[1].parse().ok()?;
        if k == 0 || k > observed {
            return None;
        }
        match found {
            Some(prev) if prev != k - 1 => return None,
            _ => found = Some(k - 1),
        }
    }
    found
}

fn clean_revision(reply: &str) -> String {
    let t = reply.trim();
    let t = t
        .strip_prefix("Revised statement:")
        .or_else(|| t.strip_prefix("Statement:"))
        .unwrap_or(t)
        .trim();
    let quoted = [('"', '"'), ('\u{201c}', '\u{201d}'), ('\'', '\'')];
    for (open, close) in quoted {
        if t.len() >= 2 && t.starts_with(open) && t.ends_with(close) {
            return t[open.len_utf8()..t.len() - close.len_utf8()].trim().to_string();
        }
    }
    t.to_string()
}

/// Participant backed by a chat-completions model. Each slot costs one choose
/// call and one revise call, plus at most one retry each. A forced choice
/// (one observed statement) skips the choose call.
pub struct LlmAgent {
    transport: Arc<dyn ChatTransport>,
    model: String,
    temperature: f64,
    framing: PromptFraming,
    min_words: usize,
}

impl std::fmt::Debug for LlmAgent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmAgent")
            .field("model", &self.model)
            .field("temperature", &self.temperature)
            .field("framing", &self.framing.framing())
            .finish()
    }
}

impl LlmAgent {
    pub fn new(transport: Arc<dyn ChatTransport>, model: String, framing: PromptFraming) -> Self {
        LlmAgent {
            transport,
            model,
            temperature: 1.0,
            framing,
            min_words: MIN_WORDS,
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_min_words(mut self, min_words: usize) -> Self {
        self.min_words = min_words;
        self
    }

    fn call(&self, messages: Vec<ChatMessage>) -> Result<String, AgentError> {
        let req = ChatRequest {
            model: self.model.clone(),
            messages,
            temperature: self.temperature,
        };
        Ok(self.transport.complete(&req)?.content)
    }
}

impl Agent for LlmAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Llm
    }

    fn choose(
        &self,
        _ctx: &TaskContext,
        question: &str,
        observed: &[String],
    ) -> Result<usize, AgentError> {
        match observed.len() {
            0 => return Err(AgentError::EmptyObserved),
            1 => return Ok(0),
            _ => {}
        }
        let mut messages = vec![
            ChatMessage::system(self.framing.system()),
            ChatMessage::user(self.framing.render_choose(question, observed)),
        ];
        let reply = self.call(messages.clone())?;
        if let Some(i) = parse_choice(&reply, observed.len()) {
            return Ok(i);
        }
        tracing::debug!(reply = %reply, "unparseable choice, retrying");
        messages.push(ChatMessage::assistant(reply));
        messages.push(ChatMessage::user(format!(
            "Reply with a single line of the form `answer: <number>`, where the number is between 1 and {}.",
            observed.len()
        )));
        let reply = self.call(messages)?;
        parse_choice(&reply, observed.len()).ok_or(AgentError::Unparseable { reply })
    }

    fn revise(
        &self,
        _ctx: &TaskContext,
        question: &str,
        chosen: &str,
        observed: &[String],
    ) -> Result<String, AgentError> {
        let mut messages = vec![
            ChatMessage::system(self.framing.system()),
            ChatMessage::user(self.framing.render_revise(question, chosen, observed)),
        ];
        let reply = self.call(messages.clone())?;
        let text = clean_revision(&reply);
        if word_count(&text) >= self.min_words {
            return Ok(text);
        }
        messages.push(ChatMessage::assistant(reply));
        messages.push(ChatMessage::user(format!(
            "That is too short. Write the statement again using at least {} words.",
            self.min_words
        )));
        let text = clean_revision(&self.call(messages)?);
        let words = word_count(&text);
        if words >= self.min_words {
            Ok(text)
        } else {
            Err(AgentError::TooShort {
                words,
                min: self.min_words,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{Framing, SlotId};
    use crate::llm::{CountingTransport, FnTransport, QueueTransport, Role, TransportError};
    use crate::topology::NodeId;

    fn ctx() -> TaskContext {
        TaskContext {
            slot: SlotId::new(NodeId::new(0, 0), 1),
            run_seed: 0,
        }
    }

    fn obs() -> Vec<String> {
        vec!["a b c d e".into(), "f g h i j".into(), "k l m n o".into()]
    }

    fn agent(t: Arc<dyn ChatTransport>) -> LlmAgent {
        LlmAgent::new(t, "m".into(), PromptFraming::bundled(Framing::Consensus))
    }

    #[test]
    fn parse_choice_cases() {
        assert_eq!(parse_choice("answer: 2", 3), Some(1));
        assert_eq!(parse_choice("Answer : 3\n", 3), Some(2));
        assert_eq!(parse_choice("I think... ANSWER:1", 3), Some(0));
        assert_eq!(parse_choice("**Answer:** 2", 3), Some(1));
        assert_eq!(parse_choice("Answer: **2**", 3), Some(1));
        assert_eq!(parse_choice("answer: 4", 3), None);
        assert_eq!(parse_choice("answer: 0", 3), None);
        assert_eq!(parse_choice("the second one", 3), None);
        assert_eq!(parse_choice("answer: 1 ... answer: 2", 3), None);
        assert_eq!(parse_choice("answer: 2. Final answer: 2", 3), Some(1));
    }

    #[test]
    fn choose_then_revise_uses_two_calls() {
        let q = Arc::new(QueueTransport::new(["answer: 2", "A fixed reply with enough words."]));
        let c = Arc::new(CountingTransport::new(q.clone()));
        let a = agent(c.clone()).with_temperature(0.7);
        assert_eq!(a.choose(&ctx(), "Q?", &obs()).unwrap(), 1);
        assert_eq!(
            a.revise(&ctx(), "Q?", "f g h i j", &obs()).unwrap(),
            "A fixed reply with enough words."
        );
        assert_eq!(c.calls(), 2);
        let reqs = q.requests();
        assert_eq!(reqs[0].model, "m");
        assert_eq!(reqs[0].temperature, 0.7);
        assert_eq!(reqs[0].messages[0].role, Role::System);
        assert!(reqs[0].messages[1].content.contains("1. a b c d e"));
        assert!(reqs[1].messages[1].content.contains("f g h i j"));
    }

    #[test]
    fn choice_retries_once() {
        let q = Arc::new(QueueTransport::new(["the second", "answer: 3"]));
        assert_eq!(agent(q.clone()).choose(&ctx(), "Q?", &obs()).unwrap(), 2);
        let reqs = q.requests();
        assert_eq!(reqs.len(), 2);
        assert_eq!(reqs[1].messages.len(), 4);
        assert_eq!(reqs[1].messages[2].role, Role::Assistant);
    }

    #[test]
    fn prose_twice_is_unparseable() {
        let q = Arc::new(QueueTransport::new(["hmm", "still prose"]));
        let err = agent(q).choose(&ctx(), "Q?", &obs()).unwrap_err();
        assert!(matches!(err, AgentError::Unparseable { reply } if reply == "still prose"));
    }

    #[test]
    fn short_revision_retries_then_fails() {
        let q = Arc::new(QueueTransport::new(["two words", "still two"]));
        let err = agent(q.clone()).revise(&ctx(), "Q?", "x", &obs()).unwrap_err();
        assert!(matches!(err, AgentError::TooShort { words: 2, min: 5 }));
        assert_eq!(q.requests().len(), 2);

        let q = Arc::new(QueueTransport::new(["two words", "\"now there are five words\""]));
        assert_eq!(
            agent(q).revise(&ctx(), "Q?", "x", &obs()).unwrap(),
            "now there are five words"
        );
    }

    #[test]
    fn transport_errors_surface() {
        let t = Arc::new(FnTransport(|_: &ChatRequest| {
            Err(TransportError::Status {
                status: 503,
                body: "down".into(),
            })
        }));
        assert!(matches!(
            agent(t).choose(&ctx(), "Q?", &obs()),
            Err(AgentError::Transport(TransportError::Status { status: 503, .. }))
        ));
    }

    #[test]
    fn empty_observed() {
        let q = Arc::new(QueueTransport::new(Vec::<String>::new()));
        assert!(matches!(
            agent(q.clone()).choose(&ctx(), "Q?", &[]),
            Err(AgentError::EmptyObserved)
        ));
        assert!(q.requests().is_empty());
    }
}
