use std::sync::Arc;

use crate::llm::{ChatMessage, ChatRequest, ChatTransport};

use super::{AnnotateError, AnnotationBatch, Annotator, LabelSource, Stance, StanceLabel};

const SYSTEM: &str = "You label short statements by the position they take on a yes/no question. \
Use \"positive\" when the statement argues for a yes answer, \"negative\" when it argues for a no \
answer, and \"neutral\" when it takes no side or presents both sides.";

/// Stance annotator backed by a chat-completions model. The model is asked
/// for a JSON array with one label per statement, in order.
pub struct LlmAnnotator {
    transport: Arc<dyn ChatTransport>,
    model: String,
    temperature: f64,
}

impl LlmAnnotator {
    pub fn new(transport: Arc<dyn ChatTransport>, model: impl Into<String>) -> Self {
        LlmAnnotator {
            transport,
            model: model.into(),
            temperature: 0.0,
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    fn prompt(batch: &AnnotationBatch) -> String {
        let mut out = format!("Question: {}\n\nStatements:\n", batch.question());
        for (i, it) in batch.items().iter().enumerate() {
            out.push_str(&format!("{}. {}\n", i + 1, it.text.replace('\n', " ")));
        }
        out.push_str(&format!(
            "\nReply with a JSON array of exactly {} strings, one per statement in the order \
             given, each being \"positive\", \"negative\" or \"neutral\". Reply with the array only.",
            batch.items().len()
        ));
        out
    }
}

/// Extracts labels from a reply: a JSON array of strings, possibly wrapped in
/// prose or a code fence.
pub(crate) fn parse_labels(reply: &str) -> Result<Vec<Stance>, AnnotateError> {
    let (start, end) = match (reply.find('['), reply.rfind(']')) {
        (Some(s), Some(e)) if s < e => (s, e),
        _ => return Err(AnnotateError::LabelCountMismatch { expected: 0, got: 0 }),
    };
    let raw: Vec<String> = serde_json::from_str(&reply[start..=end])
        .map_err(|_| AnnotateError::UnknownLabel(reply[start..=end].to_string()))?;
    raw.iter()
        .map(|s| Stance::parse_label(s).ok_or_else(|| AnnotateError::UnknownLabel(s.clone())))
        .collect()
}

impl Annotator for LlmAnnotator {
    fn label_batch(&self, batch: &AnnotationBatch) -> Result<Vec<StanceLabel>, AnnotateError> {
        let expected = batch.items().len();
        let request = ChatRequest {
            model: self.model.clone(),
            messages: vec![ChatMessage::system(SYSTEM), ChatMessage::user(Self::prompt(batch))],
            temperature: self.temperature,
        };
        let mut last_err = None;
        for _ in 0..2 {
            let reply = self.transport.complete(&request)?;
            match parse_labels(&reply.content) {
                Ok(labels) if labels.len() == expected => {
                    return Ok(labels
                        .into_iter()
                        .map(|stance| StanceLabel {
                            stance,
                            source: LabelSource::Llm,
                        })
                        .collect())
                }
                Ok(labels) => {
                    last_err = Some(AnnotateError::LabelCountMismatch {
                        expected,
                        got: labels.len(),
                    })
                }
                Err(AnnotateError::LabelCountMismatch { .. }) => {
                    last_err = Some(AnnotateError::LabelCountMismatch { expected, got: 0 })
                }
                Err(e) => last_err = Some(e),
            }
            tracing::debug!(reply = %reply.content, "unusable annotation reply, retrying");
        }
        Err(last_err.expect("loop ran"))
    }
}
