//! Stance annotation: free text to {-1, 0, +1} relative to the run question.

mod lexicon;
mod llm;

use std::collections::{BTreeMap, HashSet};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::llm::TransportError;
use crate::metrics::OpinionVector;
use crate::transcript::{Transcript, TranscriptError};

pub use lexicon::{Lexicon, LexiconFile, LexiconHits, DEFAULT_LEXICON_JSON};
pub use llm::LlmAnnotator;

/// Maximum number of statements sent to an annotator at once.
pub const MAX_BATCH: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stance {
    Negative,
    Neutral,
    Positive,
}

impl Stance {
    pub fn value(self) -> i8 {
        match self {
            Stance::Negative => -1,
            Stance::Neutral => 0,
            Stance::Positive => 1,
        }
    }

    pub fn from_value(v: i8) -> Option<Stance> {
        match v {
            -1 => Some(Stance::Negative),
            0 => Some(Stance::Neutral),
            1 => Some(Stance::Positive),
            _ => None,
        }
    }

    pub fn parse_label(s: &str) -> Option<Stance> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" | "+1" | "1" => Some(Stance::Positive),
            "negative" | "-1" => Some(Stance::Negative),
            "neutral" | "0" => Some(Stance::Neutral),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    Seed,
    Llm,
    Lexicon,
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StanceLabel {
    pub stance: Stance,
    pub source: LabelSource,
}

impl StanceLabel {
    pub fn value(&self) -> i8 {
        self.stance.value()
    }
}

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("annotation batch must hold 1..={MAX_BATCH} items, got {0}")]
    BatchSize(usize),
    #[error("duplicate statement id {0:?} in batch")]
    DuplicateId(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("annotator returned {got} labels for {expected} statements")]
    LabelCountMismatch { expected: usize, got: usize },
    #[error("annotator returned an unrecognized label {0:?}")]
    UnknownLabel(String),
    #[error(transparent)]
    Transcript(#[from] TranscriptError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchItem {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationBatch {
    question: String,
    items: Vec<BatchItem>,
}

impl AnnotationBatch {
    pub fn new(question: impl Into<String>, items: Vec<BatchItem>) -> Result<Self, AnnotateError> {
        if items.is_empty() || items.len() > MAX_BATCH {
            return Err(AnnotateError::BatchSize(items.len()));
        }
        let mut seen = HashSet::new();
        for it in &items {
            if !seen.insert(it.id.as_str()) {
                return Err(AnnotateError::DuplicateId(it.id.clone()));
            }
        }
        Ok(AnnotationBatch {
            question: question.into(),
            items,
        })
    }

    pub fn question(&self) -> &str {
        &self.question
    }

    pub fn items(&self) -> &[BatchItem] {
        &self.items
    }
}

/// Labels a batch, returning one label per item in item order.
pub trait Annotator: Send + Sync {
    fn label_batch(&self, batch: &AnnotationBatch) -> Result<Vec<StanceLabel>, AnnotateError>;
}

/// Labels every item of `batch`, keyed by statement id.
pub fn annotate_batch(
    batch: &AnnotationBatch,
    annotator: &dyn Annotator,
) -> Result<BTreeMap<String, StanceLabel>, AnnotateError> {
    let labels = annotator.label_batch(batch)?;
    if labels.len() != batch.items.len() {
        return Err(AnnotateError::LabelCountMismatch {
            expected: batch.items.len(),
            got: labels.len(),
        });
    }
    Ok(batch
        .items
        .iter()
        .map(|it| it.id.clone())
        .zip(labels)
        .collect())
}

#[derive(Debug, Clone)]
pub struct LexiconAnnotator {
    lexicon: Lexicon,
}

impl LexiconAnnotator {
    pub fn new(lexicon: Lexicon) -> Self {
        LexiconAnnotator { lexicon }
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }
}

impl Default for LexiconAnnotator {
    fn default() -> Self {
        Self::new(Lexicon::default_red_meat())
    }
}

impl Annotator for LexiconAnnotator {
    fn label_batch(&self, batch: &AnnotationBatch) -> Result<Vec<StanceLabel>, AnnotateError> {
        Ok(batch
            .items
            .iter()
            .map(|it| StanceLabel {
                stance: self.lexicon.classify(&it.text),
                source: LabelSource::Lexicon,
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disagreement {
    pub id: String,
    pub text_hash: String,
    pub primary: Stance,
    pub lexicon: Stance,
}

/// Runs a primary annotator and the lexicon side by side. Primary labels are
/// returned unchanged; disagreements are recorded.
pub struct AuditAnnotator<A> {
    primary: A,
    lexicon: Lexicon,
    disagreements: Mutex<Vec<Disagreement>>,
}

impl<A: Annotator> AuditAnnotator<A> {
    pub fn new(primary: A, lexicon: Lexicon) -> Self {
        AuditAnnotator {
            primary,
            lexicon,
            disagreements: Mutex::new(Vec::new()),
        }
    }

    pub fn disagreements(&self) -> Vec<Disagreement> {
        self.disagreements.lock().unwrap().clone()
    }
}

impl<A: Annotator> Annotator for AuditAnnotator<A> {
    fn label_batch(&self, batch: &AnnotationBatch) -> Result<Vec<StanceLabel>, AnnotateError> {
        let labels = self.primary.label_batch(batch)?;
        let mut log = self.disagreements.lock().unwrap();
        for (it, label) in batch.items.iter().zip(&labels) {
            let lex = self.lexicon.classify(&it.text);
            if lex != label.stance {
                tracing::warn!(id = %it.id, primary = ?label.stance, lexicon = ?lex, "annotators disagree");
                log.push(Disagreement {
                    id: it.id.clone(),
                    text_hash: text_hash(&it.text),
                    primary: label.stance,
                    lexicon: lex,
                });
            }
        }
        Ok(labels)
    }
}

/// Hex SHA-256 of a statement text, used in audit files.
pub fn text_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// One line of the per-run annotation audit file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub statement_id: String,
    pub iteration: u32,
    pub text_hash: String,
    pub label: Stance,
    pub source: LabelSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunAnnotation {
    /// One vector per iteration, from 0 through the last fully committed one.
    pub vectors: Vec<OpinionVector>,
    pub records: Vec<AuditRecord>,
}

/// Opinion vectors for every fully committed iteration of a transcript.
/// Iteration 0 takes seed stances; later iterations are annotated in batches
/// of at most [`MAX_BATCH`].
pub fn annotate_run(
    transcript: &Transcript,
    annotator: &dyn Annotator,
) -> Result<RunAnnotation, AnnotateError> {
    let table = transcript.statement_table()?;
    let topo = transcript.topology();
    let n = topo.node_count();

    let seed: Vec<i8> = transcript
        .seed_layout
        .entries
        .iter()
        .map(|e| e.stance.value())
        .collect();
    let mut records: Vec<AuditRecord> = transcript
        .seed_layout
        .entries
        .iter()
        .map(|e| AuditRecord {
            statement_id: Transcript::statement_id(e.node, 0),
            iteration: 0,
            text_hash: text_hash(&e.text),
            label: Stance::from_value(e.stance.value()).expect("seed stance is +-1"),
            source: LabelSource::Seed,
        })
        .collect();
    let mut vectors = vec![OpinionVector::new(0, seed)];

    let items: Vec<(u32, BatchItem)> = table
        .iter()
        .enumerate()
        .flat_map(|(t, row)| {
            row.iter().enumerate().map(move |(i, text)| {
                let iteration = t as u32 + 1;
                (
                    iteration,
                    BatchItem {
                        id: Transcript::statement_id(topo.node(i), iteration),
                        text: text.clone(),
                    },
                )
            })
        })
        .collect();

    let mut values = Vec::with_capacity(items.len());
    for chunk in items.chunks(MAX_BATCH) {
        let batch = AnnotationBatch::new(
            transcript.question.clone(),
            chunk.iter().map(|(_, it)| it.clone()).collect(),
        )?;
        let labels = annotate_batch(&batch, annotator)?;
        for (iteration, it) in chunk {
            let label = labels[&it.id];
            records.push(AuditRecord {
                statement_id: it.id.clone(),
                iteration: *iteration,
                text_hash: text_hash(&it.text),
                label: label.stance,
                source: label.source,
            });
            values.push(label.value());
        }
    }
    for (t, row) in values.chunks(n).enumerate() {
        vectors.push(OpinionVector::new(t as u32 + 1, row.to_vec()));
    }
    Ok(RunAnnotation { vectors, records })
}
