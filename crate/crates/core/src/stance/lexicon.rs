//! Deterministic keyword/negation stance rules.
//!
//! Lexicon file (JSON):
//!
//! | field           | meaning                                                        |
//! |-----------------|----------------------------------------------------------------|
//! | `positive`      | phrases arguing for the question's claim                       |
//! | `negative`      | phrases arguing against it                                     |
//! | `neutral`       | both-sides / uncertainty markers; any hit labels the text 0    |
//! | `negators`      | words that flip the polarity of the next phrase in the clause  |
//! | `clause_breaks` | words that end a clause, in addition to `. , ; : ! ?`          |
//!
//! Text and phrases are lowercased and split into word tokens. At each
//! position the longest matching phrase wins. A negator, or a matched phrase
//! that itself contains a negator ("no evidence"), flips the next polar phrase
//! in the same clause. The label is 0 when a neutral marker appears or when
//! both polarities are present, otherwise the sign of whichever appears.

use std::collections::HashSet;

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use super::Stance;

pub const DEFAULT_LEXICON_JSON: &str = include_str!("../../data/lexicon_red_meat.json");

const PUNCT_BREAKS: &[&str] = &[".", ",", ";", ":", "!", "?"];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LexiconFile {
    #[serde(default)]
    pub version: u32,
    #[serde(default)]
    pub question: Option<String>,
    pub positive: Vec<String>,
    pub negative: Vec<String>,
    #[serde(default)]
    pub neutral: Vec<String>,
    #[serde(default)]
    pub negators: Vec<String>,
    #[serde(default)]
    pub clause_breaks: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Category {
    Positive,
    Negative,
    Neutral,
}

#[derive(Debug, Clone)]
struct Phrase {
    tokens: Vec<String>,
    category: Category,
    negating: bool,
}

#[derive(Debug, Clone)]
pub struct Lexicon {
    phrases: Vec<Phrase>,
    negators: HashSet<String>,
    breaks: HashSet<String>,
}

/// Per-text match counts, exposed for debugging rule sets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LexiconHits {
    pub positive: usize,
    pub negative: usize,
    pub neutral: usize,
}

fn tokenize(text: &str) -> Vec<String> {
    static TOKEN: OnceLock<Regex> = OnceLock::new();
    let re = TOKEN.get_or_init(|| Regex::new(r"[a-z0-9']+|[.,;:!?]").unwrap());
    let lowered = text.to_lowercase().replace(['\u{2019}', '\u{2018}'], "'");
    re.find_iter(&lowered)
        .map(|m| m.as_str().trim_matches('\'').to_string())
        .filter(|t| !t.is_empty())
        .collect()
}

impl Lexicon {
    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        let file: LexiconFile = serde_json::from_str(s)?;
        Ok(Self::from_file(file))
    }

    pub fn from_file(file: LexiconFile) -> Self {
        let negators: HashSet<String> = file.negators.iter().map(|s| s.to_lowercase()).collect();
        let mut phrases = Vec::new();
        for (list, category) in [
            (&file.positive, Category::Positive),
            (&file.negative, Category::Negative),
            (&file.neutral, Category::Neutral),
        ] {
            for p in list {
                let tokens = tokenize(p);
                if tokens.is_empty() {
                    continue;
                }
                let negating = tokens.iter().any(|t| negators.contains(t));
                phrases.push(Phrase {
                    tokens,
                    category,
                    negating,
                });
            }
        }
        // longest first so the first match found at a position is the longest
        phrases.sort_by(|a, b| b.tokens.len().cmp(&a.tokens.len()));
        let breaks = file
            .clause_breaks
            .iter()
            .map(|s| s.to_lowercase())
            .chain(PUNCT_BREAKS.iter().map(|s| s.to_string()))
            .collect();
        Lexicon {
            phrases,
            negators,
            breaks,
        }
    }

    pub fn default_red_meat() -> Self {
        Self::from_json(DEFAULT_LEXICON_JSON).expect("bundled lexicon parses")
    }

    fn match_at(&self, tokens: &[String], i: usize) -> Option<&Phrase> {
        self.phrases.iter().find(|p| {
            tokens.len() - i >= p.tokens.len()
                && p.tokens.iter().zip(&tokens[i..]).all(|(a, b)| a == b)
        })
    }

    pub fn hits(&self, text: &str) -> LexiconHits {
        let tokens = tokenize(text);
        let mut hits = LexiconHits::default();
        let mut negation_pending = false;
        let mut i = 0;
        while i < tokens.len() {
            if self.breaks.contains(&tokens[i]) {
                negation_pending = false;
                i += 1;
                continue;
            }
            if let Some(p) = self.match_at(&tokens, i) {
                match p.category {
                    Category::Neutral => {
                        hits.neutral += 1;
                        negation_pending = false;
                    }
                    cat => {
                        let positive = (cat == Category::Positive) != negation_pending;
                        if positive {
                            hits.positive += 1;
                        } else {
                            hits.negative += 1;
                        }
                        negation_pending = p.negating;
                    }
                }
                i += p.tokens.len();
                continue;
            }
            if self.negators.contains(&tokens[i]) {
                negation_pending = true;
            }
            i += 1;
        }
        hits
    }

    pub fn classify(&self, text: &str) -> Stance {
        let h = self.hits(text);
        if h.neutral > 0 || (h.positive > 0 && h.negative > 0) {
            Stance::Neutral
        } else if h.positive > 0 {
            Stance::Positive
        } else if h.negative > 0 {
            Stance::Negative
        } else {
            Stance::Neutral
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statements::{SeedStance, StatementPool};

    fn lex() -> Lexicon {
        Lexicon::default_red_meat()
    }

    #[test]
    fn documented_examples() {
        let l = lex();
        assert_eq!(l.classify("red meat clearly causes cancer risk"), Stance::Positive);
        assert_eq!(l.classify("evidence is mixed on both sides"), Stance::Neutral);
        assert_eq!(l.classify("red meat is probably fine overall"), Stance::Negative);
    }

    #[test]
    fn negation_flips_next_phrase_only() {
        let l = lex();
        assert_eq!(l.classify("Red meat does not cause cancer."), Stance::Negative);
        assert_eq!(l.classify("Red meat is not safe to eat daily"), Stance::Positive);
        assert_eq!(
            l.classify("There is no evidence that red meat causes cancer"),
            Stance::Negative
        );
        assert_eq!(l.classify("It is not harmful and it is safe"), Stance::Negative);
        // negation does not cross a clause break
        assert_eq!(
            l.classify("It is not a myth, but red meat causes cancer"),
            Stance::Positive
        );
    }

    #[test]
    fn both_directions_is_neutral() {
        let l = lex();
        assert_eq!(
            l.classify("Red meat is nutritious but processed meat is linked to cancer"),
            Stance::Neutral
        );
        assert_eq!(l.classify("The weather is nice today"), Stance::Neutral);
        assert_eq!(l.classify(""), Stance::Neutral);
    }

    #[test]
    fn curly_apostrophes_and_case() {
        let l = lex();
        assert_eq!(l.classify("Red meat DOESN\u{2019}T CAUSE cancer"), Stance::Negative);
    }

    #[test]
    fn bundled_pool_matches_seed_stances() {
        let l = lex();
        for s in StatementPool::default_pool().statements {
            let want = match s.stance {
                SeedStance::Positive => Stance::Positive,
                SeedStance::Negative => Stance::Negative,
            };
            assert_eq!(l.classify(&s.text), want, "{}: {}", s.id, s.text);
        }
    }
}
