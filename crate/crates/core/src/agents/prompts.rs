//! Prompt templates for LLM participants.
//!
//! Templates are plain text with `{name}` placeholders. The choose and revise
//! scaffolds are shared by both framings; only the `{instruction}` clause
//! differs. Bundled copies live in `assets/prompts/`, and any file of the same
//! name in an override directory replaces its bundled counterpart. The
//! wording is our own and is not the text used in any published study.

use std::path::Path;
use std::sync::{Arc, OnceLock};

use regex::{Captures, Regex};

use crate::engine::Framing;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub system: String,
    pub choose: String,
    pub revise: String,
    pub consensus_choose: String,
    pub consensus_revise: String,
    pub opinion_choose: String,
    pub opinion_revise: String,
}

const FILES: [&str; 7] = [
    "system.txt",
    "choose.txt",
    "revise.txt",
    "consensus_choose.txt",
    "consensus_revise.txt",
    "opinion_choose.txt",
    "opinion_revise.txt",
];

impl PromptTemplates {
    pub fn bundled() -> Self {
        PromptTemplates {
            system: include_str!("../../assets/prompts/system.txt").trim_end().to_string(),
            choose: include_str!("../../assets/prompts/choose.txt").trim_end().to_string(),
            revise: include_str!("../../assets/prompts/revise.txt").trim_end().to_string(),
            consensus_choose: include_str!("../../assets/prompts/consensus_choose.txt")
                .trim_end()
                .to_string(),
            consensus_revise: include_str!("../../assets/prompts/consensus_revise.txt")
                .trim_end()
                .to_string(),
            opinion_choose: include_str!("../../assets/prompts/opinion_choose.txt")
                .trim_end()
                .to_string(),
            opinion_revise: include_str!("../../assets/prompts/opinion_revise.txt")
                .trim_end()
                .to_string(),
        }
    }

    /// Bundled templates with any files present in `dir` substituted.
    pub fn from_dir(dir: &Path) -> std::io::Result<Self> {
        let mut t = Self::bundled();
        for name in FILES {
            let path = dir.join(name);
            if !path.exists() {
                continue;
            }
            let body = std::fs::read_to_string(&path)?.trim_end().to_string();
            let slot = match name {
                "system.txt" => &mut t.system,
                "choose.txt" => &mut t.choose,
                "revise.txt" => &mut t.revise,
                "consensus_choose.txt" => &mut t.consensus_choose,
                "consensus_revise.txt" => &mut t.consensus_revise,
                "opinion_choose.txt" => &mut t.opinion_choose,
                _ => &mut t.opinion_revise,
            };
            *slot = body;
        }
        Ok(t)
    }
}

/// Substitutes `{name}` placeholders in one pass; values are never rescanned
/// and unknown placeholders are left as written.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    static PLACEHOLDER: OnceLock<Regex> = OnceLock::new();
    let re = PLACEHOLDER.get_or_init(|| Regex::new(r"\{([a-z_]+)\}").unwrap());
    re.replace_all(template, |c: &Captures| {
        vars.iter()
            .find(|(k, _)| *k == &c[1])
            .map(|(_, v)| v.to_string())
            .unwrap_or_else(|| c[0].to_string())
    })
    .into_owned()
}

/// `1. first\n2. second ...`
pub fn observed_list(observed: &[String]) -> String {
    observed
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {}", i + 1, s.replace('\n', " ")))
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone)]
pub struct PromptFraming {
    framing: Framing,
    templates: Arc<PromptTemplates>,
}

impl PromptFraming {
    pub fn new(framing: Framing, templates: Arc<PromptTemplates>) -> Self {
        PromptFraming { framing, templates }
    }

    pub fn bundled(framing: Framing) -> Self {
        Self::new(framing, Arc::new(PromptTemplates::bundled()))
    }

    pub fn framing(&self) -> Framing {
        self.framing
    }

    pub fn system(&self) -> &str {
        &self.templates.system
    }

    pub fn choice_instruction(&self) -> &str {
        match self.framing {
            Framing::Consensus => &self.templates.consensus_choose,
            Framing::Opinion => &self.templates.opinion_choose,
        }
    }

    pub fn revision_instruction(&self) -> &str {
        match self.framing {
            Framing::Consensus => &self.templates.consensus_revise,
            Framing::Opinion => &self.templates.opinion_revise,
        }
    }

    pub fn render_choose(&self, question: &str, observed: &[String]) -> String {
        render(
            &self.templates.choose,
            &[
                ("question", question),
                ("observed_list", &observed_list(observed)),
                ("instruction", self.choice_instruction()),
            ],
        )
    }

    pub fn render_revise(&self, question: &str, chosen: &str, observed: &[String]) -> String {
        render(
            &self.templates.revise,
            &[
                ("question", question),
                ("observed_list", &observed_list(observed)),
                ("chosen", chosen),
                ("instruction", self.revision_instruction()),
            ],
        )
    }
}
