use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::statements::Imbalance;
use crate::text::MIN_WORDS;
use crate::topology::GridTopology;

use super::EngineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    HumanOnly,
    AiOnly,
    Hybrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Framing {
    #[default]
    Consensus,
    Opinion,
}

impl std::str::FromStr for Framing {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "consensus" => Ok(Framing::Consensus),
            "opinion" => Ok(Framing::Opinion),
            other => Err(format!("unknown framing {other:?}")),
        }
    }
}

impl std::fmt::Display for Framing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Framing::Consensus => "consensus",
            Framing::Opinion => "opinion",
        })
    }
}

/// Backend kind that fills a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Human,
    Llm,
    Scripted,
}

impl AgentKind {
    pub const ALL: [AgentKind; 3] = [AgentKind::Human, AgentKind::Llm, AgentKind::Scripted];

    pub(crate) fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScriptedPolicy {
    /// Pick the first statement of the modal stance and paraphrase it.
    MajorityCopy,
    /// Keep the first observed statement (the node's own) verbatim.
    Stubborn,
    /// Seeded uniform pick, paraphrased.
    Random,
}

impl std::str::FromStr for ScriptedPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "majority-copy" => Ok(ScriptedPolicy::MajorityCopy),
            "stubborn" => Ok(ScriptedPolicy::Stubborn),
            "random" => Ok(ScriptedPolicy::Random),
            other => Err(format!("unknown scripted policy {other:?}")),
        }
    }
}

/// How the non-human slots of a run are filled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AiBackendConfig {
    Llm {
        model: String,
        #[serde(default = "default_temperature")]
        temperature: f64,
        /// Overrides the service-wide endpoint when set.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        endpoint: Option<String>,
    },
    Scripted {
        policy: ScriptedPolicy,
    },
}

fn default_temperature() -> f64 {
    1.0
}

impl AiBackendConfig {
    pub fn kind(&self) -> AgentKind {
        match self {
            AiBackendConfig::Llm { .. } => AgentKind::Llm,
            AiBackendConfig::Scripted { .. } => AgentKind::Scripted,
        }
    }
}

impl Default for AiBackendConfig {
    fn default() -> Self {
        AiBackendConfig::Scripted {
            policy: ScriptedPolicy::MajorityCopy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub rows: usize,
    pub cols: usize,
    pub iterations: u32,
    pub condition: Condition,
    /// Fraction of slots filled by humans in hybrid runs.
    pub hybrid_ratio: f64,
    /// Prompt framing for LLM agents.
    pub framing: Framing,
    pub imbalance: Imbalance,
    pub rng_seed: u64,
    pub ai_backend: AiBackendConfig,
    /// Minimum time between a human's choice and their revision.
    pub display_period_ms: i64,
    pub min_words: usize,
    /// Dispatched slots older than this may be released back to ready.
    pub session_timeout_ms: i64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            rows: 5,
            cols: 5,
            iterations: 8,
            condition: Condition::Hybrid,
            hybrid_ratio: 0.5,
            framing: Framing::Consensus,
            imbalance: Imbalance::default(),
            rng_seed: 0,
            ai_backend: AiBackendConfig::default(),
            display_period_ms: 60_000,
            min_words: MIN_WORDS,
            session_timeout_ms: 15 * 60_000,
        }
    }
}

impl RunConfig {
    pub fn ai_only(ai_backend: AiBackendConfig, rng_seed: u64) -> Self {
        RunConfig {
            condition: Condition::AiOnly,
            ai_backend,
            rng_seed,
            ..RunConfig::default()
        }
    }

    pub fn topology(&self) -> Result<GridTopology, EngineError> {
        GridTopology::new(self.rows, self.cols).map_err(|e| EngineError::Config(e.to_string()))
    }

    pub fn slot_count(&self) -> usize {
        self.rows * self.cols * self.iterations as usize
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let topo = self.topology()?;
        if self.iterations < 1 {
            return Err(EngineError::Config("iterations must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.hybrid_ratio) {
            return Err(EngineError::Config(format!(
                "hybrid_ratio must lie in [0, 1], got {}",
                self.hybrid_ratio
            )));
        }
        if self.imbalance.total() != topo.node_count() {
            return Err(EngineError::Config(format!(
                "imbalance {}+{} does not match {} nodes",
                self.imbalance.positive,
                self.imbalance.negative,
                topo.node_count()
            )));
        }
        if self.min_words == 0 {
            return Err(EngineError::Config("min_words must be positive".into()));
        }
        if self.display_period_ms < 0 || self.session_timeout_ms <= 0 {
            return Err(EngineError::Config("timer durations must be positive".into()));
        }
        if let AiBackendConfig::Llm { model, temperature, .. } = &self.ai_backend {
            if model.trim().is_empty() {
                return Err(EngineError::Config("llm backend needs a model name".into()));
            }
            if !temperature.is_finite() || *temperature < 0.0 {
                return Err(EngineError::Config("temperature must be non-negative".into()));
            }
        }
        Ok(())
    }

    /// Backend kind per slot, indexed `(iteration - 1) * N + node`. Hybrid
    /// runs draw an exact `round(ratio * slots)` human slots with the run seed.
    pub fn slot_kinds(&self) -> Vec<AgentKind> {
        let total = self.slot_count();
        let ai = self.ai_backend.kind();
        match self.condition {
            Condition::HumanOnly => vec![AgentKind::Human; total],
            Condition::AiOnly => vec![ai; total],
            Condition::Hybrid => {
                let humans = (self.hybrid_ratio * total as f64).round() as usize;
                let mut order: Vec<usize> = (0..total).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
                rng.set_stream(1);
                order.shuffle(&mut rng);
                let mut kinds = vec![ai; total];
                for &i in &order[..humans] {
                    kinds[i] = AgentKind::Human;
                }
                kinds
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hybrid_is_exact_half() {
        let cfg = RunConfig::default();
        let kinds = cfg.slot_kinds();
        assert_eq!(kinds.len(), 200);
        assert_eq!(kinds.iter().filter(|k| **k == AgentKind::Human).count(), 100);
        assert_eq!(kinds, cfg.slot_kinds());
    }

    #[test]
    fn rejects_bad_ratio_and_iterations() {
        let cfg = RunConfig {
            hybrid_ratio: 1.5,
            ..RunConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(EngineError::Config(_))));
        let cfg = RunConfig {
            iterations: 0,
            ..RunConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = RunConfig {
            hybrid_ratio: f64::NAN,
            ..RunConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_json_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"condition":"ai_only","rng_seed":7}"#).unwrap();
        assert_eq!(cfg.iterations, 8);
        assert_eq!(cfg.condition, Condition::AiOnly);
        let cfg: RunConfig = serde_json::from_str(
            r#"{"ai_backend":{"kind":"llm","model":"some-model"}}"#,
        )
        .unwrap();
        assert_eq!(
            cfg.ai_backend,
            AiBackendConfig::Llm {
                model: "some-model".into(),
                temperature: 1.0,
                endpoint: None
            }
        );
    }
}
