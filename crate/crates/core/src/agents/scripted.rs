use std::sync::Arc;

use rand::Rng;

use crate::engine::{AgentKind, ScriptedPolicy};
use crate::stance::{Lexicon, Stance};

use super::{Agent, AgentError, TaskContext};

/// Lead-ins used by the paraphrasing policies. None of them contains a
/// lexicon phrase or negator, so a paraphrase keeps the stance of its core.
pub const PARAPHRASE_PREFIXES: [&str; 5] = [
    "Most of this group would agree that",
    "The group seems to share the view that",
    "Taken together, these statements suggest that",
    "Speaking for the group as a whole, I would say that",
    "The shared view among these participants is that",
];

const CHOOSE: u64 = 0;
const REVISE: u64 = 1;

/// Removes any stacked paraphrase lead-ins.
pub fn strip_paraphrase(text: &str) -> &str {
    let mut core = text.trim();
    loop {
        let before = core;
        for p in PARAPHRASE_PREFIXES {
            if let Some(rest) = core.strip_prefix(p) {
                core = rest.trim_start();
            }
        }
        if core == before {
            return core;
        }
    }
}

/// Wraps the core of `text` in a lead-in chosen by `rng`.
pub fn paraphrase(text: &str, rng: &mut impl Rng) -> String {
    let core = strip_paraphrase(text);
    let prefix = PARAPHRASE_PREFIXES[rng.gen_range(0..PARAPHRASE_PREFIXES.len())];
    let mut chars = core.chars();
    let core = match (chars.next(), chars.next()) {
        // keep acronyms ("WHO ...") as written
        (Some(a), Some(b)) if a.is_uppercase() && !b.is_uppercase() => {
            a.to_lowercase().chain(core[a.len_utf8()..].chars()).collect()
        }
        _ => core.to_string(),
    };
    format!("{prefix} {core}")
}

/// Deterministic participant for oracle runs.
#[derive(Debug, Clone)]
pub struct ScriptedAgent {
    policy: ScriptedPolicy,
    lexicon: Arc<Lexicon>,
}

impl ScriptedAgent {
    pub fn new(policy: ScriptedPolicy, lexicon: Arc<Lexicon>) -> Self {
        ScriptedAgent { policy, lexicon }
    }

    pub fn policy(&self) -> ScriptedPolicy {
        self.policy
    }

    fn majority_index(&self, ctx: &TaskContext, observed: &[String]) -> usize {
        let stances: Vec<Stance> = observed.iter().map(|t| self.lexicon.classify(t)).collect();
        let count = |s: Stance| stances.iter().filter(|x| **x == s).count();
        let best = [Stance::Negative, Stance::Neutral, Stance::Positive]
            .into_iter()
            .map(count)
            .max()
            .unwrap_or(0);
        let modal: Vec<Stance> = [Stance::Negative, Stance::Neutral, Stance::Positive]
            .into_iter()
            .filter(|s| count(*s) == best)
            .collect();
        let pick = if modal.len() == 1 {
            modal[0]
        } else {
            modal[ctx.rng(CHOOSE).gen_range(0..modal.len())]
        };
        stances.iter().position(|s| *s == pick).unwrap_or(0)
    }
}

impl Agent for ScriptedAgent {
    fn kind(&self) -> AgentKind {
        AgentKind::Scripted
    }

    fn choose(
        &self,
        ctx: &TaskContext,
        _question: &str,
        observed: &[String],
    ) -> Result<usize, AgentError> {
        match observed.len() {
            0 => return Err(AgentError::EmptyObserved),
            1 => return Ok(0),
            _ => {}
        }
        Ok(match self.policy {
            ScriptedPolicy::MajorityCopy => self.majority_index(ctx, observed),
            ScriptedPolicy::Stubborn => 0,
            ScriptedPolicy::Random => ctx.rng(CHOOSE).gen_range(0..observed.len()),
        })
    }

    fn revise(
        &self,
        ctx: &TaskContext,
        _question: &str,
        chosen: &str,
        _observed: &[String],
    ) -> Result<String, AgentError> {
        Ok(match self.policy {
            ScriptedPolicy::Stubborn => chosen.to_string(),
            ScriptedPolicy::MajorityCopy | ScriptedPolicy::Random => {
                paraphrase(chosen, &mut ctx.rng(REVISE))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SlotId;
    use crate::statements::StatementPool;
    use crate::text::word_count;
    use crate::topology::NodeId;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ctx(seed: u64) -> TaskContext {
        TaskContext {
            slot: SlotId::new(NodeId::new(2, 4), 3),
            run_seed: seed,
        }
    }

    fn agent(policy: ScriptedPolicy) -> ScriptedAgent {
        ScriptedAgent::new(policy, Arc::new(Lexicon::default_red_meat()))
    }

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn majority_picks_first_of_modal_stance() {
        let observed = s(&[
            "Red meat is safe for most people to eat.",
            "Red meat causes cancer in the long run.",
            "Processed red meat is a known carcinogen for humans.",
        ]);
        // stances [-, +, +] -> first + is index 1
        let a = agent(ScriptedPolicy::MajorityCopy);
        assert_eq!(a.choose(&ctx(1), "q", &observed).unwrap(), 1);
        // [+, +, -] -> index 0
        let observed = s(&[
            "Red meat causes cancer in the long run.",
            "Processed red meat is a known carcinogen for humans.",
            "Red meat is safe for most people to eat.",
        ]);
        assert_eq!(a.choose(&ctx(1), "q", &observed).unwrap(), 0);
    }

    #[test]
    fn ties_are_seeded_and_land_on_a_modal_stance() {
        let observed = s(&[
            "Red meat is safe for most people to eat.",
            "Red meat causes cancer in the long run.",
            "Red meat is healthy and good for you.",
            "Processed red meat is a known carcinogen for humans.",
        ]);
        let a = agent(ScriptedPolicy::MajorityCopy);
        let mut picks = std::collections::BTreeSet::new();
        for seed in 0..64 {
            let i = a.choose(&ctx(seed), "q", &observed).unwrap();
            assert_eq!(i, a.choose(&ctx(seed), "q", &observed).unwrap());
            picks.insert(i);
        }
        assert_eq!(picks.into_iter().collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn forced_and_empty_choice() {
        for p in [ScriptedPolicy::MajorityCopy, ScriptedPolicy::Stubborn, ScriptedPolicy::Random] {
            assert_eq!(agent(p).choose(&ctx(0), "q", &s(&["only one"])).unwrap(), 0);
            assert!(matches!(
                agent(p).choose(&ctx(0), "q", &[]),
                Err(AgentError::EmptyObserved)
            ));
        }
    }

    #[test]
    fn stubborn_keeps_text() {
        let a = agent(ScriptedPolicy::Stubborn);
        let obs = s(&["mine here is it", "b", "c"]);
        assert_eq!(a.choose(&ctx(0), "q", &obs).unwrap(), 0);
        assert_eq!(a.revise(&ctx(0), "q", "mine here is it", &obs).unwrap(), "mine here is it");
    }

    #[test]
    fn paraphrase_does_not_stack() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut text = "Red meat causes cancer.".to_string();
        for _ in 0..20 {
            text = paraphrase(&text, &mut rng);
        }
        assert!(text.ends_with("red meat causes cancer."));
        assert_eq!(strip_paraphrase(&text), "red meat causes cancer.");
        assert!(word_count(&text) <= 14);
    }

    #[test]
    fn paraphrase_keeps_acronyms() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(paraphrase("WHO lists processed meat", &mut rng).ends_with(" WHO lists processed meat"));
    }

    proptest! {
        #[test]
        fn paraphrase_preserves_pool_stances(idx in 0usize..24, seed in any::<u64>(), depth in 1usize..4) {
            let pool = StatementPool::default_pool();
            let lex = Lexicon::default_red_meat();
            let original = &pool.statements[idx].text;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut text = original.clone();
            for _ in 0..depth {
                text = paraphrase(&text, &mut rng);
            }
            prop_assert_eq!(lex.classify(&text), lex.classify(original));
            prop_assert!(word_count(&text) >= 5);
        }
    }
}
