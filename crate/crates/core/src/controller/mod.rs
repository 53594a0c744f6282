//! Admission controller: context assembly, the trainable policy, and decisions.

mod checkpoint;
mod gate;
mod policy;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use gate::{AdmissionGate, AlwaysNo, AlwaysYes, GateInput, LearnedGate, RelevanceRule};
pub use policy::{
    log_sigmoid, prob_yes, sigmoid, AdmissionPolicy, ForwardCache, ParamBlock, PolicyShape,
};

use crate::embedding::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::memory_bank::{Embedding, MemoryBank};

/// One agent step as seen by the controller: `(input, summary, output)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepTriplet {
    pub agent_input: String,
    pub step_summary: String,
    pub agent_output: String,
}

/// Embedded inputs of one admission decision, before projection.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerContext {
    pub query: Embedding,
    /// Cached key embeddings in bank entry order.
    pub memory_keys: Vec<Embedding>,
    /// `[input, summary, output]`.
    pub step: [Embedding; 3],
}

impl ControllerContext {
    pub fn from_vectors(query: Vec<f64>, memory_keys: Vec<Vec<f64>>, step: [Vec<f64>; 3]) -> Self {
        let [u, s, o] = step;
        Self {
            query: query.into(),
            memory_keys: memory_keys.into_iter().map(Into::into).collect(),
            step: [u.into(), s.into(), o.into()],
        }
    }

    /// Query, memory and step sources: `1 + |M| + 3`.
    pub fn token_count(&self) -> usize {
        1 + self.memory_keys.len() + 3
    }

    pub fn dim(&self) -> usize {
        self.query.len()
    }
}

/// Embeds the query and step triplet; memory keys come from the bank's cache.
pub fn build_context(
    query: &str,
    bank: &MemoryBank,
    triplet: &StepTriplet,
    provider: &dyn EmbeddingProvider,
) -> Result<ControllerContext> {
    let q: Embedding = provider.embed(query)?.into();
    build_context_with_query(q, bank.key_embeddings(), triplet, provider)
}

/// Same as [`build_context`] with a pre-embedded query and key snapshot.
pub fn build_context_with_query(
    query: Embedding,
    memory_keys: Vec<Embedding>,
    triplet: &StepTriplet,
    provider: &dyn EmbeddingProvider,
) -> Result<ControllerContext> {
    let d = provider.dim();
    if query.len() != d || memory_keys.iter().any(|k| k.len() != d) {
        return Err(Error::config(format!(
            "embedding dimension mismatch: provider has d_e={d}"
        )));
    }
    let step = [
        provider.embed(&triplet.agent_input)?.into(),
        provider.embed(&triplet.step_summary)?.into(),
        provider.embed(&triplet.agent_output)?.into(),
    ];
    Ok(ControllerContext {
        query,
        memory_keys,
        step,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Action {
    Yes,
    No,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum DecisionMode {
    Sampled { temperature: f64 },
    Greedy,
}

impl DecisionMode {
    pub fn temperature(&self) -> f64 {
        match self {
            DecisionMode::Sampled { temperature } => *temperature,
            DecisionMode::Greedy => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub action: Action,
    /// `P(YES)` at the temperature the decision was made with.
    pub prob_yes: f64,
    /// Log-probability of `action` at that temperature.
    pub log_prob_action: f64,
    pub mode: DecisionMode,
    /// Set when the logits were non-finite and the decision defaulted to NO.
    #[serde(default)]
    pub fail_closed: bool,
}

impl Decision {
    /// Decision of a rule that does not sample.
    pub fn fixed(action: Action) -> Self {
        Decision {
            action,
            prob_yes: if action == Action::Yes { 1.0 } else { 0.0 },
            log_prob_action: 0.0,
            mode: DecisionMode::Greedy,
            fail_closed: false,
        }
    }
}

/// Turns logits into a decision. Greedy ties resolve to NO.
pub fn decide_from_logits(logits: [f64; 2], mode: DecisionMode, rng: &mut dyn RngCore) -> Decision {
    if !logits.iter().all(|l| l.is_finite()) {
        tracing::warn!(?logits, "non-finite controller logits; failing closed");
        return Decision {
            action: Action::No,
            prob_yes: 0.0,
            log_prob_action: 0.0,
            mode,
            fail_closed: true,
        };
    }
    let t = mode.temperature();
    let margin = (logits[0] - logits[1]) / t;
    let p_yes = sigmoid(margin);
    let action = match mode {
        DecisionMode::Greedy => {
            if logits[0] > logits[1] {
                Action::Yes
            } else {
                Action::No
            }
        }
        DecisionMode::Sampled { .. } => {
            if rng.random::<f64>() < p_yes {
                Action::Yes
            } else {
                Action::No
            }
        }
    };
    let log_prob_action = match action {
        Action::Yes => log_sigmoid(margin),
        Action::No => log_sigmoid(-margin),
    };
    Decision {
        action,
        prob_yes: p_yes,
        log_prob_action,
        mode,
        fail_closed: false,
    }
}

pub fn decide(
    policy: &AdmissionPolicy,
    ctx: &ControllerContext,
    mode: DecisionMode,
    rng: &mut dyn RngCore,
) -> Decision {
    decide_from_logits(policy.logits(ctx), mode, rng)
}

/// `log pi(action | ctx)` at `temperature` and its gradient w.r.t. all parameters.
pub fn log_prob(
    policy: &AdmissionPolicy,
    ctx: &ControllerContext,
    action: Action,
    temperature: f64,
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; policy.num_params()];
    let lp = log_prob_accumulate(policy, ctx, action, temperature, 1.0, 0.0, &mut grad);
    (lp.log_prob, grad)
}

/// Values returned by [`log_prob_accumulate`].
#[derive(Debug, Clone, Copy)]
pub struct StepTerms {
    pub log_prob: f64,
    /// `P(YES)` at temperature 1.
    pub prob_yes: f64,
}

/// Accumulates `d/dθ [ lp_weight * log pi_T(action) + yes_weight * pi_1(YES) ]`
/// into `grad` in a single forward/backward pass.
pub fn log_prob_accumulate(
    policy: &AdmissionPolicy,
    ctx: &ControllerContext,
    action: Action,
    temperature: f64,
    lp_weight: f64,
    yes_weight: f64,
    grad: &mut [f64],
) -> StepTerms {
    let cache = policy.forward(ctx);
    let l = cache.logits;
    let margin = (l[0] - l[1]) / temperature;
    let p_t = sigmoid(margin);
    let (log_prob, dlp_dmargin) = match action {
        Action::Yes => (log_sigmoid(margin), 1.0 - p_t),
        Action::No => (log_sigmoid(-margin), -p_t),
    };
    let p1 = sigmoid(l[0] - l[1]);
    // d margin / d logits = (1/T, -1/T); d p1 / d logits = p1 (1 - p1) (1, -1).
    let g = lp_weight * dlp_dmargin / temperature + yes_weight * p1 * (1.0 - p1);
    if g != 0.0 {
        policy.backward(&cache, [g, -g], grad);
    }
    StepTerms {
        log_prob,
        prob_yes: p1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashingEmbedder;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn triplet() -> StepTriplet {
        StepTriplet {
            agent_input: "derive fact 1".into(),
            step_summary: "fact 1 = v7".into(),
            agent_output: "result value=v7".into(),
        }
    }

    #[test]
    fn empty_bank_context_has_four_sources() {
        let p = HashingEmbedder::new(8);
        let bank = MemoryBank::new(8);
        let ctx = build_context("what is x", &bank, &triplet(), &p).unwrap();
        assert!(ctx.memory_keys.is_empty());
        assert_eq!(ctx.token_count(), 4);
        assert_eq!(&*ctx.step[1], p.embed("fact 1 = v7").unwrap().as_slice());
    }

    #[test]
    fn context_reads_bank_cache_in_order() {
        let p = HashingEmbedder::new(8);
        let bank = MemoryBank::new(8);
        for i in 0..5 {
            let s = format!("fact {i}");
            bank.admit(&s, "o", p.embed(&s).unwrap().into(), 1, i + 1)
                .unwrap();
        }
        let ctx = build_context("q", &bank, &triplet(), &p).unwrap();
        assert_eq!(ctx.memory_keys.len(), 5);
        for (i, k) in ctx.memory_keys.iter().enumerate() {
            assert_eq!(&**k, p.embed(&format!("fact {i}")).unwrap().as_slice());
        }
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let p = HashingEmbedder::new(8);
        let bank = MemoryBank::new(4);
        bank.admit("k", "o", vec![0.0; 4].into(), 1, 1).unwrap();
        assert!(matches!(
            build_context("q", &bank, &triplet(), &p),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn equal_logits_are_even_odds_and_greedy_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for c in [-3.0, 0.0, 11.5] {
            let d =
                decide_from_logits([c, c], DecisionMode::Sampled { temperature: 1.0 }, &mut rng);
            assert_eq!(d.prob_yes, 0.5);
        }
        let d = decide_from_logits([2.0, 1.0], DecisionMode::Greedy, &mut rng);
        assert_eq!(d.action, Action::Yes);
        assert!((d.prob_yes + (1.0 - d.prob_yes) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_logits_fail_closed() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = decide_from_logits([f64::NAN, 0.0], DecisionMode::Greedy, &mut rng);
        assert_eq!(d.action, Action::No);
        assert!(d.fail_closed);
        let d = decide_from_logits(
            [f64::INFINITY, 0.0],
            DecisionMode::Sampled { temperature: 1.2 },
            &mut rng,
        );
        assert_eq!(d.action, Action::No);
    }

    #[test]
    fn zero_logits_log_half() {
        let policy = AdmissionPolicy::zeros(PolicyShape { d_e: 4, d_c: 2 });
        let ctx = ControllerContext::from_vectors(
            vec![0.5; 4],
            vec![],
            [vec![0.5; 4], vec![0.5; 4], vec![0.5; 4]],
        );
        let (lp, _) = log_prob(&policy, &ctx, Action::Yes, 1.0);
        assert!((lp - (-std::f64::consts::LN_2)).abs() < 1e-12);
    }

    #[test]
    fn sampled_decision_log_prob_matches_temperature() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mode = DecisionMode::Sampled { temperature: 1.2 };
        let d = decide_from_logits([2.0, 1.0], mode, &mut rng);
        let p = sigmoid(1.0 / 1.2);
        assert!((d.prob_yes - p).abs() < 1e-15);
        let expect = if d.action == Action::Yes {
            p.ln()
        } else {
            (1.0 - p).ln()
        };
        assert!((d.log_prob_action - expect).abs() < 1e-12);
    }
}
