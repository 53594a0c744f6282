use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sharegate_core::controller::{
    build_context, decide, decide_from_logits, load_checkpoint, log_prob, prob_yes, save_checkpoint,
};
use sharegate_core::memory_bank::MemoryBank;
use sharegate_core::{
    Action, AdmissionPolicy, ControllerContext, DecisionMode, EmbeddingProvider, HashingEmbedder,
    PolicyShape, StepTriplet,
};

/// Independent implementation of the hashing scheme documented on
/// `HashingEmbedder`.
fn reference_embed(text: &str, dim: usize) -> Vec<f64> {
    let fnv = |s: &str| {
        s.bytes().fold(0xcbf29ce484222325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x100000001b3)
        })
    };
    let lower = text.to_lowercase();
    let toks: Vec<&str> = lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .collect();
    let mut feats: Vec<String> = toks.iter().map(|t| format!("u:{t}")).collect();
    feats.extend(toks.windows(2).map(|w| format!("b:{} {}", w[0], w[1])));
    let mut v = vec![0.0; dim];
    for f in feats {
        let h = fnv(&f);
        v[(h % dim as u64) as usize] += if h >> 63 == 0 { 1.0 } else { -1.0 };
    }
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

#[test]
fn hashing_embedder_matches_reference_scheme() {
    let e = HashingEmbedder::new(8);
    let abc = e.embed("abc").unwrap();
    let abd = e.embed("abd").unwrap();
    assert_eq!(abc, reference_embed("abc", 8));
    assert_eq!(abd, reference_embed("abd", 8));
    assert_ne!(abc, abd);
    let long = "Fact-3 depends on fact-1 and aux-2";
    assert_eq!(e.embed(long).unwrap(), reference_embed(long, 8));
}

fn random_context(rng: &mut ChaCha8Rng, d: usize, keys: usize) -> ControllerContext {
    let mut v = || {
        (0..d)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect::<Vec<f64>>()
    };
    let q = v();
    let k = (0..keys).map(|_| v()).collect();
    ControllerContext::from_vectors(q, k, [v(), v(), v()])
}

#[test]
fn log_prob_gradient_matches_finite_differences_on_many_contexts() {
    let shape = PolicyShape { d_e: 4, d_c: 8 };
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let h = 1e-5;
    for i in 0..100 {
        let mut policy = AdmissionPolicy::random(shape, 0.6, &mut rng);
        let ctx = random_context(&mut rng, 4, i % 4);
        let action = if i % 2 == 0 { Action::Yes } else { Action::No };
        let (_, grad) = log_prob(&policy, &ctx, action, 1.0);
        let mut diff = 0.0f64;
        let mut scale = 0.0f64;
        for (j, &g) in grad.iter().enumerate() {
            let x = policy.params()[j];
            policy.params_mut()[j] = x + h;
            let up = log_prob(&policy, &ctx, action, 1.0).0;
            policy.params_mut()[j] = x - h;
            let down = log_prob(&policy, &ctx, action, 1.0).0;
            policy.params_mut()[j] = x;
            let fd = (up - down) / (2.0 * h);
            diff += (fd - g).powi(2);
            scale += g.powi(2).max(fd * fd);
        }
        let rel = diff.sqrt() / scale.sqrt().max(1e-12);
        assert!(rel < 1e-4, "context {i}: relative error {rel:e}");
    }
}

#[test]
fn every_parameter_participates_in_the_gradient() {
    let shape = PolicyShape { d_e: 4, d_c: 8 };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let policy = AdmissionPolicy::random(shape, 0.6, &mut rng);
    let mut touched = vec![false; policy.num_params()];
    for _ in 0..10 {
        let ctx = random_context(&mut rng, 4, 2);
        let (_, g) = log_prob(&policy, &ctx, Action::Yes, 1.0);
        for (t, x) in touched.iter_mut().zip(g) {
            *t |= x != 0.0;
        }
    }
    assert!(touched.iter().all(|&t| t));
}

#[test]
fn fresh_policy_gives_log_half() {
    let p = AdmissionPolicy::new(
        PolicyShape { d_e: 8, d_c: 4 },
        &mut ChaCha8Rng::seed_from_u64(1),
    );
    let ctx = random_context(&mut ChaCha8Rng::seed_from_u64(2), 8, 3);
    let (lp, _) = log_prob(&p, &ctx, Action::Yes, 1.0);
    assert!((lp - 0.5f64.ln()).abs() < 1e-12);
}

#[test]
fn greedy_and_near_zero_temperature_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for logits in [[2.0, 1.0], [0.3, 0.5], [-1.0, -0.9]] {
        let greedy = decide_from_logits(logits, DecisionMode::Greedy, &mut rng).action;
        let agree = (0..10_000)
            .filter(|_| {
                decide_from_logits(
                    logits,
                    DecisionMode::Sampled { temperature: 0.01 },
                    &mut rng,
                )
                .action
                    == greedy
            })
            .count();
        assert!(agree >= 9_900, "{logits:?}: {agree}");
    }
    assert_eq!(
        decide_from_logits([2.0, 1.0], DecisionMode::Greedy, &mut rng).action,
        Action::Yes
    );
}

#[test]
fn seeded_decisions_are_reproducible() {
    let shape = PolicyShape { d_e: 4, d_c: 4 };
    let policy = AdmissionPolicy::random(shape, 1.0, &mut ChaCha8Rng::seed_from_u64(5));
    let ctx = random_context(&mut ChaCha8Rng::seed_from_u64(6), 4, 2);
    let mode = DecisionMode::Sampled { temperature: 1.2 };
    let run = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..50)
            .map(|_| decide(&policy, &ctx, mode, &mut rng).action)
            .collect::<Vec<_>>()
    };
    assert_eq!(run(11), run(11));
}

#[test]
fn context_from_bank_uses_cache_in_entry_order() {
    let provider = HashingEmbedder::new(8);
    let bank = MemoryBank::new(8);
    for i in 0..5 {
        let s = format!("fact-{i} = v{i}");
        bank.admit(&s, "raw", provider.embed(&s).unwrap().into(), 1, i + 1)
            .unwrap();
    }
    let t = StepTriplet {
        agent_input: "solve fact-9".into(),
        step_summary: "fact-9 = v1".into(),
        agent_output: "the value is v1".into(),
    };
    let ctx = build_context("query", &bank, &t, &provider).unwrap();
    assert_eq!(ctx.memory_keys.len(), 5);
    assert_eq!(ctx.token_count(), 1 + 5 + 3);
    for (k, e) in ctx.memory_keys.iter().zip(bank.entries()) {
        assert_eq!(&k[..], &provider.embed(&e.summary).unwrap()[..]);
    }
    assert_eq!(
        &ctx.step[1][..],
        &provider.embed("fact-9 = v1").unwrap()[..]
    );
}

#[test]
fn checkpoint_round_trip_preserves_decisions() {
    let shape = PolicyShape { d_e: 8, d_c: 4 };
    let policy = AdmissionPolicy::random(shape, 0.5, &mut ChaCha8Rng::seed_from_u64(8));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ckpt.json");
    save_checkpoint(&path, &policy, "hashing-fnv1a-v1-d8", Some(2)).unwrap();
    let (back, _) = load_checkpoint(&path, Some(8)).unwrap();
    assert_eq!(back.params(), policy.params());
    assert!(load_checkpoint(&path, Some(16)).is_err());
}

proptest! {
    #[test]
    fn probabilities_normalize(seed in any::<u64>(), keys in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = AdmissionPolicy::random(PolicyShape { d_e: 4, d_c: 4 }, 1.0, &mut rng);
        let ctx = random_context(&mut rng, 4, keys);
        let (y, _) = log_prob(&policy, &ctx, Action::Yes, 1.0);
        let (n, _) = log_prob(&policy, &ctx, Action::No, 1.0);
        prop_assert!((y.exp() + n.exp() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn temperature_pulls_towards_half(a in -5.0f64..5.0, b in -5.0f64..5.0, t in 0.1f64..5.0, dt in 0.01f64..5.0) {
        prop_assume!((a - b).abs() > 1e-6);
        let lo = (prob_yes([a, b], t) - 0.5).abs();
        let hi = (prob_yes([a, b], t + dt) - 0.5).abs();
        prop_assert!(hi <= lo);
    }

    #[test]
    fn key_order_does_not_change_logits(seed in any::<u64>(), keys in 2usize..6, rot in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = AdmissionPolicy::random(PolicyShape { d_e: 4, d_c: 4 }, 1.0, &mut rng);
        let ctx = random_context(&mut rng, 4, keys);
        let mut permuted = ctx.clone();
        permuted.memory_keys.rotate_left(rot % keys);
        let (a, b) = (policy.logits(&ctx), policy.logits(&permuted));
        prop_assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
        let greedy = DecisionMode::Greedy;
        let mut r1 = ChaCha8Rng::seed_from_u64(0);
        let mut r2 = ChaCha8Rng::seed_from_u64(0);
        prop_assert_eq!(decide(&policy, &ctx, greedy, &mut r1).action, decide(&policy, &permuted, greedy, &mut r2).action);
    }
}
