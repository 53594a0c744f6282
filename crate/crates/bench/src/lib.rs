//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sharegate_core::training::TrainingStep;
use sharegate_core::{Action, AdmissionPolicy, ControllerContext, PolicyShape};

pub fn context(rng: &mut impl Rng, d_e: usize, keys: usize) -> ControllerContext {
    let mut v = || {
        (0..d_e)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect::<Vec<f64>>()
    };
    let q = v();
    let k = (0..keys).map(|_| v()).collect();
    ControllerContext::from_vectors(q, k, [v(), v(), v()])
}

pub fn policy(d_e: usize, d_c: usize) -> AdmissionPolicy {
    AdmissionPolicy::random(
        PolicyShape { d_e, d_c },
        0.3,
        &mut ChaCha8Rng::seed_from_u64(1),
    )
}

/// `traces` traces of `steps` decisions each, with `keys` memory keys per context.
pub fn batch(d_e: usize, traces: usize, steps: usize, keys: usize) -> Vec<Vec<TrainingStep>> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    (0..traces)
        .map(|_| {
            (0..steps)
                .map(|_| TrainingStep {
                    context: context(&mut rng, d_e, keys),
                    action: if rng.random_bool(0.5) {
                        Action::Yes
                    } else {
                        Action::No
                    },
                    advantage: rng.random_range(-1.0..1.0),
                    behaviour_log_prob: -0.7,
                })
                .collect()
        })
        .collect()
}
