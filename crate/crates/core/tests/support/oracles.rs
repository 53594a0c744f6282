//! Random synthetic trace events and a brute-force metrics oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sharegate_core::controller::Action;
use sharegate_core::runtime::{SchedulerMode, TraceEvent};

/// One random, well-formed episode. Admitted entries are numbered from 1;
/// retrievals only name entries admitted earlier.
pub fn random_episode(rng: &mut ChaCha8Rng, scored: bool) -> Vec<TraceEvent> {
    let k = rng.random_range(1..=4usize);
    let mut ev = vec![TraceEvent::Episode {
        schema_version: 1,
        task_id: format!("syn-{}", rng.random::<u32>()),
        k,
        seed: rng.random(),
        gate: Some("synthetic".into()),
        scheduler: SchedulerMode::Deterministic,
    }];
    let mut seq = 0u64;
    let mut admitted = 0u64;
    let mut moves = 0usize;
    let steps = rng.random_range(0..25usize);
    for s in 0..steps {
        let team = rng.random_range(1..=k);
        moves += 1;
        let yes = rng.random_bool(0.4);
        let p = rng.random::<f64>();
        ev.push(TraceEvent::Decision {
            team,
            step: s + 1,
            action: if yes { Action::Yes } else { Action::No },
            prob_yes: p,
            log_prob: if yes { p.ln() } else { (1.0 - p).ln() },
            fail_closed: false,
        });
        if yes {
            seq += 1;
            admitted += 1;
            ev.push(TraceEvent::Admit {
                seq,
                entry_id: admitted,
                team,
                step: s + 1,
                wall_ns: seq,
            });
        }
        if admitted > 0 && rng.random_bool(0.5) {
            for _ in 0..rng.random_range(1..=3) {
                seq += 1;
                moves += 1;
                ev.push(TraceEvent::Retrieve {
                    seq,
                    entry_id: rng.random_range(1..=admitted),
                    team: rng.random_range(1..=k),
                    step: s + 1,
                    wall_ns: seq,
                });
            }
        }
    }
    ev.push(TraceEvent::Aggregate {
        answer: None,
        first_finisher: None,
        runtime: rng.random_range(0..500),
        total_moves: moves,
        r_agg: scored.then(|| rng.random_range(0..=4) as f64 / 4.0),
        r_first: scored.then(|| rng.random_range(0..=4) as f64 / 4.0),
        error: None,
    });
    ev
}

pub fn random_episodes(seed: u64, n: usize) -> Vec<Vec<TraceEvent>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scored = rng.random_bool(0.8);
    (0..n).map(|_| random_episode(&mut rng, scored)).collect()
}

/// Counts recomputed with nested scans and no shared code with the library.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCounts {
    pub candidates: usize,
    pub admitted: usize,
    pub recalled_entries: usize,
    pub retrievals: usize,
    pub cross_retrievals: usize,
    pub cross_entries: usize,
    pub runtime_sum: u64,
    pub moves_sum: usize,
    pub score_sum: Option<f64>,
}

pub fn brute_force(episodes: &[Vec<TraceEvent>]) -> OracleCounts {
    let mut c = OracleCounts {
        candidates: 0,
        admitted: 0,
        recalled_entries: 0,
        retrievals: 0,
        cross_retrievals: 0,
        cross_entries: 0,
        runtime_sum: 0,
        moves_sum: 0,
        score_sum: Some(0.0),
    };
    for ep in episodes {
        let admits: Vec<(u64, usize)> = ep
            .iter()
            .filter_map(|e| match e {
                TraceEvent::Admit { entry_id, team, .. } => Some((*entry_id, *team)),
                _ => None,
            })
            .collect();
        let rets: Vec<(u64, usize)> = ep
            .iter()
            .filter_map(|e| match e {
                TraceEvent::Retrieve { entry_id, team, .. } => Some((*entry_id, *team)),
                _ => None,
            })
            .collect();
        c.candidates += ep
            .iter()
            .filter(|e| matches!(e, TraceEvent::Decision { .. }))
            .count();
        c.admitted += admits.len();
        c.retrievals += rets.len();
        for &(id, src) in &admits {
            if rets.iter().any(|&(r, _)| r == id) {
                c.recalled_entries += 1;
            }
            if rets.iter().any(|&(r, t)| r == id && t != src) {
                c.cross_entries += 1;
            }
        }
        for &(id, t) in &rets {
            let src = admits.iter().find(|&&(a, _)| a == id).unwrap().1;
            if src != t {
                c.cross_retrievals += 1;
            }
        }
        for e in ep {
            if let TraceEvent::Aggregate {
                runtime,
                total_moves,
                r_agg,
                ..
            } = e
            {
                c.runtime_sum += runtime;
                c.moves_sum += total_moves;
                c.score_sum = match (c.score_sum, r_agg) {
                    (Some(s), Some(r)) => Some(s + r),
                    _ => None,
                };
            }
        }
    }
    c
}

pub fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 * 100.0 / den as f64
    }
}
