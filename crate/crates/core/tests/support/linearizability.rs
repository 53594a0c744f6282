//! Randomized concurrent histories against the memory bank and a checker
//! that replays them in sequence-number order against a sequential model.
//!
//! Every operation records an invocation and a response tick from one global
//! atomic counter. Admits and successful retrieves are placed at the sequence
//! number the bank assigned; a key listing is placed just after its
//! `as_of_seq`. A failed retrieve of id `x` has no sequence number, so the
//! checker looks for any gap that respects real-time order and lies before
//! the admission of `x`.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Barrier;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sharegate_core::memory_bank::MemoryBank;
use sharegate_core::Error;

#[derive(Debug, Clone)]
pub enum OpResult {
    Admit {
        entry_id: u64,
        seq: u64,
    },
    Retrieve {
        entry_id: u64,
        output: String,
        summary: String,
        seq: u64,
    },
    RetrieveMissing {
        entry_id: u64,
    },
    ListKeys {
        as_of_seq: u64,
        keys: Vec<(u64, String)>,
    },
}

#[derive(Debug, Clone)]
pub struct Op {
    pub thread: usize,
    pub inv: u64,
    pub resp: u64,
    pub summary: String,
    pub output: String,
    pub result: OpResult,
}

pub struct History {
    pub ops: Vec<Op>,
    pub bank: MemoryBank,
}

/// Runs `threads` threads issuing `ops_per_thread` random operations each.
pub fn random_history(seed: u64, threads: usize, ops_per_thread: usize) -> History {
    let bank = MemoryBank::new(2);
    let clock = AtomicU64::new(0);
    let barrier = Barrier::new(threads);
    let mut ops = Vec::new();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let (bank, clock, barrier) = (&bank, &clock, &barrier);
                s.spawn(move || {
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(seed.wrapping_mul(1_000_003) + t as u64);
                    let mut local = Vec::with_capacity(ops_per_thread);
                    barrier.wait();
                    for i in 0..ops_per_thread {
                        let r: f64 = rng.random();
                        let summary = format!("t{t}-k{i}");
                        let output = format!("value of t{t}-k{i}");
                        let inv = clock.fetch_add(1, Ordering::SeqCst);
                        let result = if r < 0.4 {
                            let a = bank
                                .admit(
                                    &summary,
                                    &output,
                                    vec![t as f64, i as f64].into(),
                                    t + 1,
                                    i + 1,
                                )
                                .expect("valid admit");
                            OpResult::Admit {
                                entry_id: a.entry_id,
                                seq: a.admit_seq,
                            }
                        } else if r < 0.8 {
                            let id =
                                rng.random_range(1..=(threads * ops_per_thread / 2).max(2) as u64);
                            match bank.retrieve(id, t + 1, i + 1) {
                                Ok(got) => OpResult::Retrieve {
                                    entry_id: id,
                                    output: got.output,
                                    summary: got.summary,
                                    seq: got.retrieve_seq,
                                },
                                Err(Error::NotFound { entry_id }) => {
                                    OpResult::RetrieveMissing { entry_id }
                                }
                                Err(e) => panic!("unexpected error {e}"),
                            }
                        } else {
                            let snap = bank.list_keys();
                            OpResult::ListKeys {
                                as_of_seq: snap.as_of_seq,
                                keys: snap.keys,
                            }
                        };
                        let resp = clock.fetch_add(1, Ordering::SeqCst);
                        local.push(Op {
                            thread: t,
                            inv,
                            resp,
                            summary,
                            output,
                            result,
                        });
                    }
                    local
                })
            })
            .collect();
        for h in handles {
            ops.extend(h.join().unwrap());
        }
    });
    History { ops, bank }
}

/// Position of an op in the candidate linearization, doubled so that key
/// listings can sit between integer sequence numbers.
fn position(op: &Op) -> Option<u64> {
    match op.result {
        OpResult::Admit { seq, .. } | OpResult::Retrieve { seq, .. } => Some(2 * seq),
        OpResult::ListKeys { as_of_seq, .. } => Some(2 * as_of_seq + 1),
        OpResult::RetrieveMissing { .. } => None,
    }
}

/// Returns a description of the first violation, if any.
pub fn check(history: &History) -> Result<(), String> {
    let ops = &history.ops;

    // Distinct sequence numbers for mutating/reading ops that hold one.
    let mut seqs: Vec<u64> = ops
        .iter()
        .filter_map(|o| match o.result {
            OpResult::Admit { seq, .. } | OpResult::Retrieve { seq, .. } => Some(seq),
            _ => None,
        })
        .collect();
    seqs.sort_unstable();
    if seqs.windows(2).any(|w| w[0] == w[1]) {
        return Err("duplicate sequence number".into());
    }

    // Real-time order among positioned ops.
    for a in ops {
        let Some(pa) = position(a) else { continue };
        for b in ops {
            let Some(pb) = position(b) else { continue };
            if a.resp < b.inv && pa > pb {
                return Err(format!("real-time order violated: {a:?} precedes {b:?}"));
            }
        }
    }

    // Failed retrieves need a gap before the admission of their id.
    let admit_pos = |id: u64| {
        ops.iter().find_map(|o| match o.result {
            OpResult::Admit { entry_id, seq } if entry_id == id => Some((2 * seq, o)),
            _ => None,
        })
    };
    for r in ops {
        let OpResult::RetrieveMissing { entry_id } = r.result else {
            continue;
        };
        let lower = ops
            .iter()
            .filter(|a| a.resp < r.inv)
            .filter_map(position)
            .max();
        let mut upper = ops
            .iter()
            .filter(|b| r.resp < b.inv)
            .filter_map(position)
            .min();
        if let Some((p, admit)) = admit_pos(entry_id) {
            if admit.resp < r.inv {
                return Err(format!(
                    "retrieve of {entry_id} failed after its admission completed"
                ));
            }
            upper = Some(upper.map_or(p, |u| u.min(p)));
        }
        if let (Some(l), Some(u)) = (lower, upper) {
            if l > u {
                return Err(format!("no linearization point for failed retrieve {r:?}"));
            }
        }
    }

    // Sequential replay in position order.
    let mut order: Vec<&Op> = ops.iter().filter(|o| position(o).is_some()).collect();
    order.sort_by_key(|o| position(o).unwrap());
    let mut model: Vec<(u64, String, String)> = Vec::new();
    for op in order {
        match &op.result {
            OpResult::Admit { entry_id, .. } => {
                let expect = model.len() as u64 + 1;
                if *entry_id != expect {
                    return Err(format!("admit got id {entry_id}, model expects {expect}"));
                }
                model.push((*entry_id, op.summary.clone(), op.output.clone()));
            }
            OpResult::Retrieve {
                entry_id,
                output,
                summary,
                ..
            } => match model.iter().find(|(id, _, _)| id == entry_id) {
                Some((_, s, o)) if s == summary && o == output => {}
                Some(_) => return Err(format!("retrieve {entry_id} returned different content")),
                None => return Err(format!("retrieve {entry_id} succeeded before admission")),
            },
            OpResult::ListKeys { keys, .. } => {
                let expect: Vec<(u64, String)> =
                    model.iter().map(|(id, s, _)| (*id, s.clone())).collect();
                if *keys != expect {
                    return Err(format!("snapshot {keys:?} differs from model {expect:?}"));
                }
            }
            OpResult::RetrieveMissing { .. } => unreachable!(),
        }
    }

    // Final state.
    let entries = history.bank.entries();
    if entries.len() != model.len() || history.bank.key_embeddings().len() != entries.len() {
        return Err("final bank size differs from replay".into());
    }
    for (e, (id, s, o)) in entries.iter().zip(&model) {
        if e.entry_id != *id || &e.summary != s || &e.output != o {
            return Err(format!("final entry {} differs from replay", e.entry_id));
        }
    }
    Ok(())
}
