use std::collections::HashMap;

use super::Candidate;
use crate::error::Result;

pub trait Aggregator: Sync {
    /// Combines candidates into one answer. Called only with at least one candidate.
    fn aggregate(&self, query: &str, candidates: &[Candidate]) -> Result<String>;
}

/// Lowercased, trimmed, internal whitespace collapsed.
pub fn normalize_answer(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Majority over normalized answers; ties go to the class containing the
/// earliest finisher. Returns that finisher's answer text unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct MajorityVote;

impl MajorityVote {
    pub fn select(candidates: &[Candidate]) -> Option<&Candidate> {
        let mut order: Vec<&Candidate> = candidates.iter().collect();
        order.sort_by_key(|c| (c.finish_time, c.team));
        let mut counts: HashMap<String, usize> = HashMap::new();
        for c in &order {
            *counts.entry(normalize_answer(&c.answer)).or_default() += 1;
        }
        let best = counts.values().copied().max()?;
        order
            .into_iter()
            .find(|c| counts[&normalize_answer(&c.answer)] == best)
    }
}

impl Aggregator for MajorityVote {
    fn aggregate(&self, _query: &str, candidates: &[Candidate]) -> Result<String> {
        Ok(Self::select(candidates)
            .map(|c| c.answer.clone())
            .unwrap_or_default())
    }
}
