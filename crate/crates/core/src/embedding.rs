//! Frozen text embedders feeding the admission controller.

use crate::error::{Error, Result};

pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;

    /// Inputs longer than this many characters are truncated before embedding.
    fn max_input_chars(&self) -> usize;

    /// Stable identifier recorded in checkpoints.
    fn id(&self) -> String;

    /// Deterministic: the same text always maps to the same vector.
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Feature-hashing bag of word unigrams and bigrams with L2 normalization.
///
/// Text is lowercased and split into maximal alphanumeric runs. Each unigram
/// contributes feature `u:<tok>` and each adjacent pair `b:<tok1> <tok2>`.
/// A feature hashes with 64-bit FNV-1a; the bucket is `h % dim` and the sign
/// is `+1` when bit 63 is clear, `-1` otherwise. Text without tokens (or whose
/// features cancel exactly) falls back to the single feature `raw:<text>`.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dim: usize,
    max_chars: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        Self::with_max_chars(dim, 8192)
    }

    pub fn with_max_chars(dim: usize, max_chars: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim, max_chars }
    }

    fn add_feature(&self, v: &mut [f64], feature: &str) {
        let h = fnv1a64(feature.as_bytes());
        let bucket = (h % self.dim as u64) as usize;
        v[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
    }
}

impl EmbeddingProvider for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn max_input_chars(&self) -> usize {
        self.max_chars
    }

    fn id(&self) -> String {
        format!("hashing-fnv1a-v1-d{}", self.dim)
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        if text.is_empty() {
            return Err(Error::validation("cannot embed empty text"));
        }
        let text: String = text.chars().take(self.max_chars).collect();
        let lower = text.to_lowercase();
        let tokens: Vec<&str> = lower
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .collect();
        let mut v = vec![0.0; self.dim];
        for t in &tokens {
            self.add_feature(&mut v, &format!("u:{t}"));
        }
        for w in tokens.windows(2) {
            self.add_feature(&mut v, &format!("b:{} {}", w[0], w[1]));
        }
        let mut norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            self.add_feature(&mut v, &format!("raw:{text}"));
            norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        }
        v.iter_mut().for_each(|x| *x /= norm);
        Ok(v)
    }
}
