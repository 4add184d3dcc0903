//! Pluggable deterministic step embedders.
//!
//! The default is a hashed bag-of-tokens frequency vector: no model
//! dependencies, bit-identical across runs. An external-embedding file
//! (text -> vector) can be swapped in for fidelity experiments.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::oracle::ReasoningStep;

pub trait Embedder: Send + Sync {
    fn embed(&self, step: &ReasoningStep) -> Vec<f64>;
    fn name(&self) -> String;
}

/// Fixed seed constant for the multiplicative token hash.
pub const HASH_SEED: u64 = 0x9e37_79b9_7f4a_7c15;

/// Bag-of-tokens counts hashed into a fixed number of buckets.
#[derive(Debug, Clone)]
pub struct HashedBagEmbedder {
    pub buckets: usize,
    pub seed: u64,
}

impl Default for HashedBagEmbedder {
    fn default() -> Self {
        HashedBagEmbedder {
            buckets: 4096,
            seed: HASH_SEED,
        }
    }
}

fn hash_token(token: &str, seed: u64) -> u64 {
    // FNV-1a over the bytes, then a multiplicative mix with the seed.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in token.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    (h ^ seed).wrapping_mul(0x2545_f491_4f6c_dd1d)
}

impl Embedder for HashedBagEmbedder {
    fn embed(&self, step: &ReasoningStep) -> Vec<f64> {
        let mut v = vec![0.0; self.buckets];
        for tok in &step.tokens {
            let idx = (hash_token(tok, self.seed) % self.buckets as u64) as usize;
            v[idx] += 1.0;
        }
        v
    }

    fn name(&self) -> String {
        format!("hashed-bag-{}", self.buckets)
    }
}

/// Embeddings looked up from a JSON file mapping raw text to vectors.
/// Unknown texts embed to the zero vector, which the similarity check
/// reports as a degenerate embedding.
pub struct ExternalEmbedder {
    map: HashMap<String, Vec<f64>>,
    source: String,
}

impl ExternalEmbedder {
    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("embedding file {}: {e}", path.display())))?;
        let map: HashMap<String, Vec<f64>> = serde_json::from_str(&text)
            .map_err(|e| Error::Io(format!("embedding file {}: {e}", path.display())))?;
        Ok(ExternalEmbedder {
            map,
            source: path.display().to_string(),
        })
    }
}

impl Embedder for ExternalEmbedder {
    fn embed(&self, step: &ReasoningStep) -> Vec<f64> {
        self.map.get(&step.raw).cloned().unwrap_or_default()
    }

    fn name(&self) -> String {
        format!("external:{}", self.source)
    }
}

/// Cosine similarity; `None` when either vector has zero norm.
pub fn cosine(u: &[f64], v: &[f64]) -> Option<f64> {
    if u.len() != v.len() {
        return None;
    }
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu <= 0.0 || nv <= 0.0 {
        return None;
    }
    Some(dot / (nu.sqrt() * nv.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_texts_have_cosine_one() {
        let e = HashedBagEmbedder::default();
        let s = ReasoningStep::new("2 + 2 = 4").unwrap();
        let c = cosine(&e.embed(&s), &e.embed(&s)).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_tokens_orthogonal() {
        let e = HashedBagEmbedder::default();
        let a = ReasoningStep::new("alpha beta gamma").unwrap();
        let b = ReasoningStep::new("delta epsilon zeta").unwrap();
        let c = cosine(&e.embed(&a), &e.embed(&b)).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn embedding_is_deterministic() {
        let e = HashedBagEmbedder::default();
        let s = ReasoningStep::new("the probability is 1/3").unwrap();
        assert_eq!(e.embed(&s), e.embed(&s));
    }

    #[test]
    fn zero_vector_yields_none() {
        assert!(cosine(&[0.0, 0.0], &[1.0, 0.0]).is_none());
    }
}
