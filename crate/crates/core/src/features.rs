//! Hashed n-gram feature extraction.
//!
//! (context, text) token pairs are mapped to sparse count vectors: unigrams
//! and bigrams of the text plus (context-unigram × text-unigram) cross
//! features, each hashed with FNV-1a into `dim` buckets, and a constant
//! bias feature at index 0. Collisions add up; values are raw counts.
//! The same featurizer backs both the preference scorer and the toy
//! sequence model, so identical inputs always produce identical vectors.

use std::collections::BTreeMap;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Separator between the parts of a feature key; cannot occur in tokens
/// read from whitespace-tokenized text.
const SEP: u8 = 0x1f;

/// 64-bit FNV-1a over a byte stream.
fn fnv1a(parts: &[&[u8]]) -> u64 {
    let mut h = FNV_OFFSET;
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            h ^= u64::from(SEP);
            h = h.wrapping_mul(FNV_PRIME);
        }
        for &b in *part {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}

/// A sparse feature vector: strictly increasing indices with matching
/// count values, in a feature space of fixed size `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    pub dim: usize,
}

impl FeatureVector {
    /// Sparse dot product against a dense row slice of length `dim`.
    pub fn dot(&self, row: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| row[i] * v)
            .sum()
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }
}

/// Hash a (context, text) token pair into a sparse count vector.
///
/// Features: a bias (bucket 0, count 1), text unigrams, text bigrams, and
/// every context-unigram × text-unigram pair, each bucketed modulo `dim`.
/// Pure: identical inputs yield identical vectors. `dim` must be ≥ 2.
pub fn featurize<C: AsRef<str>, T: AsRef<str>>(
    context: &[C],
    text: &[T],
    dim: usize,
) -> FeatureVector {
    assert!(dim >= 2, "feature dim must be >= 2, got {dim}");
    let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
    counts.insert(0, 1.0); // bias

    let mut bump = |h: u64| {
        let bucket = (h % dim as u64) as usize;
        *counts.entry(bucket).or_insert(0.0) += 1.0;
    };

    for tok in text {
        bump(fnv1a(&[b"u", tok.as_ref().as_bytes()]));
    }
    for pair in text.windows(2) {
        bump(fnv1a(&[
            b"b",
            pair[0].as_ref().as_bytes(),
            pair[1].as_ref().as_bytes(),
        ]));
    }
    for c in context {
        for t in text {
            bump(fnv1a(&[b"x", c.as_ref().as_bytes(), t.as_ref().as_bytes()]));
        }
    }

    let (indices, values) = counts.into_iter().unzip();
    FeatureVector {
        indices,
        values,
        dim,
    }
}

/// Bucket a single text unigram lands in; the same bucket `featurize`
/// uses for that token.
pub fn unigram_bucket(token: &str, dim: usize) -> usize {
    (fnv1a(&[b"u", token.as_bytes()]) % dim as u64) as usize
}

/// Default feature-space size for preference scorers.
pub const DEFAULT_SCORER_DIM: usize = 1 << 16;

/// Split a string on whitespace into owned tokens.
pub fn tokenize(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_owned).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const NO_TOKENS: &[&str] = &[];

    #[test]
    fn empty_input_is_bias_only() {
        let f = featurize(NO_TOKENS, NO_TOKENS, 16);
        assert_eq!(f.indices, vec![0]);
        assert_eq!(f.values, vec![1.0]);
        assert_eq!(f.dim, 16);
    }

    #[test]
    fn unigram_counts_accumulate() {
        let f = featurize(&["a"], &["b", "b"], 1024);
        let b_bucket = (fnv1a(&[b"u", b"b"]) % 1024) as usize;
        let pos = f.indices.iter().position(|&i| i == b_bucket).unwrap();
        assert_eq!(f.values[pos], 2.0);
    }

    #[test]
    fn indices_sorted_strictly_increasing() {
        let f = featurize(&["x", "y"], &["p", "q", "r"], 64);
        assert!(f.indices.windows(2).all(|w| w[0] < w[1]));
        assert!(f.indices.iter().all(|&i| i < 64));
    }

    proptest! {
        #[test]
        fn featurize_is_pure(
            ctx in proptest::collection::vec("[a-z]{1,4}", 0..4),
            txt in proptest::collection::vec("[a-z]{1,4}", 0..6),
        ) {
            let a = featurize(&ctx, &txt, 256);
            let b = featurize(&ctx, &txt, 256);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn total_count_matches_feature_count(
            ctx in proptest::collection::vec("[a-z]{1,4}", 0..4),
            txt in proptest::collection::vec("[a-z]{1,4}", 0..6),
        ) {
            let f = featurize(&ctx, &txt, 512);
            let total: f64 = f.values.iter().sum();
            let expected = 1 // bias
                + txt.len()
                + txt.len().saturating_sub(1)
                + ctx.len() * txt.len();
            prop_assert!((total - expected as f64).abs() < 1e-12);
        }
    }
}
