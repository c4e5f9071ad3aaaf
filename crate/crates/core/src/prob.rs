//! Probability vectors over preference classes and the arithmetic on them.
//!
//! Class index 0 is the "acceptable" class by convention; index 1 (and up)
//! are the remaining classes. All probabilities are clamped to
//! [`PROB_FLOOR`, 1] before any logarithm so that KL divergences and
//! log-likelihoods are total functions.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Floor applied to probabilities before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Tolerance for the sum-to-one invariant.
pub const SUM_TOL: f64 = 1e-9;

/// A probability distribution over preference classes.
///
/// Index 0 is the acceptable class. Entries are in [0, 1] and sum to 1
/// within [`SUM_TOL`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PrefDist {
    probs: Vec<f64>,
}

impl PrefDist {
    /// Build a distribution, validating the invariants.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidDist(format!(
                "need at least 2 classes, got {}",
                probs.len()
            )));
        }
        for (k, &p) in probs.iter().enumerate() {
            if !p.is_finite() || !(0.0..=1.0 + SUM_TOL).contains(&p) {
                return Err(Error::InvalidDist(format!("entry {k} = {p} not in [0, 1]")));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidDist(format!("entries sum to {sum}, not 1")));
        }
        Ok(PrefDist { probs })
    }

    /// Normalize a non-negative vector into a distribution.
    pub fn from_unnormalized(raw: &[f64]) -> Result<Self> {
        let sum: f64 = raw.iter().sum();
        if !sum.is_finite() || sum <= 0.0 {
            return Err(Error::InvalidDist(format!("unnormalized mass {sum}")));
        }
        PrefDist::new(raw.iter().map(|&v| v / sum).collect())
    }

    /// The uniform distribution over `classes` classes.
    pub fn uniform(classes: usize) -> Self {
        PrefDist {
            probs: vec![1.0 / classes as f64; classes],
        }
    }

    /// All mass on class `index`.
    pub fn one_hot(classes: usize, index: usize) -> Self {
        let mut probs = vec![0.0; classes];
        probs[index] = 1.0;
        PrefDist { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn class_count(&self) -> usize {
        self.probs.len()
    }

    /// Probability of the acceptable class (index 0).
    pub fn acceptable(&self) -> f64 {
        self.probs[0]
    }

    /// Index of the most probable class, ties to the lower index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = k;
            }
        }
        best
    }

    /// True if some class holds all the mass (exactly, pre-clamp).
    pub fn is_one_hot(&self) -> bool {
        self.probs.contains(&1.0)
    }
}

/// KL divergence `Σ_k p_k · ln(p_k / q_k)` with the convention 0·ln(0/·) = 0.
///
/// `q` is clamped to [`PROB_FLOOR`] inside the logarithm, so the result is
/// finite for every valid pair of distributions.
pub fn kl_divergence(p: &PrefDist, q: &PrefDist) -> Result<f64> {
    if p.class_count() != q.class_count() {
        return Err(Error::DimMismatch {
            expected: p.class_count(),
            got: q.class_count(),
        });
    }
    let mut kl = 0.0;
    for (&pk, &qk) in p.probs().iter().zip(q.probs()) {
        if pk > 0.0 {
            kl += pk * (pk.max(PROB_FLOOR) / qk.max(PROB_FLOOR)).ln();
        }
    }
    Ok(kl)
}

/// Smoothed empirical histogram of class annotations:
/// `probs[k] = (count_k + epsilon) / (N + C·epsilon)`.
///
/// `epsilon = 0` reproduces the raw histogram.
pub fn empirical_prior(annotations: &[usize], classes: usize, epsilon: f64) -> Result<PrefDist> {
    if annotations.is_empty() {
        return Err(Error::NoAnnotations);
    }
    let mut counts = vec![0.0; classes];
    for &a in annotations {
        if a >= classes {
            return Err(Error::AnnotationOutOfRange { index: a, classes });
        }
        counts[a] += 1.0;
    }
    let total = annotations.len() as f64 + classes as f64 * epsilon;
    PrefDist::new(counts.iter().map(|&c| (c + epsilon) / total).collect())
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}
