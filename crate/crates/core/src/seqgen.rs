//! Toy context-conditioned autoregressive sequence model and decoders.
//!
//! The model is log-linear over hashed features of (input, previous n-gram
//! window), which keeps every gradient closed-form. Decoders: greedy, beam
//! (length-synchronous, finished hypotheses frozen), diverse beam (groups
//! of width 1 with a Hamming penalty on tokens earlier groups chose at the
//! same timestep), and nucleus sampling.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{featurize, FeatureVector};
use crate::prob::{softmax, PROB_FLOOR};
use crate::rng::RngSeed;

pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";

/// Autoregressive log-linear sequence model.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqModel {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    weights: Vec<f64>, // vocab_size × dim, row-major
    dim: usize,
    ngram_order: usize,
    max_len: usize,
}

pub const DEFAULT_GEN_DIM: usize = 1 << 12;
pub const DEFAULT_NGRAM_ORDER: usize = 2;
pub const DEFAULT_MAX_LEN: usize = 16;

impl SeqModel {
    /// Build a zero-weight model over `body` tokens plus reserved BOS/EOS.
    pub fn new(body: &[String], dim: usize, ngram_order: usize, max_len: usize) -> Result<Self> {
        assert!(dim >= 2, "feature dim must be >= 2");
        assert!(ngram_order >= 1, "ngram order must be >= 1");
        assert!(max_len >= 1, "max_len must be >= 1");
        let mut vocab = vec![BOS.to_owned(), EOS.to_owned()];
        for tok in body {
            if tok == BOS || tok == EOS {
                return Err(Error::InvalidDist(format!("token '{tok}' is reserved")));
            }
            vocab.push(tok.clone());
        }
        let mut index = HashMap::new();
        for (i, tok) in vocab.iter().enumerate() {
            if index.insert(tok.clone(), i).is_some() {
                return Err(Error::InvalidDist(format!("duplicate vocab token '{tok}'")));
            }
        }
        let weights = vec![0.0; vocab.len() * dim];
        Ok(SeqModel {
            vocab,
            index,
            weights,
            dim,
            ngram_order,
            max_len,
        })
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn ngram_order(&self) -> usize {
        self.ngram_order
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn set_weights(&mut self, weights: Vec<f64>) -> Result<()> {
        if weights.len() != self.weights.len() {
            return Err(Error::DimMismatch {
                expected: self.weights.len(),
                got: weights.len(),
            });
        }
        self.weights = weights;
        Ok(())
    }

    /// Fill the weights uniformly from [-scale, scale), seeded.
    pub fn randomize(&mut self, seed: RngSeed, scale: f64) {
        let mut rng = seed.rng();
        for w in &mut self.weights {
            *w = rng.gen_range(-scale..scale);
        }
    }

    pub fn token_id(&self, tok: &str) -> Option<usize> {
        self.index.get(tok).copied()
    }

    fn step_features<S: AsRef<str>>(&self, x: &[S], prefix: &[usize]) -> FeatureVector {
        let start = prefix.len().saturating_sub(self.ngram_order);
        let window: Vec<&str> = prefix[start..]
            .iter()
            .map(|&i| self.vocab[i].as_str())
            .collect();
        let ctx: Vec<&str> = x.iter().map(|s| s.as_ref()).collect();
        featurize(&ctx, &window, self.dim)
    }

    fn dist_from_features(&self, features: &FeatureVector) -> Vec<f64> {
        let logits: Vec<f64> = (0..self.vocab.len())
            .map(|v| features.dot(&self.weights[v * self.dim..(v + 1) * self.dim]))
            .collect();
        softmax(&logits)
    }

    fn prefix_ids<T: AsRef<str>>(&self, prefix: &[T]) -> Result<Vec<usize>> {
        if prefix.first().map(|t| t.as_ref()) != Some(BOS) {
            return Err(Error::InvalidDist("prefix must begin with <bos>".into()));
        }
        prefix
            .iter()
            .map(|t| {
                self.token_id(t.as_ref())
                    .ok_or_else(|| Error::UnknownToken(t.as_ref().to_owned()))
            })
            .collect()
    }

    /// Next-token distribution over the vocabulary given input `x` and a
    /// prefix that starts with `<bos>`.
    pub fn next_token_dist<C: AsRef<str>, T: AsRef<str>>(
        &self,
        x: &[C],
        prefix: &[T],
    ) -> Result<Vec<f64>> {
        let ids = self.prefix_ids(prefix)?;
        Ok(self.dist_from_features(&self.step_features(x, &ids)))
    }

    /// Log-probabilities of an already generated token sequence (without
    /// the leading `<bos>`), re-scored under this model.
    pub fn score_sequence<C: AsRef<str>, T: AsRef<str>>(
        &self,
        x: &[C],
        generated: &[T],
    ) -> Result<Vec<f64>> {
        let mut prefix = vec![0usize]; // BOS
        let mut logps = Vec::with_capacity(generated.len());
        for tok in generated {
            let id = self
                .token_id(tok.as_ref())
                .ok_or_else(|| Error::UnknownToken(tok.as_ref().to_owned()))?;
            let dist = self.dist_from_features(&self.step_features(x, &prefix));
            logps.push(dist[id].max(PROB_FLOOR).ln());
            prefix.push(id);
        }
        Ok(logps)
    }

    /// Add `coeff · ∂(Σ_t ln G(y_t|x, y_<t))/∂W` to `grad`; returns the
    /// summed log-probability of the sequence.
    pub(crate) fn accumulate_sequence_grad<S: AsRef<str>>(
        &self,
        x: &[S],
        generated: &[usize],
        coeff: f64,
        grad: &mut [f64],
    ) -> f64 {
        let mut prefix = vec![0usize];
        let mut total = 0.0;
        for &id in generated {
            let features = self.step_features(x, &prefix);
            let dist = self.dist_from_features(&features);
            total += dist[id].max(PROB_FLOOR).ln();
            for (v, &qv) in dist.iter().enumerate() {
                let gz = coeff * (if v == id { 1.0 } else { 0.0 } - qv);
                let row = &mut grad[v * self.dim..(v + 1) * self.dim];
                for (&j, &val) in features.indices.iter().zip(&features.values) {
                    row[j] += gz * val;
                }
            }
            prefix.push(id);
        }
        total
    }

    pub(crate) fn ids_of<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<usize>> {
        tokens
            .iter()
            .map(|t| {
                self.token_id(t.as_ref())
                    .ok_or_else(|| Error::UnknownToken(t.as_ref().to_owned()))
            })
            .collect()
    }

    /// Binary serialization: magic `SQM1`, u32 vocab size, dim, ngram
    /// order and max_len (little-endian), the vocab as length-prefixed
    /// UTF-8 strings, then vocab_size·dim little-endian f64 weights.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(b"SQM1")?;
        w.write_all(&(self.vocab.len() as u32).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.ngram_order as u32).to_le_bytes())?;
        w.write_all(&(self.max_len as u32).to_le_bytes())?;
        for tok in &self.vocab {
            let bytes = tok.as_bytes();
            w.write_all(&(bytes.len() as u32).to_le_bytes())?;
            w.write_all(bytes)?;
        }
        for v in &self.weights {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)?.read_to_end(&mut bytes)?;
        let mut pos = 0usize;
        let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
            if *pos + n > bytes.len() {
                return Err(Error::BadModelFile("truncated SQM1 file".into()));
            }
            let s = &bytes[*pos..*pos + n];
            *pos += n;
            Ok(s)
        };
        if take(&mut pos, 4)? != b"SQM1" {
            return Err(Error::BadModelFile("missing SQM1 magic".into()));
        }
        let read_u32 = |pos: &mut usize| -> Result<usize> {
            let s = take(pos, 4)?;
            Ok(u32::from_le_bytes(s.try_into().unwrap()) as usize)
        };
        let vocab_size = read_u32(&mut pos)?;
        let dim = read_u32(&mut pos)?;
        let ngram_order = read_u32(&mut pos)?;
        let max_len = read_u32(&mut pos)?;
        let mut vocab = Vec::with_capacity(vocab_size);
        for _ in 0..vocab_size {
            let len = read_u32(&mut pos)?;
            let s = take(&mut pos, len)?;
            vocab.push(
                String::from_utf8(s.to_vec()).map_err(|e| Error::BadModelFile(e.to_string()))?,
            );
        }
        if vocab.len() < 2 || vocab[0] != BOS || vocab[1] != EOS {
            return Err(Error::BadModelFile(
                "vocab must start with <bos>, <eos>".into(),
            ));
        }
        let body: Vec<String> = vocab[2..].to_vec();
        let mut model = SeqModel::new(&body, dim, ngram_order, max_len)?;
        let weight_bytes = take(&mut pos, vocab_size * dim * 8)?;
        if pos != bytes.len() {
            return Err(Error::BadModelFile("trailing bytes in SQM1 file".into()));
        }
        model.weights = weight_bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(model)
    }
}

/// One decoded sequence with its per-token log-probabilities under the
/// producing model (diversity penalties excluded).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    /// Full token sequence including `<bos>` and, when decoding finished
    /// before the length cap, a trailing `<eos>`.
    pub tokens: Vec<String>,
    /// Log-probability of each generated token (everything after `<bos>`).
    pub token_logps: Vec<f64>,
    pub total_logp: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pref_score: Option<f64>,
}

impl Candidate {
    fn from_ids(model: &SeqModel, ids: &[usize], logps: Vec<f64>) -> Candidate {
        let mut tokens = Vec::with_capacity(ids.len() + 1);
        tokens.push(BOS.to_owned());
        tokens.extend(ids.iter().map(|&i| model.vocab[i].clone()));
        let total_logp = logps.iter().sum();
        Candidate {
            tokens,
            token_logps: logps,
            total_logp,
            pref_score: None,
        }
    }

    /// Generated tokens: everything after `<bos>`, including `<eos>`.
    pub fn generated(&self) -> &[String] {
        &self.tokens[1..]
    }

    /// Surface tokens: generated tokens without a trailing `<eos>`.
    pub fn surface(&self) -> &[String] {
        let gen = self.generated();
        match gen.last() {
            Some(last) if last == EOS => &gen[..gen.len() - 1],
            _ => gen,
        }
    }

    /// Number of generated tokens (the |ỹ| used for length normalization).
    pub fn len(&self) -> usize {
        self.token_logps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_logps.is_empty()
    }
}

/// K candidates decoded for one input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateSet {
    pub input: Vec<String>,
    pub candidates: Vec<Candidate>,
}

fn argmax_with_penalty(scores: &[f64]) -> usize {
    let mut best = 0;
    for (v, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = v;
        }
    }
    best
}

/// Greedy decoding: the argmax token at each step (ties to the lowest
/// vocab index), stopping at `<eos>` or the model's length cap.
pub fn decode_greedy<S: AsRef<str>>(model: &SeqModel, x: &[S]) -> Candidate {
    decode_one_greedy(model, x, None, 0.0)
}

/// Greedy decode with an optional per-timestep token penalty table.
fn decode_one_greedy<S: AsRef<str>>(
    model: &SeqModel,
    x: &[S],
    penalties: Option<&[Vec<u32>]>,
    penalty_weight: f64,
) -> Candidate {
    let eos = 1usize;
    let mut prefix = vec![0usize];
    let mut ids = Vec::new();
    let mut logps = Vec::new();
    for step in 0..model.max_len {
        let dist = model.dist_from_features(&model.step_features(x, &prefix));
        let chosen = match penalties {
            Some(counts) if penalty_weight > 0.0 => {
                let scores: Vec<f64> = dist
                    .iter()
                    .enumerate()
                    .map(|(v, &p)| p.max(PROB_FLOOR).ln() - penalty_weight * counts[step][v] as f64)
                    .collect();
                argmax_with_penalty(&scores)
            }
            _ => argmax_with_penalty(&dist),
        };
        ids.push(chosen);
        logps.push(dist[chosen].max(PROB_FLOOR).ln());
        prefix.push(chosen);
        if chosen == eos {
            break;
        }
    }
    Candidate::from_ids(model, &ids, logps)
}

#[derive(Clone)]
struct Hypothesis {
    ids: Vec<usize>,
    logps: Vec<f64>,
    total: f64,
    finished: bool,
}

/// Length-synchronous beam search. Finished hypotheses are frozen and keep
/// competing on total log-probability; the top `width` are returned sorted
/// by total log-probability, ties broken by lexicographic token order.
pub fn decode_beam<S: AsRef<str>>(model: &SeqModel, x: &[S], width: usize) -> Vec<Candidate> {
    assert!(width >= 1, "beam width must be >= 1");
    let eos = 1usize;
    let mut beam = vec![Hypothesis {
        ids: Vec::new(),
        logps: Vec::new(),
        total: 0.0,
        finished: false,
    }];
    for _ in 0..model.max_len {
        if beam.iter().all(|h| h.finished) {
            break;
        }
        let mut next: Vec<Hypothesis> = Vec::new();
        for hyp in &beam {
            if hyp.finished {
                next.push(hyp.clone());
                continue;
            }
            let mut prefix = vec![0usize];
            prefix.extend_from_slice(&hyp.ids);
            let dist = model.dist_from_features(&model.step_features(x, &prefix));
            for (v, &p) in dist.iter().enumerate() {
                let logp = p.max(PROB_FLOOR).ln();
                let mut ids = hyp.ids.clone();
                ids.push(v);
                let mut logps = hyp.logps.clone();
                logps.push(logp);
                next.push(Hypothesis {
                    total: hyp.total + logp,
                    finished: v == eos,
                    ids,
                    logps,
                });
            }
        }
        // prune on (total desc, index-lexicographic asc) for determinism
        next.sort_by(|a, b| {
            b.total
                .partial_cmp(&a.total)
                .unwrap()
                .then_with(|| a.ids.cmp(&b.ids))
        });
        next.truncate(width);
        beam = next;
    }
    let mut out: Vec<Candidate> = beam
        .iter()
        .map(|h| Candidate::from_ids(model, &h.ids, h.logps.clone()))
        .collect();
    out.sort_by(|a, b| {
        b.total_logp
            .partial_cmp(&a.total_logp)
            .unwrap()
            .then_with(|| a.tokens.cmp(&b.tokens))
    });
    out
}

/// Diverse beam search: K groups of width 1 decoded sequentially. At each
/// timestep, group g's log-probabilities are penalized by
/// `diversity_penalty` × (times earlier groups chose that token at this
/// timestep) before the argmax. Recorded log-probabilities are the model's
/// own, without the penalty.
pub fn decode_diverse_beam<S: AsRef<str>>(
    model: &SeqModel,
    x: &[S],
    k: usize,
    diversity_penalty: f64,
) -> Vec<Candidate> {
    assert!(k >= 1, "need at least one group");
    assert!(diversity_penalty >= 0.0, "penalty must be non-negative");
    let mut counts: Vec<Vec<u32>> = vec![vec![0; model.vocab_size()]; model.max_len];
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let cand = decode_one_greedy(model, x, Some(&counts), diversity_penalty);
        for (step, tok) in cand.generated().iter().enumerate() {
            let id = model.token_id(tok).expect("decoded token is in vocab");
            counts[step][id] += 1;
        }
        out.push(cand);
    }
    out
}

/// Nucleus sampling: at each step sample from the smallest probability
/// prefix of the sorted distribution whose mass reaches `p`, renormalized.
/// Deterministic given the seed.
pub fn decode_nucleus<S: AsRef<str>>(
    model: &SeqModel,
    x: &[S],
    p: f64,
    seed: RngSeed,
) -> Candidate {
    assert!(p > 0.0 && p <= 1.0, "p must be in (0, 1]");
    let eos = 1usize;
    let mut rng = seed.rng();
    let mut prefix = vec![0usize];
    let mut ids = Vec::new();
    let mut logps = Vec::new();
    for _ in 0..model.max_len {
        let dist = model.dist_from_features(&model.step_features(x, &prefix));
        let mut order: Vec<usize> = (0..dist.len()).collect();
        order.sort_by(|&a, &b| dist[b].partial_cmp(&dist[a]).unwrap().then(a.cmp(&b)));
        let mut nucleus = Vec::new();
        let mut mass = 0.0;
        for &v in &order {
            nucleus.push(v);
            mass += dist[v];
            if mass >= p {
                break;
            }
        }
        let draw: f64 = rng.gen::<f64>() * mass;
        let mut acc = 0.0;
        let mut chosen = *nucleus.last().unwrap();
        for &v in &nucleus {
            acc += dist[v];
            if draw < acc {
                chosen = v;
                break;
            }
        }
        ids.push(chosen);
        logps.push(dist[chosen].max(PROB_FLOOR).ln());
        prefix.push(chosen);
        if chosen == eos {
            break;
        }
    }
    Candidate::from_ids(model, &ids, logps)
}

/// Mean over pairs of the per-token negative log-likelihood, with its
/// exact gradient. Every target sequence must end with `<eos>`.
pub fn nll_loss_and_grad<S: AsRef<str>>(
    model: &SeqModel,
    pairs: &[(Vec<S>, Vec<S>)],
) -> Result<(f64, Vec<f64>)> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("nll needs at least one pair"));
    }
    let n = pairs.len() as f64;
    let mut grad = vec![0.0; model.weights.len()];
    let mut loss = 0.0;
    for (x, y) in pairs {
        if y.last().map(|t| t.as_ref()) != Some(EOS) {
            return Err(Error::InvalidDist(
                "target sequence must be terminated by <eos>".into(),
            ));
        }
        let ids = model.ids_of(y)?;
        let len = ids.len() as f64;
        // d(mean nll)/dW = −(1/(|y|·n)) · d(Σ ln G)/dW
        let total = model.accumulate_sequence_grad(x, &ids, -1.0 / (len * n), &mut grad);
        loss += -total / (len * n);
    }
    Ok((loss, grad))
}

/// Hyperparameters for fitting the sequence model by gradient descent.
#[derive(Debug, Clone)]
pub struct GenTrainConfig {
    pub lr: f64,
    pub steps: usize,
    pub tol: f64,
}

impl Default for GenTrainConfig {
    fn default() -> Self {
        GenTrainConfig {
            lr: 1.0,
            steps: 300,
            tol: 1e-9,
        }
    }
}

/// Full-batch NLL training; returns the per-step loss trace.
pub fn train_nll<S: AsRef<str>>(
    model: &mut SeqModel,
    pairs: &[(Vec<S>, Vec<S>)],
    config: &GenTrainConfig,
) -> Result<Vec<f64>> {
    let mut trace = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let (loss, grad) = nll_loss_and_grad(model, pairs)?;
        if !loss.is_finite() {
            return Err(Error::DivergedStep(step));
        }
        let prev = trace.last().copied();
        trace.push(loss);
        if let Some(prev) = prev {
            if (prev - loss).abs() < config.tol {
                break;
            }
        }
        for (w, g) in model.weights.iter_mut().zip(&grad) {
            *w -= config.lr * g;
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_difference, max_rel_error};

    fn body(tokens: &[&str]) -> Vec<String> {
        tokens.iter().map(|s| s.to_string()).collect()
    }

    fn small_model(seed: u64, scale: f64) -> SeqModel {
        let mut m = SeqModel::new(&body(&["red", "green", "blue"]), 128, 2, 4).unwrap();
        m.randomize(RngSeed(seed), scale);
        m
    }

    const X: &[&str] = &["paint", "it"];

    #[test]
    fn zero_weights_uniform_next_dist() {
        let m = SeqModel::new(&body(&["a", "b", "c"]), 64, 2, 8).unwrap();
        let dist = m.next_token_dist(X, &[BOS]).unwrap();
        assert_eq!(dist.len(), 5);
        for &p in &dist {
            assert!((p - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn next_dist_sums_to_one() {
        for seed in 0..8 {
            let m = small_model(seed, 1.0);
            let dist = m.next_token_dist(X, &[BOS, "red"]).unwrap();
            let sum: f64 = dist.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn prefix_must_start_with_bos() {
        let m = small_model(0, 0.5);
        assert!(m.next_token_dist(X, &["red"]).is_err());
    }

    #[test]
    fn unknown_prefix_token_errors() {
        let m = small_model(0, 0.5);
        let err = m.next_token_dist(X, &[BOS, "purple"]).unwrap_err();
        assert!(matches!(err, Error::UnknownToken(ref t) if t == "purple"));
    }

    #[test]
    fn greedy_stops_on_eos_bias() {
        let mut m = SeqModel::new(&body(&["a", "b"]), 64, 2, 8).unwrap();
        let mut w = m.weights().to_vec();
        // big bias toward EOS (row 1) on the bias feature
        w[m.dim()] = 50.0;
        m.set_weights(w).unwrap();
        let c = decode_greedy(&m, X);
        assert_eq!(c.tokens, vec![BOS.to_owned(), EOS.to_owned()]);
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn greedy_deterministic_and_stepwise_optimal() {
        let m = small_model(3, 0.8);
        let a = decode_greedy(&m, X);
        let b = decode_greedy(&m, X);
        assert_eq!(a, b);
        // each chosen token is the per-step argmax
        let mut prefix: Vec<String> = vec![BOS.to_owned()];
        for tok in a.generated() {
            let dist = m.next_token_dist(X, &prefix).unwrap();
            let best = dist
                .iter()
                .enumerate()
                .max_by(|(ia, pa), (ib, pb)| pa.partial_cmp(pb).unwrap().then(ib.cmp(ia)))
                .unwrap()
                .0;
            assert_eq!(m.vocab()[best], *tok);
            prefix.push(tok.clone());
        }
    }

    #[test]
    fn candidate_total_is_sum_of_logps() {
        let m = small_model(5, 1.0);
        let c = decode_greedy(&m, X);
        let sum: f64 = c.token_logps.iter().sum();
        assert!((c.total_logp - sum).abs() < 1e-9);
        assert!(c.token_logps.iter().all(|&lp| lp <= 0.0));
    }

    #[test]
    fn rescoring_matches_decode_logps() {
        for seed in 0..6 {
            let m = small_model(seed, 1.2);
            for cand in [decode_greedy(&m, X)]
                .into_iter()
                .chain(decode_beam(&m, X, 3))
                .chain(decode_diverse_beam(&m, X, 3, 0.5))
                .chain([decode_nucleus(&m, X, 0.9, RngSeed(seed))])
            {
                let rescored = m.score_sequence(X, cand.generated()).unwrap();
                assert_eq!(rescored.len(), cand.token_logps.len());
                for (a, b) in rescored.iter().zip(&cand.token_logps) {
                    assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }

    /// Exhaustive enumeration of every complete decode (ends at EOS or the
    /// length cap), used as the optimality oracle for beam search.
    fn enumerate_all(model: &SeqModel, x: &[&str]) -> Vec<(Vec<usize>, f64)> {
        let mut out = Vec::new();
        let mut stack: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 0.0)];
        while let Some((ids, total)) = stack.pop() {
            let mut prefix = vec![0usize];
            prefix.extend_from_slice(&ids);
            let dist = model.dist_from_features(&model.step_features(x, &prefix));
            for (v, &p) in dist.iter().enumerate() {
                let logp = p.max(PROB_FLOOR).ln();
                let mut next = ids.clone();
                next.push(v);
                let next_total = total + logp;
                if v == 1 || next.len() == model.max_len() {
                    out.push((next, next_total));
                } else {
                    stack.push((next, next_total));
                }
            }
        }
        out
    }

    #[test]
    fn beam_width_one_equals_greedy() {
        for seed in 0..10 {
            let m = small_model(seed, 1.0);
            let beam = decode_beam(&m, X, 1);
            assert_eq!(beam.len(), 1);
            assert_eq!(beam[0], decode_greedy(&m, X));
        }
    }

    #[test]
    fn exhaustive_beam_finds_global_optimum() {
        for seed in 0..6 {
            let m = small_model(seed, 1.0);
            let all = enumerate_all(&m, X);
            let best = all
                .iter()
                .map(|(_, t)| *t)
                .fold(f64::NEG_INFINITY, f64::max);
            let width = all.len(); // exhaustive width
            let top = &decode_beam(&m, X, width)[0];
            assert!(
                (top.total_logp - best).abs() < 1e-9,
                "seed {seed}: beam {} vs brute {best}",
                top.total_logp
            );
        }
    }

    #[test]
    fn beam_output_sorted_by_total_logp() {
        let m = small_model(2, 1.0);
        let beam = decode_beam(&m, X, 5);
        for w in beam.windows(2) {
            assert!(w[0].total_logp >= w[1].total_logp - 1e-12);
        }
    }

    #[test]
    fn diverse_beam_zero_penalty_replicates_greedy() {
        let m = small_model(4, 1.0);
        let greedy = decode_greedy(&m, X);
        let cands = decode_diverse_beam(&m, X, 4, 0.0);
        assert_eq!(cands.len(), 4);
        for c in &cands {
            assert_eq!(c, &greedy);
        }
    }

    #[test]
    fn diverse_beam_single_group_is_greedy() {
        let m = small_model(6, 1.0);
        assert_eq!(decode_diverse_beam(&m, X, 1, 0.7)[0], decode_greedy(&m, X));
    }

    #[test]
    fn diverse_beam_penalty_forces_variety() {
        let m = small_model(8, 1.0);
        let cands = decode_diverse_beam(&m, X, 4, 0.5);
        let distinct: std::collections::HashSet<Vec<String>> =
            cands.iter().map(|c| c.tokens.clone()).collect();
        assert!(distinct.len() >= 2, "got {} distinct", distinct.len());
    }

    #[test]
    fn nucleus_tiny_p_is_greedy() {
        for seed in 0..6 {
            let m = small_model(seed, 1.0);
            let c = decode_nucleus(&m, X, 1e-9, RngSeed(seed * 31));
            assert_eq!(c, decode_greedy(&m, X));
        }
    }

    #[test]
    fn nucleus_same_seed_same_output() {
        let m = small_model(9, 0.4);
        let a = decode_nucleus(&m, X, 0.95, RngSeed(123));
        let b = decode_nucleus(&m, X, 0.95, RngSeed(123));
        assert_eq!(a, b);
    }

    #[test]
    fn nucleus_varies_across_seeds_on_flat_model() {
        let mut m = SeqModel::new(&body(&["a", "b", "c", "d"]), 64, 2, 6).unwrap();
        m.randomize(RngSeed(1), 0.05); // nearly uniform
        let outputs: std::collections::HashSet<Vec<String>> = (0..10)
            .map(|s| decode_nucleus(&m, X, 1.0, RngSeed(s)).tokens)
            .collect();
        assert!(
            outputs.len() >= 2,
            "only {} distinct outputs",
            outputs.len()
        );
    }

    #[test]
    fn uniform_model_nll_is_ln_vocab() {
        let m = SeqModel::new(&body(&["a", "b", "c"]), 64, 2, 8).unwrap();
        let pairs = vec![(
            vec!["x".to_owned()],
            vec!["a".to_owned(), "b".to_owned(), EOS.to_owned()],
        )];
        let (loss, _) = nll_loss_and_grad(&m, &pairs).unwrap();
        assert!((loss - (5f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn duplicated_pair_keeps_mean_loss() {
        let m = small_model(12, 0.6);
        let pair = (vec!["x".to_owned()], vec!["red".to_owned(), EOS.to_owned()]);
        let (l1, _) = nll_loss_and_grad(&m, std::slice::from_ref(&pair)).unwrap();
        let (l2, _) = nll_loss_and_grad(&m, &[pair.clone(), pair]).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
    }

    #[test]
    fn nll_gradient_matches_finite_differences() {
        let mut m = SeqModel::new(&body(&["a", "b", "c"]), 32, 2, 6).unwrap();
        m.randomize(RngSeed(17), 0.5);
        let pairs = vec![
            (
                vec!["q".to_owned()],
                vec!["a".to_owned(), "c".to_owned(), EOS.to_owned()],
            ),
            (
                vec!["r".to_owned(), "s".to_owned()],
                vec!["b".to_owned(), EOS.to_owned()],
            ),
        ];
        let (_, analytic) = nll_loss_and_grad(&m, &pairs).unwrap();
        let base = m.clone();
        let numeric = central_difference(m.weights(), 1e-5, |w| {
            let mut probe = base.clone();
            probe.set_weights(w.to_vec()).unwrap();
            nll_loss_and_grad(&probe, &pairs).unwrap().0
        });
        let err = max_rel_error(&analytic, &numeric);
        assert!(err < 1e-4, "rel err {err}");
    }

    #[test]
    fn missing_eos_rejected() {
        let m = small_model(1, 0.1);
        let pairs = vec![(vec!["x".to_owned()], vec!["red".to_owned()])];
        assert!(nll_loss_and_grad(&m, &pairs).is_err());
    }

    #[test]
    fn train_nll_reduces_loss() {
        let mut m = SeqModel::new(&body(&["up", "down"]), 256, 2, 6).unwrap();
        let pairs = vec![
            (vec!["go".to_owned()], vec!["up".to_owned(), EOS.to_owned()]),
            (
                vec!["fall".to_owned()],
                vec!["down".to_owned(), EOS.to_owned()],
            ),
        ];
        let trace = train_nll(&mut m, &pairs, &GenTrainConfig::default()).unwrap();
        assert!(trace.last().unwrap() < &trace[0]);
        let c = decode_greedy(&m, &["go".to_owned()]);
        assert_eq!(c.surface(), &["up".to_owned()]);
    }

    #[test]
    fn model_roundtrip() {
        let m = small_model(33, 0.9);
        let mut path = std::env::temp_dir();
        path.push(format!("dpm-sqm-test-{}.bin", std::process::id()));
        m.save(&path).unwrap();
        let loaded = SeqModel::load(&path).unwrap();
        assert_eq!(m, loaded);
        std::fs::remove_file(&path).ok();
    }
}
