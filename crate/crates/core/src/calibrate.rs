//! Contrastive calibration of the sequence model against preference scores.
//!
//! Three steps: decode K candidates per input with diverse beam search
//! (once, offline), rank them by preference score, then gradient-descend a
//! pairwise margin loss on length-normalized likelihoods plus a reference
//! NLL term. A REINFORCE arm with online nucleus decoding and a
//! moving-average baseline provides the throughput comparison.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;

use crate::dpm::Scorer;
use crate::error::{Error, Result};
use crate::metrics::spearman;
use crate::rng::{wall_clock_seconds, RngSeed};
use crate::seqgen::{decode_diverse_beam, decode_nucleus, Candidate, CandidateSet, SeqModel, EOS};

/// Hyperparameters for the calibration loop and the REINFORCE arm.
#[derive(Debug, Clone)]
pub struct CalibConfig {
    /// Candidate count K; the ranking loss needs at least 2.
    pub k: usize,
    /// Base margin λ; also weights the reference NLL term unless
    /// `nll_weight` overrides it.
    pub margin: f64,
    /// Length penalty α in |ỹ|^α.
    pub length_penalty: f64,
    pub lr: f64,
    pub steps: usize,
    pub seed: RngSeed,
    /// Hamming penalty for diverse beam candidate generation.
    pub diversity_penalty: f64,
    /// Separate weight for the reference NLL term; `None` reuses `margin`.
    pub nll_weight: Option<f64>,
    /// Nucleus mass for the REINFORCE arm's online sampling.
    pub nucleus_p: f64,
    /// Candidate count used when measuring pre/post metrics; `None`
    /// reuses `k`. Sweeps pin this so rows stay comparable.
    pub eval_k: Option<usize>,
}

impl Default for CalibConfig {
    fn default() -> Self {
        CalibConfig {
            k: 10,
            margin: 0.001,
            length_penalty: 1.0,
            lr: 0.05,
            steps: 300,
            seed: RngSeed(0),
            diversity_penalty: 0.5,
            nll_weight: None,
            nucleus_p: 0.9,
            eval_k: None,
        }
    }
}

impl CalibConfig {
    pub fn nll_weight(&self) -> f64 {
        self.nll_weight.unwrap_or(self.margin)
    }
}

/// Candidate-set quality metrics, averaged over an input list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibMetrics {
    /// Preference score of the top candidate by length-normalized likelihood.
    pub mean_top1_pref: f64,
    /// Spearman correlation between likelihood and preference rankings.
    pub mean_spearman: f64,
    /// Max − min preference score within a candidate set.
    pub mean_spread: f64,
}

/// Outcome of a calibration or REINFORCE run.
#[derive(Debug, Clone)]
pub struct CalibReport {
    pub loss_trace: Vec<f64>,
    /// Training sequences processed per wall-clock second: candidates plus
    /// the reference per pair-step for calibration, one sampled rollout per
    /// input-step for REINFORCE.
    pub samples_per_second: f64,
    pub pre: CalibMetrics,
    pub post: CalibMetrics,
    /// Mean sampled reward per step; only the REINFORCE arm fills this.
    pub reward_trace: Vec<f64>,
}

impl CalibReport {
    /// CSV: `step,loss` rows followed by a `metric,value` summary block.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "step,loss")?;
        for (step, loss) in self.loss_trace.iter().enumerate() {
            writeln!(w, "{step},{loss}")?;
        }
        writeln!(w, "metric,value")?;
        writeln!(w, "samples_per_second,{}", self.samples_per_second)?;
        writeln!(w, "pre_mean_top1_pref,{}", self.pre.mean_top1_pref)?;
        writeln!(w, "pre_mean_spearman,{}", self.pre.mean_spearman)?;
        writeln!(w, "pre_mean_spread,{}", self.pre.mean_spread)?;
        writeln!(w, "post_mean_top1_pref,{}", self.post.mean_top1_pref)?;
        writeln!(w, "post_mean_spearman,{}", self.post.mean_spearman)?;
        writeln!(w, "post_mean_spread,{}", self.post.mean_spread)?;
        w.flush()?;
        Ok(())
    }
}

/// Decode one candidate set per input with diverse beam search.
pub fn generate_candidates(
    model: &SeqModel,
    inputs: &[Vec<String>],
    k: usize,
    diversity_penalty: f64,
) -> Vec<CandidateSet> {
    inputs
        .iter()
        .map(|x| CandidateSet {
            input: x.clone(),
            candidates: decode_diverse_beam(model, x, k, diversity_penalty),
        })
        .collect()
}

/// Fill preference scores and sort each set descending, stable by
/// original decode index.
pub fn rank_by_preference(scorer: &Scorer, mut sets: Vec<CandidateSet>) -> Vec<CandidateSet> {
    for set in &mut sets {
        for cand in &mut set.candidates {
            cand.pref_score = Some(scorer.preference_score(&set.input, cand.surface()));
        }
        let mut order: Vec<usize> = (0..set.candidates.len()).collect();
        order.sort_by(|&a, &b| {
            let sa = set.candidates[a].pref_score.unwrap();
            let sb = set.candidates[b].pref_score.unwrap();
            sb.partial_cmp(&sa).unwrap().then(a.cmp(&b))
        });
        let mut reordered = Vec::with_capacity(order.len());
        for idx in order {
            reordered.push(set.candidates[idx].clone());
        }
        set.candidates = reordered;
    }
    sets
}

/// Length-normalized log-probability P(ỹ) = (Σ_t ln G(ỹ_t|x, ỹ_<t)) / |ỹ|^α,
/// recomputed under the given model.
pub fn length_normalized_logp(
    model: &SeqModel,
    x: &[String],
    candidate: &Candidate,
    alpha: f64,
) -> Result<f64> {
    let logps = model.score_sequence(x, candidate.generated())?;
    let len = logps.len() as f64;
    Ok(logps.iter().sum::<f64>() / len.powf(alpha))
}

/// Pairwise margin loss over already-ranked scores:
/// Σ_i Σ_{j>i} max(0, p_j − p_i + margin·(j−i)).
pub fn pairwise_margin_loss(ps: &[f64], margin: f64) -> f64 {
    let mut loss = 0.0;
    for i in 0..ps.len() {
        for j in (i + 1)..ps.len() {
            loss += (ps[j] - ps[i] + margin * (j - i) as f64).max(0.0);
        }
    }
    loss
}

/// Hinge coefficients: how many violated pairs push each candidate's
/// likelihood down (+1 per pair as the lower-ranked member) or up (−1 as
/// the higher-ranked member). Subgradient at exactly zero is zero.
fn hinge_coefficients(ps: &[f64], margin: f64) -> Vec<f64> {
    let mut coeff = vec![0.0; ps.len()];
    for i in 0..ps.len() {
        for j in (i + 1)..ps.len() {
            if ps[j] - ps[i] + margin * (j - i) as f64 > 0.0 {
                coeff[j] += 1.0;
                coeff[i] -= 1.0;
            }
        }
    }
    coeff
}

/// Margin ranking loss of a ranked candidate set under the current model.
pub fn ranking_loss(model: &SeqModel, set: &CandidateSet, margin: f64, alpha: f64) -> Result<f64> {
    let ps = set
        .candidates
        .iter()
        .map(|c| length_normalized_logp(model, &set.input, c, alpha))
        .collect::<Result<Vec<f64>>>()?;
    Ok(pairwise_margin_loss(&ps, margin))
}

/// Full calibration loss for one ranked set and its reference sequence,
/// with the exact gradient added into `grad`.
fn calibration_loss_into(
    model: &SeqModel,
    set: &CandidateSet,
    reference: &[String],
    config: &CalibConfig,
    grad: &mut [f64],
) -> Result<f64> {
    if reference.last().map(String::as_str) != Some(EOS) {
        return Err(Error::InvalidDist(
            "reference sequence must be terminated by <eos>".into(),
        ));
    }
    let x = &set.input;
    let mut ps = Vec::with_capacity(set.candidates.len());
    let mut id_seqs = Vec::with_capacity(set.candidates.len());
    for cand in &set.candidates {
        let ids = model.ids_of(cand.generated())?;
        let logps = model.score_sequence(x, cand.generated())?;
        let len = logps.len() as f64;
        ps.push(logps.iter().sum::<f64>() / len.powf(config.length_penalty));
        id_seqs.push(ids);
    }
    let mut loss = pairwise_margin_loss(&ps, config.margin);
    for (coeff, ids) in hinge_coefficients(&ps, config.margin).iter().zip(&id_seqs) {
        if *coeff != 0.0 {
            let len = ids.len() as f64;
            model.accumulate_sequence_grad(x, ids, coeff / len.powf(config.length_penalty), grad);
        }
    }
    // reference NLL term: −w·(1/|y|)·Σ ln G(y_t|x, y_<t)
    let w = config.nll_weight();
    let y_ids = model.ids_of(reference)?;
    let y_len = y_ids.len() as f64;
    let total = model.accumulate_sequence_grad(x, &y_ids, -w / y_len, grad);
    loss += -w * total / y_len;
    Ok(loss)
}

/// Loss and gradient of the calibration objective for one ranked set.
pub fn calibration_loss_and_grad(
    model: &SeqModel,
    set: &CandidateSet,
    reference: &[String],
    config: &CalibConfig,
) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; model.weights().len()];
    let loss = calibration_loss_into(model, set, reference, config, &mut grad)?;
    Ok((loss, grad))
}

/// Candidate-set metrics for the current model on an input list: sets are
/// decoded fresh with diverse beam search, scored by the scorer, and
/// compared against the model's length-normalized likelihoods.
pub fn eval_metrics(
    model: &SeqModel,
    scorer: &Scorer,
    inputs: &[Vec<String>],
    config: &CalibConfig,
) -> Result<CalibMetrics> {
    if inputs.is_empty() {
        return Err(Error::EmptyInput("eval_metrics needs inputs"));
    }
    let eval_k = config.eval_k.unwrap_or(config.k);
    let mut top1 = 0.0;
    let mut rho = 0.0;
    let mut spread = 0.0;
    for x in inputs {
        let cands = decode_diverse_beam(model, x, eval_k, config.diversity_penalty);
        let prefs: Vec<f64> = cands
            .iter()
            .map(|c| scorer.preference_score(x, c.surface()))
            .collect();
        let ps = cands
            .iter()
            .map(|c| length_normalized_logp(model, x, c, config.length_penalty))
            .collect::<Result<Vec<f64>>>()?;
        let best = (0..ps.len())
            .max_by(|&a, &b| ps[a].partial_cmp(&ps[b]).unwrap().then(b.cmp(&a)))
            .unwrap();
        top1 += prefs[best];
        rho += spearman(&ps, &prefs);
        let max = prefs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = prefs.iter().cloned().fold(f64::INFINITY, f64::min);
        spread += max - min;
    }
    let n = inputs.len() as f64;
    Ok(CalibMetrics {
        mean_top1_pref: top1 / n,
        mean_spearman: rho / n,
        mean_spread: spread / n,
    })
}

/// One-time offline calibration: candidates are generated once from the
/// input model and ranked once; `steps` gradient updates then minimize the
/// summed calibration loss with likelihoods recomputed each step.
pub fn calibrate(
    model: &SeqModel,
    scorer: &Scorer,
    train_pairs: &[(Vec<String>, Vec<String>)],
    eval_inputs: &[Vec<String>],
    config: &CalibConfig,
) -> Result<(SeqModel, CalibReport)> {
    if train_pairs.is_empty() {
        return Err(Error::EmptyInput("calibrate needs training pairs"));
    }
    assert!(config.k >= 2, "ranking needs at least 2 candidates");
    let inputs: Vec<Vec<String>> = train_pairs.iter().map(|(x, _)| x.clone()).collect();
    let sets = generate_candidates(model, &inputs, config.k, config.diversity_penalty);
    let ranked = rank_by_preference(scorer, sets);
    let pre = eval_metrics(model, scorer, eval_inputs, config)?;

    let mut current = model.clone();
    let mut loss_trace = Vec::with_capacity(config.steps);
    let start = wall_clock_seconds();
    for step in 0..config.steps {
        let mut grad = vec![0.0; current.weights().len()];
        let mut loss = 0.0;
        for (set, (_, y)) in ranked.iter().zip(train_pairs) {
            loss += calibration_loss_into(&current, set, y, config, &mut grad)?;
        }
        if !loss.is_finite() {
            return Err(Error::DivergedStep(step));
        }
        loss_trace.push(loss);
        let mut weights = current.weights().to_vec();
        for (w, g) in weights.iter_mut().zip(&grad) {
            *w -= config.lr * g;
        }
        current.set_weights(weights)?;
    }
    let elapsed = (wall_clock_seconds() - start).max(1e-9);
    let sequences_per_step: usize = ranked.iter().map(|s| s.candidates.len() + 1).sum();
    let samples_per_second = (config.steps * sequences_per_step) as f64 / elapsed;

    let post = eval_metrics(&current, scorer, eval_inputs, config)?;
    Ok((
        current,
        CalibReport {
            loss_trace,
            samples_per_second,
            pre,
            post,
            reward_trace: Vec::new(),
        },
    ))
}

/// REINFORCE with a moving-average baseline: each step samples one
/// candidate per input online via nucleus decoding, rewards it with the
/// preference score, and weights the sampled sequence's NLL gradient by
/// the centered reward.
pub fn reinforce_baseline(
    model: &SeqModel,
    scorer: &Scorer,
    inputs: &[Vec<String>],
    eval_inputs: &[Vec<String>],
    config: &CalibConfig,
) -> Result<(SeqModel, CalibReport)> {
    if inputs.is_empty() {
        return Err(Error::EmptyInput("reinforce needs inputs"));
    }
    let pre = eval_metrics(model, scorer, eval_inputs, config)?;
    let mut current = model.clone();
    let mut rng = config.seed.rng();
    // moving-average baseline, initialized at the uniform-scorer reward
    let mut baseline = 1.0 / scorer.class_count() as f64;
    let n = inputs.len() as f64;
    let mut loss_trace = Vec::with_capacity(config.steps);
    let mut reward_trace = Vec::with_capacity(config.steps);

    let start = wall_clock_seconds();
    for step in 0..config.steps {
        let mut grad = vec![0.0; current.weights().len()];
        let mut loss = 0.0;
        let mut reward_sum = 0.0;
        for x in inputs {
            let cand = decode_nucleus(&current, x, config.nucleus_p, RngSeed(rng.gen()));
            let reward = scorer.preference_score(x, cand.surface());
            reward_sum += reward;
            let advantage = reward - baseline;
            let ids = current.ids_of(cand.generated())?;
            let len = ids.len() as f64;
            // surrogate: advantage × mean-token NLL, averaged over inputs
            let total =
                current.accumulate_sequence_grad(x, &ids, -advantage / (len * n), &mut grad);
            loss += -advantage * total / (len * n);
        }
        if !loss.is_finite() {
            return Err(Error::DivergedStep(step));
        }
        loss_trace.push(loss);
        let mean_reward = reward_sum / n;
        reward_trace.push(mean_reward);
        let mut weights = current.weights().to_vec();
        for (w, g) in weights.iter_mut().zip(&grad) {
            *w -= config.lr * g;
        }
        current.set_weights(weights)?;
        baseline = 0.9 * baseline + 0.1 * mean_reward;
    }
    let elapsed = (wall_clock_seconds() - start).max(1e-9);
    let samples_per_second = (config.steps * inputs.len()) as f64 / elapsed;

    let post = eval_metrics(&current, scorer, eval_inputs, config)?;
    Ok((
        current,
        CalibReport {
            loss_trace,
            samples_per_second,
            pre,
            post,
            reward_trace,
        },
    ))
}
