//! Disagreement-aware preference modeling.
//!
//! The trainer alternates between (1) snapshotting the scorer's posteriors
//! q_i over all items, (2) turning the snapshot into a column-normalized
//! item-given-class matrix and per-item posterior targets r_i, and (3) a few
//! full-batch gradient steps pulling each q_i toward its fixed r_i under a
//! KL objective. Three comparison trainers (majority-vote cross-entropy,
//! soft-label MSE, and no-aggregation cross-entropy) share the same scorer
//! family so the only difference is how annotations become targets.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::features::{featurize, FeatureVector};
use crate::prob::{softmax, PrefDist, PROB_FLOOR};
use crate::rng::RngSeed;

/// Linear softmax classifier over hashed (context, text) features.
#[derive(Debug, Clone, PartialEq)]
pub struct Scorer {
    weights: Vec<f64>, // class_count × dim, row-major
    class_count: usize,
    dim: usize,
}

impl Scorer {
    /// All-zero weights: every input scores uniform.
    pub fn zeros(class_count: usize, dim: usize) -> Self {
        assert!(class_count >= 2, "need at least 2 classes");
        assert!(dim >= 2, "feature dim must be >= 2");
        Scorer {
            weights: vec![0.0; class_count * dim],
            class_count,
            dim,
        }
    }

    pub fn from_weights(weights: Vec<f64>, class_count: usize, dim: usize) -> Result<Self> {
        if weights.len() != class_count * dim {
            return Err(Error::DimMismatch {
                expected: class_count * dim,
                got: weights.len(),
            });
        }
        Ok(Scorer {
            weights,
            class_count,
            dim,
        })
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn row(&self, k: usize) -> &[f64] {
        &self.weights[k * self.dim..(k + 1) * self.dim]
    }

    fn logits(&self, features: &FeatureVector) -> Vec<f64> {
        (0..self.class_count)
            .map(|k| features.dot(self.row(k)))
            .collect()
    }

    /// Posterior q(ρ|s,c) for a (context, text) pair.
    pub fn score<C: AsRef<str>, T: AsRef<str>>(&self, context: &[C], text: &[T]) -> PrefDist {
        let features = featurize(context, text, self.dim);
        // softmax output is always a valid distribution
        PrefDist::new(softmax(&self.logits(&features))).expect("softmax is a distribution")
    }

    /// Like [`score`](Self::score) but on a precomputed feature vector.
    pub fn score_features(&self, features: &FeatureVector) -> Result<PrefDist> {
        if features.dim != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                got: features.dim,
            });
        }
        Ok(PrefDist::new(softmax(&self.logits(features))).expect("softmax is a distribution"))
    }

    /// The preference score: probability of the acceptable class.
    pub fn preference_score<C: AsRef<str>, T: AsRef<str>>(&self, context: &[C], text: &[T]) -> f64 {
        self.score(context, text).acceptable()
    }

    /// Binary serialization: magic `DPM1`, little-endian u32 class count and
    /// dim, then class_count·dim little-endian f64 weights, row-major.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(b"DPM1")?;
        w.write_all(&(self.class_count as u32).to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        for v in &self.weights {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < 12 || &bytes[0..4] != b"DPM1" {
            return Err(Error::BadModelFile("missing DPM1 magic".into()));
        }
        let class_count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let expected = 12 + class_count * dim * 8;
        if bytes.len() != expected {
            return Err(Error::BadModelFile(format!(
                "expected {expected} bytes, got {}",
                bytes.len()
            )));
        }
        let weights = bytes[12..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Scorer::from_weights(weights, class_count, dim)
    }
}

/// The reduced generative model: `a[i][ρ] = p(s_i|c_i,ρ)`, column-normalized
/// over items.
#[derive(Debug, Clone)]
pub struct AMatrix {
    a: Vec<f64>, // n × class_count, row-major
    n: usize,
    class_count: usize,
}

impl AMatrix {
    pub fn get(&self, item: usize, class: usize) -> f64 {
        self.a[item * self.class_count + class]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    /// Row i as a slice.
    pub fn row(&self, item: usize) -> &[f64] {
        &self.a[item * self.class_count..(item + 1) * self.class_count]
    }
}

/// Per-item posterior targets r_i with their normalizers α_i.
#[derive(Debug, Clone)]
pub struct PosteriorTargets {
    pub r: Vec<PrefDist>,
    pub alphas: Vec<f64>,
}

/// Trace of the surrogate objective Σ_i KL(q_i ‖ r_i) per epoch.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub objective_trace: Vec<f64>,
    pub epochs_run: usize,
    pub converged: bool,
}

impl TrainReport {
    /// CSV with header `epoch,objective`.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "epoch,objective")?;
        for (epoch, obj) in self.objective_trace.iter().enumerate() {
            writeln!(w, "{epoch},{obj}")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Hyperparameters shared by all preference trainers.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lr: f64,
    pub inner_steps: usize,
    pub max_epochs: usize,
    pub tol: f64,
    pub dim: usize,
    pub seed: RngSeed,
    /// Prior smoothing ε; 0 keeps raw annotation histograms.
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.1,
            inner_steps: 5,
            max_epochs: 200,
            tol: 1e-7,
            dim: crate::features::DEFAULT_SCORER_DIM,
            seed: RngSeed(0),
            epsilon: 0.0,
        }
    }
}

/// Optimal item-given-class matrix for a snapshot of posteriors:
/// `a[i][ρ] = q_i(ρ) / Σ_j q_j(ρ)`. Each column sums to 1.
pub fn compute_a(q_all: &[PrefDist]) -> Result<AMatrix> {
    if q_all.is_empty() {
        return Err(Error::EmptyInput("compute_a needs at least one posterior"));
    }
    let class_count = q_all[0].class_count();
    let mut col_sums = vec![0.0; class_count];
    for q in q_all {
        if q.class_count() != class_count {
            return Err(Error::DimMismatch {
                expected: class_count,
                got: q.class_count(),
            });
        }
        for (k, &v) in q.probs().iter().enumerate() {
            col_sums[k] += v.max(PROB_FLOOR);
        }
    }
    let mut a = Vec::with_capacity(q_all.len() * class_count);
    for q in q_all {
        for (k, &v) in q.probs().iter().enumerate() {
            a.push(v.max(PROB_FLOOR) / col_sums[k]);
        }
    }
    Ok(AMatrix {
        a,
        n: q_all.len(),
        class_count,
    })
}

/// Posterior targets `r_i ∝ p_i(ρ) · a[i][ρ]`.
///
/// The raw (pre-clamp) prior is used so classes with exactly zero prior
/// mass stay at exactly zero in the target.
pub fn compute_r(priors: &[PrefDist], q_all: &[PrefDist]) -> Result<PosteriorTargets> {
    if priors.len() != q_all.len() {
        return Err(Error::DimMismatch {
            expected: priors.len(),
            got: q_all.len(),
        });
    }
    let a = compute_a(q_all)?;
    let mut r = Vec::with_capacity(priors.len());
    let mut alphas = Vec::with_capacity(priors.len());
    for (i, prior) in priors.iter().enumerate() {
        let u: Vec<f64> = prior
            .probs()
            .iter()
            .enumerate()
            .map(|(k, &p)| p * a.get(i, k))
            .collect();
        let mass: f64 = u.iter().sum();
        if mass <= 0.0 || !mass.is_finite() {
            return Err(Error::DegeneratePosterior(format!("index {i}")));
        }
        alphas.push(1.0 / mass);
        r.push(PrefDist::new(u.iter().map(|&v| v / mass).collect())?);
    }
    Ok(PosteriorTargets { r, alphas })
}

fn features_of(dataset: &Dataset, dim: usize) -> Vec<FeatureVector> {
    dataset
        .items
        .iter()
        .map(|item| featurize(&item.context, &item.text, dim))
        .collect()
}

/// Σ_i KL(q_i ‖ r_i) and its exact gradient w.r.t. the scorer weights,
/// holding the targets fixed.
pub fn dpm_loss_and_grad(
    scorer: &Scorer,
    dataset: &Dataset,
    targets: &PosteriorTargets,
) -> Result<(f64, Vec<f64>)> {
    let feats = features_of(dataset, scorer.dim());
    dpm_loss_and_grad_cached(scorer, &feats, targets)
}

fn dpm_loss_and_grad_cached(
    scorer: &Scorer,
    feats: &[FeatureVector],
    targets: &PosteriorTargets,
) -> Result<(f64, Vec<f64>)> {
    if feats.len() != targets.r.len() {
        return Err(Error::DimMismatch {
            expected: targets.r.len(),
            got: feats.len(),
        });
    }
    let c = scorer.class_count();
    let mut loss = 0.0;
    let mut grad = vec![0.0; scorer.weights.len()];
    for (features, r) in feats.iter().zip(&targets.r) {
        let q = scorer.score_features(features)?;
        let kl = crate::prob::kl_divergence(&q, r)?;
        loss += kl;
        // ∂KL/∂z_m = q_m · (ln(q_m/r_m) − KL)
        for m in 0..c {
            let qm = q.probs()[m];
            let rm = r.probs()[m].max(PROB_FLOOR);
            let gz = qm * ((qm.max(PROB_FLOOR) / rm).ln() - kl);
            let row = &mut grad[m * scorer.dim..(m + 1) * scorer.dim];
            for (&j, &v) in features.indices.iter().zip(&features.values) {
                row[j] += gz * v;
            }
        }
    }
    Ok((loss, grad))
}

fn apply_grad(scorer: &mut Scorer, grad: &[f64], lr: f64) {
    for (w, g) in scorer.weights.iter_mut().zip(grad) {
        *w -= lr * g;
    }
}

/// Train a scorer by the alternating variational scheme from the standard
/// all-zero (uniform) start.
///
/// Each epoch snapshots q over the full dataset, rebuilds the targets from
/// the snapshot, then runs `inner_steps` full-batch gradient steps with the
/// targets held fixed. Stops when the epoch-start objective changes by less
/// than `tol`, or at `max_epochs`.
pub fn train_dpm(dataset: &Dataset, config: &TrainConfig) -> Result<(Scorer, TrainReport)> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("train_dpm needs a non-empty dataset"));
    }
    train_dpm_from(
        Scorer::zeros(dataset.class_count, config.dim),
        dataset,
        config,
    )
}

/// [`train_dpm`] from an explicit initial scorer (warm starts, debugging).
pub fn train_dpm_from(
    initial: Scorer,
    dataset: &Dataset,
    config: &TrainConfig,
) -> Result<(Scorer, TrainReport)> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("train_dpm needs a non-empty dataset"));
    }
    assert!(config.lr > 0.0, "lr must be positive");
    let feats = features_of(dataset, initial.dim());
    let priors: Vec<PrefDist> = dataset.items.iter().map(|it| it.prior.clone()).collect();
    let mut scorer = initial;
    let mut trace = Vec::new();
    let mut converged = false;

    for epoch in 0..config.max_epochs {
        let q_all: Vec<PrefDist> = feats
            .iter()
            .map(|f| scorer.score_features(f))
            .collect::<Result<_>>()?;
        let targets = compute_r(&priors, &q_all).map_err(|e| match e {
            Error::DegeneratePosterior(idx) => {
                let id = idx
                    .strip_prefix("index ")
                    .and_then(|s| s.parse::<usize>().ok())
                    .map(|i| dataset.items[i].id.clone())
                    .unwrap_or(idx);
                Error::DegeneratePosterior(id)
            }
            other => other,
        })?;
        let (objective, _) = dpm_loss_and_grad_cached(&scorer, &feats, &targets)?;
        if !objective.is_finite() {
            return Err(Error::Diverged(epoch));
        }
        let prev = trace.last().copied();
        trace.push(objective);
        if let Some(prev) = prev {
            if (prev - objective).abs() < config.tol {
                converged = true;
                break;
            }
        }
        let step_lr = config.lr / dataset.len() as f64;
        for _ in 0..config.inner_steps {
            let (loss, grad) = dpm_loss_and_grad_cached(&scorer, &feats, &targets)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(epoch));
            }
            apply_grad(&mut scorer, &grad, step_lr);
        }
    }

    let epochs_run = trace.len();
    Ok((
        scorer,
        TrainReport {
            objective_trace: trace,
            epochs_run,
            converged,
        },
    ))
}

/// Majority label per item, ties broken toward the lower class index.
pub fn majority_label(annotations: &[usize], class_count: usize) -> usize {
    let mut counts = vec![0usize; class_count];
    for &a in annotations {
        counts[a] += 1;
    }
    let mut best = 0;
    for (k, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = k;
        }
    }
    best
}

/// Mean cross-entropy `−(1/N)Σ ln q_i[t_i]` and its gradient.
pub fn cross_entropy_loss_and_grad(
    scorer: &Scorer,
    feats: &[FeatureVector],
    targets: &[usize],
) -> Result<(f64, Vec<f64>)> {
    if feats.is_empty() {
        return Err(Error::EmptyInput("cross entropy needs instances"));
    }
    let n = feats.len() as f64;
    let c = scorer.class_count();
    let mut loss = 0.0;
    let mut grad = vec![0.0; scorer.weights.len()];
    for (features, &target) in feats.iter().zip(targets) {
        let q = scorer.score_features(features)?;
        loss -= q.probs()[target].max(PROB_FLOOR).ln() / n;
        for m in 0..c {
            let gz = (q.probs()[m] - if m == target { 1.0 } else { 0.0 }) / n;
            let row = &mut grad[m * scorer.dim..(m + 1) * scorer.dim];
            for (&j, &v) in features.indices.iter().zip(&features.values) {
                row[j] += gz * v;
            }
        }
    }
    Ok((loss, grad))
}

/// Mean squared error (1/N)Σ ‖q_i − l_i‖² and its gradient.
pub fn mse_loss_and_grad(
    scorer: &Scorer,
    feats: &[FeatureVector],
    labels: &[PrefDist],
) -> Result<(f64, Vec<f64>)> {
    if feats.is_empty() {
        return Err(Error::EmptyInput("mse needs instances"));
    }
    let n = feats.len() as f64;
    let c = scorer.class_count();
    let mut loss = 0.0;
    let mut grad = vec![0.0; scorer.weights.len()];
    for (features, label) in feats.iter().zip(labels) {
        let q = scorer.score_features(features)?;
        let diff: Vec<f64> = q
            .probs()
            .iter()
            .zip(label.probs())
            .map(|(&a, &b)| a - b)
            .collect();
        loss += diff.iter().map(|d| d * d).sum::<f64>() / n;
        // ∂‖q−l‖²/∂z_m = 2 q_m (diff_m − Σ_k diff_k q_k)
        let dot: f64 = diff.iter().zip(q.probs()).map(|(&d, &qk)| d * qk).sum();
        for m in 0..c {
            let gz = 2.0 * q.probs()[m] * (diff[m] - dot) / n;
            let row = &mut grad[m * scorer.dim..(m + 1) * scorer.dim];
            for (&j, &v) in features.indices.iter().zip(&features.values) {
                row[j] += gz * v;
            }
        }
    }
    Ok((loss, grad))
}

fn descend<F>(scorer: &mut Scorer, config: &TrainConfig, mut step: F) -> Result<TrainReport>
where
    F: FnMut(&Scorer) -> Result<(f64, Vec<f64>)>,
{
    let total_steps = config.max_epochs * config.inner_steps.max(1);
    let mut trace = Vec::new();
    let mut converged = false;
    for s in 0..total_steps {
        let (loss, grad) = step(scorer)?;
        if !loss.is_finite() {
            return Err(Error::DivergedStep(s));
        }
        let prev = trace.last().copied();
        trace.push(loss);
        if let Some(prev) = prev {
            if (prev - loss).abs() < config.tol {
                converged = true;
                break;
            }
        }
        apply_grad(scorer, &grad, config.lr);
    }
    let epochs_run = trace.len();
    Ok(TrainReport {
        objective_trace: trace,
        epochs_run,
        converged,
    })
}

/// Cross-entropy training against per-item majority labels.
pub fn train_majority(dataset: &Dataset, config: &TrainConfig) -> Result<(Scorer, TrainReport)> {
    let annotations = dataset.require_annotations()?;
    let targets: Vec<usize> = annotations
        .iter()
        .map(|ann| majority_label(ann, dataset.class_count))
        .collect();
    let feats = features_of(dataset, config.dim);
    let mut scorer = Scorer::zeros(dataset.class_count, config.dim);
    let report = descend(&mut scorer, config, |s| {
        cross_entropy_loss_and_grad(s, &feats, &targets)
    })?;
    Ok((scorer, report))
}

/// MSE training against the soft labels (the priors).
pub fn train_soft(dataset: &Dataset, config: &TrainConfig) -> Result<(Scorer, TrainReport)> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("train_soft needs a non-empty dataset"));
    }
    let labels: Vec<PrefDist> = dataset.items.iter().map(|it| it.prior.clone()).collect();
    let feats = features_of(dataset, config.dim);
    let mut scorer = Scorer::zeros(dataset.class_count, config.dim);
    let report = descend(&mut scorer, config, |s| {
        mse_loss_and_grad(s, &feats, &labels)
    })?;
    Ok((scorer, report))
}

/// Cross-entropy training over one expanded instance per annotation.
pub fn train_wo_agg(dataset: &Dataset, config: &TrainConfig) -> Result<(Scorer, TrainReport)> {
    let annotations = dataset.require_annotations()?;
    let mut feats = Vec::new();
    let mut targets = Vec::new();
    for (item, ann) in dataset.items.iter().zip(&annotations) {
        let f = featurize(&item.context, &item.text, config.dim);
        for &a in *ann {
            feats.push(f.clone());
            targets.push(a);
        }
    }
    let mut scorer = Scorer::zeros(dataset.class_count, config.dim);
    let report = descend(&mut scorer, config, |s| {
        cross_entropy_loss_and_grad(s, &feats, &targets)
    })?;
    Ok((scorer, report))
}

/// Number of expanded training instances `train_wo_agg` would use.
pub fn wo_agg_instance_count(dataset: &Dataset) -> Result<usize> {
    Ok(dataset.require_annotations()?.iter().map(|a| a.len()).sum())
}
