//! Reusable synthetic-benchmark pipelines: aggregation-quality comparison
//! across preference trainers, and the generator calibration benchmark
//! (simulate → train scorer → pretrain generator → calibrate).

use crate::calibrate::{calibrate, reinforce_baseline, CalibConfig, CalibReport};
use crate::data::Dataset;
use crate::dpm::{train_dpm, train_majority, train_soft, train_wo_agg, Scorer, TrainConfig};
use crate::error::Result;
use crate::ingest::{simulate_annotators, SyntheticTruth, DEFAULT_SIM_VOCAB};
use crate::prob::kl_divergence;
use crate::rng::RngSeed;
use crate::seqgen::{train_nll, GenTrainConfig, SeqModel, EOS};

/// Mean KL(ρ* ‖ q̂) and argmax accuracy of a scorer against ground truth.
pub fn truth_fit(scorer: &Scorer, dataset: &Dataset, truth: &SyntheticTruth) -> Result<(f64, f64)> {
    let mut kl_sum = 0.0;
    let mut hits = 0usize;
    for item in &dataset.items {
        let rho = truth
            .rho_star
            .get(&item.id)
            .ok_or_else(|| crate::error::Error::MissingTruthIds(item.id.clone()))?;
        let q = scorer.score(&item.context, &item.text);
        kl_sum += kl_divergence(rho, &q)?;
        if q.argmax() == rho.argmax() {
            hits += 1;
        }
    }
    let n = dataset.len() as f64;
    Ok((kl_sum / n, hits as f64 / n))
}

/// Per-method outcome of one aggregation run.
#[derive(Debug, Clone, Copy)]
pub struct MethodFit {
    pub mean_kl: f64,
    pub accuracy: f64,
}

/// Aggregation-quality comparison on one simulated dataset.
#[derive(Debug, Clone, Copy)]
pub struct AggregationOutcome {
    pub dpm: MethodFit,
    pub soft: MethodFit,
    pub major: MethodFit,
    pub wo_agg: MethodFit,
}

/// Benchmark regime for the aggregation comparison.
///
/// All four trainers see the same conservatively smoothed priors: with
/// only a few annotators a raw histogram overstates certainty (3/3 votes
/// is weak evidence for ρ ≈ 1), so the benchmark smooths hard and lets
/// each aggregation method argue the sharpness back.
#[derive(Debug, Clone)]
pub struct AggregationConfig {
    pub n_items: usize,
    pub n_annotators: usize,
    pub dim: usize,
    /// Prior smoothing ε applied to every trainer's view of the data.
    pub smoothing: f64,
    pub train: TrainConfig,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        AggregationConfig {
            n_items: 200,
            n_annotators: 3,
            dim: 1024,
            smoothing: 3.0,
            train: TrainConfig {
                dim: 1024,
                max_epochs: 120,
                ..TrainConfig::default()
            },
        }
    }
}

/// Simulate a dataset and train all four preference models against it,
/// measuring each one's recovery of the planted ρ*.
pub fn aggregation_run(seed: RngSeed, config: &AggregationConfig) -> Result<AggregationOutcome> {
    let vocab: Vec<String> = DEFAULT_SIM_VOCAB.iter().map(|s| s.to_string()).collect();
    let (raw, truth, _) = simulate_annotators(
        config.n_items,
        config.n_annotators,
        &vocab,
        config.dim,
        seed,
    )?;
    let dataset = raw.with_smoothing(config.smoothing)?;
    let train = TrainConfig {
        dim: config.dim,
        seed,
        ..config.train.clone()
    };
    let fit = |scorer: &Scorer| -> Result<MethodFit> {
        let (mean_kl, accuracy) = truth_fit(scorer, &dataset, &truth)?;
        Ok(MethodFit { mean_kl, accuracy })
    };
    let (dpm_scorer, _) = train_dpm(&dataset, &train)?;
    let (soft_scorer, _) = train_soft(&dataset, &train)?;
    let (major_scorer, _) = train_majority(&dataset, &train)?;
    let (wo_agg_scorer, _) = train_wo_agg(&dataset, &train)?;
    Ok(AggregationOutcome {
        dpm: fit(&dpm_scorer)?,
        soft: fit(&soft_scorer)?,
        major: fit(&major_scorer)?,
        wo_agg: fit(&wo_agg_scorer)?,
    })
}

/// Sizes and training knobs for the calibration benchmark.
#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub n_items: usize,
    pub n_annotators: usize,
    pub scorer_dim: usize,
    pub gen_dim: usize,
    pub ngram_order: usize,
    pub max_len: usize,
    pub n_train_pairs: usize,
    pub n_eval_inputs: usize,
    pub gen_train: GenTrainConfig,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            n_items: 120,
            n_annotators: 3,
            scorer_dim: 512,
            gen_dim: 1024,
            ngram_order: 2,
            max_len: 8,
            n_train_pairs: 40,
            n_eval_inputs: 20,
            gen_train: GenTrainConfig {
                lr: 1.0,
                steps: 120,
                tol: 1e-9,
            },
        }
    }
}

/// Everything the calibration experiments need: a pretrained generator,
/// a trained d-PM scorer, training pairs, and held-out inputs.
#[derive(Debug, Clone)]
pub struct CalibrationBench {
    pub model: SeqModel,
    pub scorer: Scorer,
    pub train_pairs: Vec<(Vec<String>, Vec<String>)>,
    pub eval_inputs: Vec<Vec<String>>,
}

/// Build the benchmark from one seed: simulate annotated items, fit the
/// d-PM scorer, and fine-tune the toy generator on (context, text) pairs.
pub fn build_calibration_bench(seed: RngSeed, opts: &BenchOptions) -> Result<CalibrationBench> {
    let vocab: Vec<String> = DEFAULT_SIM_VOCAB.iter().map(|s| s.to_string()).collect();
    let needed = opts.n_train_pairs + opts.n_eval_inputs;
    assert!(
        opts.n_items >= needed,
        "need at least {needed} items for pairs + eval inputs"
    );
    let (dataset, _, _) = simulate_annotators(
        opts.n_items,
        opts.n_annotators,
        &vocab,
        opts.scorer_dim,
        seed,
    )?;
    let scorer_config = TrainConfig {
        dim: opts.scorer_dim,
        seed,
        ..TrainConfig::default()
    };
    let (scorer, _) = train_dpm(&dataset, &scorer_config)?;

    let mut train_pairs: Vec<(Vec<String>, Vec<String>)> = Vec::with_capacity(opts.n_train_pairs);
    for item in dataset.items.iter().take(opts.n_train_pairs) {
        let mut y = item.text.clone();
        y.push(EOS.to_owned());
        train_pairs.push((item.context.clone(), y));
    }
    let eval_inputs: Vec<Vec<String>> = dataset
        .items
        .iter()
        .skip(opts.n_train_pairs)
        .take(opts.n_eval_inputs)
        .map(|item| item.context.clone())
        .collect();

    let mut model = SeqModel::new(&vocab, opts.gen_dim, opts.ngram_order, opts.max_len)?;
    train_nll(&mut model, &train_pairs, &opts.gen_train)?;
    Ok(CalibrationBench {
        model,
        scorer,
        train_pairs,
        eval_inputs,
    })
}

/// Run the contrastive arm on a benchmark.
pub fn run_contrastive(
    bench: &CalibrationBench,
    config: &CalibConfig,
) -> Result<(SeqModel, CalibReport)> {
    calibrate(
        &bench.model,
        &bench.scorer,
        &bench.train_pairs,
        &bench.eval_inputs,
        config,
    )
}

/// Run the REINFORCE arm on a benchmark with the same step budget.
pub fn run_reinforce(
    bench: &CalibrationBench,
    config: &CalibConfig,
) -> Result<(SeqModel, CalibReport)> {
    let inputs: Vec<Vec<String>> = bench.train_pairs.iter().map(|(x, _)| x.clone()).collect();
    reinforce_baseline(
        &bench.model,
        &bench.scorer,
        &inputs,
        &bench.eval_inputs,
        config,
    )
}
