//! Subcommand implementations and the plain-text run configuration.
//!
//! Everything here is a pure function over resolved arguments so the
//! pipelines stay testable without argument parsing; `main` only maps
//! flags and config-file values onto these calls.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibrate::{CalibConfig, CalibMetrics, CalibReport};
use crate::data::Dataset;
use crate::dpm::{
    compute_r, train_dpm_from, train_majority, train_soft, train_wo_agg, Scorer, TrainConfig,
};
use crate::error::{Error, Result};
use crate::experiment::{run_contrastive, run_reinforce, BenchOptions, CalibrationBench};
use crate::ingest::{load_consensus_jsonl, load_mi_jsonl, simulate_annotators, SyntheticTruth};
use crate::prob::PrefDist;
use crate::rng::RngSeed;
use crate::seqgen::{
    decode_beam, decode_diverse_beam, decode_greedy, decode_nucleus, train_nll, CandidateSet,
    GenTrainConfig, SeqModel, EOS,
};

/// Every key a run configuration file may set. Unknown keys are rejected
/// by name.
pub const CONFIG_KEYS: &[&str] = &[
    "seed",
    "out_dir",
    "dim",
    "epsilon",
    "lr",
    "inner_steps",
    "max_epochs",
    "tol",
    "k",
    "eval_k",
    "margin",
    "length_penalty",
    "steps",
    "diversity_penalty",
    "nucleus_p",
    "nll_weight",
    "items",
    "annotators",
    "gen_dim",
    "ngram_order",
    "max_len",
    "gen_lr",
    "gen_steps",
    "ks",
    "vocab",
];

/// Parsed `key = value` configuration with flag overrides layered on top.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn empty() -> Self {
        RunConfig::default()
    }

    /// Parse a plain-text config file: one `key = value` per line, `#`
    /// comments, blank lines ignored. Every key must be known.
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let mut values = BTreeMap::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| {
                Error::schema(
                    lineno + 1,
                    format!("expected 'key = value', got '{trimmed}'"),
                )
            })?;
            let key = key.trim().to_owned();
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(Error::UnknownConfigKey(key));
            }
            values.insert(key, value.trim().to_owned());
        }
        Ok(RunConfig { values })
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::InvalidConfigValue {
                    key: key.to_owned(),
                    message: format!("cannot parse '{raw}'"),
                }),
        }
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>> {
        self.parse(key)
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>> {
        self.parse(key)
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>> {
        self.parse(key)
    }

    pub fn get_usize_list(&self, key: &str) -> Result<Option<Vec<usize>>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::InvalidConfigValue {
                            key: key.to_owned(),
                            message: format!("cannot parse '{p}' as integer"),
                        })
                })
                .collect::<Result<Vec<usize>>>()
                .map(Some),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PairRecord {
    x: String,
    y: String,
}

#[derive(Serialize, Deserialize)]
struct InputRecord {
    x: String,
}

/// Load (x, y) generation pairs from JSONL; `<eos>` is appended to each
/// target when missing.
pub fn load_pairs(path: &Path) -> Result<Vec<(Vec<String>, Vec<String>)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut pairs = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PairRecord =
            serde_json::from_str(&line).map_err(|e| Error::schema(lineno + 1, e.to_string()))?;
        let x = crate::features::tokenize(&rec.x);
        let mut y = crate::features::tokenize(&rec.y);
        if y.last().map(String::as_str) != Some(EOS) {
            y.push(EOS.to_owned());
        }
        if y.len() < 2 {
            return Err(Error::schema(lineno + 1, "empty target sequence"));
        }
        pairs.push((x, y));
    }
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no pairs in file"));
    }
    Ok(pairs)
}

/// Load decode inputs from JSONL (`{"x": "..."}` per line).
pub fn load_inputs(path: &Path) -> Result<Vec<Vec<String>>> {
    let reader = BufReader::new(File::open(path)?);
    let mut inputs = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: InputRecord =
            serde_json::from_str(&line).map_err(|e| Error::schema(lineno + 1, e.to_string()))?;
        inputs.push(crate::features::tokenize(&rec.x));
    }
    if inputs.is_empty() {
        return Err(Error::EmptyInput("no inputs in file"));
    }
    Ok(inputs)
}

fn require(ok: bool, key: &str, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidConfigValue {
            key: key.to_owned(),
            message: message.to_owned(),
        })
    }
}

/// Flag values must satisfy the library preconditions before they reach
/// code that asserts them.
fn validate_train(config: &TrainConfig) -> Result<()> {
    require(config.dim >= 2, "dim", "feature dim must be >= 2")?;
    require(config.lr > 0.0, "lr", "learning rate must be positive")?;
    require(
        config.epsilon >= 0.0,
        "epsilon",
        "smoothing must be non-negative",
    )
}

fn validate_calib(config: &CalibConfig) -> Result<()> {
    require(config.k >= 2, "k", "ranking needs at least 2 candidates")?;
    require(config.lr > 0.0, "lr", "learning rate must be positive")?;
    require(
        config.diversity_penalty >= 0.0,
        "diversity_penalty",
        "penalty must be non-negative",
    )?;
    require(
        config.nucleus_p > 0.0 && config.nucleus_p <= 1.0,
        "nucleus_p",
        "nucleus mass must be in (0, 1]",
    )?;
    require(
        config.eval_k.is_none_or(|k| k >= 1),
        "eval_k",
        "evaluation candidate count must be >= 1",
    )
}

/// Which annotation schema `ingest` reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestFormat {
    Mi,
    Consensus,
}

/// Convert an annotation file into the dataset JSONL format.
pub fn cmd_ingest(format: IngestFormat, input: &Path, out: &Path, seed: RngSeed) -> Result<()> {
    let dataset = match format {
        IngestFormat::Mi => load_mi_jsonl(input)?,
        IngestFormat::Consensus => load_consensus_jsonl(input, seed)?,
    };
    dataset.save_jsonl(out)?;
    Ok(())
}

/// Simulate a synthetic dataset with ground truth.
#[allow(clippy::too_many_arguments)]
pub fn cmd_simulate(
    items: usize,
    annotators: usize,
    dim: usize,
    vocab: Option<Vec<String>>,
    out: &Path,
    truth_out: &Path,
    planted_out: Option<&Path>,
    seed: RngSeed,
) -> Result<()> {
    require(items >= 1, "items", "need at least one item")?;
    require(annotators >= 1, "annotators", "need at least one annotator")?;
    require(dim >= 2, "dim", "feature dim must be >= 2")?;
    let vocab = vocab.unwrap_or_else(|| {
        crate::ingest::DEFAULT_SIM_VOCAB
            .iter()
            .map(|s| s.to_string())
            .collect()
    });
    require(!vocab.is_empty(), "vocab", "vocabulary must be non-empty")?;
    let (dataset, truth, planted) = simulate_annotators(items, annotators, &vocab, dim, seed)?;
    dataset.save_jsonl(out)?;
    truth.save_jsonl(truth_out)?;
    if let Some(path) = planted_out {
        planted.save(path)?;
    }
    Ok(())
}

/// Which preference trainer `train-pref` dispatches to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrefKind {
    Dpm,
    Major,
    Soft,
    WoAgg,
}

impl std::str::FromStr for PrefKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dpm" => Ok(PrefKind::Dpm),
            "major" => Ok(PrefKind::Major),
            "soft" => Ok(PrefKind::Soft),
            "wo-agg" => Ok(PrefKind::WoAgg),
            other => Err(Error::InvalidConfigValue {
                key: "kind".into(),
                message: format!("unknown preference kind '{other}'"),
            }),
        }
    }
}

/// Train a preference model and write the scorer plus its report CSV.
///
/// `init_scorer` warm-starts the d-PM trainer; `debug_dump` writes the
/// first-epoch snapshot (q, a-matrix, r targets) as CSV before training.
pub fn cmd_train_pref(
    kind: PrefKind,
    data: &Path,
    out: &Path,
    report_out: Option<&Path>,
    config: &TrainConfig,
    init_scorer: Option<&Path>,
    debug_dump: Option<&Path>,
) -> Result<()> {
    validate_train(config)?;
    let dataset = Dataset::load_jsonl(data, 2, config.epsilon)?;
    let initial = match init_scorer {
        Some(path) => Scorer::load(path)?,
        None => Scorer::zeros(dataset.class_count, config.dim),
    };
    if let Some(dump_path) = debug_dump {
        dump_first_epoch(&dataset, &initial, dump_path)?;
    }
    let (scorer, report) = match kind {
        PrefKind::Dpm => train_dpm_from(initial, &dataset, config)?,
        PrefKind::Major => train_majority(&dataset, config)?,
        PrefKind::Soft => train_soft(&dataset, config)?,
        PrefKind::WoAgg => train_wo_agg(&dataset, config)?,
    };
    scorer.save(out)?;
    if let Some(path) = report_out {
        report.save_csv(path)?;
    }
    Ok(())
}

/// First-epoch internals: per item the snapshot posterior q, the a-matrix
/// row, and the posterior target r.
fn dump_first_epoch(dataset: &Dataset, scorer: &Scorer, path: &Path) -> Result<()> {
    let q_all: Vec<PrefDist> = dataset
        .items
        .iter()
        .map(|it| scorer.score(&it.context, &it.text))
        .collect();
    let priors: Vec<PrefDist> = dataset.items.iter().map(|it| it.prior.clone()).collect();
    let a = crate::dpm::compute_a(&q_all)?;
    let targets = compute_r(&priors, &q_all)?;
    let mut w = BufWriter::new(File::create(path)?);
    let c = dataset.class_count;
    let header: Vec<String> = ["q", "a", "r"]
        .iter()
        .flat_map(|name| (0..c).map(move |k| format!("{name}{k}")))
        .collect();
    writeln!(w, "item,{}", header.join(","))?;
    for (i, item) in dataset.items.iter().enumerate() {
        let mut fields = Vec::with_capacity(3 * c);
        fields.extend(q_all[i].probs().iter().map(|v| v.to_string()));
        fields.extend((0..c).map(|k| a.get(i, k).to_string()));
        fields.extend(targets.r[i].probs().iter().map(|v| v.to_string()));
        writeln!(w, "{},{}", item.id, fields.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Score every item in a dataset; CSV `id,pref_score`.
pub fn cmd_score(scorer_path: &Path, data: &Path, out: &Path) -> Result<()> {
    let scorer = Scorer::load(scorer_path)?;
    let dataset = Dataset::load_jsonl(data, scorer.class_count(), 0.0)?;
    let mut w = BufWriter::new(File::create(out)?);
    writeln!(w, "id,pref_score")?;
    for item in &dataset.items {
        writeln!(
            w,
            "{},{}",
            item.id,
            scorer.preference_score(&item.context, &item.text)
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Fit the toy generator on (x, y) pairs; vocabulary is the sorted union
/// of target tokens.
#[allow(clippy::too_many_arguments)]
pub fn cmd_gen_train(
    data: &Path,
    out: &Path,
    report_out: Option<&Path>,
    gen_dim: usize,
    ngram_order: usize,
    max_len: usize,
    train: &GenTrainConfig,
) -> Result<()> {
    require(gen_dim >= 2, "gen_dim", "feature dim must be >= 2")?;
    require(ngram_order >= 1, "ngram_order", "n-gram order must be >= 1")?;
    require(max_len >= 1, "max_len", "max length must be >= 1")?;
    require(train.lr > 0.0, "lr", "learning rate must be positive")?;
    let pairs = load_pairs(data)?;
    let mut vocab: Vec<String> = pairs
        .iter()
        .flat_map(|(_, y)| y.iter())
        .filter(|t| t.as_str() != EOS)
        .cloned()
        .collect();
    vocab.sort();
    vocab.dedup();
    let mut model = SeqModel::new(&vocab, gen_dim, ngram_order, max_len)?;
    let trace = train_nll(&mut model, &pairs, train)?;
    model.save(out)?;
    if let Some(path) = report_out {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "step,loss")?;
        for (step, loss) in trace.iter().enumerate() {
            writeln!(w, "{step},{loss}")?;
        }
        w.flush()?;
    }
    Ok(())
}

/// Decoding strategy for the `decode` subcommand.
#[derive(Debug, Clone, Copy)]
pub enum DecodeStrategy {
    Greedy,
    Beam { width: usize },
    Diverse { k: usize, penalty: f64 },
    Nucleus { p: f64 },
}

/// Decode each input and write one CandidateSet JSON object per line.
pub fn cmd_decode(
    model_path: &Path,
    input: &Path,
    strategy: DecodeStrategy,
    seed: RngSeed,
    out: &Path,
) -> Result<()> {
    match strategy {
        DecodeStrategy::Beam { width } => require(width >= 1, "width", "beam width must be >= 1")?,
        DecodeStrategy::Diverse { k, penalty } => {
            require(k >= 1, "k", "need at least one group")?;
            require(penalty >= 0.0, "penalty", "penalty must be non-negative")?;
        }
        DecodeStrategy::Nucleus { p } => {
            require(p > 0.0 && p <= 1.0, "p", "nucleus mass must be in (0, 1]")?
        }
        DecodeStrategy::Greedy => {}
    }
    let model = SeqModel::load(model_path)?;
    let inputs = load_inputs(input)?;
    let mut w = BufWriter::new(File::create(out)?);
    for (i, x) in inputs.iter().enumerate() {
        let candidates = match strategy {
            DecodeStrategy::Greedy => vec![decode_greedy(&model, x)],
            DecodeStrategy::Beam { width } => decode_beam(&model, x, width),
            DecodeStrategy::Diverse { k, penalty } => decode_diverse_beam(&model, x, k, penalty),
            DecodeStrategy::Nucleus { p } => {
                vec![decode_nucleus(&model, x, p, seed.derive(i as u64))]
            }
        };
        let set = CandidateSet {
            input: x.clone(),
            candidates,
        };
        serde_json::to_writer(&mut w, &set).map_err(|e| Error::InvalidDist(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Run calibration on explicit artifacts and write the model + report.
#[allow(clippy::too_many_arguments)]
pub fn cmd_calibrate(
    model_path: &Path,
    scorer_path: &Path,
    data: &Path,
    eval_inputs_path: Option<&Path>,
    config: &CalibConfig,
    out: &Path,
    report_out: &Path,
) -> Result<()> {
    validate_calib(config)?;
    let model = SeqModel::load(model_path)?;
    let scorer = Scorer::load(scorer_path)?;
    let pairs = load_pairs(data)?;
    let eval_inputs = match eval_inputs_path {
        Some(path) => load_inputs(path)?,
        None => pairs.iter().map(|(x, _)| x.clone()).collect(),
    };
    let (calibrated, report) =
        crate::calibrate::calibrate(&model, &scorer, &pairs, &eval_inputs, config)?;
    calibrated.save(out)?;
    report.save_csv(report_out)?;
    Ok(())
}

/// Where sweep-k / compare-rl get their benchmark from: explicit files or
/// the built-in synthetic pipeline.
pub enum BenchSource<'a> {
    Files {
        model: &'a Path,
        scorer: &'a Path,
        data: &'a Path,
        eval_inputs: Option<&'a Path>,
    },
    Synthetic {
        seed: RngSeed,
        options: BenchOptions,
    },
}

fn resolve_bench(source: &BenchSource) -> Result<CalibrationBench> {
    match source {
        BenchSource::Files {
            model,
            scorer,
            data,
            eval_inputs,
        } => {
            let model = SeqModel::load(model)?;
            let scorer = Scorer::load(scorer)?;
            let train_pairs = load_pairs(data)?;
            let eval_inputs = match eval_inputs {
                Some(path) => load_inputs(path)?,
                None => train_pairs.iter().map(|(x, _)| x.clone()).collect(),
            };
            Ok(CalibrationBench {
                model,
                scorer,
                train_pairs,
                eval_inputs,
            })
        }
        BenchSource::Synthetic { seed, options } => {
            crate::experiment::build_calibration_bench(*seed, options)
        }
    }
}

fn write_metric_rows(
    w: &mut impl Write,
    method: &str,
    report: &CalibReport,
) -> std::io::Result<()> {
    let rows: [(&str, f64); 7] = [
        ("samples_per_second", report.samples_per_second),
        ("pre_mean_top1_pref", report.pre.mean_top1_pref),
        ("pre_mean_spearman", report.pre.mean_spearman),
        ("pre_mean_spread", report.pre.mean_spread),
        ("post_mean_top1_pref", report.post.mean_top1_pref),
        ("post_mean_spearman", report.post.mean_spearman),
        ("post_mean_spread", report.post.mean_spread),
    ];
    for (metric, value) in rows {
        writeln!(w, "{method},{metric},{value}")?;
    }
    Ok(())
}

/// Run the calibrate pipeline once per K and emit one row per K.
///
/// Evaluation always decodes `eval_k` candidates regardless of the
/// training K, so pre-calibration metrics are identical across rows.
pub fn cmd_sweep_k(
    source: &BenchSource,
    ks: &[usize],
    base: &CalibConfig,
    out: &Path,
) -> Result<()> {
    for &k in ks {
        if k < 2 {
            return Err(Error::InvalidConfigValue {
                key: "ks".into(),
                message: format!("K must be >= 2, got {k}"),
            });
        }
    }
    validate_calib(base)?;
    let bench = resolve_bench(source)?;
    let mut w = BufWriter::new(File::create(out)?);
    writeln!(
        w,
        "k,pre_top1,pre_spearman,pre_spread,post_top1,post_spearman,post_spread,final_loss,samples_per_second"
    )?;
    let eval_k = base.eval_k.unwrap_or(base.k);
    for &k in ks {
        let config = CalibConfig {
            k,
            eval_k: Some(eval_k),
            ..base.clone()
        };
        let (_, report) = run_contrastive(&bench, &config)?;
        let final_loss = report.loss_trace.last().copied().unwrap_or(0.0);
        writeln!(
            w,
            "{k},{},{},{},{},{},{},{final_loss},{}",
            report.pre.mean_top1_pref,
            report.pre.mean_spearman,
            report.pre.mean_spread,
            report.post.mean_top1_pref,
            report.post.mean_spearman,
            report.post.mean_spread,
            report.samples_per_second
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Paired contrastive-vs-REINFORCE run on identical data, seeds and step
/// budgets; emits both loss traces and a named-metric summary block.
pub fn cmd_compare_rl(source: &BenchSource, config: &CalibConfig, out: &Path) -> Result<()> {
    validate_calib(config)?;
    let bench = resolve_bench(source)?;
    let (_, contrastive) = run_contrastive(&bench, config)?;
    let (_, reinforce) = run_reinforce(&bench, config)?;
    let mut w = BufWriter::new(File::create(out)?);
    writeln!(w, "method,step,loss")?;
    for (step, loss) in contrastive.loss_trace.iter().enumerate() {
        writeln!(w, "contrastive,{step},{loss}")?;
    }
    for (step, loss) in reinforce.loss_trace.iter().enumerate() {
        writeln!(w, "reinforce,{step},{loss}")?;
    }
    writeln!(w, "method,metric,value")?;
    write_metric_rows(&mut w, "contrastive", &contrastive)?;
    write_metric_rows(&mut w, "reinforce", &reinforce)?;
    for (step, reward) in reinforce.reward_trace.iter().enumerate() {
        writeln!(w, "reinforce_reward,{step},{reward}")?;
    }
    w.flush()?;
    Ok(())
}

/// Evaluate scorers against ground truth: CSV `scorer,mean_kl,accuracy`.
pub fn cmd_eval(scorers: &[PathBuf], truth_path: &Path, data: &Path, out: &Path) -> Result<()> {
    let truth = SyntheticTruth::load_jsonl(truth_path)?;
    let dataset = Dataset::load_jsonl(data, 2, 0.0)?;
    let missing: Vec<&str> = dataset
        .items
        .iter()
        .filter(|item| !truth.rho_star.contains_key(&item.id))
        .map(|item| item.id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingTruthIds(missing.join(", ")));
    }
    let mut w = BufWriter::new(File::create(out)?);
    writeln!(w, "scorer,mean_kl,accuracy")?;
    for path in scorers {
        let scorer = Scorer::load(path)?;
        let (mean_kl, accuracy) = crate::experiment::truth_fit(&scorer, &dataset, &truth)?;
        writeln!(w, "{},{mean_kl},{accuracy}", path.display())?;
    }
    w.flush()?;
    Ok(())
}

/// Per-method evaluation bundle used by reports.
#[derive(Debug, Clone, Copy)]
pub struct EvalSummary {
    pub mean_kl: f64,
    pub accuracy: f64,
    pub metrics: CalibMetrics,
}
