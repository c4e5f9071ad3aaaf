//! Browser playground: three interactive views over the core toolkit.
//!
//! Everything heavy lives in the `dpm` crate; this layer only builds a
//! benchmark once, runs the requested experiment, and returns JSON for
//! the page to chart.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use dpm::calibrate::CalibConfig;
use dpm::dpm::{train_dpm, train_majority, train_soft, TrainConfig};
use dpm::experiment::{
    build_calibration_bench, run_contrastive, truth_fit, AggregationConfig, BenchOptions,
    CalibrationBench,
};
use dpm::features::tokenize;
use dpm::ingest::{simulate_annotators, DEFAULT_SIM_VOCAB};
use dpm::rng::RngSeed;
use dpm::seqgen::decode_diverse_beam;

fn err_to_js(e: dpm::Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

fn to_json<T: Serialize>(value: &T) -> Result<String, JsValue> {
    serde_json::to_string(value).map_err(|e| JsValue::from_str(&e.to_string()))
}

#[derive(Serialize)]
struct MethodRow {
    name: &'static str,
    mean_kl: f64,
    accuracy: f64,
}

#[derive(Serialize)]
struct AggregationView {
    methods: Vec<MethodRow>,
    objective_trace: Vec<f64>,
}

#[derive(Serialize)]
struct CandidateView {
    text: String,
    pref_score: f64,
    avg_logp: f64,
}

#[derive(Serialize)]
struct MetricsView {
    mean_top1_pref: f64,
    mean_spearman: f64,
    mean_spread: f64,
}

#[derive(Serialize)]
struct CalibrationView {
    loss_trace: Vec<f64>,
    pre: MetricsView,
    post: MetricsView,
    samples_per_second: f64,
}

impl From<dpm::calibrate::CalibMetrics> for MetricsView {
    fn from(m: dpm::calibrate::CalibMetrics) -> Self {
        MetricsView {
            mean_top1_pref: m.mean_top1_pref,
            mean_spearman: m.mean_spearman,
            mean_spread: m.mean_spread,
        }
    }
}

/// A cached synthetic benchmark: a pretrained toy generator plus a trained
/// preference scorer over the same vocabulary.
#[wasm_bindgen]
pub struct Playground {
    bench: CalibrationBench,
}

#[wasm_bindgen]
impl Playground {
    /// Build the benchmark (simulate annotators, train the preference
    /// model, pretrain the generator). Takes a moment; reused afterwards.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u64) -> Result<Playground, JsValue> {
        console_error_panic_hook::set_once();
        let options = BenchOptions {
            n_items: 90,
            n_train_pairs: 30,
            n_eval_inputs: 12,
            ..BenchOptions::default()
        };
        let bench = build_calibration_bench(RngSeed(seed), &options).map_err(err_to_js)?;
        Ok(Playground { bench })
    }

    /// Train d-PM against the majority and soft baselines on a fresh
    /// simulated dataset and report how well each recovers the planted
    /// ground truth.
    pub fn aggregation(
        &self,
        items: usize,
        annotators: usize,
        seed: u64,
    ) -> Result<String, JsValue> {
        let items = items.clamp(20, 400);
        let annotators = annotators.clamp(1, 25);
        let config = AggregationConfig {
            n_items: items,
            n_annotators: annotators,
            ..AggregationConfig::default()
        };
        let vocab: Vec<String> = DEFAULT_SIM_VOCAB.iter().map(|s| s.to_string()).collect();
        let (raw, truth, _) =
            simulate_annotators(items, annotators, &vocab, config.dim, RngSeed(seed))
                .map_err(err_to_js)?;
        let dataset = raw.with_smoothing(config.smoothing).map_err(err_to_js)?;
        let train = TrainConfig {
            dim: config.dim,
            seed: RngSeed(seed),
            ..config.train
        };
        let (dpm_scorer, report) = train_dpm(&dataset, &train).map_err(err_to_js)?;
        let (soft_scorer, _) = train_soft(&dataset, &train).map_err(err_to_js)?;
        let (major_scorer, _) = train_majority(&dataset, &train).map_err(err_to_js)?;
        let mut methods = Vec::new();
        for (name, scorer) in [
            ("d-PM", &dpm_scorer),
            ("soft", &soft_scorer),
            ("majority", &major_scorer),
        ] {
            let (mean_kl, accuracy) = truth_fit(scorer, &dataset, &truth).map_err(err_to_js)?;
            methods.push(MethodRow {
                name,
                mean_kl,
                accuracy,
            });
        }
        to_json(&AggregationView {
            methods,
            objective_trace: report.objective_trace,
        })
    }

    /// Decode K candidates for a context with diverse beam search and rank
    /// them by preference score.
    pub fn decode(
        &self,
        context: &str,
        k: usize,
        diversity_penalty: f64,
    ) -> Result<String, JsValue> {
        let k = k.clamp(1, 20);
        let x = tokenize(context);
        let cands = decode_diverse_beam(&self.bench.model, &x, k, diversity_penalty.max(0.0));
        let mut rows: Vec<CandidateView> = cands
            .iter()
            .map(|c| {
                let surface = c.surface().join(" ");
                CandidateView {
                    pref_score: self.bench.scorer.preference_score(&x, c.surface()),
                    avg_logp: c.total_logp / c.len().max(1) as f64,
                    text: if surface.is_empty() {
                        "(empty)".to_owned()
                    } else {
                        surface
                    },
                }
            })
            .collect();
        rows.sort_by(|a, b| b.pref_score.partial_cmp(&a.pref_score).unwrap());
        to_json(&rows)
    }

    /// Calibrate the generator against the preference scorer and report
    /// the loss trace plus before/after candidate metrics.
    pub fn calibrate(
        &self,
        k: usize,
        steps: usize,
        lr: f64,
        margin: f64,
    ) -> Result<String, JsValue> {
        let config = CalibConfig {
            k: k.clamp(2, 20),
            steps: steps.min(800),
            lr: lr.clamp(1e-4, 1.0),
            margin: margin.clamp(0.0, 1.0).max(1e-6),
            seed: RngSeed(0),
            ..CalibConfig::default()
        };
        let (_, report) = run_contrastive(&self.bench, &config).map_err(err_to_js)?;
        to_json(&CalibrationView {
            loss_trace: report.loss_trace,
            pre: report.pre.into(),
            post: report.post.into(),
            samples_per_second: report.samples_per_second,
        })
    }

    /// Example contexts the page can offer.
    pub fn sample_contexts(&self) -> String {
        let contexts: Vec<String> = self
            .bench
            .eval_inputs
            .iter()
            .take(8)
            .map(|x| x.join(" "))
            .collect();
        serde_json::to_string(&contexts).unwrap_or_else(|_| "[]".to_owned())
    }
}
