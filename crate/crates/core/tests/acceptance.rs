//! Acceptance suite: every release-gating property in one target, one test
//! per criterion, each printing a `[acceptance] ...: PASS` line. Run with
//! `cargo test --test acceptance -- --nocapture` to see the lines.

use std::collections::HashSet;

use rand::Rng;

use dpm::calibrate::{
    calibration_loss_and_grad, generate_candidates, pairwise_margin_loss, rank_by_preference,
    CalibConfig,
};
use dpm::cli::{cmd_compare_rl, cmd_sweep_k, BenchSource};
use dpm::data::{AnnotatedItem, Dataset};
use dpm::dpm::{
    compute_a, compute_r, cross_entropy_loss_and_grad, dpm_loss_and_grad, mse_loss_and_grad,
    train_dpm, Scorer, TrainConfig,
};
use dpm::experiment::{
    aggregation_run, build_calibration_bench, run_contrastive, AggregationConfig, BenchOptions,
};
use dpm::features::featurize;
use dpm::gradcheck::{central_difference, max_rel_error};
use dpm::ingest::{
    consensus_to_item, map_mi_code, simulate_annotators, ConsensusRecord, CONSENSUS_BRACKETS,
    DEFAULT_SIM_VOCAB, MI_CODES,
};
use dpm::prob::{empirical_prior, PrefDist};
use dpm::rng::{RngSeed, DEFAULT_SEEDS};
use dpm::seqgen::{
    decode_beam, decode_diverse_beam, decode_greedy, nll_loss_and_grad, SeqModel, EOS,
};

const GRAD_TOL: f64 = 1e-4;

fn pass(name: &str, detail: String) {
    println!("[acceptance] {name}: PASS ({detail})");
}

fn sim_vocab() -> Vec<String> {
    DEFAULT_SIM_VOCAB.iter().map(|s| s.to_string()).collect()
}

fn random_dataset(seed: u64, n_items: usize, n_annotators: usize, dim: usize) -> Dataset {
    let (ds, _, _) = simulate_annotators(n_items, n_annotators, &sim_vocab(), dim, RngSeed(seed))
        .expect("simulation");
    ds
}

fn random_scorer(rng: &mut impl Rng, dim: usize, scale: f64) -> Scorer {
    let weights = (0..2 * dim).map(|_| rng.gen_range(-scale..scale)).collect();
    Scorer::from_weights(weights, 2, dim).unwrap()
}

// ---------------------------------------------------------------------------
// criterion 1: analytic gradients vs central finite differences
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_gradient_correctness() {
    let dim = 96;
    let mut rng = RngSeed(0xC1).rng();
    let mut worst = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);

    // (a) the variational KL objective
    for i in 0..20 {
        let ds = random_dataset(1000 + i, 4, 3, dim);
        let scorer = random_scorer(&mut rng, dim, 0.5);
        let priors: Vec<PrefDist> = ds.items.iter().map(|it| it.prior.clone()).collect();
        let q_all: Vec<PrefDist> = ds
            .items
            .iter()
            .map(|it| scorer.score(&it.context, &it.text))
            .collect();
        let targets = compute_r(&priors, &q_all).unwrap();
        let (_, analytic) = dpm_loss_and_grad(&scorer, &ds, &targets).unwrap();
        let numeric = central_difference(scorer.weights(), 1e-5, |w| {
            let probe = Scorer::from_weights(w.to_vec(), 2, dim).unwrap();
            dpm_loss_and_grad(&probe, &ds, &targets).unwrap().0
        });
        let err = max_rel_error(&analytic, &numeric);
        assert!(err < GRAD_TOL, "kl instance {i}: rel err {err}");
        worst.0 = worst.0.max(err);
    }

    // (b) cross-entropy and (c) mean squared error
    for i in 0..20 {
        let ds = random_dataset(2000 + i, 5, 3, dim);
        let feats: Vec<_> = ds
            .items
            .iter()
            .map(|it| featurize(&it.context, &it.text, dim))
            .collect();
        let targets: Vec<usize> = ds.items.iter().map(|it| it.prior.argmax()).collect();
        let labels: Vec<PrefDist> = ds.items.iter().map(|it| it.prior.clone()).collect();
        let scorer = random_scorer(&mut rng, dim, 0.5);

        let (_, analytic) = cross_entropy_loss_and_grad(&scorer, &feats, &targets).unwrap();
        let numeric = central_difference(scorer.weights(), 1e-5, |w| {
            let probe = Scorer::from_weights(w.to_vec(), 2, dim).unwrap();
            cross_entropy_loss_and_grad(&probe, &feats, &targets)
                .unwrap()
                .0
        });
        let err = max_rel_error(&analytic, &numeric);
        assert!(err < GRAD_TOL, "ce instance {i}: rel err {err}");
        worst.1 = worst.1.max(err);

        let (_, analytic) = mse_loss_and_grad(&scorer, &feats, &labels).unwrap();
        let numeric = central_difference(scorer.weights(), 1e-5, |w| {
            let probe = Scorer::from_weights(w.to_vec(), 2, dim).unwrap();
            mse_loss_and_grad(&probe, &feats, &labels).unwrap().0
        });
        let err = max_rel_error(&analytic, &numeric);
        assert!(err < GRAD_TOL, "mse instance {i}: rel err {err}");
        worst.2 = worst.2.max(err);
    }

    // (d) sequence NLL
    let body: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    for i in 0..20u64 {
        let mut model = SeqModel::new(&body, 48, 2, 5).unwrap();
        model.randomize(RngSeed(3000 + i), 0.6);
        let mut seq_rng = RngSeed(4000 + i).rng();
        let pairs: Vec<(Vec<String>, Vec<String>)> = (0..3)
            .map(|_| {
                let x = vec![format!("x{}", seq_rng.gen_range(0..5))];
                let len = seq_rng.gen_range(1..4);
                let mut y: Vec<String> = (0..len)
                    .map(|_| body[seq_rng.gen_range(0..body.len())].clone())
                    .collect();
                y.push(EOS.to_owned());
                (x, y)
            })
            .collect();
        let (_, analytic) = nll_loss_and_grad(&model, &pairs).unwrap();
        let base = model.clone();
        let numeric = central_difference(model.weights(), 1e-5, |w| {
            let mut probe = base.clone();
            probe.set_weights(w.to_vec()).unwrap();
            nll_loss_and_grad(&probe, &pairs).unwrap().0
        });
        let err = max_rel_error(&analytic, &numeric);
        assert!(err < GRAD_TOL, "nll instance {i}: rel err {err}");
        worst.3 = worst.3.max(err);
    }

    // (e) the full calibration loss, sampled away from hinge kinks
    let mut checked = 0;
    let mut attempt = 0u64;
    let mut cal_rng = RngSeed(0xCA11).rng();
    while checked < 20 {
        attempt += 1;
        assert!(attempt < 200, "could not find 20 kink-free instances");
        let mut model = SeqModel::new(&body, 48, 2, 4).unwrap();
        model.randomize(RngSeed(5000 + attempt), 0.8);
        let scorer = random_scorer(&mut cal_rng, 48, 0.8);
        let inputs = vec![vec![format!("q{attempt}")]];
        let ranked = rank_by_preference(&scorer, generate_candidates(&model, &inputs, 3, 0.5));
        let config = CalibConfig {
            k: 3,
            margin: 0.02,
            ..CalibConfig::default()
        };
        let ps: Vec<f64> = ranked[0]
            .candidates
            .iter()
            .map(|c| {
                dpm::calibrate::length_normalized_logp(&model, &ranked[0].input, c, 1.0).unwrap()
            })
            .collect();
        let near_kink = (0..ps.len()).any(|i| {
            (i + 1..ps.len()).any(|j| (ps[j] - ps[i] + 0.02 * (j - i) as f64).abs() < 1e-6)
        });
        if near_kink {
            continue;
        }
        let y = vec!["a".to_owned(), EOS.to_owned()];
        let (_, analytic) = calibration_loss_and_grad(&model, &ranked[0], &y, &config).unwrap();
        let base = model.clone();
        let numeric = central_difference(model.weights(), 1e-5, |w| {
            let mut probe = base.clone();
            probe.set_weights(w.to_vec()).unwrap();
            calibration_loss_and_grad(&probe, &ranked[0], &y, &config)
                .unwrap()
                .0
        });
        let err = max_rel_error(&analytic, &numeric);
        assert!(
            err < GRAD_TOL,
            "calibration attempt {attempt}: rel err {err}"
        );
        worst.4 = worst.4.max(err);
        checked += 1;
    }

    pass(
        "criterion 1 (gradient correctness)",
        format!(
            "worst rel err: kl {:.2e}, ce {:.2e}, mse {:.2e}, nll {:.2e}, calib {:.2e}",
            worst.0, worst.1, worst.2, worst.3, worst.4
        ),
    );
}

// ---------------------------------------------------------------------------
// criterion 2: variational fixed-point correctness
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_fixed_point() {
    // column normalization property
    let mut rng = RngSeed(0xC2).rng();
    for trial in 0..50 {
        let n = rng.gen_range(1..25);
        let q: Vec<PrefDist> = (0..n)
            .map(|_| {
                let p: f64 = rng.gen_range(0.001..0.999);
                PrefDist::new(vec![p, 1.0 - p]).unwrap()
            })
            .collect();
        let a = compute_a(&q).unwrap();
        for class in 0..2 {
            let col: f64 = (0..n).map(|i| a.get(i, class)).sum();
            assert!(
                (col - 1.0).abs() < 1e-9,
                "trial {trial} column {class}: {col}"
            );
        }
    }

    // the 2-item worked example
    let q = vec![
        PrefDist::new(vec![0.8, 0.2]).unwrap(),
        PrefDist::new(vec![0.4, 0.6]).unwrap(),
    ];
    let a = compute_a(&q).unwrap();
    assert!((a.get(0, 0) - 2.0 / 3.0).abs() < 1e-4);
    assert!((a.get(0, 1) - 0.25).abs() < 1e-4);
    assert!((a.get(1, 0) - 1.0 / 3.0).abs() < 1e-4);
    assert!((a.get(1, 1) - 0.75).abs() < 1e-4);
    let priors = vec![PrefDist::uniform(2), PrefDist::uniform(2)];
    let targets = compute_r(&priors, &q).unwrap();
    assert!((targets.r[0].probs()[0] - 0.7273).abs() < 1e-4);
    assert!((targets.r[0].probs()[1] - 0.2727).abs() < 1e-4);

    // objective trace non-increasing within 1e-6 over 10 random datasets
    let mut worst_increase = 0.0f64;
    for seed in 0..10u64 {
        let ds = random_dataset(seed, 60, 3, 512);
        let config = TrainConfig {
            dim: 512,
            ..TrainConfig::default()
        };
        let (_, report) = train_dpm(&ds, &config).unwrap();
        for w in report.objective_trace.windows(2) {
            worst_increase = worst_increase.max(w[1] - w[0]);
            assert!(
                w[1] - w[0] < 1e-6,
                "seed {seed}: objective increased by {}",
                w[1] - w[0]
            );
        }
    }

    pass(
        "criterion 2 (variational fixed point)",
        format!("worked example to 1e-4; worst trace increase {worst_increase:.2e}"),
    );
}

// ---------------------------------------------------------------------------
// criterion 3: one-hot collapse
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_one_hot_collapse() {
    let mut rng = RngSeed(0xC3).rng();
    let vocab = sim_vocab();
    let items: Vec<AnnotatedItem> = (0..30)
        .map(|i| {
            let text: Vec<String> = (0..rng.gen_range(3..8))
                .map(|_| vocab[rng.gen_range(0..vocab.len())].clone())
                .collect();
            AnnotatedItem {
                id: format!("i{i}"),
                context: vec![format!("c{}", i % 5)],
                text,
                prior: PrefDist::one_hot(2, 0),
                raw_annotations: Some(vec![0, 0, 0]),
            }
        })
        .collect();
    let ds = Dataset::new(items, 2).unwrap();
    let config = TrainConfig {
        dim: 1024,
        max_epochs: 200,
        ..TrainConfig::default()
    };
    let (scorer, report) = train_dpm(&ds, &config).unwrap();
    let mut min_mass: f64 = 1.0;
    for item in &ds.items {
        let q = scorer.score(&item.context, &item.text);
        min_mass = min_mass.min(q.probs()[0]);
        assert!(
            q.probs()[0] >= 0.99,
            "item {} only reached {}",
            item.id,
            q.probs()[0]
        );
    }
    pass(
        "criterion 3 (one-hot collapse)",
        format!(
            "min class-0 mass {min_mass:.5} after {} epochs",
            report.epochs_run
        ),
    );
}

// ---------------------------------------------------------------------------
// criterion 4: aggregation-quality ordering
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_aggregation_ordering() {
    let config = AggregationConfig::default();
    assert_eq!(config.n_items, 200);
    assert_eq!(config.n_annotators, 3);
    let mut mean = (0.0f64, 0.0f64, 0.0f64);
    let mut dpm_best = 0;
    for seed in 0..10u64 {
        let out = aggregation_run(RngSeed(seed), &config).unwrap();
        mean.0 += out.dpm.mean_kl / 10.0;
        mean.1 += out.soft.mean_kl / 10.0;
        mean.2 += out.major.mean_kl / 10.0;
        if out.dpm.mean_kl < out.soft.mean_kl && out.dpm.mean_kl < out.major.mean_kl {
            dpm_best += 1;
        }
    }
    assert!(
        mean.0 <= mean.1,
        "mean KL: d-PM {} should not exceed soft {}",
        mean.0,
        mean.1
    );
    assert!(
        mean.1 <= mean.2,
        "mean KL: soft {} should not exceed majority {}",
        mean.1,
        mean.2
    );
    assert!(
        dpm_best >= 7,
        "d-PM strictly best in only {dpm_best}/10 seeds"
    );
    pass(
        "criterion 4 (aggregation ordering)",
        format!(
            "mean KL d-PM {:.4} <= soft {:.4} <= major {:.4}; d-PM best {dpm_best}/10",
            mean.0, mean.1, mean.2
        ),
    );
}

// ---------------------------------------------------------------------------
// criterion 5: decoder oracles
// ---------------------------------------------------------------------------

/// Test-local exhaustive enumeration of every complete decode; independent
/// of the beam implementation.
fn brute_force_best(model: &SeqModel, x: &[String]) -> (Vec<String>, f64, usize) {
    let mut best: Option<(Vec<String>, f64)> = None;
    let mut count = 0;
    let mut stack: Vec<(Vec<String>, f64)> = vec![(vec![], 0.0)];
    while let Some((toks, total)) = stack.pop() {
        let mut prefix = vec![dpm::seqgen::BOS.to_owned()];
        prefix.extend(toks.iter().cloned());
        let dist = model.next_token_dist(x, &prefix).unwrap();
        for (v, &p) in dist.iter().enumerate() {
            let tok = model.vocab()[v].clone();
            let logp = p.max(1e-12).ln();
            let mut next = toks.clone();
            next.push(tok.clone());
            let next_total = total + logp;
            if tok == EOS || next.len() == model.max_len() {
                count += 1;
                let better = match &best {
                    None => true,
                    Some((_, b)) => next_total > *b,
                };
                if better {
                    best = Some((next, next_total));
                }
            } else {
                stack.push((next, next_total));
            }
        }
    }
    let (toks, total) = best.unwrap();
    (toks, total, count)
}

#[test]
fn criterion_5_decoder_oracles() {
    let x = vec!["ask".to_owned(), "it".to_owned()];
    let mut instances = 0;
    for vocab_size in 2..=4usize {
        // body tokens on top of <bos>/<eos> so total vocab stays <= 4
        let body: Vec<String> = (0..vocab_size.saturating_sub(2))
            .map(|i| format!("t{i}"))
            .collect();
        for max_len in 1..=4usize {
            for seed in 0..5u64 {
                let mut model = SeqModel::new(&body, 64, 2, max_len).unwrap();
                model.randomize(RngSeed(seed * 131 + vocab_size as u64), 1.1);

                let (brute_tokens, brute_total, n_complete) = brute_force_best(&model, &x);
                let beam = decode_beam(&model, &x, n_complete);
                assert!(
                    (beam[0].total_logp - brute_total).abs() < 1e-9,
                    "vocab {vocab_size} len {max_len} seed {seed}: beam {} vs brute {}",
                    beam[0].total_logp,
                    brute_total
                );
                assert_eq!(beam[0].generated(), &brute_tokens[..], "token mismatch");

                let greedy = decode_greedy(&model, &x);
                assert_eq!(decode_beam(&model, &x, 1)[0], greedy, "beam(1) != greedy");

                let diverse = decode_diverse_beam(&model, &x, 3, 0.0);
                for c in &diverse {
                    assert_eq!(c, &greedy, "diverse(0) != greedy");
                }
                instances += 1;
            }
        }
    }
    pass(
        "criterion 5 (decoder oracles)",
        format!("{instances} instances, full vocab<=4 x max_len<=4 sweep"),
    );
}

// ---------------------------------------------------------------------------
// criterion 6: calibration effect
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_calibration_effect() {
    let mut spearman_up = 0;
    let mut top1_up = 0;
    for seed in 0..10u64 {
        let bench = build_calibration_bench(RngSeed(seed), &BenchOptions::default()).unwrap();
        let config = CalibConfig {
            k: 10,
            seed: RngSeed(seed),
            ..CalibConfig::default()
        };
        let (_, report) = run_contrastive(&bench, &config).unwrap();
        if report.post.mean_spearman > report.pre.mean_spearman {
            spearman_up += 1;
        }
        if report.post.mean_top1_pref - report.pre.mean_top1_pref >= 0.02 {
            top1_up += 1;
        }
        assert!(
            report.loss_trace.last().unwrap() < &report.loss_trace[0],
            "seed {seed}: loss did not decrease"
        );
    }
    assert!(
        spearman_up >= 8,
        "Spearman increased in only {spearman_up}/10 seeds"
    );
    assert!(
        top1_up >= 8,
        "top-1 gain >= 0.02 in only {top1_up}/10 seeds"
    );
    pass(
        "criterion 6 (calibration effect)",
        format!("Spearman up {spearman_up}/10, top-1 up {top1_up}/10 (bar: 8/10)"),
    );
}

// ---------------------------------------------------------------------------
// criterion 7: margin-loss arithmetic
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_margin_arithmetic() {
    assert_eq!(pairwise_margin_loss(&[-1.0, -1.5], 0.1), 0.0);
    let two = pairwise_margin_loss(&[-1.5, -1.45], 0.1);
    assert!((two - 0.15).abs() < 1e-12, "got {two}");
    let three = pairwise_margin_loss(&[-1.0, -1.0, -1.0], 0.1);
    assert!((three - 0.4).abs() < 1e-12, "got {three}");

    // zero on any ordering with full margin slack
    let mut rng = RngSeed(0xC7).rng();
    for _ in 0..100 {
        let k = rng.gen_range(2..8);
        let margin: f64 = rng.gen_range(0.001..0.2);
        let mut ps = Vec::with_capacity(k);
        let mut current: f64 = rng.gen_range(-1.0..0.0);
        for _ in 0..k {
            ps.push(current);
            current -= margin + rng.gen_range(0.0..1.0);
        }
        assert_eq!(pairwise_margin_loss(&ps, margin), 0.0);
    }
    pass(
        "criterion 7 (margin arithmetic)",
        "hand examples exact; 100 random full-slack sets at zero".to_string(),
    );
}

// ---------------------------------------------------------------------------
// criterion 8: contrastive vs REINFORCE throughput
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_throughput_direction() {
    let dir = std::env::temp_dir().join(format!("dpm-acc8-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let mut ratios = Vec::new();
    for &seed in &DEFAULT_SEEDS {
        let out = dir.join(format!("compare-{seed}.csv"));
        let source = BenchSource::Synthetic {
            seed: RngSeed(seed),
            options: BenchOptions::default(),
        };
        let config = CalibConfig {
            k: 10,
            steps: 60,
            seed: RngSeed(seed),
            ..CalibConfig::default()
        };
        cmd_compare_rl(&source, &config, &out).unwrap();
        let text = std::fs::read_to_string(&out).unwrap();
        let mut cl = None;
        let mut rl = None;
        for line in text.lines() {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() == 3 && fields[1] == "samples_per_second" {
                let v: f64 = fields[2].parse().unwrap();
                match fields[0] {
                    "contrastive" => cl = Some(v),
                    "reinforce" => rl = Some(v),
                    _ => {}
                }
            }
        }
        let (cl, rl) = (cl.unwrap(), rl.unwrap());
        assert!(
            cl > rl,
            "seed {seed}: contrastive {cl}/s not faster than reinforce {rl}/s"
        );
        ratios.push(cl / rl);
    }
    std::fs::remove_dir_all(&dir).ok();
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    pass(
        "criterion 8 (throughput direction)",
        format!("contrastive faster in 5/5 seeds, min ratio {min:.2}x"),
    );
}

// ---------------------------------------------------------------------------
// criterion 9: K-sweep harness
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_sweep_harness() {
    let dir = std::env::temp_dir().join(format!("dpm-acc9-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let out = dir.join("sweep.csv");
    let source = BenchSource::Synthetic {
        seed: RngSeed(0),
        options: BenchOptions::default(),
    };
    let config = CalibConfig {
        steps: 120,
        seed: RngSeed(0),
        eval_k: Some(10),
        ..CalibConfig::default()
    };
    cmd_sweep_k(&source, &[5, 10, 15, 20], &config, &out).unwrap();
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 4, "expected 4 data rows");
    let mut pre_metrics = HashSet::new();
    for row in &rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields.len(), 9);
        for value in &fields[1..] {
            let v: f64 = value.parse().expect("numeric field");
            assert!(v.is_finite(), "non-finite metric in row {row}");
        }
        // pre metrics identical across rows: same base model, seed, eval K
        pre_metrics.insert(fields[1..4].join(","));
    }
    assert_eq!(
        pre_metrics.len(),
        1,
        "pre-calibration metrics differ across rows"
    );
    std::fs::remove_dir_all(&dir).ok();
    pass(
        "criterion 9 (K-sweep harness)",
        "4 rows, finite metrics, shared pre-calibration block".to_string(),
    );
}

// ---------------------------------------------------------------------------
// criterion 10: ingestion bit-exactness
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_ingestion() {
    let acceptable = MI_CODES.iter().filter(|(_, c)| *c == 0).count();
    let unacceptable = MI_CODES.iter().filter(|(_, c)| *c == 1).count();
    assert_eq!((acceptable, unacceptable), (11, 4));
    for (name, class) in MI_CODES {
        assert_eq!(map_mi_code(name).unwrap(), class);
    }

    // 1000 seeded draws per scale land inside the scale's bracket
    for scale in 1..=5i64 {
        let (lo, hi) = CONSENSUS_BRACKETS[(scale - 1) as usize];
        for seed in 0..1000u64 {
            let record = ConsensusRecord {
                context: "q a".into(),
                text: "rot".into(),
                scale,
            };
            let item = consensus_to_item("x", &record, RngSeed(seed)).unwrap();
            let beta = item.prior.probs()[0];
            assert!(
                (lo..=hi).contains(&beta),
                "scale {scale} seed {seed}: beta {beta} outside [{lo}, {hi}]"
            );
            // determinism
            let again = consensus_to_item("x", &record, RngSeed(seed)).unwrap();
            assert_eq!(item.prior.probs(), again.prior.probs());
        }
    }

    // simulator determinism
    let (a, ta, pa) = simulate_annotators(25, 3, &sim_vocab(), 256, RngSeed(7)).unwrap();
    let (b, tb, pb) = simulate_annotators(25, 3, &sim_vocab(), 256, RngSeed(7)).unwrap();
    assert_eq!(pa.weights(), pb.weights());
    for (x, y) in a.items.iter().zip(&b.items) {
        assert_eq!(x.raw_annotations, y.raw_annotations);
        assert_eq!(x.prior.probs(), y.prior.probs());
    }
    for (id, dist) in &ta.rho_star {
        assert_eq!(tb.rho_star[id].probs(), dist.probs());
    }

    // empirical priors stay exact histograms
    let p = empirical_prior(&[0, 0, 1], 2, 0.0).unwrap();
    assert_eq!(p.probs(), &[2.0 / 3.0, 1.0 / 3.0]);

    pass(
        "criterion 10 (ingestion bit-exactness)",
        "11/4 partition; 5000 bracket draws; seed-deterministic converters".to_string(),
    );
}
