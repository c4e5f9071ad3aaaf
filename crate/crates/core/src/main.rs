use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dpm::calibrate::CalibConfig;
use dpm::cli::{
    cmd_calibrate, cmd_compare_rl, cmd_decode, cmd_eval, cmd_gen_train, cmd_ingest, cmd_score,
    cmd_simulate, cmd_sweep_k, cmd_train_pref, BenchSource, DecodeStrategy, IngestFormat, PrefKind,
    RunConfig,
};
use dpm::dpm::TrainConfig;
use dpm::error::{Error, Result};
use dpm::experiment::BenchOptions;
use dpm::rng::RngSeed;
use dpm::seqgen::GenTrainConfig;

/// Disagreement-aware preference modeling and generator calibration.
#[derive(Parser)]
#[command(name = "dpm", version, about)]
struct Cli {
    /// Plain-text `key = value` configuration file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for stochastic operations.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory relative output paths are written under.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct PrefTrainArgs {
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    inner_steps: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    /// Prior smoothing ε for annotation histograms.
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Args, Clone)]
struct CalibArgs {
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    length_penalty: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    diversity_penalty: Option<f64>,
    #[arg(long)]
    nll_weight: Option<f64>,
    #[arg(long)]
    nucleus_p: Option<f64>,
    /// Candidate count for pre/post metric decoding (defaults to k).
    #[arg(long)]
    eval_k: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Convert an annotation file (MI codes or global consensus) into the
    /// dataset JSONL format.
    Ingest {
        /// Input schema: `mi` or `consensus`.
        #[arg(long)]
        format: String,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic annotated dataset with known ground truth.
    Simulate {
        #[arg(long)]
        items: Option<usize>,
        #[arg(long)]
        annotators: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        /// Comma-separated token pool for synthetic texts.
        #[arg(long)]
        vocab: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Also write the planted generator scorer.
        #[arg(long)]
        planted: Option<PathBuf>,
    },
    /// Train a preference model: d-PM or one of the baselines.
    TrainPref {
        /// One of `dpm`, `major`, `soft`, `wo-agg`.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        train: PrefTrainArgs,
        /// Warm-start scorer instead of the all-zero init (d-PM only).
        #[arg(long)]
        init_scorer: Option<PathBuf>,
        /// Write the first-epoch q/a/r snapshot as CSV before training.
        #[arg(long)]
        debug_dump: Option<PathBuf>,
    },
    /// Score a dataset with a serialized scorer.
    Score {
        #[arg(long)]
        scorer: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the toy generator on (x, y) pairs.
    GenTrain {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        gen_dim: Option<usize>,
        #[arg(long)]
        ngram_order: Option<usize>,
        #[arg(long)]
        max_len: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Decode candidates for each input; JSONL, one candidate set per line.
    Decode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// One of `greedy`, `beam`, `diverse`, `nucleus`.
        #[arg(long)]
        strategy: String,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        penalty: Option<f64>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Calibrate a generator against a preference scorer.
    Calibrate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scorer: PathBuf,
        /// Training pairs JSONL (`{"x": ..., "y": ...}` per line).
        #[arg(long)]
        data: PathBuf,
        /// Held-out inputs for pre/post metrics (defaults to the pair inputs).
        #[arg(long)]
        eval_inputs: Option<PathBuf>,
        #[command(flatten)]
        calib: CalibArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Run the calibrate pipeline for each K and emit one row per K.
    SweepK {
        /// Comma-separated candidate counts, e.g. `5,10,15,20`.
        #[arg(long)]
        ks: Option<String>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        scorer: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        eval_inputs: Option<PathBuf>,
        #[command(flatten)]
        calib: CalibArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Paired contrastive-vs-REINFORCE comparison on identical data.
    CompareRl {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        scorer: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        eval_inputs: Option<PathBuf>,
        #[command(flatten)]
        calib: CalibArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate scorers against a ground-truth file.
    Eval {
        /// Comma-separated scorer paths.
        #[arg(long)]
        scorers: String,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn resolve_out(out_dir: Option<&Path>, path: &Path) -> PathBuf {
    match out_dir {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    }
}

fn train_config(args: &PrefTrainArgs, cfg: &RunConfig, seed: RngSeed) -> Result<TrainConfig> {
    let defaults = TrainConfig::default();
    Ok(TrainConfig {
        lr: args.lr.or(cfg.get_f64("lr")?).unwrap_or(defaults.lr),
        inner_steps: args
            .inner_steps
            .or(cfg.get_usize("inner_steps")?)
            .unwrap_or(defaults.inner_steps),
        max_epochs: args
            .max_epochs
            .or(cfg.get_usize("max_epochs")?)
            .unwrap_or(defaults.max_epochs),
        tol: args.tol.or(cfg.get_f64("tol")?).unwrap_or(defaults.tol),
        dim: args.dim.or(cfg.get_usize("dim")?).unwrap_or(defaults.dim),
        epsilon: args
            .epsilon
            .or(cfg.get_f64("epsilon")?)
            .unwrap_or(defaults.epsilon),
        seed,
    })
}

fn calib_config(args: &CalibArgs, cfg: &RunConfig, seed: RngSeed) -> Result<CalibConfig> {
    let defaults = CalibConfig::default();
    Ok(CalibConfig {
        k: args.k.or(cfg.get_usize("k")?).unwrap_or(defaults.k),
        margin: args
            .margin
            .or(cfg.get_f64("margin")?)
            .unwrap_or(defaults.margin),
        length_penalty: args
            .length_penalty
            .or(cfg.get_f64("length_penalty")?)
            .unwrap_or(defaults.length_penalty),
        lr: args.lr.or(cfg.get_f64("lr")?).unwrap_or(defaults.lr),
        steps: args
            .steps
            .or(cfg.get_usize("steps")?)
            .unwrap_or(defaults.steps),
        seed,
        diversity_penalty: args
            .diversity_penalty
            .or(cfg.get_f64("diversity_penalty")?)
            .unwrap_or(defaults.diversity_penalty),
        nll_weight: match args.nll_weight {
            Some(v) => Some(v),
            None => cfg.get_f64("nll_weight")?,
        },
        nucleus_p: args
            .nucleus_p
            .or(cfg.get_f64("nucleus_p")?)
            .unwrap_or(defaults.nucleus_p),
        eval_k: match args.eval_k {
            Some(v) => Some(v),
            None => cfg.get_usize("eval_k")?,
        },
    })
}

fn parse_vocab(raw: Option<String>) -> Option<Vec<String>> {
    raw.map(|s| {
        s.split(',')
            .map(|t| t.trim().to_owned())
            .filter(|t| !t.is_empty())
            .collect()
    })
}

fn bench_source<'a>(
    model: &'a Option<PathBuf>,
    scorer: &'a Option<PathBuf>,
    data: &'a Option<PathBuf>,
    eval_inputs: &'a Option<PathBuf>,
    seed: RngSeed,
) -> Result<BenchSource<'a>> {
    match (model, scorer, data) {
        (Some(m), Some(s), Some(d)) => Ok(BenchSource::Files {
            model: m,
            scorer: s,
            data: d,
            eval_inputs: eval_inputs.as_deref(),
        }),
        (None, None, None) => Ok(BenchSource::Synthetic {
            seed,
            options: BenchOptions::default(),
        }),
        _ => Err(Error::InvalidConfigValue {
            key: "model/scorer/data".into(),
            message:
                "provide all of --model, --scorer and --data, or none for the synthetic benchmark"
                    .into(),
        }),
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::empty(),
    };
    let seed = RngSeed(cli.seed.or(cfg.get_u64("seed")?).unwrap_or(0));
    let out_dir = cli
        .out_dir
        .clone()
        .or_else(|| cfg.get_str("out_dir").map(PathBuf::from));
    if let Some(dir) = &out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let out_in = |p: &Path| resolve_out(out_dir.as_deref(), p);

    match cli.command {
        Command::Ingest { format, input, out } => {
            let format = match format.as_str() {
                "mi" => IngestFormat::Mi,
                "consensus" => IngestFormat::Consensus,
                other => {
                    return Err(Error::InvalidConfigValue {
                        key: "format".into(),
                        message: format!("unknown format '{other}'"),
                    })
                }
            };
            cmd_ingest(format, &input, &out_in(&out), seed)
        }
        Command::Simulate {
            items,
            annotators,
            dim,
            vocab,
            out,
            truth,
            planted,
        } => cmd_simulate(
            items.or(cfg.get_usize("items")?).unwrap_or(200),
            annotators.or(cfg.get_usize("annotators")?).unwrap_or(3),
            dim.or(cfg.get_usize("dim")?).unwrap_or(512),
            parse_vocab(vocab.or_else(|| cfg.get_str("vocab").map(str::to_owned))),
            &out_in(&out),
            &out_in(&truth),
            planted.map(|p| out_in(&p)).as_deref(),
            seed,
        ),
        Command::TrainPref {
            kind,
            data,
            out,
            report,
            train,
            init_scorer,
            debug_dump,
        } => {
            let kind: PrefKind = kind.parse()?;
            let config = train_config(&train, &cfg, seed)?;
            cmd_train_pref(
                kind,
                &data,
                &out_in(&out),
                report.map(|p| out_in(&p)).as_deref(),
                &config,
                init_scorer.as_deref(),
                debug_dump.map(|p| out_in(&p)).as_deref(),
            )
        }
        Command::Score { scorer, data, out } => cmd_score(&scorer, &data, &out_in(&out)),
        Command::GenTrain {
            data,
            out,
            report,
            gen_dim,
            ngram_order,
            max_len,
            lr,
            steps,
        } => {
            let defaults = GenTrainConfig::default();
            let train = GenTrainConfig {
                lr: lr.or(cfg.get_f64("gen_lr")?).unwrap_or(defaults.lr),
                steps: steps
                    .or(cfg.get_usize("gen_steps")?)
                    .unwrap_or(defaults.steps),
                tol: defaults.tol,
            };
            cmd_gen_train(
                &data,
                &out_in(&out),
                report.map(|p| out_in(&p)).as_deref(),
                gen_dim
                    .or(cfg.get_usize("gen_dim")?)
                    .unwrap_or(dpm::seqgen::DEFAULT_GEN_DIM),
                ngram_order
                    .or(cfg.get_usize("ngram_order")?)
                    .unwrap_or(dpm::seqgen::DEFAULT_NGRAM_ORDER),
                max_len
                    .or(cfg.get_usize("max_len")?)
                    .unwrap_or(dpm::seqgen::DEFAULT_MAX_LEN),
                &train,
            )
        }
        Command::Decode {
            model,
            input,
            strategy,
            width,
            k,
            penalty,
            p,
            out,
        } => {
            let strategy = match strategy.as_str() {
                "greedy" => DecodeStrategy::Greedy,
                "beam" => DecodeStrategy::Beam {
                    width: width.unwrap_or(3),
                },
                "diverse" => DecodeStrategy::Diverse {
                    k: k.or(cfg.get_usize("k")?).unwrap_or(10),
                    penalty: penalty.or(cfg.get_f64("diversity_penalty")?).unwrap_or(0.5),
                },
                "nucleus" => DecodeStrategy::Nucleus {
                    p: p.or(cfg.get_f64("nucleus_p")?).unwrap_or(0.9),
                },
                other => {
                    return Err(Error::InvalidConfigValue {
                        key: "strategy".into(),
                        message: format!("unknown strategy '{other}'"),
                    })
                }
            };
            cmd_decode(&model, &input, strategy, seed, &out_in(&out))
        }
        Command::Calibrate {
            model,
            scorer,
            data,
            eval_inputs,
            calib,
            out,
            report,
        } => {
            let config = calib_config(&calib, &cfg, seed)?;
            cmd_calibrate(
                &model,
                &scorer,
                &data,
                eval_inputs.as_deref(),
                &config,
                &out_in(&out),
                &out_in(&report),
            )
        }
        Command::SweepK {
            ks,
            model,
            scorer,
            data,
            eval_inputs,
            calib,
            out,
        } => {
            let ks: Vec<usize> = match ks {
                Some(raw) => raw
                    .split(',')
                    .map(|p| {
                        p.trim()
                            .parse::<usize>()
                            .map_err(|_| Error::InvalidConfigValue {
                                key: "ks".into(),
                                message: format!("cannot parse '{p}'"),
                            })
                    })
                    .collect::<Result<_>>()?,
                None => cfg
                    .get_usize_list("ks")?
                    .unwrap_or_else(|| vec![5, 10, 15, 20]),
            };
            let config = calib_config(&calib, &cfg, seed)?;
            let source = bench_source(&model, &scorer, &data, &eval_inputs, seed)?;
            cmd_sweep_k(&source, &ks, &config, &out_in(&out))
        }
        Command::CompareRl {
            model,
            scorer,
            data,
            eval_inputs,
            calib,
            out,
        } => {
            let config = calib_config(&calib, &cfg, seed)?;
            let source = bench_source(&model, &scorer, &data, &eval_inputs, seed)?;
            cmd_compare_rl(&source, &config, &out_in(&out))
        }
        Command::Eval {
            scorers,
            truth,
            data,
            out,
        } => {
            let paths: Vec<PathBuf> = scorers
                .split(',')
                .map(|s| PathBuf::from(s.trim()))
                .collect();
            cmd_eval(&paths, &truth, &data, &out_in(&out))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
