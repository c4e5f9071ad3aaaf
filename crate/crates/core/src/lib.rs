//! Disagreement-aware preference modeling and generator calibration.
//!
//! A desk-scale toolkit with three layers:
//!
//! * preference models over (context, text) pairs with hashed n-gram
//!   features: a variational trainer that refines noisy multi-annotator
//!   labels into a universal-preference posterior, plus majority-vote,
//!   soft-label and no-aggregation baselines ([`dpm`]);
//! * a toy autoregressive sequence model with greedy, beam, diverse-beam
//!   and nucleus decoding ([`seqgen`]);
//! * a contrastive calibration loop that aligns the sequence model's
//!   likelihoods with preference scores, and a REINFORCE baseline for
//!   throughput comparison ([`calibrate`]).
//!
//! Everything is deterministic given a seed, and every analytic gradient
//! is covered by a finite-difference check ([`gradcheck`]).

pub mod calibrate;
pub mod cli;
pub mod data;
pub mod dpm;
pub mod error;
pub mod experiment;
pub mod features;
pub mod gradcheck;
pub mod ingest;
pub mod metrics;
pub mod prob;
pub mod rng;
pub mod seqgen;

pub use data::{AnnotatedItem, Dataset};
pub use dpm::{Scorer, TrainConfig, TrainReport};
pub use error::{Error, Result};
pub use features::{featurize, FeatureVector};
pub use prob::{empirical_prior, kl_divergence, PrefDist};
pub use rng::RngSeed;
pub use seqgen::{Candidate, CandidateSet, SeqModel};
