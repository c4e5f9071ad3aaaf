//! Converters from the two supported annotation schemas into datasets,
//! plus a synthetic-annotator simulator with known ground truth.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{AnnotatedItem, Dataset};
use crate::dpm::Scorer;
use crate::error::{Error, Result};
use crate::features::featurize;
use crate::prob::{empirical_prior, softmax, PrefDist};
use crate::rng::RngSeed;

/// The 15 fine-grained MI utterance codes and their binary class:
/// 0 = acceptable (MI Adherent + Relational), 1 = unacceptable
/// (MI Non-Adherent).
pub const MI_CODES: [(&str, usize); 15] = [
    ("Advise with Permission", 0),
    ("Affirm", 0),
    ("Emphasize Autonomy", 0),
    ("Support", 0),
    ("Closed Question", 0),
    ("Open Question", 0),
    ("Simple Reflection", 0),
    ("Complex Reflection", 0),
    ("Give Information", 0),
    ("Self-Disclose", 0),
    ("Other", 0),
    ("Advise without Permission", 1),
    ("Confront", 1),
    ("Direct", 1),
    ("Warn", 1),
];

/// Map a fine-grained MI code name to its binary class index.
pub fn map_mi_code(code: &str) -> Result<usize> {
    let trimmed = code.trim();
    MI_CODES
        .iter()
        .find(|(name, _)| *name == trimmed)
        .map(|&(_, class)| class)
        .ok_or_else(|| Error::UnknownMiCode(code.to_owned()))
}

/// One multi-expert annotated response in the MI schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MiCodeRecord {
    pub context: String,
    pub text: String,
    pub codes: Vec<String>,
}

/// Convert an MI record: map codes to classes, build the raw empirical
/// prior.
pub fn mi_to_item(id: &str, record: &MiCodeRecord) -> Result<AnnotatedItem> {
    if record.codes.is_empty() {
        return Err(Error::NoAnnotations);
    }
    let annotations = record
        .codes
        .iter()
        .map(|c| map_mi_code(c))
        .collect::<Result<Vec<usize>>>()?;
    let prior = empirical_prior(&annotations, 2, 0.0)?;
    Ok(AnnotatedItem {
        id: id.to_owned(),
        context: crate::features::tokenize(&record.context),
        text: crate::features::tokenize(&record.text),
        prior,
        raw_annotations: Some(annotations),
    })
}

/// One global-consensus annotated record: scale 1..=5.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsensusRecord {
    pub context: String,
    pub text: String,
    pub scale: i64,
}

/// Consensus brackets per scale value: the acceptable-class probability β
/// is drawn uniformly from the bracket.
pub const CONSENSUS_BRACKETS: [(f64, f64); 5] = [
    (0.0, 0.01),  // 1: nobody (<1%)
    (0.05, 0.25), // 2: rare (5%~25%)
    (0.45, 0.55), // 3: controversial (~50%)
    (0.75, 0.90), // 4: most (75%~90%)
    (0.99, 1.0),  // 5: all (>99%)
];

/// Convert a consensus record: draw β from the scale's bracket (seeded)
/// and set the prior to (β, 1−β). No raw annotations exist here.
pub fn consensus_to_item(
    id: &str,
    record: &ConsensusRecord,
    seed: RngSeed,
) -> Result<AnnotatedItem> {
    if !(1..=5).contains(&record.scale) {
        return Err(Error::InvalidScale(record.scale));
    }
    let (lo, hi) = CONSENSUS_BRACKETS[(record.scale - 1) as usize];
    let mut rng = seed.rng();
    let beta = lo + rng.gen::<f64>() * (hi - lo);
    Ok(AnnotatedItem {
        id: id.to_owned(),
        context: crate::features::tokenize(&record.context),
        text: crate::features::tokenize(&record.text),
        prior: PrefDist::new(vec![beta, 1.0 - beta])?,
        raw_annotations: None,
    })
}

/// Ground-truth universal preferences for a synthetic dataset.
#[derive(Debug, Clone)]
pub struct SyntheticTruth {
    pub rho_star: BTreeMap<String, PrefDist>,
}

#[derive(Serialize, Deserialize)]
struct TruthRecord {
    id: String,
    rho_star: Vec<f64>,
}

impl SyntheticTruth {
    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for (id, dist) in &self.rho_star {
            let rec = TruthRecord {
                id: id.clone(),
                rho_star: dist.probs().to_vec(),
            };
            serde_json::to_writer(&mut w, &rec).map_err(|e| Error::InvalidDist(e.to_string()))?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_jsonl(path: &Path) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut rho_star = BTreeMap::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: TruthRecord = serde_json::from_str(&line)
                .map_err(|e| Error::schema(lineno + 1, e.to_string()))?;
            rho_star.insert(rec.id, PrefDist::new(rec.rho_star)?);
        }
        Ok(SyntheticTruth { rho_star })
    }
}

/// Default token pool for synthetic items.
pub const DEFAULT_SIM_VOCAB: [&str; 16] = [
    "you", "can", "try", "this", "feel", "hard", "calm", "talk", "stop", "now", "help", "good",
    "bad", "really", "please", "maybe",
];

/// Standard deviation the planted logit gaps are scaled to; a logistic of
/// a roughly normal gap with this spread makes the acceptable-class mass
/// land near-uniform on (0, 1).
/// Fraction of vocabulary tokens that carry a strong preference signal.
const HOT_TOKEN_RATE: f64 = 0.12;

/// Logit magnitude of a charged token. Texts containing one get a
/// near-consensus ρ*; purely neutral texts stay controversial, mixing the
/// two regimes real annotation data shows.
const HOT_TOKEN_WEIGHT: f64 = 3.5;

/// Simulate a dataset of annotated items with known universal preferences.
///
/// A hidden linear scorer (over the same hashed features the real scorers
/// use) generates each item's true ρ* from randomly synthesized context and
/// text tokens; `n_annotators` labels are then drawn i.i.d. from ρ*, and
/// the prior is their raw histogram. Returns the dataset, the truth table,
/// and the planted scorer (which realizes ρ* exactly).
pub fn simulate_annotators(
    n_items: usize,
    n_annotators: usize,
    vocab: &[String],
    dim: usize,
    seed: RngSeed,
) -> Result<(Dataset, SyntheticTruth, Scorer)> {
    assert!(n_items >= 1, "need at least one item");
    assert!(n_annotators >= 1, "need at least one annotator");
    assert!(!vocab.is_empty(), "need a non-empty vocabulary");
    let mut rng = seed.rng();

    // Planted signal lives on the unigram buckets of the vocabulary: a
    // small set of charged tokens carries strong evidence either way, the
    // rest is near-neutral noise.
    let hot_count = ((vocab.len() as f64 * HOT_TOKEN_RATE).round() as usize).max(1);
    // a fixed number of charged tokens with balanced signs keeps every
    // seed's preference landscape comparable
    let mut order: Vec<usize> = (0..vocab.len()).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let mut gap = vec![0.0; dim];
    for (rank, &tok_idx) in order.iter().enumerate() {
        let magnitude = if rank < hot_count {
            rng.gen_range(0.8 * HOT_TOKEN_WEIGHT..1.2 * HOT_TOKEN_WEIGHT)
        } else {
            rng.gen_range(0.0..0.4)
        };
        let sign = if rank % 2 == 0 { 1.0 } else { -1.0 };
        let bucket = crate::features::unigram_bucket(&vocab[tok_idx], dim);
        gap[bucket] += sign * magnitude;
    }

    // synthesize token sequences
    let mut contexts = Vec::with_capacity(n_items);
    let mut texts = Vec::with_capacity(n_items);
    let pick = |rng: &mut rand_chacha::ChaCha12Rng, lo: usize, hi: usize| -> Vec<String> {
        let len = rng.gen_range(lo..=hi);
        (0..len)
            .map(|_| vocab[rng.gen_range(0..vocab.len())].clone())
            .collect()
    };
    for _ in 0..n_items {
        contexts.push(pick(&mut rng, 2, 4));
        texts.push(pick(&mut rng, 3, 8));
    }
    let feats: Vec<_> = contexts
        .iter()
        .zip(&texts)
        .map(|(c, t)| featurize(c, t, dim))
        .collect();

    let mut weights = vec![0.0; 2 * dim];
    for j in 0..dim {
        weights[j] = gap[j] / 2.0;
        weights[dim + j] = -gap[j] / 2.0;
    }
    let planted = Scorer::from_weights(weights, 2, dim)?;

    let mut items = Vec::with_capacity(n_items);
    let mut rho_star = BTreeMap::new();
    let width = n_items.to_string().len();
    for (i, features) in feats.iter().enumerate() {
        let truth = PrefDist::new(softmax(&[
            features.dot(&planted.weights()[0..dim]),
            features.dot(&planted.weights()[dim..2 * dim]),
        ]))?;
        let annotations: Vec<usize> = (0..n_annotators)
            .map(|_| {
                if rng.gen::<f64>() < truth.probs()[0] {
                    0
                } else {
                    1
                }
            })
            .collect();
        let prior = empirical_prior(&annotations, 2, 0.0)?;
        let id = format!("item{i:0width$}");
        rho_star.insert(id.clone(), truth);
        items.push(AnnotatedItem {
            id,
            context: contexts[i].clone(),
            text: texts[i].clone(),
            prior,
            raw_annotations: Some(annotations),
        });
    }

    Ok((
        Dataset::new(items, 2)?,
        SyntheticTruth { rho_star },
        planted,
    ))
}

/// Read MI-schema JSONL into a dataset.
pub fn load_mi_jsonl(path: &Path) -> Result<Dataset> {
    let reader = BufReader::new(File::open(path)?);
    let mut items = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: MiCodeRecord =
            serde_json::from_str(&line).map_err(|e| Error::schema(lineno, e.to_string()))?;
        let item = mi_to_item(&format!("mi{lineno:06}"), &record)
            .map_err(|e| Error::schema(lineno, e.to_string()))?;
        items.push(item);
    }
    Dataset::new(items, 2)
}

/// Read consensus-schema JSONL into a dataset; per-record β draws derive
/// from `seed` and the line number.
pub fn load_consensus_jsonl(path: &Path, seed: RngSeed) -> Result<Dataset> {
    let reader = BufReader::new(File::open(path)?);
    let mut items = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: ConsensusRecord =
            serde_json::from_str(&line).map_err(|e| Error::schema(lineno, e.to_string()))?;
        let item = consensus_to_item(
            &format!("gc{lineno:06}"),
            &record,
            seed.derive(lineno as u64),
        )
        .map_err(|e| Error::schema(lineno, e.to_string()))?;
        items.push(item);
    }
    Dataset::new(items, 2)
}
