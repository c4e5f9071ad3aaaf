//! Annotated datasets and their JSON Lines serialization.
//!
//! On disk each item is one JSON object with `id`, `context` (string,
//! whitespace-tokenized on load), `text` (string) and exactly one of
//! `annotations` (integer array) or `prior` (float array of length C).
//! Unknown fields are ignored.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{empirical_prior, PrefDist};

/// One (context, text, prior-preference) datapoint.
#[derive(Debug, Clone)]
pub struct AnnotatedItem {
    pub id: String,
    pub context: Vec<String>,
    pub text: Vec<String>,
    /// Prior preference distribution p_i; the probabilistic form of the label.
    pub prior: PrefDist,
    /// Individual annotator labels the prior was built from, when available.
    pub raw_annotations: Option<Vec<usize>>,
}

/// An ordered collection of items sharing one class count.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub items: Vec<AnnotatedItem>,
    pub class_count: usize,
}

#[derive(Serialize, Deserialize)]
struct ItemRecord {
    id: String,
    context: String,
    text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    annotations: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    prior: Option<Vec<f64>>,
}

impl Dataset {
    pub fn new(items: Vec<AnnotatedItem>, class_count: usize) -> Result<Self> {
        let mut seen = HashSet::new();
        for item in &items {
            if item.prior.class_count() != class_count {
                return Err(Error::DimMismatch {
                    expected: class_count,
                    got: item.prior.class_count(),
                });
            }
            if !seen.insert(item.id.clone()) {
                return Err(Error::InvalidDist(format!(
                    "duplicate item id '{}'",
                    item.id
                )));
            }
        }
        Ok(Dataset { items, class_count })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Load from JSON Lines. `epsilon` smooths priors built from
    /// annotations; 0 keeps the raw histogram.
    pub fn load_jsonl(path: &Path, class_count: usize, epsilon: f64) -> Result<Self> {
        let file = File::open(path)?;
        let reader = BufReader::new(file);
        let mut items = Vec::new();
        let mut seen = HashSet::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = lineno + 1;
            if line.trim().is_empty() {
                continue;
            }
            let record: ItemRecord =
                serde_json::from_str(&line).map_err(|e| Error::schema(lineno, e.to_string()))?;
            let item = item_from_record(record, class_count, epsilon)
                .map_err(|e| Error::schema(lineno, e.to_string()))?;
            if !seen.insert(item.id.clone()) {
                return Err(Error::schema(lineno, format!("duplicate id '{}'", item.id)));
            }
            items.push(item);
        }
        Dataset::new(items, class_count)
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        let mut w = BufWriter::new(file);
        for item in &self.items {
            let record = record_from_item(item);
            serde_json::to_writer(&mut w, &record)
                .map_err(|e| Error::InvalidDist(e.to_string()))?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Rebuild annotation-derived priors with smoothing `epsilon`; items
    /// without raw annotations keep their priors unchanged.
    pub fn with_smoothing(&self, epsilon: f64) -> Result<Dataset> {
        let mut items = self.items.clone();
        for item in &mut items {
            if let Some(ann) = &item.raw_annotations {
                item.prior = empirical_prior(ann, self.class_count, epsilon)?;
            }
        }
        Ok(Dataset {
            items,
            class_count: self.class_count,
        })
    }

    /// Items' raw annotations, or an error naming the first item without them.
    pub fn require_annotations(&self) -> Result<Vec<&[usize]>> {
        self.items
            .iter()
            .map(|item| {
                item.raw_annotations
                    .as_deref()
                    .ok_or_else(|| Error::MissingAnnotations(item.id.clone()))
            })
            .collect()
    }
}

fn item_from_record(record: ItemRecord, class_count: usize, epsilon: f64) -> Result<AnnotatedItem> {
    let (prior, raw) = match (record.annotations, record.prior) {
        (Some(ann), None) => {
            let prior = empirical_prior(&ann, class_count, epsilon)?;
            (prior, Some(ann))
        }
        (None, Some(p)) => {
            if p.len() != class_count {
                return Err(Error::DimMismatch {
                    expected: class_count,
                    got: p.len(),
                });
            }
            (PrefDist::new(p)?, None)
        }
        (Some(_), Some(_)) => {
            return Err(Error::InvalidDist(
                "item has both 'annotations' and 'prior'".into(),
            ))
        }
        (None, None) => {
            return Err(Error::InvalidDist(
                "item needs one of 'annotations' or 'prior'".into(),
            ))
        }
    };
    Ok(AnnotatedItem {
        id: record.id,
        context: crate::features::tokenize(&record.context),
        text: crate::features::tokenize(&record.text),
        prior,
        raw_annotations: raw,
    })
}

fn record_from_item(item: &AnnotatedItem) -> ItemRecord {
    // Emit annotations when the prior is exactly their raw histogram,
    // otherwise emit the prior itself; the format allows only one.
    let annotations_match = item.raw_annotations.as_ref().is_some_and(|ann| {
        empirical_prior(ann, item.prior.class_count(), 0.0)
            .map(|p| {
                p.probs()
                    .iter()
                    .zip(item.prior.probs())
                    .all(|(a, b)| (a - b).abs() < 1e-12)
            })
            .unwrap_or(false)
    });
    ItemRecord {
        id: item.id.clone(),
        context: item.context.join(" "),
        text: item.text.join(" "),
        annotations: if annotations_match {
            item.raw_annotations.clone()
        } else {
            None
        },
        prior: if annotations_match {
            None
        } else {
            Some(item.prior.probs().to_vec())
        },
    }
}
