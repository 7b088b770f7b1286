//! Multinomial naive Bayes over hashed word unigrams and bigrams.
//!
//! Hashing scheme v1: features are the normalized words (`text::normalized_words`)
//! rendered as `u\x1f<word>` and `b\x1f<word> <word>`, hashed with 64-bit
//! FNV-1a and masked to the low 18 bits. Changing any of this changes every
//! trained model, so bump [`HASH_VERSION`] with it.
//!
//! Smoothing runs over the training vocabulary (buckets seen in any class):
//! `P(b | c) = (n_cb + α) / (n_c + α·V)`. Buckets outside the vocabulary are
//! ignored at prediction time.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::LabeledExample;
use crate::error::{Error, Result};
use crate::seed::fnv1a64;
use crate::text;

pub const HASH_VERSION: u32 = 1;
pub const HASH_BITS: u32 = 18;
pub const BUCKETS: usize = 1 << HASH_BITS;
pub const DEFAULT_ALPHA: f64 = 1.0;

/// Sparse bucket counts.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    pub counts: BTreeMap<u32, u32>,
}

impl FeatureVector {
    pub fn total(&self) -> u64 {
        self.counts.values().map(|&c| u64::from(c)).sum()
    }
}

pub fn bucket(feature: &str) -> u32 {
    (fnv1a64(feature.as_bytes()) & (BUCKETS as u64 - 1)) as u32
}

/// Feature strings before hashing, in text order.
pub fn feature_strings(input: &str) -> Vec<String> {
    let words = text::normalized_words(input);
    let mut out: Vec<String> = words.iter().map(|w| format!("u\x1f{w}")).collect();
    out.extend(words.windows(2).map(|p| format!("b\x1f{} {}", p[0], p[1])));
    out
}

pub fn featurize(input: &str) -> FeatureVector {
    let mut counts = BTreeMap::new();
    for f in feature_strings(input) {
        *counts.entry(bucket(&f)).or_insert(0) += 1;
    }
    FeatureVector { counts }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ClassModel {
    log_prior: f64,
    /// Log-likelihood for buckets seen in training.
    seen: BTreeMap<u32, f64>,
    /// Log-likelihood shared by all unseen buckets.
    unseen: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    labels: Vec<String>,
    classes: Vec<ClassModel>,
    alpha: f64,
    vocab_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: String,
    /// Posterior per label, aligned with [`TrainedModel::labels`].
    pub scores: Vec<f64>,
}

pub fn train(examples: &[LabeledExample], alpha: f64) -> Result<TrainedModel> {
    let feats: Vec<(FeatureVector, &str)> = examples
        .iter()
        .map(|e| (featurize(&e.text), e.label.as_str()))
        .collect();
    train_features(feats.iter().map(|(f, l)| (f, *l)), alpha)
}

pub fn train_features<'a>(
    data: impl IntoIterator<Item = (&'a FeatureVector, &'a str)>,
    alpha: f64,
) -> Result<TrainedModel> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("smoothing alpha must be positive, got {alpha}")));
    }
    let mut docs: BTreeMap<&str, usize> = BTreeMap::new();
    let mut counts: BTreeMap<&str, BTreeMap<u32, u64>> = BTreeMap::new();
    for (fv, label) in data {
        *docs.entry(label).or_insert(0) += 1;
        let c = counts.entry(label).or_default();
        for (&b, &n) in &fv.counts {
            *c.entry(b).or_insert(0) += u64::from(n);
        }
    }
    if docs.len() < 2 {
        return Err(Error::invalid(format!(
            "training needs at least two labels, found {}",
            docs.len()
        )));
    }
    let n_docs: usize = docs.values().sum();
    let vocab: std::collections::BTreeSet<u32> = counts.values().flat_map(|c| c.keys().copied()).collect();
    let vocab_size = vocab.len().max(1);
    let mut labels = Vec::with_capacity(docs.len());
    let mut classes = Vec::with_capacity(docs.len());
    for (label, &n) in &docs {
        let c = &counts[label];
        let total: u64 = c.values().sum();
        let denom = (total as f64 + alpha * vocab_size as f64).ln();
        let seen = c.iter().map(|(&b, &k)| (b, (k as f64 + alpha).ln() - denom)).collect();
        labels.push((*label).to_owned());
        classes.push(ClassModel {
            log_prior: (n as f64 / n_docs as f64).ln(),
            seen,
            unseen: alpha.ln() - denom,
        });
    }
    Ok(TrainedModel {
        labels,
        classes,
        alpha,
        vocab_size,
    })
}

impl TrainedModel {
    /// Labels in lexicographic order.
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn in_vocab(&self, bucket: u32) -> bool {
        self.classes.iter().any(|c| c.seen.contains_key(&bucket))
    }

    pub fn log_priors(&self) -> Vec<f64> {
        self.classes.iter().map(|c| c.log_prior).collect()
    }

    /// Unnormalized joint log-probabilities per label.
    pub fn joint_log_scores(&self, fv: &FeatureVector) -> Vec<f64> {
        self.classes
            .iter()
            .map(|c| {
                c.log_prior
                    + fv.counts
                        .iter()
                        .filter(|(b, _)| self.in_vocab(**b))
                        .map(|(b, &n)| f64::from(n) * c.seen.get(b).copied().unwrap_or(c.unseen))
                        .sum::<f64>()
            })
            .collect()
    }

    pub fn predict_features(&self, fv: &FeatureVector) -> Prediction {
        let joint = self.joint_log_scores(fv);
        // strict > keeps the lexicographically smallest label on ties
        let mut best = 0;
        for (i, &s) in joint.iter().enumerate().skip(1) {
            if s > joint[best] {
                best = i;
            }
        }
        let max = joint[best];
        let exp: Vec<f64> = joint.iter().map(|&s| (s - max).exp()).collect();
        let z: f64 = exp.iter().sum();
        Prediction {
            label: self.labels[best].clone(),
            scores: exp.into_iter().map(|e| e / z).collect(),
        }
    }

    pub fn predict_text(&self, input: &str) -> Prediction {
        self.predict_features(&featurize(input))
    }

    /// SHA-256 over labels and every parameter's bit pattern.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(HASH_VERSION.to_le_bytes());
        h.update(self.alpha.to_bits().to_le_bytes());
        h.update((self.vocab_size as u64).to_le_bytes());
        for (label, c) in self.labels.iter().zip(&self.classes) {
            h.update(label.as_bytes());
            h.update([0]);
            h.update(c.log_prior.to_bits().to_le_bytes());
            h.update(c.unseen.to_bits().to_le_bytes());
            for (b, v) in &c.seen {
                h.update(b.to_le_bytes());
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

pub fn predict(model: &TrainedModel, examples: &[LabeledExample]) -> Vec<Prediction> {
    examples.iter().map(|e| model.predict_text(&e.text)).collect()
}
