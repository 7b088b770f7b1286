//! Lexical-overlap screening of synthetic candidates.
//!
//! Scores use lowercased words with punctuation stripped. Flags are advisory:
//! a flagged candidate waits for a reviewer, it is never dropped here.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::generator::{CandidateStatus, GenerationRecord};
use crate::scalar::{self, Scalar};
use crate::text;

fn ngram_set(words: &[String], n: usize) -> HashSet<String> {
    if n == 0 || words.len() < n {
        return HashSet::new();
    }
    words.windows(n).map(|w| w.join(" ")).collect()
}

fn jaccard_of<T: Scalar>(a: &HashSet<String>, b: &HashSet<String>) -> T {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        return T::zero();
    }
    T::from_usize_lossy(inter) / T::from_usize_lossy(union)
}

fn containment_of<T: Scalar>(candidate: &HashSet<String>, reference: &HashSet<String>) -> T {
    if candidate.is_empty() {
        return T::zero();
    }
    let inter = candidate.intersection(reference).count();
    T::from_usize_lossy(inter) / T::from_usize_lossy(candidate.len())
}

/// `|A ∩ B| / |A ∪ B|` over word n-gram sets; zero when both are empty.
pub fn ngram_jaccard<T: Scalar>(a: &str, b: &str, n: usize) -> T {
    let (wa, wb) = (text::normalized_words(a), text::normalized_words(b));
    jaccard_of(&ngram_set(&wa, n), &ngram_set(&wb, n))
}

/// `|C ∩ R| / |C|` over word n-gram sets; zero when the candidate has none.
pub fn ngram_containment<T: Scalar>(candidate: &str, reference: &str, n: usize) -> T {
    let (wc, wr) = (text::normalized_words(candidate), text::normalized_words(reference));
    containment_of(&ngram_set(&wc, n), &ngram_set(&wr, n))
}

/// Word spans `[start, end)` of `candidate` covered by n-grams that also occur
/// in `reference`, merged where they overlap. Indices refer to normalized words.
pub fn shared_spans(candidate: &str, reference: &str, n: usize) -> Vec<(usize, usize)> {
    let wc = text::normalized_words(candidate);
    let reference = ngram_set(&text::normalized_words(reference), n);
    let mut spans: Vec<(usize, usize)> = Vec::new();
    if n == 0 || wc.len() < n {
        return spans;
    }
    for (i, w) in wc.windows(n).enumerate() {
        if reference.contains(&w.join(" ")) {
            match spans.last_mut() {
                Some(last) if last.1 >= i => last.1 = i + n,
                _ => spans.push((i, i + n)),
            }
        }
    }
    spans
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Unigram Jaccard above which a candidate is a near duplicate.
    pub near_duplicate_jaccard: f64,
    /// N-gram containment above which a candidate has high overlap.
    pub high_overlap_containment: f64,
    pub containment_n: usize,
    pub length_ratio_min: f64,
    pub length_ratio_max: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            near_duplicate_jaccard: 0.9,
            high_overlap_containment: 0.5,
            containment_n: 5,
            length_ratio_min: 0.5,
            length_ratio_max: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    NearDuplicate,
    HighOverlap,
    LengthOutOfBand,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSimilarity<T> {
    pub candidate_id: String,
    pub max_jaccard_vs_original: T,
    pub max_jaccard_vs_synthetic: T,
    pub max_ngram_containment: T,
    /// Word count over the mean word count of the prompt examples; zero for empty text.
    pub length_ratio: T,
    pub closest_original: Option<String>,
    pub flags: BTreeSet<Flag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary<T> {
    pub candidates: usize,
    pub mean_max_jaccard_vs_original: T,
    pub mean_max_jaccard_vs_synthetic: T,
    pub mean_max_ngram_containment: T,
    pub max_jaccard_vs_original: T,
    pub max_jaccard_vs_synthetic: T,
    pub max_ngram_containment: T,
    pub flag_counts: BTreeMap<Flag, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport<T> {
    pub thresholds: Thresholds,
    pub entries: Vec<CandidateSimilarity<T>>,
    pub summary: BatchSummary<T>,
}

impl<T> SimilarityReport<T> {
    pub fn count(&self, flag: Flag) -> usize {
        self.summary.flag_counts.get(&flag).copied().unwrap_or(0)
    }

    pub fn entry(&self, candidate_id: &str) -> Option<&CandidateSimilarity<T>> {
        self.entries.iter().find(|e| e.candidate_id == candidate_id)
    }
}

impl<T: Scalar> SimilarityReport<T> {
    /// Assembles a report from already-scored entries, e.g. several batches.
    pub fn from_entries(thresholds: Thresholds, entries: Vec<CandidateSimilarity<T>>) -> Self {
        let summary = summarize(&entries);
        SimilarityReport {
            thresholds,
            entries,
            summary,
        }
    }
}

struct Profile {
    id: String,
    words: usize,
    unigrams: HashSet<String>,
    ngrams: HashSet<String>,
}

impl Profile {
    fn new(id: &str, text: &str, n: usize) -> Self {
        let words = text::normalized_words(text);
        Profile {
            id: id.to_owned(),
            words: words.len(),
            unigrams: ngram_set(&words, 1),
            ngrams: ngram_set(&words, n),
        }
    }
}

/// A text to screen: its id, text and the ids of the examples it was built from.
#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub id: &'a str,
    pub text: &'a str,
    pub example_ids: &'a [String],
}

impl<'a> From<&'a GenerationRecord> for Candidate<'a> {
    fn from(r: &'a GenerationRecord) -> Self {
        Candidate {
            id: &r.candidate_id,
            text: &r.text,
            example_ids: &r.example_ids,
        }
    }
}

/// Scores every candidate against all originals and all other candidates.
pub fn compute_similarity<T: Scalar>(
    candidates: &[Candidate<'_>],
    originals: &Corpus,
    thresholds: &Thresholds,
) -> SimilarityReport<T> {
    let n = thresholds.containment_n.max(1);
    let orig: Vec<Profile> = originals
        .examples()
        .par_iter()
        .map(|e| Profile::new(&e.id, &e.text, n))
        .collect();
    let by_id: HashMap<&str, &Profile> = orig.iter().map(|p| (p.id.as_str(), p)).collect();
    let mean_orig_len = scalar::mean(&orig.iter().map(|p| p.words as f64).collect::<Vec<_>>());
    let cand: Vec<Profile> = candidates.par_iter().map(|c| Profile::new(c.id, c.text, n)).collect();

    let entries: Vec<CandidateSimilarity<T>> = candidates
        .par_iter()
        .enumerate()
        .map(|(i, c)| {
            let me = &cand[i];
            let mut best_orig = T::zero();
            let mut closest = None;
            let mut best_contain = T::zero();
            for o in &orig {
                let j: T = jaccard_of(&me.unigrams, &o.unigrams);
                if closest.is_none() || j > best_orig {
                    best_orig = j;
                    closest = Some(o.id.clone());
                }
                best_contain = best_contain.max(containment_of(&me.ngrams, &o.ngrams));
            }
            let mut best_syn = T::zero();
            for (k, other) in cand.iter().enumerate() {
                if k == i {
                    continue;
                }
                best_syn = best_syn.max(jaccard_of(&me.unigrams, &other.unigrams));
                best_contain = best_contain.max(containment_of(&me.ngrams, &other.ngrams));
            }

            let prompt_lens: Vec<f64> = c
                .example_ids
                .iter()
                .filter_map(|id| by_id.get(id.as_str()).map(|p| p.words as f64))
                .collect();
            let reference_len = if prompt_lens.is_empty() {
                mean_orig_len
            } else {
                scalar::mean(&prompt_lens)
            };
            let length_ratio = if me.words == 0 {
                0.0
            } else if reference_len > 0.0 {
                me.words as f64 / reference_len
            } else {
                1.0
            };

            let mut flags = BTreeSet::new();
            if me.words == 0 {
                flags.insert(Flag::Empty);
            }
            let dup = T::from(thresholds.near_duplicate_jaccard).unwrap();
            if best_orig > dup || best_syn > dup {
                flags.insert(Flag::NearDuplicate);
            }
            if best_contain > T::from(thresholds.high_overlap_containment).unwrap() {
                flags.insert(Flag::HighOverlap);
            }
            if me.words > 0 && !(thresholds.length_ratio_min..=thresholds.length_ratio_max).contains(&length_ratio) {
                flags.insert(Flag::LengthOutOfBand);
            }
            CandidateSimilarity {
                candidate_id: c.id.to_owned(),
                max_jaccard_vs_original: best_orig,
                max_jaccard_vs_synthetic: best_syn,
                max_ngram_containment: best_contain,
                length_ratio: T::from(length_ratio).unwrap(),
                closest_original: closest,
                flags,
            }
        })
        .collect();

    let summary = summarize(&entries);
    SimilarityReport {
        thresholds: *thresholds,
        entries,
        summary,
    }
}

fn summarize<T: Scalar>(entries: &[CandidateSimilarity<T>]) -> BatchSummary<T> {
    let col = |f: fn(&CandidateSimilarity<T>) -> T| entries.iter().map(f).collect::<Vec<T>>();
    let max = |xs: &[T]| xs.iter().copied().fold(T::zero(), T::max);
    let (jo, js, nc) = (
        col(|e| e.max_jaccard_vs_original),
        col(|e| e.max_jaccard_vs_synthetic),
        col(|e| e.max_ngram_containment),
    );
    let mut flag_counts = BTreeMap::new();
    for e in entries {
        for f in &e.flags {
            *flag_counts.entry(*f).or_insert(0) += 1;
        }
    }
    BatchSummary {
        candidates: entries.len(),
        mean_max_jaccard_vs_original: scalar::mean(&jo),
        mean_max_jaccard_vs_synthetic: scalar::mean(&js),
        mean_max_ngram_containment: scalar::mean(&nc),
        max_jaccard_vs_original: max(&jo),
        max_jaccard_vs_synthetic: max(&js),
        max_ngram_containment: max(&nc),
        flag_counts,
    }
}

/// Scores a batch and marks pending candidates that raised any flag as `flagged`.
pub fn validate_batch<T: Scalar>(
    candidates: &mut [GenerationRecord],
    originals: &Corpus,
    thresholds: &Thresholds,
) -> SimilarityReport<T> {
    let views: Vec<Candidate<'_>> = candidates.iter().map(Candidate::from).collect();
    let report = compute_similarity(&views, originals, thresholds);
    for (record, entry) in candidates.iter_mut().zip(&report.entries) {
        if !entry.flags.is_empty() && record.status == CandidateStatus::Pending {
            record.status = CandidateStatus::Flagged;
        }
    }
    report
}
