//! Repeated stratified k-fold assignment.
//!
//! Only original examples are assigned to folds. Synthetic examples are
//! training-only and join the training side of every split.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub repeats: usize,
    pub seed: u64,
    /// Per repeat, example id to fold index in `[0, k)`.
    pub assignment: Vec<BTreeMap<String, usize>>,
    pub warnings: Vec<String>,
}

/// One train/eval pair as indices into the corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub repeat: usize,
    pub fold: usize,
    pub train: Vec<usize>,
    pub eval: Vec<usize>,
}

pub fn stratified_folds(c: &Corpus, k: usize, repeats: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    if repeats == 0 {
        return Err(Error::invalid("need at least one repeat"));
    }
    let mut by_class: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in c.examples().iter().filter(|e| !e.origin.is_synthetic()) {
        by_class.entry(&e.label).or_default().push(&e.id);
    }
    let all_labels: BTreeSet<&str> = c.examples().iter().map(|e| e.label.as_str()).collect();
    if let Some(missing) = all_labels.iter().find(|l| !by_class.contains_key(*l)) {
        return Err(Error::invalid(format!("class `{missing}` has no original examples")));
    }
    if by_class.is_empty() {
        return Err(Error::invalid("corpus has no original examples to fold"));
    }
    let warnings = by_class
        .iter()
        .filter(|(_, ids)| ids.len() < k)
        .map(|(l, ids)| format!("class `{l}` has {} originals, fewer than {k} folds", ids.len()))
        .collect();

    let assignment = (0..repeats)
        .map(|r| {
            let mut rng = seed::rng(seed::derive(seed, &[&"folds", &r]));
            let mut map = BTreeMap::new();
            let mut offset = 0;
            for ids in by_class.values() {
                let mut shuffled = ids.clone();
                shuffled.shuffle(&mut rng);
                for (i, id) in shuffled.iter().enumerate() {
                    map.insert((*id).to_owned(), (offset + i) % k);
                }
                offset = (offset + shuffled.len()) % k;
            }
            map
        })
        .collect();
    Ok(FoldAssignment {
        k,
        repeats,
        seed,
        assignment,
        warnings,
    })
}

impl FoldAssignment {
    /// All `repeats * k` splits, repeat-major.
    pub fn splits(&self, c: &Corpus) -> Vec<Split> {
        let mut out = Vec::with_capacity(self.repeats * self.k);
        for (r, map) in self.assignment.iter().enumerate() {
            for fold in 0..self.k {
                let mut train = Vec::new();
                let mut eval = Vec::new();
                for (i, e) in c.examples().iter().enumerate() {
                    match map.get(&e.id) {
                        Some(&f) if f == fold => eval.push(i),
                        _ => train.push(i),
                    }
                }
                out.push(Split {
                    repeat: r,
                    fold,
                    train,
                    eval,
                });
            }
        }
        out
    }
}
