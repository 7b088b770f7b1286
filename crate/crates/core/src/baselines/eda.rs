//! Rule-based edits: random swap, deletion and insertion.

use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::masking::AugmentedExample;
use crate::corpus::{Corpus, LabeledExample, Origin};
use crate::error::{Error, Result};
use crate::{seed, text};

pub const DEFAULT_STRENGTH: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdaOp {
    RandomSwap,
    RandomDelete,
    RandomInsert,
}

impl EdaOp {
    pub const ALL: [EdaOp; 3] = [EdaOp::RandomSwap, EdaOp::RandomDelete, EdaOp::RandomInsert];
}

impl FromStr for EdaOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random_swap" | "swap" => Ok(EdaOp::RandomSwap),
            "random_delete" | "delete" => Ok(EdaOp::RandomDelete),
            "random_insert" | "insert" => Ok(EdaOp::RandomInsert),
            other => Err(Error::invalid(format!("unknown EDA operation `{other}`"))),
        }
    }
}

/// Applies the selected operations in swap, delete, insert order. Each runs
/// `round(strength * n)` times where `n` is the source word count. Deletion
/// keeps at least one word; insertion copies a random word of the sentence
/// to a random position.
pub fn apply_ops(source: &str, ops: &[EdaOp], strength: f64, rng: &mut impl Rng) -> String {
    let mut words: Vec<&str> = text::words(source);
    let intensity = (strength * words.len() as f64).round() as usize;
    if intensity == 0 || words.is_empty() {
        return source.to_owned();
    }
    let mut selected = ops.to_vec();
    selected.sort_unstable();
    selected.dedup();
    for op in selected {
        match op {
            EdaOp::RandomSwap => {
                if words.len() >= 2 {
                    for _ in 0..intensity {
                        let i = rng.random_range(0..words.len());
                        let j = rng.random_range(0..words.len());
                        words.swap(i, j);
                    }
                }
            }
            EdaOp::RandomDelete => {
                for _ in 0..intensity.min(words.len().saturating_sub(1)) {
                    let i = rng.random_range(0..words.len());
                    words.remove(i);
                }
            }
            EdaOp::RandomInsert => {
                for _ in 0..intensity {
                    let w = words[rng.random_range(0..words.len())];
                    let at = rng.random_range(0..=words.len());
                    words.insert(at, w);
                }
            }
        }
    }
    words.join(" ")
}

pub fn eda_augment(
    pool: &Corpus,
    count: usize,
    ops: &[EdaOp],
    strength: f64,
    seed: u64,
) -> Result<Vec<AugmentedExample>> {
    if !(0.0..=1.0).contains(&strength) {
        return Err(Error::invalid(format!("EDA strength {strength} outside [0, 1]")));
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    if pool.is_empty() {
        return Err(Error::invalid("EDA pool is empty"));
    }
    Ok((0..count)
        .map(|i| {
            let mut rng = seed::rng(seed::derive(seed, &[&"eda", &i]));
            let source = &pool.examples()[rng.random_range(0..pool.len())];
            AugmentedExample {
                example: LabeledExample {
                    id: format!("eda-{i:04}"),
                    text: apply_ops(&source.text, ops, strength, &mut rng),
                    label: source.label.clone(),
                    origin: Origin::SyntheticEda,
                    source_id: Some(source.id.clone()),
                },
                masked_positions: Vec::new(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool() -> Corpus {
        Corpus::new(vec![
            LabeledExample::new("a", "one two three four five six seven eight nine ten", "x"),
            LabeledExample::new("b", "alpha beta gamma delta epsilon zeta eta theta iota kappa", "x"),
        ])
        .unwrap()
    }

    #[test]
    fn zero_strength_is_identity() {
        let p = pool();
        for a in eda_augment(&p, 20, &EdaOp::ALL, 0.0, 4).unwrap() {
            let src = p.get(a.example.source_id.as_deref().unwrap()).unwrap();
            assert_eq!(a.example.text, src.text);
            assert_eq!(a.example.origin, Origin::SyntheticEda);
        }
    }

    #[test]
    fn delete_removes_exact_count() {
        for a in eda_augment(&pool(), 20, &[EdaOp::RandomDelete], 0.2, 9).unwrap() {
            assert_eq!(text::words(&a.example.text).len(), 8);
        }
    }

    #[test]
    fn swap_preserves_multiset_and_insert_grows() {
        let mut rng = seed::rng(1);
        let src = "one two three four five six seven eight nine ten";
        let swapped = apply_ops(src, &[EdaOp::RandomSwap], 0.3, &mut rng);
        let mut a: Vec<_> = text::words(&swapped);
        let mut b: Vec<_> = text::words(src);
        a.sort();
        b.sort();
        assert_eq!(a, b);
        let inserted = apply_ops(src, &[EdaOp::RandomInsert], 0.3, &mut rng);
        assert_eq!(text::words(&inserted).len(), 13);
    }

    #[test]
    fn replay_and_errors() {
        let p = pool();
        assert_eq!(
            eda_augment(&p, 10, &EdaOp::ALL, 0.2, 5).unwrap(),
            eda_augment(&p, 10, &EdaOp::ALL, 0.2, 5).unwrap()
        );
        assert!(eda_augment(&p, 1, &EdaOp::ALL, 1.5, 5).is_err());
        assert!(eda_augment(&Corpus::default(), 1, &EdaOp::ALL, 0.1, 5).is_err());
        assert!(eda_augment(&Corpus::default(), 0, &EdaOp::ALL, 0.1, 5)
            .unwrap()
            .is_empty());
    }
}
