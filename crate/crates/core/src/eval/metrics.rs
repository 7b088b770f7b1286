//! F1 scores and the derived overfitting and gain ratios.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Penalty applied to scores from runs with few originals; top of the 2-4% band
/// observed for such runs.
pub const DEFAULT_PENALTY: f64 = 0.04;
pub const PENALTY_BAND: (f64, f64) = (0.02, 0.04);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassF1<T> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
    pub support: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Mean of per-class F1 weighted by gold support.
    #[default]
    Weighted,
    /// Unweighted mean over classes.
    Macro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Scores<T> {
    pub per_class: BTreeMap<String, ClassF1<T>>,
    pub weighted: T,
    #[serde(rename = "macro")]
    pub macro_avg: T,
}

impl<T: Scalar> F1Scores<T> {
    pub fn overall(&self, averaging: Averaging) -> T {
        match averaging {
            Averaging::Weighted => self.weighted,
            Averaging::Macro => self.macro_avg,
        }
    }

    pub fn class_f1(&self, label: &str) -> T {
        self.per_class.get(label).map_or(T::zero(), |c| c.f1)
    }
}

fn ratio<T: Scalar>(num: usize, den: usize) -> T {
    if den == 0 {
        T::zero()
    } else {
        T::from_usize_lossy(num) / T::from_usize_lossy(den)
    }
}

/// Per-class precision, recall and F1 over the union of gold and predicted labels.
pub fn f1_scores<T: Scalar, S: AsRef<str>>(gold: &[S], predicted: &[S]) -> Result<F1Scores<T>> {
    if gold.len() != predicted.len() {
        return Err(Error::invalid(format!(
            "gold has {} labels but predictions have {}",
            gold.len(),
            predicted.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::invalid("cannot score an empty prediction set"));
    }
    let classes: BTreeSet<&str> = gold.iter().chain(predicted).map(AsRef::as_ref).collect();
    let mut tp: BTreeMap<&str, usize> = BTreeMap::new();
    let mut fp: BTreeMap<&str, usize> = BTreeMap::new();
    let mut fneg: BTreeMap<&str, usize> = BTreeMap::new();
    for (g, p) in gold.iter().zip(predicted) {
        let (g, p) = (g.as_ref(), p.as_ref());
        if g == p {
            *tp.entry(g).or_default() += 1;
        } else {
            *fp.entry(p).or_default() += 1;
            *fneg.entry(g).or_default() += 1;
        }
    }
    let two = T::one() + T::one();
    let mut per_class = BTreeMap::new();
    let (mut weighted, mut macro_sum) = (T::zero(), T::zero());
    for c in &classes {
        let (t, f, n) = (
            tp.get(c).copied().unwrap_or(0),
            fp.get(c).copied().unwrap_or(0),
            fneg.get(c).copied().unwrap_or(0),
        );
        let precision: T = ratio(t, t + f);
        let recall: T = ratio(t, t + n);
        let f1 = if precision + recall > T::zero() {
            two * precision * recall / (precision + recall)
        } else {
            T::zero()
        };
        let support = t + n;
        weighted = weighted + f1 * T::from_usize_lossy(support);
        macro_sum = macro_sum + f1;
        per_class.insert(
            (*c).to_owned(),
            ClassF1 {
                precision,
                recall,
                f1,
                support,
                true_positives: t,
                false_positives: f,
                false_negatives: n,
            },
        );
    }
    Ok(F1Scores {
        per_class,
        weighted: weighted / T::from_usize_lossy(gold.len()),
        macro_avg: macro_sum / T::from_usize_lossy(classes.len()),
    })
}

fn nonzero<T: Scalar>(x: T, what: &str) -> Result<()> {
    if x == T::zero() || !x.is_finite() {
        return Err(Error::invalid(format!("{what} must be non-zero and finite")));
    }
    Ok(())
}

/// `(synthetic - true) / true`: positive when augmentation inflates the score.
pub fn overfit_ratio<T: Scalar>(f1_synthetic: T, f1_true: T) -> Result<T> {
    nonzero(f1_true, "true F1")?;
    Ok((f1_synthetic - f1_true) / f1_true)
}

/// `(reference - baseline) / baseline`. The reference is the true-model score,
/// not the (possibly inflated) augmented score.
pub fn relative_gain<T: Scalar>(f1_reference: T, f1_baseline: T) -> Result<T> {
    nonzero(f1_baseline, "baseline F1")?;
    Ok((f1_reference - f1_baseline) / f1_baseline)
}

/// `(reference - lowered) / reference`: the drop from a reference score.
pub fn relative_decrease<T: Scalar>(f1_reference: T, f1_lowered: T) -> Result<T> {
    nonzero(f1_reference, "reference F1")?;
    Ok((f1_reference - f1_lowered) / f1_reference)
}

/// `(ssmba - imputation) / ssmba`.
pub fn overfit_reduction<T: Scalar>(f1_ssmba: T, f1_imputation: T) -> Result<T> {
    nonzero(f1_ssmba, "SSMBA F1")?;
    Ok((f1_ssmba - f1_imputation) / f1_ssmba)
}

/// `f1 * (1 - penalty)`.
pub fn penalized_score<T: Scalar>(f1: T, penalty: T) -> Result<T> {
    if !(penalty >= T::zero() && penalty < T::one()) {
        return Err(Error::invalid(format!("penalty {penalty} outside [0, 1)")));
    }
    Ok(f1 * (T::one() - penalty))
}
