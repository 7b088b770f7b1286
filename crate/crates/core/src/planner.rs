//! Batch-coverage diagnosis and synthetic-deficit planning.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::LabelDistribution;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Originals below which a category gets the second-tier overfitting note.
pub const COMFORT_ORIGINALS: usize = 75;
pub const DEFAULT_MIN_ORIGINALS: usize = 50;
pub const MIN_DEFAULT_TARGET: usize = 200;

/// How often a category shows up per training batch on average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchCoverage<T> {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    pub category_count: usize,
    pub total: usize,
    pub batch_size: usize,
    pub num_batches: usize,
    pub per_batch_avg: T,
}

/// `num_batches = ceil(total / batch_size)`, `per_batch_avg = category_count / num_batches`.
pub fn batch_coverage<T: Scalar>(category_count: usize, total: usize, batch_size: usize) -> Result<BatchCoverage<T>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    if category_count == 0 {
        return Err(Error::invalid("category count must be at least 1"));
    }
    if category_count > total {
        return Err(Error::invalid(format!(
            "category count {category_count} exceeds training size {total}"
        )));
    }
    let num_batches = total.div_ceil(batch_size);
    Ok(BatchCoverage {
        category: None,
        category_count,
        total,
        batch_size,
        num_batches,
        per_batch_avg: T::from_usize_lossy(category_count) / T::from_usize_lossy(num_batches),
    })
}

/// Coverage of every category in a distribution at one batch size.
pub fn coverage_table<T: Scalar, S>(dist: &LabelDistribution<S>, batch_size: usize) -> Result<Vec<BatchCoverage<T>>> {
    dist.counts
        .iter()
        .filter(|(_, &n)| n > 0)
        .map(|(label, &n)| {
            let mut c = batch_coverage(n, dist.total, batch_size)?;
            c.category = Some(label.clone());
            Ok(c)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub original_count: usize,
    pub target_total: usize,
    pub synthetic_needed: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ImputationPlan {
    pub entries: BTreeMap<String, PlanEntry>,
    pub warnings: Vec<String>,
}

impl ImputationPlan {
    pub fn total_synthetic(&self) -> usize {
        self.entries.values().map(|e| e.synthetic_needed).sum()
    }
}

/// `max(200, largest category)`: balances to the majority class when it exceeds 200.
pub fn default_target<S>(dist: &LabelDistribution<S>) -> usize {
    dist.counts.values().copied().max().unwrap_or(0).max(MIN_DEFAULT_TARGET)
}

pub fn make_plan<S>(dist: &LabelDistribution<S>, target_total: usize, min_originals: usize) -> Result<ImputationPlan> {
    if target_total == 0 {
        return Err(Error::invalid("target total must be at least 1"));
    }
    if min_originals == 0 {
        return Err(Error::invalid("minimum originals must be at least 1"));
    }
    let mut plan = ImputationPlan::default();
    for (label, &original_count) in &dist.counts {
        if original_count == 0 {
            return Err(Error::invalid(format!(
                "category `{label}` has no originals to sample from"
            )));
        }
        let synthetic_needed = target_total.saturating_sub(original_count);
        if synthetic_needed > 0 {
            if original_count < min_originals {
                plan.warnings.push(format!(
                    "`{label}`: only {original_count} originals (< {min_originals}); synthetic texts will \
                     repeat a narrow pool and overfitting risk is elevated"
                ));
            } else if original_count < COMFORT_ORIGINALS {
                plan.warnings.push(format!(
                    "`{label}`: {original_count} originals (< {COMFORT_ORIGINALS}); expect a small positive \
                     overfit of roughly 2-4% and report a penalized score"
                ));
            }
        }
        plan.entries.insert(
            label.clone(),
            PlanEntry {
                original_count,
                target_total,
                synthetic_needed,
            },
        );
    }
    Ok(plan)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridCell {
    pub original: usize,
    pub synthetic: usize,
}

/// One `(original, synthetic)` pair per size, each summing to `full_count`.
pub fn plan_experiment_grid(full_count: usize, original_sizes: &[usize]) -> Result<Vec<GridCell>> {
    original_sizes
        .iter()
        .map(|&original| {
            if original > full_count {
                return Err(Error::invalid(format!(
                    "original size {original} exceeds the full category size {full_count}"
                )));
            }
            Ok(GridCell {
                original,
                synthetic: full_count - original,
            })
        })
        .collect()
}
