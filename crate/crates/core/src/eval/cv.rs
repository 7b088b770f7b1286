use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::stratified_folds;
use super::metrics::{f1_scores, Averaging};
use super::trainer::{Hyperparams, Trainer};
use crate::corpus::{Corpus, LabeledExample};
use crate::error::Result;
use crate::scalar::{self, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSettings {
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    #[serde(default)]
    pub averaging: Averaging,
    #[serde(default)]
    pub params: Hyperparams,
}

impl Default for CvSettings {
    fn default() -> Self {
        CvSettings {
            folds: 10,
            repeats: 10,
            seed: 0,
            averaging: Averaging::Weighted,
            params: Hyperparams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dispersion<T> {
    pub mean: T,
    /// Across all `repeats * folds` fits.
    pub sd_fits: T,
    /// Across the per-repeat means.
    pub sd_repeat_means: T,
}

impl<T: Scalar> Dispersion<T> {
    fn from_fits(values: &[T], repeats: usize) -> Self {
        let per_repeat = values.len() / repeats.max(1);
        let repeat_means: Vec<T> = values.chunks(per_repeat.max(1)).map(scalar::mean).collect();
        Dispersion {
            mean: scalar::mean(values),
            sd_fits: scalar::sample_sd(values),
            sd_repeat_means: scalar::sample_sd(&repeat_means),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitScore<T> {
    pub repeat: usize,
    pub fold: usize,
    pub per_class: BTreeMap<String, T>,
    pub overall: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport<T> {
    pub strategy: String,
    pub original_count: usize,
    pub synthetic_count: usize,
    pub folds: usize,
    pub repeats: usize,
    pub averaging: Averaging,
    pub per_class: BTreeMap<String, Dispersion<T>>,
    pub overall: Dispersion<T>,
    pub fits: Vec<FitScore<T>>,
}

/// Repeated stratified cross-validation. Synthetic examples train in every
/// fit and are never scored.
pub fn cross_validate<T: Scalar>(
    corpus: &Corpus,
    settings: &CvSettings,
    trainer: &dyn Trainer,
    strategy: &str,
    original_count: usize,
) -> Result<CvReport<T>> {
    let assignment = stratified_folds(corpus, settings.folds, settings.repeats, settings.seed)?;
    for w in &assignment.warnings {
        log::warn!("{w}");
    }
    let labels: Vec<String> = corpus.labels().iter().cloned().collect();
    let examples = corpus.examples();
    let fits: Vec<FitScore<T>> = assignment
        .splits(corpus)
        .par_iter()
        .map(|split| {
            let train: Vec<LabeledExample> = split.train.iter().map(|&i| examples[i].clone()).collect();
            let eval: Vec<LabeledExample> = split.eval.iter().map(|&i| examples[i].clone()).collect();
            let preds = trainer.fit_predict(&train, &eval, &settings.params)?;
            let gold: Vec<&str> = eval.iter().map(|e| e.label.as_str()).collect();
            let predicted: Vec<&str> = preds.iter().map(|p| p.label.as_str()).collect();
            let scores = f1_scores::<T, _>(&gold, &predicted)?;
            Ok(FitScore {
                repeat: split.repeat,
                fold: split.fold,
                per_class: labels.iter().map(|l| (l.clone(), scores.class_f1(l))).collect(),
                overall: scores.overall(settings.averaging),
            })
        })
        .collect::<Result<_>>()?;

    let per_class = labels
        .iter()
        .map(|l| {
            let v: Vec<T> = fits.iter().map(|f| f.per_class[l]).collect();
            (l.clone(), Dispersion::from_fits(&v, settings.repeats))
        })
        .collect();
    let overall: Vec<T> = fits.iter().map(|f| f.overall).collect();
    Ok(CvReport {
        strategy: strategy.to_owned(),
        original_count,
        synthetic_count: examples.iter().filter(|e| e.origin.is_synthetic()).count(),
        folds: settings.folds,
        repeats: settings.repeats,
        averaging: settings.averaging,
        per_class,
        overall: Dispersion::from_fits(&overall, settings.repeats),
        fits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::trainer::BuiltinTrainer;

    #[test]
    fn means_match_raw_scores() {
        let mut ex = Vec::new();
        for i in 0..20 {
            ex.push(LabeledExample::new(
                format!("a{i}"),
                format!("apple pear fig {}", i % 3),
                "fruit",
            ));
            ex.push(LabeledExample::new(
                format!("b{i}"),
                format!("saw drill pear {}", i % 4),
                "tool",
            ));
        }
        let c = Corpus::new(ex).unwrap();
        let settings = CvSettings {
            folds: 4,
            repeats: 3,
            seed: 2,
            ..Default::default()
        };
        let r: CvReport<f64> = cross_validate(&c, &settings, &BuiltinTrainer::new(), "none", 20).unwrap();
        assert_eq!(r.fits.len(), 12);
        let m = scalar::mean(&r.fits.iter().map(|f| f.per_class["fruit"]).collect::<Vec<_>>());
        assert!((m - r.per_class["fruit"].mean).abs() < 1e-12);
        assert!(r.overall.sd_fits >= 0.0 && r.overall.sd_repeat_means >= 0.0);
    }
}
