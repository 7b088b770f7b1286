//! Grid of (original count, strategy) cells, each cross-validated, plus the
//! full-data true-model cell and the figure table built from them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::cv::{cross_validate, CvReport, CvSettings};
use super::metrics::{overfit_ratio, overfit_reduction, penalized_score, relative_gain, DEFAULT_PENALTY};
use super::trainer::Trainer;
use crate::corpus::{Corpus, LabeledExample};
use crate::error::{Error, Result};
use crate::validator::{compute_similarity, Candidate, SimilarityReport, Thresholds};
use crate::{seed, Score};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    None,
    Imputation,
    Ssmba,
    Eda,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::None, Strategy::Imputation, Strategy::Ssmba, Strategy::Eda];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::Imputation => "imputation",
            Strategy::Ssmba => "ssmba",
            Strategy::Eda => "eda",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => Ok(Strategy::None),
            "imputation" => Ok(Strategy::Imputation),
            "ssmba" => Ok(Strategy::Ssmba),
            "eda" => Ok(Strategy::Eda),
            other => Err(Error::invalid(format!("unknown strategy `{other}`"))),
        }
    }
}

/// Parses a comma-separated strategy list, dropping duplicates.
pub fn parse_strategies(list: &str) -> Result<Vec<Strategy>> {
    let mut out: Vec<Strategy> = Vec::new();
    for part in list.split(',').filter(|p| !p.trim().is_empty()) {
        let s: Strategy = part.parse()?;
        if !out.contains(&s) {
            out.push(s);
        }
    }
    if out.is_empty() {
        return Err(Error::invalid("no strategies given"));
    }
    Ok(out)
}

/// One prepared cell: the originals in play and the synthetic examples added
/// to every training fold.
#[derive(Debug, Clone)]
pub struct CellData {
    pub strategy: Strategy,
    pub original_count: usize,
    pub is_true_model: bool,
    pub originals: Corpus,
    pub synthetic: Vec<LabeledExample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub strategy: Strategy,
    pub original_count: usize,
    pub synthetic_count: usize,
    pub true_model: bool,
    pub status: CellStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Mean over synthetic examples of their highest unigram Jaccard against
    /// the category's originals in the cell.
    pub synthetic_similarity: Option<Score>,
    pub cv: Option<CvReport<Score>>,
}

impl CellReport {
    pub fn class_f1(&self, label: &str) -> Option<Score> {
        self.cv.as_ref().and_then(|r| r.per_class.get(label)).map(|d| d.mean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedRow {
    pub original_count: usize,
    pub f1_true: Option<Score>,
    pub f1_none: Option<Score>,
    pub f1_imputation: Option<Score>,
    pub f1_ssmba: Option<Score>,
    pub f1_eda: Option<Score>,
    pub imputation_overfit_ratio: Option<Score>,
    pub ssmba_overfit_ratio: Option<Score>,
    /// Gain of the true-model score over the no-augmentation baseline.
    pub gain_over_none: Option<Score>,
    pub overfit_reduction_vs_ssmba: Option<Score>,
    pub penalized_imputation: Option<Score>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureRow {
    pub strategy: String,
    pub original_count: usize,
    pub synthetic_count: usize,
    pub class: String,
    pub f1_mean: Score,
    pub f1_sd: Score,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub category: String,
    pub full_count: usize,
    pub folds: usize,
    pub repeats: usize,
    pub master_seed: u64,
    pub trainer: String,
    pub cells: Vec<CellReport>,
    pub derived: Vec<DerivedRow>,
    pub figure: Vec<FigureRow>,
}

impl ExperimentReport {
    pub fn cell(&self, strategy: Strategy, original_count: usize) -> Option<&CellReport> {
        self.cells
            .iter()
            .find(|c| c.strategy == strategy && c.original_count == original_count)
    }

    pub fn true_cell(&self) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.true_model)
    }

    /// Pretty JSON with a trailing newline; byte-stable for equal reports.
    pub fn to_json_bytes(&self) -> Result<Vec<u8>> {
        let mut v = serde_json::to_vec_pretty(self)?;
        v.push(b'\n');
        Ok(v)
    }

    /// Columns: strategy, original_count, synthetic_count, class, f1_mean, f1_sd.
    pub fn figure_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.figure {
            w.serialize(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Mean highest-Jaccard of synthetic texts against a pool of originals.
pub fn synthetic_similarity(synthetic: &[LabeledExample], pool: &Corpus) -> Option<Score> {
    if synthetic.is_empty() || pool.is_empty() {
        return None;
    }
    let no_ids: Vec<String> = Vec::new();
    let views: Vec<Candidate<'_>> = synthetic
        .iter()
        .map(|e| Candidate {
            id: &e.id,
            text: &e.text,
            example_ids: &no_ids,
        })
        .collect();
    let report: SimilarityReport<Score> = compute_similarity(&views, pool, &Thresholds::default());
    Some(report.summary.mean_max_jaccard_vs_original)
}

/// Fold seeds depend only on the original count, so strategies at the same
/// size are compared on identical splits.
pub fn cell_fold_seed(master_seed: u64, original_count: usize) -> u64 {
    seed::derive(master_seed, &[&"cv", &original_count])
}

pub fn run_cells(
    category: &str,
    full_count: usize,
    cells: Vec<CellData>,
    settings: &CvSettings,
    master_seed: u64,
    trainer: &dyn Trainer,
) -> ExperimentReport {
    let reports: Vec<CellReport> = cells
        .into_iter()
        .map(|cell| {
            let pool = cell.originals.filter(|e| e.label == category);
            let similarity = synthetic_similarity(&cell.synthetic, &pool);
            let synthetic_count = cell.synthetic.len();
            let corpus = Corpus::new(
                cell.originals
                    .examples()
                    .iter()
                    .cloned()
                    .chain(cell.synthetic.iter().cloned())
                    .collect(),
            );
            let settings = CvSettings {
                seed: cell_fold_seed(master_seed, cell.original_count),
                ..settings.clone()
            };
            let cv = corpus.and_then(|c| {
                cross_validate::<Score>(&c, &settings, trainer, cell.strategy.as_str(), cell.original_count)
            });
            let (status, error, cv) = match cv {
                Ok(r) => (CellStatus::Ok, None, Some(r)),
                Err(e) => {
                    log::error!("cell {} @ {} failed: {e}", cell.strategy, cell.original_count);
                    (CellStatus::Failed, Some(e.to_string()), None)
                }
            };
            CellReport {
                strategy: cell.strategy,
                original_count: cell.original_count,
                synthetic_count,
                true_model: cell.is_true_model,
                status,
                error,
                synthetic_similarity: similarity,
                cv,
            }
        })
        .collect();

    let derived = derive_rows(category, &reports);
    let figure = figure_rows(&reports);
    ExperimentReport {
        category: category.to_owned(),
        full_count,
        folds: settings.folds,
        repeats: settings.repeats,
        master_seed,
        trainer: trainer.name().to_owned(),
        cells: reports,
        derived,
        figure,
    }
}

fn derive_rows(category: &str, cells: &[CellReport]) -> Vec<DerivedRow> {
    let f1_true = cells.iter().find(|c| c.true_model).and_then(|c| c.class_f1(category));
    let mut sizes: Vec<usize> = cells
        .iter()
        .filter(|c| !c.true_model)
        .map(|c| c.original_count)
        .collect();
    sizes.sort_unstable();
    sizes.dedup();
    sizes
        .into_iter()
        .map(|n| {
            let f1 = |s: Strategy| {
                cells
                    .iter()
                    .find(|c| !c.true_model && c.strategy == s && c.original_count == n)
                    .and_then(|c| c.class_f1(category))
            };
            let (none, imp, ssmba, eda) = (
                f1(Strategy::None),
                f1(Strategy::Imputation),
                f1(Strategy::Ssmba),
                f1(Strategy::Eda),
            );
            let both = |a: Option<Score>, b: Option<Score>| a.zip(b);
            DerivedRow {
                original_count: n,
                f1_true,
                f1_none: none,
                f1_imputation: imp,
                f1_ssmba: ssmba,
                f1_eda: eda,
                imputation_overfit_ratio: both(imp, f1_true).and_then(|(s, t)| overfit_ratio(s, t).ok()),
                ssmba_overfit_ratio: both(ssmba, f1_true).and_then(|(s, t)| overfit_ratio(s, t).ok()),
                gain_over_none: both(f1_true, none).and_then(|(t, b)| relative_gain(t, b).ok()),
                overfit_reduction_vs_ssmba: both(ssmba, imp).and_then(|(s, i)| overfit_reduction(s, i).ok()),
                penalized_imputation: imp.and_then(|i| penalized_score(i, DEFAULT_PENALTY).ok()),
            }
        })
        .collect()
}

fn figure_rows(cells: &[CellReport]) -> Vec<FigureRow> {
    let mut rows = Vec::new();
    for c in cells {
        let Some(cv) = &c.cv else { continue };
        let strategy = if c.true_model {
            "true".to_owned()
        } else {
            c.strategy.to_string()
        };
        for (class, d) in &cv.per_class {
            rows.push(FigureRow {
                strategy: strategy.clone(),
                original_count: c.original_count,
                synthetic_count: c.synthetic_count,
                class: class.clone(),
                f1_mean: d.mean,
                f1_sd: d.sd_fits,
            });
        }
        rows.push(FigureRow {
            strategy,
            original_count: c.original_count,
            synthetic_count: c.synthetic_count,
            class: "overall".to_owned(),
            f1_mean: cv.overall.mean,
            f1_sd: cv.overall.sd_fits,
        });
    }
    rows
}
