//! The trainer protocol: training and evaluation examples in, one label per
//! evaluation id out.
//!
//! Subprocess form: the trainer command is run with four trailing arguments,
//! `<train.jsonl> <eval.jsonl> <hyperparams.json> <predictions.jsonl>`, and
//! must write one `{"id": ..., "label": ...}` line per evaluation id before
//! exiting with status 0.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::classifier::{self, FeatureVector};
use crate::corpus::{self, Format, LabeledExample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Anything else is passed through to external trainers untouched.
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

fn default_alpha() -> f64 {
    classifier::DEFAULT_ALPHA
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            alpha: default_alpha(),
            extra: serde_json::Map::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub id: String,
    pub label: String,
}

pub trait Trainer: Send + Sync {
    fn name(&self) -> &str;

    fn fit_predict(
        &self,
        train: &[LabeledExample],
        eval: &[LabeledExample],
        params: &Hyperparams,
    ) -> Result<Vec<PredictionRow>>;
}

/// Checks one prediction per evaluation id, labels drawn from training labels.
pub fn check_predictions(
    train: &[LabeledExample],
    eval: &[LabeledExample],
    predictions: Vec<PredictionRow>,
) -> Result<Vec<PredictionRow>> {
    let labels: BTreeSet<&str> = train.iter().map(|e| e.label.as_str()).collect();
    let mut by_id: HashMap<String, String> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        if !labels.contains(p.label.as_str()) {
            return Err(Error::Trainer(format!(
                "label `{}` for `{}` not in the training set",
                p.label, p.id
            )));
        }
        if by_id.insert(p.id.clone(), p.label).is_some() {
            return Err(Error::Trainer(format!("duplicate prediction for `{}`", p.id)));
        }
    }
    if by_id.len() != eval.len() {
        return Err(Error::Trainer(format!(
            "expected {} predictions, got {}",
            eval.len(),
            by_id.len()
        )));
    }
    eval.iter()
        .map(|e| {
            by_id
                .remove(&e.id)
                .map(|label| PredictionRow {
                    id: e.id.clone(),
                    label,
                })
                .ok_or_else(|| Error::Trainer(format!("no prediction for `{}`", e.id)))
        })
        .collect()
}

/// In-process naive Bayes. Feature vectors are memoized by text.
#[derive(Debug, Default)]
pub struct BuiltinTrainer {
    cache: std::sync::RwLock<HashMap<String, std::sync::Arc<FeatureVector>>>,
}

impl BuiltinTrainer {
    pub fn new() -> Self {
        Self::default()
    }

    fn features(&self, text: &str) -> std::sync::Arc<FeatureVector> {
        if let Some(f) = self.cache.read().expect("feature cache poisoned").get(text) {
            return f.clone();
        }
        let f = std::sync::Arc::new(classifier::featurize(text));
        self.cache
            .write()
            .expect("feature cache poisoned")
            .insert(text.to_owned(), f.clone());
        f
    }
}

impl Trainer for BuiltinTrainer {
    fn name(&self) -> &str {
        "builtin-naive-bayes"
    }

    fn fit_predict(
        &self,
        train: &[LabeledExample],
        eval: &[LabeledExample],
        params: &Hyperparams,
    ) -> Result<Vec<PredictionRow>> {
        let feats: Vec<_> = train.iter().map(|e| self.features(&e.text)).collect();
        let model = classifier::train_features(
            feats.iter().zip(train).map(|(f, e)| (f.as_ref(), e.label.as_str())),
            params.alpha,
        )?;
        Ok(eval
            .iter()
            .map(|e| PredictionRow {
                id: e.id.clone(),
                label: model.predict_features(&self.features(&e.text)).label,
            })
            .collect())
    }
}

/// Runs an external trainer command per fit.
#[derive(Debug, Clone)]
pub struct SubprocessTrainer {
    pub program: PathBuf,
    pub args: Vec<String>,
}

impl SubprocessTrainer {
    pub fn new(program: impl Into<PathBuf>, args: Vec<String>) -> Self {
        SubprocessTrainer {
            program: program.into(),
            args,
        }
    }
}

impl Trainer for SubprocessTrainer {
    fn name(&self) -> &str {
        "subprocess"
    }

    fn fit_predict(
        &self,
        train: &[LabeledExample],
        eval: &[LabeledExample],
        params: &Hyperparams,
    ) -> Result<Vec<PredictionRow>> {
        let dir = tempfile::tempdir()?;
        let paths = ProtocolPaths::in_dir(dir.path());
        write_examples(&paths.train, train)?;
        write_examples(&paths.eval, eval)?;
        std::fs::write(&paths.hyperparams, serde_json::to_vec_pretty(params)?)?;
        let output = Command::new(&self.program)
            .args(&self.args)
            .arg(&paths.train)
            .arg(&paths.eval)
            .arg(&paths.hyperparams)
            .arg(&paths.predictions)
            .output()?;
        if !output.status.success() {
            return Err(Error::Trainer(format!(
                "{} exited with {}: {}",
                self.program.display(),
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        check_predictions(train, eval, read_predictions(&paths.predictions)?)
    }
}

#[derive(Debug, Clone)]
pub struct ProtocolPaths {
    pub train: PathBuf,
    pub eval: PathBuf,
    pub hyperparams: PathBuf,
    pub predictions: PathBuf,
}

impl ProtocolPaths {
    pub fn in_dir(dir: &Path) -> Self {
        ProtocolPaths {
            train: dir.join("train.jsonl"),
            eval: dir.join("eval.jsonl"),
            hyperparams: dir.join("hyperparams.json"),
            predictions: dir.join("predictions.jsonl"),
        }
    }
}

fn write_examples(path: &Path, examples: &[LabeledExample]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for e in examples {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Serves the subprocess side of the protocol with the built-in classifier.
pub fn serve_builtin_protocol(paths: &ProtocolPaths) -> Result<usize> {
    let train = corpus::load_corpus(&paths.train, Format::Jsonl)?.into_examples();
    let eval = match corpus::load_corpus(&paths.eval, Format::Jsonl) {
        Ok(c) => c.into_examples(),
        Err(Error::EmptyFile(_)) => Vec::new(),
        Err(e) => return Err(e),
    };
    let params: Hyperparams = if paths.hyperparams.exists() {
        serde_json::from_slice(&std::fs::read(&paths.hyperparams)?)?
    } else {
        Hyperparams::default()
    };
    let rows = BuiltinTrainer::new().fit_predict(&train, &eval, &params)?;
    let mut w = BufWriter::new(File::create(&paths.predictions)?);
    for r in &rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(rows.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(id: &str, label: &str) -> LabeledExample {
        LabeledExample::new(id, format!("text {label}"), label)
    }

    #[test]
    fn prediction_checks() {
        let train = vec![ex("t1", "a"), ex("t2", "b")];
        let eval = vec![ex("e1", "a"), ex("e2", "b")];
        let row = |id: &str, l: &str| PredictionRow {
            id: id.into(),
            label: l.into(),
        };
        let ok = check_predictions(&train, &eval, vec![row("e2", "b"), row("e1", "a")]).unwrap();
        assert_eq!(ok[0].id, "e1");
        assert!(check_predictions(&train, &eval, vec![row("e1", "a")]).is_err());
        assert!(check_predictions(&train, &eval, vec![row("e1", "a"), row("e2", "zzz")]).is_err());
        assert!(check_predictions(&train, &eval, vec![row("e1", "a"), row("e1", "b")]).is_err());
        assert!(check_predictions(&train, &eval, vec![row("e1", "a"), row("e3", "b")]).is_err());
    }

    #[test]
    fn builtin_protocol_files() {
        let dir = tempfile::tempdir().unwrap();
        let paths = ProtocolPaths::in_dir(dir.path());
        write_examples(&paths.train, &[ex("t1", "a"), ex("t2", "b")]).unwrap();
        write_examples(&paths.eval, &[ex("e1", "a")]).unwrap();
        assert_eq!(serve_builtin_protocol(&paths).unwrap(), 1);
        let preds = read_predictions(&paths.predictions).unwrap();
        assert_eq!(
            preds,
            vec![PredictionRow {
                id: "e1".into(),
                label: "a".into()
            }]
        );
    }
}
