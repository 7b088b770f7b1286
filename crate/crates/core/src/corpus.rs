//! Labeled corpora: loading, validation, truncation and category draws.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::{seed, text};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    #[default]
    Original,
    SyntheticLlm,
    SyntheticSsmba,
    SyntheticEda,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Original => "original",
            Origin::SyntheticLlm => "synthetic_llm",
            Origin::SyntheticSsmba => "synthetic_ssmba",
            Origin::SyntheticEda => "synthetic_eda",
        }
    }

    pub fn is_synthetic(self) -> bool {
        self != Origin::Original
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Origin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "" | "original" => Ok(Origin::Original),
            "synthetic_llm" => Ok(Origin::SyntheticLlm),
            "synthetic_ssmba" => Ok(Origin::SyntheticSsmba),
            "synthetic_eda" => Ok(Origin::SyntheticEda),
            other => Err(Error::invalid(format!("unknown origin `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub id: String,
    pub text: String,
    pub label: String,
    #[serde(default)]
    pub origin: Origin,
    /// Id of the original this example was derived from, for baseline augmenters.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
}

impl LabeledExample {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: impl Into<String>) -> Self {
        LabeledExample {
            id: id.into(),
            text: text.into(),
            label: label.into(),
            origin: Origin::Original,
            source_id: None,
        }
    }

    pub fn with_origin(mut self, origin: Origin) -> Self {
        self.origin = origin;
        self
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.text.trim().is_empty() {
            return Err("empty text".into());
        }
        if self.label.trim().is_empty() {
            return Err("empty label".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    /// Guesses the format from a file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Jsonl,
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(Error::invalid(format!("unknown corpus format `{other}`"))),
        }
    }
}

/// An immutable, validated collection of examples.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    examples: Vec<LabeledExample>,
    labels: BTreeSet<String>,
}

impl Corpus {
    pub fn new(examples: Vec<LabeledExample>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(examples.len());
        for (i, e) in examples.iter().enumerate() {
            e.check()
                .map_err(|m| Error::invalid(format!("example {} (`{}`): {m}", i + 1, e.id)))?;
            if !seen.insert(e.id.as_str()) {
                return Err(Error::DuplicateId {
                    id: e.id.clone(),
                    line: i + 1,
                });
            }
        }
        let examples: Vec<_> = examples
            .into_iter()
            .map(|mut e| {
                let trimmed = e.label.trim();
                if trimmed.len() != e.label.len() {
                    e.label = trimmed.to_owned();
                }
                e
            })
            .collect();
        let labels = examples.iter().map(|e| e.label.clone()).collect();
        Ok(Corpus { examples, labels })
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn labels(&self) -> &BTreeSet<String> {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&LabeledExample> {
        self.examples.iter().find(|e| e.id == id)
    }

    pub fn count(&self, label: &str) -> usize {
        self.examples.iter().filter(|e| e.label == label).count()
    }

    /// Examples of one category, in corpus order.
    pub fn category(&self, label: &str) -> Result<Corpus> {
        if !self.labels.contains(label) {
            return Err(Error::UnknownCategory(label.to_owned()));
        }
        Ok(self.filter(|e| e.label == label))
    }

    pub fn filter(&self, keep: impl Fn(&LabeledExample) -> bool) -> Corpus {
        let examples: Vec<_> = self.examples.iter().filter(|e| keep(e)).cloned().collect();
        let labels = examples.iter().map(|e| e.label.clone()).collect();
        Corpus { examples, labels }
    }

    pub fn map_examples(&self, f: impl Fn(&LabeledExample) -> LabeledExample) -> Result<Corpus> {
        Corpus::new(self.examples.iter().map(f).collect())
    }

    /// Concatenates two corpora; ids must stay unique.
    pub fn concat(&self, other: &Corpus) -> Result<Corpus> {
        let mut all = self.examples.clone();
        all.extend(other.examples.iter().cloned());
        Corpus::new(all)
    }

    pub fn into_examples(self) -> Vec<LabeledExample> {
        self.examples
    }

    /// SHA-256 over the JSONL serialization.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for e in &self.examples {
            h.update(serde_json::to_vec(e).expect("example serializes"));
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Deserialize)]
struct RawRow {
    #[serde(default)]
    id: Option<String>,
    text: Option<String>,
    label: Option<String>,
    #[serde(default)]
    origin: Option<String>,
    #[serde(default)]
    source_id: Option<String>,
}

struct RowBuilder<'a> {
    path: &'a Path,
    seen: HashSet<String>,
    out: Vec<LabeledExample>,
}

impl<'a> RowBuilder<'a> {
    fn new(path: &'a Path) -> Self {
        RowBuilder {
            path,
            seen: HashSet::new(),
            out: Vec::new(),
        }
    }

    fn parse_error(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_owned(),
            line,
            message: message.into(),
        }
    }

    fn push(&mut self, row: RawRow, line: usize) -> Result<()> {
        let text = row.text.ok_or_else(|| self.parse_error(line, "missing field `text`"))?;
        let label = row
            .label
            .ok_or_else(|| self.parse_error(line, "missing field `label`"))?;
        let label = label.trim().to_owned();
        if text.trim().is_empty() {
            return Err(self.parse_error(line, "empty text"));
        }
        if label.is_empty() {
            return Err(self.parse_error(line, "empty label"));
        }
        let origin = match row.origin.as_deref() {
            Some(o) => o.parse().map_err(|e: Error| self.parse_error(line, e.to_string()))?,
            None => Origin::Original,
        };
        let id = match row.id.map(|s| s.trim().to_owned()).filter(|s| !s.is_empty()) {
            Some(id) => id,
            None => format!("row-{line}"),
        };
        if !self.seen.insert(id.clone()) {
            return Err(Error::DuplicateId { id, line });
        }
        self.out.push(LabeledExample {
            id,
            text,
            label,
            origin,
            source_id: row.source_id.filter(|s| !s.is_empty()),
        });
        Ok(())
    }

    fn finish(self) -> Result<Corpus> {
        if self.out.is_empty() {
            return Err(Error::EmptyFile(self.path.to_owned()));
        }
        Corpus::new(self.out)
    }
}

pub fn load_corpus(path: impl AsRef<Path>, format: Format) -> Result<Corpus> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let mut rows = RowBuilder::new(path);
    match format {
        Format::Jsonl => {
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line_no = i + 1;
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let row: RawRow = serde_json::from_str(&line).map_err(|e| rows.parse_error(line_no, e.to_string()))?;
                rows.push(row, line_no)?;
            }
        }
        Format::Csv => {
            let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
            let headers = reader.headers()?.clone();
            for h in ["text", "label"] {
                if !headers.iter().any(|c| c.trim() == h) {
                    return Err(rows.parse_error(1, format!("header lacks column `{h}`")));
                }
            }
            for record in reader.records() {
                let record = record.map_err(|e| {
                    let line = e.position().map_or(0, |p| p.line() as usize);
                    rows.parse_error(line, e.to_string())
                })?;
                let line_no = record.position().map_or(0, |p| p.line() as usize);
                let row: RawRow = record
                    .deserialize(Some(&headers))
                    .map_err(|e| rows.parse_error(line_no, e.to_string()))?;
                rows.push(row, line_no)?;
            }
        }
    }
    rows.finish()
}

pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>, format: Format) -> Result<()> {
    let file = File::create(path.as_ref())?;
    write_corpus_to(corpus, file, format)
}

pub fn write_corpus_to(corpus: &Corpus, mut out: impl Write, format: Format) -> Result<()> {
    match format {
        Format::Jsonl => {
            for e in corpus.examples() {
                serde_json::to_writer(&mut out, e)?;
                out.write_all(b"\n")?;
            }
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["id", "text", "label", "origin", "source_id"])?;
            for e in corpus.examples() {
                w.write_record([
                    e.id.as_str(),
                    e.text.as_str(),
                    e.label.as_str(),
                    e.origin.as_str(),
                    e.source_id.as_deref().unwrap_or(""),
                ])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution<T> {
    pub counts: BTreeMap<String, usize>,
    pub total: usize,
    pub shares: BTreeMap<String, T>,
}

pub fn label_distribution<T: Scalar>(c: &Corpus) -> LabelDistribution<T> {
    let mut counts = BTreeMap::new();
    for e in c.examples() {
        *counts.entry(e.label.clone()).or_insert(0usize) += 1;
    }
    let total = c.len();
    let shares = counts
        .iter()
        .map(|(k, &n)| (k.clone(), T::from_usize_lossy(n) / T::from_usize_lossy(total)))
        .collect();
    LabelDistribution { counts, total, shares }
}

/// Keeps the first `max_tokens` whitespace-delimited words, joined by single spaces.
pub fn truncate_to_tokens(e: &LabeledExample, max_tokens: usize) -> LabeledExample {
    let words = text::words(&e.text);
    let kept = words[..words.len().min(max_tokens.max(1))].join(" ");
    LabeledExample {
        text: kept,
        ..e.clone()
    }
}

/// `n` distinct examples of `label`, uniformly without replacement, in corpus order.
pub fn draw_category_subset(c: &Corpus, label: &str, n: usize, seed: u64) -> Result<Corpus> {
    if n == 0 {
        return Err(Error::invalid("subset size must be positive"));
    }
    let pool = c.category(label)?;
    if n > pool.len() {
        return Err(Error::InsufficientExamples {
            label: label.to_owned(),
            requested: n,
            available: pool.len(),
        });
    }
    let mut rng = seed::rng(seed);
    let mut picked = index::sample(&mut rng, pool.len(), n).into_vec();
    picked.sort_unstable();
    Corpus::new(picked.into_iter().map(|i| pool.examples[i].clone()).collect())
}
