use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::LabeledExample;
use crate::error::{Error, Result};

pub const SLOT: &str = "{}";
pub const SLOT_COUNT: usize = 5;

const NOSTALGIA: &str = include_str!("../../templates/nostalgia.txt");
const SPEECHES: &str = include_str!("../../templates/speeches.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub name: String,
    pub body: String,
    pub category: String,
    #[serde(default)]
    pub constraints_note: String,
}

impl PromptTemplate {
    pub fn new(name: impl Into<String>, body: impl Into<String>, category: impl Into<String>) -> Result<Self> {
        let t = PromptTemplate {
            name: name.into(),
            body: body.into(),
            category: category.into(),
            constraints_note: String::new(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let slots = self.body.matches(SLOT).count();
        if slots != SLOT_COUNT {
            return Err(Error::Template(format!(
                "template `{}` has {slots} placeholder slot(s), expected {SLOT_COUNT}",
                self.name
            )));
        }
        Ok(())
    }

    /// Built-in templates by name: `nostalgia` or `speeches`.
    pub fn builtin(name: &str, category: impl Into<String>) -> Result<Self> {
        let (body, note) = match name {
            "nostalgia" => (NOSTALGIA, "short texts; default max_output_words 60"),
            "speeches" => (SPEECHES, "long texts; default max_output_words 550"),
            other => return Err(Error::Template(format!("no built-in template named `{other}`"))),
        };
        let mut t = PromptTemplate::new(name, body, category)?;
        t.constraints_note = note.to_owned();
        Ok(t)
    }

    /// Reads a template body from a UTF-8 file; one trailing newline is dropped.
    pub fn from_file(path: impl AsRef<Path>, category: impl Into<String>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path)?;
        let body = raw.strip_suffix('\n').unwrap_or(&raw);
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("custom");
        PromptTemplate::new(name, body, category)
    }

    pub fn with_body(&self, body: impl Into<String>) -> Result<Self> {
        let t = PromptTemplate {
            body: body.into(),
            ..self.clone()
        };
        t.validate()?;
        Ok(t)
    }

    /// Fills the slots in order with the given texts.
    pub fn render(&self, texts: &[&str]) -> Result<String> {
        self.validate()?;
        if texts.len() != SLOT_COUNT {
            return Err(Error::invalid(format!(
                "prompt needs exactly {SLOT_COUNT} examples, got {}",
                texts.len()
            )));
        }
        let mut out = String::with_capacity(self.body.len() + texts.iter().map(|t| t.len()).sum::<usize>());
        let mut parts = self.body.split(SLOT);
        out.push_str(parts.next().unwrap_or(""));
        for (text, rest) in texts.iter().zip(parts) {
            out.push_str(text);
            out.push_str(rest);
        }
        Ok(out)
    }
}

pub fn build_prompt(template: &PromptTemplate, examples: &[LabeledExample]) -> Result<String> {
    let texts: Vec<&str> = examples.iter().map(|e| e.text.as_str()).collect();
    template.render(&texts)
}
