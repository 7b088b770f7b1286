//! Mask-and-reconstruct augmentation.

use std::time::Duration;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::{Corpus, LabeledExample, Origin};
use crate::error::{Error, Result};
use crate::{lexicon, seed, text};

pub const DEFAULT_MASK_TOKEN: &str = "<mask>";
pub const DEFAULT_RATE: f64 = 0.4;
/// Rate of the original masked-language-model recipe.
pub const UPSTREAM_RATE: f64 = 0.15;
const WARN_RATE: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskingConfig {
    pub rate: f64,
    #[serde(default = "default_mask_token")]
    pub mask_token: String,
    #[serde(default)]
    pub seed: u64,
}

fn default_mask_token() -> String {
    DEFAULT_MASK_TOKEN.to_owned()
}

impl Default for MaskingConfig {
    fn default() -> Self {
        MaskingConfig {
            rate: DEFAULT_RATE,
            mask_token: default_mask_token(),
            seed: 0,
        }
    }
}

impl MaskingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.rate <= 1.0) {
            return Err(Error::invalid(format!("masking rate {} outside (0, 1]", self.rate)));
        }
        if self.rate > WARN_RATE {
            log::warn!(
                "masking rate {} exceeds {WARN_RATE}; outputs will barely resemble sources",
                self.rate
            );
        }
        if self.mask_token.trim().is_empty() || self.mask_token.contains(char::is_whitespace) {
            return Err(Error::invalid("mask token must be a single non-empty word"));
        }
        Ok(())
    }

    /// `max(1, round(rate * tokens))`.
    pub fn mask_count(&self, tokens: usize) -> usize {
        ((self.rate * tokens as f64).round() as usize).clamp(1, tokens.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Masked {
    pub text: String,
    /// Sorted word positions that were replaced.
    pub positions: Vec<usize>,
}

/// Replaces the given word positions with `mask_token`.
pub fn mask_positions(input: &str, positions: &[usize], mask_token: &str) -> Result<Masked> {
    let mut words: Vec<&str> = text::words(input);
    if words.is_empty() {
        return Err(Error::invalid("cannot mask empty text"));
    }
    let mut sorted = positions.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if let Some(&p) = sorted.last() {
        if p >= words.len() {
            return Err(Error::invalid(format!(
                "mask position {p} beyond {} tokens",
                words.len()
            )));
        }
    }
    for &p in &sorted {
        words[p] = mask_token;
    }
    Ok(Masked {
        text: words.join(" "),
        positions: sorted,
    })
}

/// Masks `max(1, round(rate * n))` positions chosen uniformly without replacement.
pub fn mask_tokens(input: &str, config: &MaskingConfig) -> Result<Masked> {
    config.validate()?;
    let n = text::words(input).len();
    if n == 0 {
        return Err(Error::invalid("cannot mask empty text"));
    }
    let k = config.mask_count(n);
    let mut rng = seed::rng(config.seed);
    let positions = index::sample(&mut rng, n, k).into_vec();
    mask_positions(input, &positions, &config.mask_token)
}

/// Fills masks: given the masked words, returns one token per mask, in order.
pub trait FillMask: Send + Sync {
    fn fill(&self, words: &[&str], mask_token: &str, seed: u64) -> Result<Vec<String>>;
}

/// Offline filler: each mask gets a word from the bundled frequency-tiered
/// list, keyed by `(seed, position)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct BuiltinLexical;

impl FillMask for BuiltinLexical {
    fn fill(&self, words: &[&str], mask_token: &str, seed: u64) -> Result<Vec<String>> {
        Ok(words
            .iter()
            .enumerate()
            .filter(|(_, w)| **w == mask_token)
            .map(|(pos, _)| lexicon::fill_word(seed::derive(seed, &[&"fill", &pos])).to_owned())
            .collect())
    }
}

/// Remote fill-mask model.
///
/// Request: `POST {"text_with_masks": "...", "mask_token": "<mask>"}`.
/// Response: `{"tokens": ["...", ...]}` with one token per mask, left to right.
pub struct HttpFillMask {
    endpoint: String,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct FillResponse {
    tokens: Vec<String>,
}

impl HttpFillMask {
    pub fn new(endpoint: impl Into<String>) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| Error::Provider(e.to_string()))?;
        Ok(HttpFillMask {
            endpoint: endpoint.into(),
            client,
        })
    }
}

impl FillMask for HttpFillMask {
    fn fill(&self, words: &[&str], mask_token: &str, _seed: u64) -> Result<Vec<String>> {
        let resp = self
            .client
            .post(&self.endpoint)
            .json(&json!({"text_with_masks": words.join(" "), "mask_token": mask_token}))
            .send()
            .map_err(|e| Error::Transport {
                attempts: 1,
                status: e.status().map(|s| s.as_u16()),
                message: e.to_string(),
            })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(Error::Transport {
                attempts: 1,
                status: Some(status.as_u16()),
                message: resp.text().unwrap_or_default(),
            });
        }
        let body: FillResponse = resp.json().map_err(|e| Error::Provider(e.to_string()))?;
        Ok(body.tokens)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FillMaskProvider {
    BuiltinLexical,
    HttpEndpoint { endpoint: String },
}

impl FillMaskProvider {
    pub fn build(&self) -> Result<Box<dyn FillMask>> {
        match self {
            FillMaskProvider::BuiltinLexical => Ok(Box::new(BuiltinLexical)),
            FillMaskProvider::HttpEndpoint { endpoint } if endpoint.trim().is_empty() => {
                Err(Error::invalid("http fill-mask provider requires an endpoint"))
            }
            FillMaskProvider::HttpEndpoint { endpoint } => Ok(Box::new(HttpFillMask::new(endpoint.clone())?)),
        }
    }
}

/// Replaces every mask with the provider's token; other words pass through.
pub fn reconstruct(masked: &str, mask_token: &str, provider: &dyn FillMask, seed: u64) -> Result<String> {
    let words = text::words(masked);
    let masks = words.iter().filter(|w| **w == mask_token).count();
    if masks == 0 {
        return Err(Error::invalid("text contains no mask token"));
    }
    let fills = provider.fill(&words, mask_token, seed)?;
    if fills.len() != masks {
        return Err(Error::Provider(format!(
            "provider returned {} tokens for {masks} masks",
            fills.len()
        )));
    }
    let mut fills = fills.into_iter();
    let mut out = Vec::with_capacity(words.len());
    for w in words {
        if w == mask_token {
            let t = fills.next().unwrap_or_default();
            let t = t.trim();
            if t.is_empty() {
                return Err(Error::Provider("provider returned an empty token".into()));
            }
            if t.contains(mask_token) {
                return Err(Error::Provider("provider returned a mask token".into()));
            }
            out.push(t.to_owned());
        } else {
            out.push(w.to_owned());
        }
    }
    Ok(out.join(" "))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedExample {
    pub example: LabeledExample,
    /// Word positions that were masked; empty for rule-based edits.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub masked_positions: Vec<usize>,
}

/// `count` neighbours of uniformly drawn originals (with replacement), one
/// mask-and-reconstruct round each.
pub fn ssmba_augment(
    pool: &Corpus,
    count: usize,
    config: &MaskingConfig,
    provider: &dyn FillMask,
    seed: u64,
) -> Result<Vec<AugmentedExample>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    if pool.is_empty() {
        return Err(Error::invalid("ssmba pool is empty"));
    }
    config.validate()?;
    (0..count)
        .map(|i| {
            let item_seed = seed::derive(seed, &[&"ssmba", &i]);
            let mut rng = seed::rng(item_seed);
            let source = &pool.examples()[rng.random_range(0..pool.len())];
            let cfg = MaskingConfig {
                seed: seed::derive(item_seed, &[&"mask"]),
                ..config.clone()
            };
            let masked = mask_tokens(&source.text, &cfg)?;
            let text = reconstruct(
                &masked.text,
                &cfg.mask_token,
                provider,
                seed::derive(item_seed, &[&"fill"]),
            )?;
            Ok(AugmentedExample {
                example: LabeledExample {
                    id: format!("ssmba-{i:04}"),
                    text,
                    label: source.label.clone(),
                    origin: Origin::SyntheticSsmba,
                    source_id: Some(source.id.clone()),
                },
                masked_positions: masked.positions,
            })
        })
        .collect()
}
