//! Generation endpoints: an offline mock and a chat-completions HTTP client.

use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::{lexicon, seed, text};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_output_words: usize,
}

impl GenerationParams {
    /// Defaults for sentence-length texts.
    pub fn short_texts() -> Self {
        GenerationParams {
            temperature: 1.0,
            max_output_words: 60,
        }
    }

    /// Defaults for speech-length texts; the prompt asks for 500 words.
    pub fn long_texts() -> Self {
        GenerationParams {
            temperature: 1.0,
            max_output_words: 550,
        }
    }
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self::short_texts()
    }
}

pub struct GenerationRequest<'a> {
    /// Rendered prompt, sent as the system instruction.
    pub prompt: &'a str,
    /// The five example texts the prompt was rendered from.
    pub examples: &'a [String],
    pub seed: u64,
    pub params: &'a GenerationParams,
}

pub trait GenerationProvider: Send + Sync {
    fn model_id(&self) -> &str;

    fn complete(&self, request: &GenerationRequest<'_>) -> Result<String>;
}

/// Calls the provider, rejects empty output and caps the word count.
pub fn generate_candidate(provider: &dyn GenerationProvider, request: &GenerationRequest<'_>) -> Result<String> {
    if request.prompt.trim().is_empty() {
        return Err(Error::invalid("prompt is empty"));
    }
    let raw = provider.complete(request)?;
    let words = text::words(&raw);
    if words.is_empty() {
        return Err(Error::EmptyCompletion);
    }
    if words.len() > request.params.max_output_words {
        Ok(words[..request.params.max_output_words].join(" "))
    } else {
        Ok(raw.trim().to_owned())
    }
}

/// Offline stand-in for a generative model.
///
/// Picks one of the five examples as a base and walks its words: each word is
/// kept with probability `similarity`, otherwise replaced by a word from the
/// other four examples or by a novel proper noun. `similarity = 1` returns the
/// base verbatim, `similarity = 0` a reshuffled vocabulary. Output is a pure
/// function of `(examples, seed, similarity)`.
#[derive(Debug, Clone)]
pub struct MockProvider {
    similarity: f64,
    model_id: String,
}

/// Share of replacements drawn from the other examples rather than novel words.
const DONOR_SHARE: f64 = 0.3;

impl MockProvider {
    pub fn new(similarity: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&similarity) {
            return Err(Error::invalid(format!("mock similarity {similarity} outside [0, 1]")));
        }
        Ok(MockProvider {
            similarity,
            model_id: format!("mock-recombiner-v1(s={similarity})"),
        })
    }

    pub fn similarity(&self) -> f64 {
        self.similarity
    }

    /// Rewrites one of the examples, preferring those that fit in `max_words`.
    pub fn recombine(&self, examples: &[String], seed: u64, max_words: usize) -> String {
        let mut rng = seed::rng(seed);
        let tokenized: Vec<Vec<&str>> = examples.iter().map(|e| text::words(e)).collect();
        let mut usable: Vec<usize> = (0..tokenized.len())
            .filter(|&i| !tokenized[i].is_empty() && tokenized[i].len() <= max_words)
            .collect();
        if usable.is_empty() {
            usable = (0..tokenized.len()).filter(|&i| !tokenized[i].is_empty()).collect();
        }
        if usable.is_empty() {
            return String::new();
        }
        let base_idx = usable[rng.random_range(0..usable.len())];
        let base = &tokenized[base_idx];
        let mut donors: Vec<&str> = tokenized
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != base_idx)
            .flat_map(|(_, t)| t.iter().copied())
            .collect();
        if donors.is_empty() {
            donors = base.clone();
        }
        let out: Vec<&str> = base
            .iter()
            .map(|&w| {
                if rng.random::<f64>() < self.similarity {
                    w
                } else if rng.random_bool(DONOR_SHARE) {
                    donors[rng.random_range(0..donors.len())]
                } else {
                    lexicon::novel_word(rng.random())
                }
            })
            .collect();
        out.join(" ")
    }
}

impl GenerationProvider for MockProvider {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn complete(&self, request: &GenerationRequest<'_>) -> Result<String> {
        Ok(self.recombine(request.examples, request.seed, request.params.max_output_words))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay_ms: 500,
            max_delay_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based): `base * 2^(retry-1)`, capped.
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u64.checked_shl(retry.saturating_sub(1)).unwrap_or(u64::MAX);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }
}

/// Spaces request starts at least `min_interval` apart across threads.
#[derive(Debug)]
pub struct RateLimiter {
    min_interval: Duration,
    next_slot: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(min_interval: Duration) -> Self {
        RateLimiter {
            min_interval,
            next_slot: Mutex::new(None),
        }
    }

    pub fn per_minute(requests: u32) -> Self {
        Self::new(Duration::from_secs(60) / requests.max(1))
    }

    pub fn acquire(&self) {
        let wait = {
            let mut slot = self.next_slot.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let start = slot.map_or(now, |s| s.max(now));
            *slot = Some(start + self.min_interval);
            start - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }

    /// Pushes the next slot back, e.g. after a 429 with `Retry-After`.
    pub fn defer(&self, by: Duration) {
        let mut slot = self.next_slot.lock().expect("rate limiter poisoned");
        let until = Instant::now() + by;
        *slot = Some(slot.map_or(until, |s| s.max(until)));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatConfig {
    pub url: String,
    pub model: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default)]
    pub requests_per_minute: Option<u32>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    120
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatOutcome {
    pub text: String,
    pub attempts: u32,
}

/// Chat-completions client: the rendered prompt goes out as the single system message.
///
/// Blocking; must not be constructed or called on an async executor thread.
pub struct ChatProvider {
    config: ChatConfig,
    client: reqwest::blocking::Client,
    limiter: Option<RateLimiter>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

impl ChatProvider {
    pub fn new(config: ChatConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::Provider(e.to_string()))?;
        let limiter = config.requests_per_minute.map(RateLimiter::per_minute);
        Ok(ChatProvider {
            config,
            client,
            limiter,
        })
    }

    pub fn request_body(&self, prompt: &str, temperature: f64) -> serde_json::Value {
        json!({
            "model": self.config.model,
            "messages": [{"role": "system", "content": prompt}],
            "temperature": temperature,
        })
    }

    pub fn chat(&self, prompt: &str, temperature: f64) -> Result<ChatOutcome> {
        let body = self.request_body(prompt, temperature);
        let policy = self.config.retry;
        let mut last_status = None;
        let mut last_message = String::from("no attempt made");
        for attempt in 1..=policy.max_attempts.max(1) {
            if let Some(l) = &self.limiter {
                l.acquire();
            }
            let mut req = self.client.post(&self.config.url).json(&body);
            if let Some(key) = &self.config.api_key {
                req = req.bearer_auth(key);
            }
            let mut retry_after = None;
            match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let parsed: ChatResponse = resp.json().map_err(|e| Error::Provider(e.to_string()))?;
                        let text = parsed
                            .choices
                            .into_iter()
                            .next()
                            .and_then(|c| c.message.content)
                            .unwrap_or_default();
                        if text.trim().is_empty() {
                            return Err(Error::EmptyCompletion);
                        }
                        return Ok(ChatOutcome {
                            text,
                            attempts: attempt,
                        });
                    }
                    last_status = Some(status.as_u16());
                    retry_after = resp
                        .headers()
                        .get(reqwest::header::RETRY_AFTER)
                        .and_then(|v| v.to_str().ok())
                        .and_then(|v| v.trim().parse::<u64>().ok())
                        .map(Duration::from_secs);
                    last_message = resp.text().unwrap_or_default();
                    let transient = status.as_u16() == 429 || status.is_server_error();
                    if !transient {
                        return Err(Error::Transport {
                            attempts: attempt,
                            status: last_status,
                            message: last_message,
                        });
                    }
                }
                Err(e) => {
                    last_status = e.status().map(|s| s.as_u16());
                    last_message = e.to_string();
                }
            }
            if attempt < policy.max_attempts {
                let backoff = policy.delay(attempt);
                let wait = retry_after.map_or(backoff, |ra| {
                    ra.min(Duration::from_millis(policy.max_delay_ms)).max(backoff)
                });
                log::warn!("generation attempt {attempt} failed ({last_status:?}); retrying in {wait:?}");
                if let Some(l) = &self.limiter {
                    l.defer(wait);
                }
                thread::sleep(wait);
            }
        }
        Err(Error::Transport {
            attempts: policy.max_attempts,
            status: last_status,
            message: last_message,
        })
    }
}

impl GenerationProvider for ChatProvider {
    fn model_id(&self) -> &str {
        &self.config.model
    }

    fn complete(&self, request: &GenerationRequest<'_>) -> Result<String> {
        self.chat(request.prompt, request.params.temperature).map(|o| o.text)
    }
}
