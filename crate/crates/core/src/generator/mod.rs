//! Few-shot synthetic text generation with per-candidate provenance.
//!
//! Each candidate gets its own five examples, drawn uniformly with
//! replacement from the category pool using a seed derived from
//! `(master_seed, scope, index)`. Seeds are fixed before dispatch, so worker
//! count never changes the output of a deterministic provider.

pub mod provider;
pub mod template;

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Corpus, LabeledExample};
use crate::error::{Error, Result};
use crate::seed;

pub use provider::{
    generate_candidate, ChatConfig, ChatOutcome, ChatProvider, GenerationParams, GenerationProvider, GenerationRequest,
    MockProvider, RateLimiter, RetryPolicy,
};
pub use template::{build_prompt, PromptTemplate};

pub const EXAMPLES_PER_PROMPT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateStatus {
    Pending,
    Accepted,
    Rejected,
    Flagged,
}

impl CandidateStatus {
    pub fn can_become(self, to: CandidateStatus) -> bool {
        use CandidateStatus::*;
        matches!(
            (self, to),
            (Pending, Accepted) | (Pending, Rejected) | (Pending, Flagged) | (Flagged, Accepted) | (Flagged, Rejected)
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, CandidateStatus::Accepted | CandidateStatus::Rejected)
    }
}

impl fmt::Display for CandidateStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CandidateStatus::Pending => "pending",
            CandidateStatus::Accepted => "accepted",
            CandidateStatus::Rejected => "rejected",
            CandidateStatus::Flagged => "flagged",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for CandidateStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pending" => Ok(CandidateStatus::Pending),
            "accepted" => Ok(CandidateStatus::Accepted),
            "rejected" => Ok(CandidateStatus::Rejected),
            "flagged" => Ok(CandidateStatus::Flagged),
            other => Err(Error::invalid(format!("unknown candidate status `{other}`"))),
        }
    }
}

/// One synthetic candidate and everything needed to audit or replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub candidate_id: String,
    pub category: String,
    /// Size of the original pool this candidate was drawn from.
    pub original_count: usize,
    pub index: usize,
    pub example_ids: Vec<String>,
    pub prompt_hash: String,
    pub prompt_version: u32,
    pub model_id: String,
    pub seed: u64,
    pub text: String,
    pub status: CandidateStatus,
    pub created_at: String,
}

impl GenerationRecord {
    pub fn transition(&mut self, to: CandidateStatus) -> Result<()> {
        if !self.status.can_become(to) {
            return Err(Error::IllegalTransition {
                from: self.status.to_string(),
                to: to.to_string(),
            });
        }
        self.status = to;
        Ok(())
    }

    pub fn to_example(&self) -> LabeledExample {
        LabeledExample {
            id: self.candidate_id.clone(),
            text: self.text.clone(),
            label: self.category.clone(),
            origin: crate::corpus::Origin::SyntheticLlm,
            source_id: None,
        }
    }
}

pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Five draws, uniform with replacement.
pub fn draw_examples(pool: &Corpus, seed: u64) -> Result<Vec<LabeledExample>> {
    draw_examples_with(pool, seed, false)
}

/// With `distinct`, duplicates are avoided when the pool has at least five members.
pub fn draw_examples_with(pool: &Corpus, seed: u64, distinct: bool) -> Result<Vec<LabeledExample>> {
    if pool.is_empty() {
        return Err(Error::invalid("cannot draw examples from an empty pool"));
    }
    let mut rng = seed::rng(seed);
    let n = pool.len();
    let picks: Vec<usize> = if distinct && n >= EXAMPLES_PER_PROMPT {
        index::sample(&mut rng, n, EXAMPLES_PER_PROMPT).into_vec()
    } else {
        (0..EXAMPLES_PER_PROMPT).map(|_| rng.random_range(0..n)).collect()
    };
    Ok(picks.into_iter().map(|i| pool.examples()[i].clone()).collect())
}

/// Everything a generation batch needs besides the provider.
#[derive(Debug, Clone)]
pub struct GenerationJob<'a> {
    pub pool: &'a Corpus,
    pub template: &'a PromptTemplate,
    pub prompt_version: u32,
    pub params: GenerationParams,
    pub master_seed: u64,
    /// Seed namespace; candidates are seeded by `(master_seed, scope, index)`.
    pub scope: String,
    /// Candidate ids are `{id_prefix}-{index:04}`.
    pub id_prefix: String,
    pub start_index: usize,
    pub count: usize,
    pub parallel: usize,
    pub distinct_examples: bool,
}

impl GenerationJob<'_> {
    pub fn candidate_seed(&self, index: usize) -> u64 {
        seed::derive(self.master_seed, &[&self.scope, &index])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFailure {
    pub index: usize,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct GenerationBatch {
    /// Completed records in index order.
    pub records: Vec<GenerationRecord>,
    pub failures: Vec<CandidateFailure>,
}

fn generate_one(job: &GenerationJob<'_>, provider: &dyn GenerationProvider, index: usize) -> Result<GenerationRecord> {
    let seed = job.candidate_seed(index);
    let examples = draw_examples_with(job.pool, seed, job.distinct_examples)?;
    let prompt = build_prompt(job.template, &examples)?;
    let texts: Vec<String> = examples.iter().map(|e| e.text.clone()).collect();
    let request = GenerationRequest {
        prompt: &prompt,
        examples: &texts,
        seed,
        params: &job.params,
    };
    let text = generate_candidate(provider, &request)?;
    Ok(GenerationRecord {
        candidate_id: format!("{}-{index:04}", job.id_prefix),
        category: job.template.category.clone(),
        original_count: job.pool.len(),
        index,
        example_ids: examples.into_iter().map(|e| e.id).collect(),
        prompt_hash: prompt_hash(&prompt),
        prompt_version: job.prompt_version,
        model_id: provider.model_id().to_owned(),
        seed,
        text,
        status: CandidateStatus::Pending,
        created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
    })
}

/// Generates `job.count` candidates starting at `job.start_index`.
///
/// `sink` sees each record as it completes, one call at a time. A failed
/// candidate is reported in `failures`; completed records are kept.
pub fn run_generation(
    job: &GenerationJob<'_>,
    provider: &dyn GenerationProvider,
    sink: &(dyn Fn(&GenerationRecord) -> Result<()> + Sync),
) -> Result<GenerationBatch> {
    if job.count == 0 {
        return Ok(GenerationBatch::default());
    }
    if job.pool.is_empty() {
        return Err(Error::invalid("generation pool is empty"));
    }
    job.template.validate()?;

    let next = AtomicUsize::new(0);
    let done = Mutex::new(GenerationBatch::default());
    let workers = job.parallel.clamp(1, job.count);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                if k >= job.count {
                    break;
                }
                let index = job.start_index + k;
                let outcome = generate_one(job, provider, index);
                let mut guard = done.lock().expect("generation results poisoned");
                match outcome.and_then(|r| sink(&r).map(|_| r)) {
                    Ok(r) => guard.records.push(r),
                    Err(e) => guard.failures.push(CandidateFailure {
                        index,
                        message: e.to_string(),
                    }),
                }
            });
        }
    });
    let mut batch = done.into_inner().expect("generation results poisoned");
    batch.records.sort_by_key(|r| r.index);
    batch.failures.sort_by_key(|f| f.index);
    Ok(batch)
}
