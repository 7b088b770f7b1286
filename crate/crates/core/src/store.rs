//! File-backed run directory.
//!
//! ```text
//! <run-dir>/run.json          RunRecord snapshot (rewritten atomically)
//! <run-dir>/candidates.jsonl  GenerationRecord per line, append-only
//! <run-dir>/decisions.jsonl   DecisionEvent per line, append-only
//! <run-dir>/similarity.json   latest SimilarityReport
//! <run-dir>/metrics.json      latest ExperimentReport
//! <run-dir>/figure.csv        figure table of the latest report
//! ```
//!
//! Candidate status is never rewritten in place: replaying candidates and
//! then decisions rebuilds it. Each log line is written with a single
//! `write_all`, and a torn final line is skipped on replay.

use std::collections::HashMap;
use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{prompt_hash, CandidateStatus, GenerationRecord};
use crate::planner::{GridCell, ImputationPlan};
use crate::Score;

pub const RUN_FILE: &str = "run.json";
pub const CANDIDATES_FILE: &str = "candidates.jsonl";
pub const DECISIONS_FILE: &str = "decisions.jsonl";
pub const SIMILARITY_FILE: &str = "similarity.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const FIGURE_FILE: &str = "figure.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunState {
    Created,
    Generating,
    Reviewing,
    Evaluating,
    Done,
    Failed,
}

impl RunState {
    /// Forward order, plus `reviewing -> generating` to fill a deficit and
    /// `done -> evaluating` to re-run evaluation. `failed` is reachable from
    /// anywhere and leads back to `generating` or `evaluating` for a retry.
    pub fn can_become(self, to: RunState) -> bool {
        use RunState::*;
        matches!(
            (self, to),
            (Created, Generating)
                | (Generating, Reviewing)
                | (Reviewing, Generating)
                | (Reviewing, Evaluating)
                | (Evaluating, Done)
                | (Done, Evaluating)
                | (Failed, Generating)
                | (Failed, Evaluating)
        ) || (to == Failed && self != Failed)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RunState::Created => "created",
            RunState::Generating => "generating",
            RunState::Reviewing => "reviewing",
            RunState::Evaluating => "evaluating",
            RunState::Done => "done",
            RunState::Failed => "failed",
        }
    }
}

impl fmt::Display for RunState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptVersion {
    pub version: u32,
    pub body: String,
    pub body_hash: String,
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateChange {
    pub state: RunState,
    pub at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    /// Config snapshot as submitted, with resolved defaults.
    pub config: serde_json::Value,
    pub corpus_digest: String,
    pub category: String,
    pub full_count: usize,
    pub plan: ImputationPlan,
    pub grid: Vec<GridCell>,
    pub prompts: Vec<PromptVersion>,
    pub state: RunState,
    pub history: Vec<StateChange>,
    pub created_at: String,
    pub updated_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_error: Option<String>,
}

impl RunRecord {
    pub fn current_prompt(&self) -> &PromptVersion {
        self.prompts.last().expect("a run always has a prompt")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecisionAction {
    Flag,
    Accept,
    Reject,
}

impl DecisionAction {
    pub fn target(self) -> CandidateStatus {
        match self {
            DecisionAction::Flag => CandidateStatus::Flagged,
            DecisionAction::Accept => CandidateStatus::Accepted,
            DecisionAction::Reject => CandidateStatus::Rejected,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionEvent {
    pub candidate_id: String,
    pub action: DecisionAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// `validator` or `reviewer`.
    pub source: String,
    pub at: String,
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

struct Inner {
    record: RunRecord,
    candidates: Vec<GenerationRecord>,
    by_id: HashMap<String, usize>,
}

impl Inner {
    fn apply(&mut self, event: &DecisionEvent) -> Result<&GenerationRecord> {
        let i = *self
            .by_id
            .get(&event.candidate_id)
            .ok_or_else(|| Error::NotFound(format!("candidate `{}`", event.candidate_id)))?;
        self.candidates[i].transition(event.action.target())?;
        Ok(&self.candidates[i])
    }
}

/// One run directory with a single writer and many readers.
pub struct RunStore {
    dir: PathBuf,
    inner: RwLock<Inner>,
}

impl fmt::Debug for RunStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RunStore")
            .field("dir", &self.dir)
            .finish_non_exhaustive()
    }
}

impl RunStore {
    /// Creates the directory and writes the initial record. Fails if the
    /// directory already holds a run.
    pub fn create(dir: impl Into<PathBuf>, record: RunRecord) -> Result<Self> {
        let dir = dir.into();
        if dir.join(RUN_FILE).exists() {
            return Err(Error::invalid(format!("{} already holds a run", dir.display())));
        }
        fs::create_dir_all(&dir)?;
        write_atomic(&dir.join(RUN_FILE), &json_bytes(&record)?)?;
        for f in [CANDIDATES_FILE, DECISIONS_FILE] {
            OpenOptions::new().create(true).append(true).open(dir.join(f))?;
        }
        Ok(RunStore {
            dir,
            inner: RwLock::new(Inner {
                record,
                candidates: Vec::new(),
                by_id: HashMap::new(),
            }),
        })
    }

    /// Replays the logs. Decisions that no longer apply are skipped with a warning.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        let run_path = dir.join(RUN_FILE);
        if !run_path.exists() {
            return Err(Error::NotFound(format!("no run at {}", dir.display())));
        }
        let record: RunRecord = serde_json::from_slice(&fs::read(&run_path)?)?;
        let mut inner = Inner {
            record,
            candidates: Vec::new(),
            by_id: HashMap::new(),
        };
        for c in read_log::<GenerationRecord>(&dir.join(CANDIDATES_FILE))? {
            if inner.by_id.contains_key(&c.candidate_id) {
                log::warn!("duplicate candidate `{}` in log, keeping the first", c.candidate_id);
                continue;
            }
            inner.by_id.insert(c.candidate_id.clone(), inner.candidates.len());
            inner.candidates.push(c);
        }
        for d in read_log::<DecisionEvent>(&dir.join(DECISIONS_FILE))? {
            if let Err(e) = inner.apply(&d) {
                log::warn!("skipping decision on `{}`: {e}", d.candidate_id);
            }
        }
        Ok(RunStore {
            dir,
            inner: RwLock::new(inner),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn record(&self) -> RunRecord {
        self.read().record.clone()
    }

    pub fn state(&self) -> RunState {
        self.read().record.state
    }

    pub fn candidates(&self, status: Option<CandidateStatus>) -> Vec<GenerationRecord> {
        self.read()
            .candidates
            .iter()
            .filter(|c| status.is_none_or(|s| c.status == s))
            .cloned()
            .collect()
    }

    pub fn candidate(&self, id: &str) -> Option<GenerationRecord> {
        let g = self.read();
        g.by_id.get(id).map(|&i| g.candidates[i].clone())
    }

    pub fn append_candidate(&self, record: &GenerationRecord) -> Result<()> {
        let mut g = self.write();
        if g.by_id.contains_key(&record.candidate_id) {
            return Err(Error::invalid(format!(
                "candidate `{}` already exists",
                record.candidate_id
            )));
        }
        append_line(&self.dir.join(CANDIDATES_FILE), record)?;
        let idx = g.candidates.len();
        g.by_id.insert(record.candidate_id.clone(), idx);
        g.candidates.push(record.clone());
        Ok(())
    }

    /// Validates the transition, logs the event, then applies it.
    pub fn decide(
        &self,
        candidate_id: &str,
        action: DecisionAction,
        note: Option<String>,
        source: &str,
    ) -> Result<GenerationRecord> {
        let mut g = self.write();
        let i = *g
            .by_id
            .get(candidate_id)
            .ok_or_else(|| Error::NotFound(format!("candidate `{candidate_id}`")))?;
        let mut probe = g.candidates[i].clone();
        probe.transition(action.target())?;
        let event = DecisionEvent {
            candidate_id: candidate_id.to_owned(),
            action,
            note,
            source: source.to_owned(),
            at: now(),
        };
        append_line(&self.dir.join(DECISIONS_FILE), &event)?;
        Ok(g.apply(&event)?.clone())
    }

    pub fn transition(&self, to: RunState, note: Option<String>) -> Result<RunRecord> {
        let mut g = self.write();
        let from = g.record.state;
        if !from.can_become(to) {
            return Err(Error::IllegalTransition {
                from: from.to_string(),
                to: to.to_string(),
            });
        }
        let mut next = g.record.clone();
        let at = now();
        next.state = to;
        next.updated_at = at.clone();
        if to == RunState::Failed {
            next.last_error = note.clone();
        }
        next.history.push(StateChange { state: to, at, note });
        write_atomic(&self.dir.join(RUN_FILE), &json_bytes(&next)?)?;
        g.record = next;
        Ok(g.record.clone())
    }

    /// Adds a prompt version. Allowed while `created` or `reviewing`.
    pub fn set_prompt(&self, body: String) -> Result<PromptVersion> {
        let mut g = self.write();
        let state = g.record.state;
        if !matches!(state, RunState::Created | RunState::Reviewing) {
            return Err(Error::IllegalTransition {
                from: state.to_string(),
                to: "prompt edit".into(),
            });
        }
        let version = PromptVersion {
            version: g.record.current_prompt().version + 1,
            body_hash: prompt_hash(&body),
            body,
            created_at: now(),
        };
        let mut next = g.record.clone();
        next.prompts.push(version.clone());
        next.updated_at = version.created_at.clone();
        write_atomic(&self.dir.join(RUN_FILE), &json_bytes(&next)?)?;
        g.record = next;
        Ok(version)
    }

    pub fn write_similarity<T: Serialize>(&self, report: &T) -> Result<()> {
        let _g = self.write();
        write_atomic(&self.dir.join(SIMILARITY_FILE), &json_bytes(report)?)
    }

    pub fn similarity(&self) -> Result<Option<crate::validator::SimilarityReport<Score>>> {
        read_optional(&self.dir.join(SIMILARITY_FILE))
    }

    pub fn write_report(&self, metrics_json: &[u8], figure_csv: &str) -> Result<()> {
        let _g = self.write();
        write_atomic(&self.dir.join(METRICS_FILE), metrics_json)?;
        write_atomic(&self.dir.join(FIGURE_FILE), figure_csv.as_bytes())
    }

    /// Raw `metrics.json` bytes, if evaluation has completed.
    pub fn metrics_bytes(&self) -> Result<Option<Vec<u8>>> {
        let path = self.dir.join(METRICS_FILE);
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(fs::read(path)?))
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Inner> {
        self.inner.read().expect("run store poisoned")
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, Inner> {
        self.inner.write().expect("run store poisoned")
    }
}

fn json_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

fn read_optional<T: DeserializeOwned>(path: &Path) -> Result<Option<T>> {
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_slice(&fs::read(path)?)?))
}

/// Writes to a sibling temp file and renames over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn append_line<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut line = serde_json::to_string(value)?;
    line.push('\n');
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(line.as_bytes())?;
    f.sync_data()?;
    Ok(())
}

/// Reads a JSONL log. An unparsable final line without a trailing newline is
/// treated as a torn write and dropped; anything else unparsable is an error.
pub fn read_log<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let raw = fs::read(path)?;
    let complete = raw.last().is_none_or(|&b| b == b'\n');
    let lines: Vec<&[u8]> = raw.split(|&b| b == b'\n').collect();
    let last = lines.len().saturating_sub(1);
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        match serde_json::from_slice(line) {
            Ok(v) => out.push(v),
            Err(_) if i == last && !complete => {
                log::warn!("{}: dropping torn final line", path.display());
            }
            Err(e) => {
                return Err(Error::Parse {
                    path: path.to_owned(),
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// Lists run ids (subdirectories holding a `run.json`) under `root`.
pub fn list_runs(root: &Path) -> Result<Vec<String>> {
    if !root.exists() {
        return Ok(Vec::new());
    }
    let mut ids = Vec::new();
    for entry in fs::read_dir(root)? {
        let entry = entry?;
        if entry.path().join(RUN_FILE).exists() {
            ids.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    ids.sort();
    Ok(ids)
}

/// Reads candidates without taking a store handle, e.g. for `validate`.
pub fn read_candidates(dir: &Path) -> Result<Vec<GenerationRecord>> {
    Ok(RunStore::open(dir)?.candidates(None))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(run_id: &str) -> RunRecord {
        let at = now();
        RunRecord {
            run_id: run_id.into(),
            config: serde_json::json!({}),
            corpus_digest: "d".into(),
            category: "c".into(),
            full_count: 3,
            plan: ImputationPlan::default(),
            grid: vec![],
            prompts: vec![PromptVersion {
                version: 1,
                body: "{} {} {} {} {}".into(),
                body_hash: prompt_hash("{} {} {} {} {}"),
                created_at: at.clone(),
            }],
            state: RunState::Created,
            history: vec![StateChange {
                state: RunState::Created,
                at: at.clone(),
                note: None,
            }],
            created_at: at.clone(),
            updated_at: at,
            last_error: None,
        }
    }

    fn candidate(id: &str) -> GenerationRecord {
        GenerationRecord {
            candidate_id: id.into(),
            category: "c".into(),
            original_count: 3,
            index: 0,
            example_ids: vec![],
            prompt_hash: "h".into(),
            prompt_version: 1,
            model_id: "m".into(),
            seed: 1,
            text: "t".into(),
            status: CandidateStatus::Pending,
            created_at: now(),
        }
    }

    #[test]
    fn replay_matches_memory() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r");
        let s = RunStore::create(&path, record("r")).unwrap();
        s.append_candidate(&candidate("a")).unwrap();
        s.append_candidate(&candidate("b")).unwrap();
        s.decide("a", DecisionAction::Flag, None, "validator").unwrap();
        s.decide("a", DecisionAction::Accept, Some("fine".into()), "reviewer")
            .unwrap();
        assert!(matches!(
            s.decide("a", DecisionAction::Reject, None, "reviewer"),
            Err(Error::IllegalTransition { .. })
        ));
        assert!(matches!(
            s.decide("zz", DecisionAction::Reject, None, "reviewer"),
            Err(Error::NotFound(_))
        ));
        s.transition(RunState::Generating, None).unwrap();
        let reopened = RunStore::open(&path).unwrap();
        assert_eq!(reopened.candidates(None), s.candidates(None));
        assert_eq!(reopened.record(), s.record());
        assert_eq!(reopened.candidate("a").unwrap().status, CandidateStatus::Accepted);
    }

    #[test]
    fn torn_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r");
        let s = RunStore::create(&path, record("r")).unwrap();
        s.append_candidate(&candidate("a")).unwrap();
        drop(s);
        let mut f = OpenOptions::new()
            .append(true)
            .open(path.join(CANDIDATES_FILE))
            .unwrap();
        f.write_all(b"{\"candidate_id\":\"b\",\"cat").unwrap();
        let reopened = RunStore::open(&path).unwrap();
        assert_eq!(reopened.candidates(None).len(), 1);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.jsonl");
        fs::write(&p, "{\"a\":1}\nnot json\n{\"a\":2}\n").unwrap();
        assert!(read_log::<serde_json::Value>(&p).is_err());
    }

    #[test]
    fn state_machine() {
        use RunState::*;
        assert!(Created.can_become(Generating));
        assert!(!Created.can_become(Done));
        assert!(!Done.can_become(Created));
        assert!(Reviewing.can_become(Failed));
        assert!(!Failed.can_become(Failed));
    }

    #[test]
    fn prompt_versions() {
        let dir = tempfile::tempdir().unwrap();
        let s = RunStore::create(dir.path().join("r"), record("r")).unwrap();
        assert_eq!(s.set_prompt("a {} {} {} {} {}".into()).unwrap().version, 2);
        s.transition(RunState::Generating, None).unwrap();
        assert!(s.set_prompt("b {} {} {} {} {}".into()).is_err());
        assert_eq!(s.record().prompts.len(), 2);
    }
}
