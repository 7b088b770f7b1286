//! Run configuration and the stage functions shared by the CLI and the service.
//!
//! A run targets one category. For every size in `original_sizes` the
//! category is cut down to that many originals (seeded by
//! `(master_seed, "subset", size)`) and topped back up to `full_count` by the
//! chosen strategy. Candidate seeds are `(master_seed, "<category>/<size>",
//! index)`, so extending a run never reshuffles earlier candidates.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{eda_augment, ssmba_augment, EdaOp, FillMaskProvider, MaskingConfig};
use crate::corpus::{self, Corpus, Format};
use crate::error::{Error, Result};
use crate::eval::experiment::{DerivedRow, FigureRow};
use crate::eval::trainer::BuiltinTrainer;
use crate::eval::{
    run_cells, Averaging, CellData, CvSettings, ExperimentReport, Hyperparams, Strategy, SubprocessTrainer, Trainer,
};
use crate::generator::{
    run_generation, CandidateFailure, CandidateStatus, ChatConfig, ChatProvider, GenerationJob, GenerationParams,
    GenerationProvider, GenerationRecord, MockProvider, PromptTemplate, RetryPolicy,
};
use crate::planner::{make_plan, plan_experiment_grid, GridCell, DEFAULT_MIN_ORIGINALS};
use crate::store::{now, DecisionAction, PromptVersion, RunRecord, RunState, RunStore, StateChange};
use crate::validator::{compute_similarity, BatchSummary, Candidate, SimilarityReport, Thresholds};
use crate::{generator, seed, Score};

pub const DEFAULT_API_KEY_ENV: &str = "IMPUTEXT_API_KEY";
pub const DEFAULT_MAX_WORDS: usize = 350;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSource {
    pub path: PathBuf,
    /// Inferred from the extension when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderConfig {
    Mock {
        #[serde(default = "default_similarity")]
        similarity: f64,
    },
    Http {
        url: String,
        model: String,
        /// Name of the environment variable holding the API key.
        #[serde(default = "default_api_key_env")]
        api_key_env: String,
        #[serde(default)]
        requests_per_minute: Option<u32>,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
        #[serde(default)]
        retry: RetryPolicy,
    },
}

fn default_similarity() -> f64 {
    0.5
}

fn default_api_key_env() -> String {
    DEFAULT_API_KEY_ENV.to_owned()
}

fn default_timeout() -> u64 {
    120
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig::Mock {
            similarity: default_similarity(),
        }
    }
}

impl ProviderConfig {
    pub fn build(&self) -> Result<Box<dyn GenerationProvider>> {
        match self {
            ProviderConfig::Mock { similarity } => Ok(Box::new(MockProvider::new(*similarity)?)),
            ProviderConfig::Http {
                url,
                model,
                api_key_env,
                requests_per_minute,
                timeout_secs,
                retry,
            } => {
                let api_key = std::env::var(api_key_env).ok().filter(|k| !k.is_empty());
                if api_key.is_none() {
                    log::warn!("{api_key_env} is not set; sending requests without a key");
                }
                Ok(Box::new(ChatProvider::new(ChatConfig {
                    url: url.clone(),
                    model: model.clone(),
                    api_key,
                    retry: *retry,
                    requests_per_minute: *requests_per_minute,
                    timeout_secs: *timeout_secs,
                })?))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    #[serde(default = "default_ssmba_rate")]
    pub ssmba_rate: f64,
    #[serde(default = "default_mask_token")]
    pub mask_token: String,
    #[serde(default = "default_fill_mask")]
    pub fill_mask: FillMaskProvider,
    #[serde(default = "default_eda_ops")]
    pub eda_ops: Vec<EdaOp>,
    #[serde(default = "default_eda_strength")]
    pub eda_strength: f64,
}

fn default_ssmba_rate() -> f64 {
    crate::baselines::masking::DEFAULT_RATE
}

fn default_mask_token() -> String {
    crate::baselines::masking::DEFAULT_MASK_TOKEN.to_owned()
}

fn default_fill_mask() -> FillMaskProvider {
    FillMaskProvider::BuiltinLexical
}

fn default_eda_ops() -> Vec<EdaOp> {
    EdaOp::ALL.to_vec()
}

fn default_eda_strength() -> f64 {
    crate::baselines::eda::DEFAULT_STRENGTH
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            ssmba_rate: default_ssmba_rate(),
            mask_token: default_mask_token(),
            fill_mask: default_fill_mask(),
            eda_ops: default_eda_ops(),
            eda_strength: default_eda_strength(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_folds")]
    pub repeats: usize,
    #[serde(default)]
    pub averaging: Averaging,
    #[serde(default)]
    pub params: Hyperparams,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    #[serde(default = "default_true")]
    pub include_true_model: bool,
}

fn default_folds() -> usize {
    10
}

fn default_strategies() -> Vec<Strategy> {
    Strategy::ALL.to_vec()
}

fn default_true() -> bool {
    true
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: default_folds(),
            repeats: default_folds(),
            averaging: Averaging::Weighted,
            params: Hyperparams::default(),
            strategies: default_strategies(),
            include_true_model: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainerConfig {
    #[default]
    Builtin,
    /// External command speaking the trainer protocol.
    Subprocess {
        program: PathBuf,
        #[serde(default)]
        args: Vec<String>,
    },
}

impl TrainerConfig {
    pub fn build(&self) -> Box<dyn Trainer> {
        match self {
            TrainerConfig::Builtin => Box::new(BuiltinTrainer::new()),
            TrainerConfig::Subprocess { program, args } => Box::new(SubprocessTrainer::new(program, args.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub corpus: CorpusSource,
    pub category: String,
    #[serde(default = "default_sizes")]
    pub original_sizes: Vec<usize>,
    /// Category size every grid cell is filled back up to; defaults to the
    /// category's count in the corpus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_count: Option<usize>,
    /// Built-in template name (`nostalgia`, `speeches`) or a file path.
    #[serde(default = "default_template")]
    pub template: String,
    #[serde(default)]
    pub provider: ProviderConfig,
    #[serde(default)]
    pub generation: GenerationParams,
    #[serde(default = "default_parallel")]
    pub parallel: usize,
    #[serde(default)]
    pub distinct_examples: bool,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub baselines: BaselineConfig,
    #[serde(default)]
    pub cv: CvConfig,
    #[serde(default)]
    pub trainer: TrainerConfig,
    pub master_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<String>,
    /// Word cap applied to every text at load time; `null` disables it.
    #[serde(default = "default_max_words")]
    pub max_words: Option<usize>,
}

fn default_sizes() -> Vec<usize> {
    vec![50, 75, 100]
}

fn default_template() -> String {
    "nostalgia".to_owned()
}

fn default_parallel() -> usize {
    4
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_max_words() -> Option<usize> {
    Some(DEFAULT_MAX_WORDS)
}

impl RunConfig {
    /// Parses a config file; relative paths resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read(path).map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_slice(&raw)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &Path| if p.is_relative() { base.join(p) } else { p.to_owned() };
        self.corpus.path = fix(&self.corpus.path);
        self.output_dir = fix(&self.output_dir);
        if !is_builtin_template(&self.template) {
            self.template = fix(Path::new(&self.template)).to_string_lossy().into_owned();
        }
    }

    pub fn run_id(&self) -> String {
        self.run_id
            .clone()
            .unwrap_or_else(|| format!("{}-seed{}", sanitize(&self.category), self.master_seed))
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(self.run_id())
    }

    /// Checks everything that does not need the corpus contents.
    pub fn validate(&self) -> Result<()> {
        if self.category.trim().is_empty() {
            return Err(Error::invalid("category must not be empty"));
        }
        if self.original_sizes.is_empty() || self.original_sizes.contains(&0) {
            return Err(Error::invalid("original_sizes must be non-empty positive counts"));
        }
        if !self.corpus.path.exists() {
            return Err(Error::invalid(format!(
                "corpus {} does not exist",
                self.corpus.path.display()
            )));
        }
        if !is_builtin_template(&self.template) && !Path::new(&self.template).exists() {
            return Err(Error::invalid(format!("template {} does not exist", self.template)));
        }
        if self.max_words == Some(0) {
            return Err(Error::invalid("max_words must be at least 1"));
        }
        if self.cv.strategies.is_empty() {
            return Err(Error::invalid("cv.strategies must not be empty"));
        }
        if let Some(id) = &self.run_id {
            if id.is_empty() || sanitize(id) != *id {
                return Err(Error::invalid(format!("run id `{id}` may only use [A-Za-z0-9._-]")));
            }
        }
        if let ProviderConfig::Mock { similarity } = self.provider {
            MockProvider::new(similarity)?;
        }
        MaskingConfig {
            rate: self.baselines.ssmba_rate,
            mask_token: self.baselines.mask_token.clone(),
            seed: 0,
        }
        .validate()?;
        if !(0.0..=1.0).contains(&self.baselines.eda_strength) {
            return Err(Error::invalid("eda_strength must lie in [0, 1]"));
        }
        Ok(())
    }
}

fn is_builtin_template(name: &str) -> bool {
    matches!(name, "nostalgia" | "speeches")
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// A config with its corpus loaded and template resolved.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: RunConfig,
    pub corpus: Corpus,
    pub template: PromptTemplate,
    pub full_count: usize,
    pub grid: Vec<GridCell>,
}

pub fn prepare(config: &RunConfig) -> Result<Prepared> {
    config.validate()?;
    let format = config
        .corpus
        .format
        .unwrap_or_else(|| Format::from_path(&config.corpus.path));
    let mut corpus = corpus::load_corpus(&config.corpus.path, format)?;
    if let Some(max) = config.max_words {
        corpus = corpus.map_examples(|e| corpus::truncate_to_tokens(e, max))?;
    }
    let available = corpus.count(&config.category);
    if available == 0 {
        return Err(Error::UnknownCategory(config.category.clone()));
    }
    let full_count = config.full_count.unwrap_or(available);
    if full_count > available {
        return Err(Error::InsufficientExamples {
            label: config.category.clone(),
            requested: full_count,
            available,
        });
    }
    let grid = plan_experiment_grid(full_count, &config.original_sizes)?;
    let template = if is_builtin_template(&config.template) {
        PromptTemplate::builtin(&config.template, config.category.clone())?
    } else {
        PromptTemplate::from_file(&config.template, config.category.clone())?
    };
    Ok(Prepared {
        config: config.clone(),
        corpus,
        template,
        full_count,
        grid,
    })
}

impl Prepared {
    pub fn subset_seed(&self, original_count: usize) -> u64 {
        seed::derive(self.config.master_seed, &[&"subset", &original_count])
    }

    /// The category originals kept in the cell of this size.
    pub fn subset(&self, original_count: usize) -> Result<Corpus> {
        corpus::draw_category_subset(
            &self.corpus,
            &self.config.category,
            original_count,
            self.subset_seed(original_count),
        )
    }

    /// All other categories plus the kept originals of the target category.
    pub fn cell_originals(&self, subset: &Corpus) -> Result<Corpus> {
        let category = &self.config.category;
        self.corpus.filter(|e| &e.label != category).concat(subset)
    }

    pub fn scope(&self, original_count: usize) -> String {
        format!("{}/{original_count}", self.config.category)
    }

    pub fn id_prefix(&self, original_count: usize) -> String {
        format!("{}-{original_count}", sanitize(&self.config.category))
    }

    pub fn initial_record(&self) -> Result<RunRecord> {
        let dist = corpus::label_distribution::<Score>(&self.corpus);
        let plan = make_plan(&dist, self.full_count, DEFAULT_MIN_ORIGINALS)?;
        let at = now();
        Ok(RunRecord {
            run_id: self.config.run_id(),
            config: serde_json::to_value(&self.config)?,
            corpus_digest: self.corpus.digest(),
            category: self.config.category.clone(),
            full_count: self.full_count,
            plan,
            grid: self.grid.clone(),
            prompts: vec![PromptVersion {
                version: 1,
                body_hash: generator::prompt_hash(&self.template.body),
                body: self.template.body.clone(),
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
        })
    }
}

/// Creates the run directory, or reopens it when the corpus digest matches.
pub fn open_or_create(prepared: &Prepared, dir: &Path) -> Result<RunStore> {
    if dir.join(crate::store::RUN_FILE).exists() {
        let store = RunStore::open(dir)?;
        let digest = prepared.corpus.digest();
        if store.record().corpus_digest != digest {
            return Err(Error::invalid(format!(
                "{} was created from a different corpus",
                dir.display()
            )));
        }
        return Ok(store);
    }
    RunStore::create(dir, prepared.initial_record()?)
}

/// Opens an existing run directory and re-prepares it from its config snapshot.
pub fn reopen(dir: &Path) -> Result<(RunStore, Prepared)> {
    let store = RunStore::open(dir)?;
    let config: RunConfig = serde_json::from_value(store.record().config)?;
    let prepared = prepare(&config)?;
    if prepared.corpus.digest() != store.record().corpus_digest {
        return Err(Error::invalid(format!(
            "corpus {} changed since the run was created",
            config.corpus.path.display()
        )));
    }
    Ok((store, prepared))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFill {
    pub original_count: usize,
    pub needed: usize,
    pub generated: usize,
    pub usable: usize,
    pub failures: Vec<CandidateFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub run_id: String,
    pub prompt_version: u32,
    pub cells: Vec<CellFill>,
    pub flag_counts: BTreeMap<String, usize>,
}

impl GenerationSummary {
    pub fn failures(&self) -> usize {
        self.cells.iter().map(|c| c.failures.len()).sum()
    }
}

fn usable(c: &GenerationRecord) -> bool {
    c.status != CandidateStatus::Rejected
}

fn prepared_template(prepared: &Prepared, store: &RunStore) -> Result<(PromptTemplate, u32)> {
    let prompt = store.record().current_prompt().clone();
    Ok((prepared.template.with_body(prompt.body)?, prompt.version))
}

/// Moves the run into `to` unless it is already there.
pub fn enter(store: &RunStore, to: RunState) -> Result<()> {
    if store.state() != to {
        store.transition(to, None)?;
    }
    Ok(())
}

/// Fills every cell's deficit of usable (non-rejected) candidates, screens
/// them and leaves the run in `reviewing`.
pub fn generate(store: &RunStore, prepared: &Prepared, provider: &dyn GenerationProvider) -> Result<GenerationSummary> {
    enter(store, RunState::Generating)?;
    match generate_inner(store, prepared, provider) {
        Ok(summary) => {
            store.transition(RunState::Reviewing, None)?;
            Ok(summary)
        }
        Err(e) => {
            store.transition(RunState::Failed, Some(e.to_string()))?;
            Err(e)
        }
    }
}

fn generate_inner(
    store: &RunStore,
    prepared: &Prepared,
    provider: &dyn GenerationProvider,
) -> Result<GenerationSummary> {
    let cfg = &prepared.config;
    let (template, version) = prepared_template(prepared, store)?;
    let mut cells = Vec::new();
    for cell in &prepared.grid {
        let subset = prepared.subset(cell.original)?;
        let existing: Vec<GenerationRecord> = cell_candidates(store, prepared, cell.original);
        let have = existing.iter().filter(|c| usable(c)).count();
        let deficit = cell.synthetic.saturating_sub(have);
        let start_index = existing.iter().map(|c| c.index + 1).max().unwrap_or(0);
        let job = GenerationJob {
            pool: &subset,
            template: &template,
            prompt_version: version,
            params: cfg.generation,
            master_seed: cfg.master_seed,
            scope: prepared.scope(cell.original),
            id_prefix: prepared.id_prefix(cell.original),
            start_index,
            count: deficit,
            parallel: cfg.parallel,
            distinct_examples: cfg.distinct_examples,
        };
        let batch = run_generation(&job, provider, &|r| store.append_candidate(r))?;
        for f in &batch.failures {
            log::error!("candidate {} of cell {} failed: {}", f.index, cell.original, f.message);
        }
        screen_cell(store, prepared, cell.original, &subset)?;
        cells.push(CellFill {
            original_count: cell.original,
            needed: cell.synthetic,
            generated: batch.records.len(),
            usable: cell_candidates(store, prepared, cell.original)
                .iter()
                .filter(|c| usable(c))
                .count(),
            failures: batch.failures,
        });
    }
    let report = similarity_report(store, prepared)?;
    store.write_similarity(&report)?;
    Ok(GenerationSummary {
        run_id: store.record().run_id,
        prompt_version: version,
        cells,
        flag_counts: report
            .summary
            .flag_counts
            .iter()
            .map(|(f, n)| {
                (
                    serde_json::to_value(f)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_owned))
                        .unwrap_or_default(),
                    *n,
                )
            })
            .collect(),
    })
}

/// Candidates of one cell in index order.
pub fn cell_candidates(store: &RunStore, prepared: &Prepared, original_count: usize) -> Vec<GenerationRecord> {
    let mut v: Vec<GenerationRecord> = store
        .candidates(None)
        .into_iter()
        .filter(|c| c.category == prepared.config.category && c.original_count == original_count)
        .collect();
    v.sort_by_key(|c| c.index);
    v
}

fn cell_report(
    store: &RunStore,
    prepared: &Prepared,
    original_count: usize,
    subset: &Corpus,
) -> SimilarityReport<Score> {
    let records: Vec<GenerationRecord> = cell_candidates(store, prepared, original_count)
        .into_iter()
        .filter(usable)
        .collect();
    let views: Vec<Candidate<'_>> = records.iter().map(Candidate::from).collect();
    compute_similarity(&views, subset, &prepared.config.thresholds)
}

/// Marks pending candidates that raise any flag, logging a validator decision.
fn screen_cell(store: &RunStore, prepared: &Prepared, original_count: usize, subset: &Corpus) -> Result<()> {
    let report = cell_report(store, prepared, original_count, subset);
    for entry in report.entries.iter().filter(|e| !e.flags.is_empty()) {
        if store.candidate(&entry.candidate_id).map(|c| c.status) == Some(CandidateStatus::Pending) {
            let flags: Vec<String> = entry
                .flags
                .iter()
                .filter_map(|f| serde_json::to_value(f).ok().and_then(|v| v.as_str().map(str::to_owned)))
                .collect();
            store.decide(
                &entry.candidate_id,
                DecisionAction::Flag,
                Some(flags.join(",")),
                "validator",
            )?;
        }
    }
    Ok(())
}

/// Current similarity of every usable candidate, each scored within its cell.
pub fn similarity_report(store: &RunStore, prepared: &Prepared) -> Result<SimilarityReport<Score>> {
    let mut entries = Vec::new();
    for cell in &prepared.grid {
        let subset = prepared.subset(cell.original)?;
        entries.extend(cell_report(store, prepared, cell.original, &subset).entries);
    }
    Ok(SimilarityReport::from_entries(prepared.config.thresholds, entries))
}

/// Strategies in canonical order without duplicates.
pub fn canonical_strategies(list: &[Strategy]) -> Vec<Strategy> {
    Strategy::ALL.into_iter().filter(|s| list.contains(s)).collect()
}

/// Builds every cell's training data.
pub fn build_cells(store: &RunStore, prepared: &Prepared, strategies: &[Strategy]) -> Result<Vec<CellData>> {
    let cfg = &prepared.config;
    let strategies = canonical_strategies(strategies);
    let mut cells = Vec::new();
    for cell in &prepared.grid {
        let subset = prepared.subset(cell.original)?;
        let originals = prepared.cell_originals(&subset)?;
        for &strategy in &strategies {
            let synthetic = match strategy {
                Strategy::None => Vec::new(),
                Strategy::Imputation => {
                    let pool: Vec<_> = cell_candidates(store, prepared, cell.original)
                        .into_iter()
                        .filter(usable)
                        .take(cell.synthetic)
                        .map(|c| c.to_example())
                        .collect();
                    if pool.len() < cell.synthetic {
                        log::warn!(
                            "cell {}: {} usable candidates for a deficit of {}",
                            cell.original,
                            pool.len(),
                            cell.synthetic
                        );
                    }
                    pool
                }
                Strategy::Ssmba => {
                    let fill = cfg.baselines.fill_mask.build()?;
                    let masking = MaskingConfig {
                        rate: cfg.baselines.ssmba_rate,
                        mask_token: cfg.baselines.mask_token.clone(),
                        seed: 0,
                    };
                    let s = seed::derive(cfg.master_seed, &[&"ssmba", &cell.original]);
                    ssmba_augment(&subset, cell.synthetic, &masking, fill.as_ref(), s)?
                        .into_iter()
                        .map(|a| a.example)
                        .collect()
                }
                Strategy::Eda => {
                    let s = seed::derive(cfg.master_seed, &[&"eda", &cell.original]);
                    eda_augment(
                        &subset,
                        cell.synthetic,
                        &cfg.baselines.eda_ops,
                        cfg.baselines.eda_strength,
                        s,
                    )?
                    .into_iter()
                    .map(|a| a.example)
                    .collect()
                }
            };
            cells.push(CellData {
                strategy,
                original_count: cell.original,
                is_true_model: false,
                originals: originals.clone(),
                synthetic,
            });
        }
    }
    if cfg.cv.include_true_model {
        cells.push(CellData {
            strategy: Strategy::None,
            original_count: prepared.full_count,
            is_true_model: true,
            originals: prepared.cell_originals(&prepared.subset(prepared.full_count)?)?,
            synthetic: Vec::new(),
        });
    }
    Ok(cells)
}

pub fn cv_settings(config: &RunConfig) -> CvSettings {
    CvSettings {
        folds: config.cv.folds,
        repeats: config.cv.repeats,
        seed: config.master_seed,
        averaging: config.cv.averaging,
        params: config.cv.params.clone(),
    }
}

/// Runs the experiment grid and writes `metrics.json` and `figure.csv`.
pub fn evaluate(
    store: &RunStore,
    prepared: &Prepared,
    strategies: &[Strategy],
    trainer: &dyn Trainer,
) -> Result<ExperimentReport> {
    if strategies.is_empty() {
        return Err(Error::invalid("no strategies to evaluate"));
    }
    enter(store, RunState::Evaluating)?;
    let outcome = (|| -> Result<ExperimentReport> {
        let cells = build_cells(store, prepared, strategies)?;
        let cfg = &prepared.config;
        let report = run_cells(
            &cfg.category,
            prepared.full_count,
            cells,
            &cv_settings(cfg),
            cfg.master_seed,
            trainer,
        );
        store.write_report(&report.to_json_bytes()?, &report.figure_csv()?)?;
        Ok(report)
    })();
    match outcome {
        Ok(report) => {
            store.transition(RunState::Done, None)?;
            Ok(report)
        }
        Err(e) => {
            store.transition(RunState::Failed, Some(e.to_string()))?;
            Err(e)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellProgress {
    pub original_count: usize,
    pub needed: usize,
    pub by_status: BTreeMap<String, usize>,
}

/// Everything `report` prints, gathered from the run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub state: RunState,
    pub category: String,
    pub full_count: usize,
    pub corpus_digest: String,
    pub prompt_version: u32,
    pub plan_warnings: Vec<String>,
    pub cells: Vec<CellProgress>,
    pub similarity: Option<BatchSummary<Score>>,
    pub derived: Vec<DerivedRow>,
    pub figure: Vec<FigureRow>,
}

pub fn summarize(store: &RunStore) -> Result<RunSummary> {
    let record = store.record();
    let candidates = store.candidates(None);
    let cells = record
        .grid
        .iter()
        .map(|g| {
            let mut by_status = BTreeMap::new();
            for c in candidates.iter().filter(|c| c.original_count == g.original) {
                *by_status.entry(c.status.to_string()).or_insert(0) += 1;
            }
            CellProgress {
                original_count: g.original,
                needed: g.synthetic,
                by_status,
            }
        })
        .collect();
    let metrics: Option<ExperimentReport> = match store.metrics_bytes()? {
        Some(b) => Some(serde_json::from_slice(&b)?),
        None => None,
    };
    Ok(RunSummary {
        run_id: record.run_id.clone(),
        state: record.state,
        category: record.category.clone(),
        full_count: record.full_count,
        corpus_digest: record.corpus_digest.clone(),
        prompt_version: record.current_prompt().version,
        plan_warnings: record.plan.warnings.clone(),
        cells,
        similarity: store.similarity()?.map(|r| r.summary),
        derived: metrics.as_ref().map(|m| m.derived.clone()).unwrap_or_default(),
        figure: metrics.map(|m| m.figure).unwrap_or_default(),
    })
}

fn cell(v: Option<Score>) -> String {
    v.map_or_else(|| "-".to_owned(), |x| format!("{x:.3}"))
}

impl RunSummary {
    pub fn to_markdown(&self) -> String {
        let mut s = format!(
            "# Run `{}`\n\n- state: {}\n- category: `{}` (full count {})\n- prompt version: {}\n- corpus sha256: `{}`\n",
            self.run_id, self.state, self.category, self.full_count, self.prompt_version, self.corpus_digest
        );
        for w in &self.plan_warnings {
            s.push_str(&format!("- warning: {w}\n"));
        }
        s.push_str("\n## Candidates\n\n| originals | needed | pending | flagged | accepted | rejected |\n|---|---|---|---|---|---|\n");
        for c in &self.cells {
            let n = |k: &str| c.by_status.get(k).copied().unwrap_or(0);
            s.push_str(&format!(
                "| {} | {} | {} | {} | {} | {} |\n",
                c.original_count,
                c.needed,
                n("pending"),
                n("flagged"),
                n("accepted"),
                n("rejected")
            ));
        }
        if let Some(sim) = &self.similarity {
            s.push_str(&format!(
                "\n## Similarity\n\n- candidates screened: {}\n- mean max Jaccard vs originals: {:.3}\n- mean max Jaccard vs siblings: {:.3}\n- mean max n-gram containment: {:.3}\n",
                sim.candidates,
                sim.mean_max_jaccard_vs_original,
                sim.mean_max_jaccard_vs_synthetic,
                sim.mean_max_ngram_containment
            ));
            for (flag, n) in &sim.flag_counts {
                s.push_str(&format!("- {flag:?}: {n}\n"));
            }
        }
        if !self.derived.is_empty() {
            s.push_str(&format!(
                "\n## F1 of `{}`\n\n| originals | true | none | imputation | ssmba | eda | overfit (imp) | overfit (ssmba) | gain over none | overfit reduction | penalized imp |\n|---|---|---|---|---|---|---|---|---|---|---|\n",
                self.category
            ));
            for d in &self.derived {
                s.push_str(&format!(
                    "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |\n",
                    d.original_count,
                    cell(d.f1_true),
                    cell(d.f1_none),
                    cell(d.f1_imputation),
                    cell(d.f1_ssmba),
                    cell(d.f1_eda),
                    cell(d.imputation_overfit_ratio),
                    cell(d.ssmba_overfit_ratio),
                    cell(d.gain_over_none),
                    cell(d.overfit_reduction_vs_ssmba),
                    cell(d.penalized_imputation)
                ));
            }
        }
        s
    }
}
