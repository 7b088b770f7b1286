//! `imputext`: command-line driver for every pipeline stage.
//!
//! Machine-readable JSON goes to stdout and human tables to stderr. Exit
//! codes: 0 ok, 1 error, 2 flagged (`validate` found near duplicates).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use imputext::baselines::{eda_augment, ssmba_augment, EdaOp, FillMaskProvider, MaskingConfig};
use imputext::corpus::{self, Corpus, Format};
use imputext::eval::trainer::{serve_builtin_protocol, ProtocolPaths};
use imputext::eval::{parse_strategies, Strategy};
use imputext::pipeline::{self, RunConfig};
use imputext::planner::{self, DEFAULT_MIN_ORIGINALS};
use imputext::store::RunState;
use imputext::validator::Flag;
use imputext::{fixtures, Coverage, Distribution};

#[derive(Debug, Parser)]
#[command(
    name = "imputext",
    version,
    about = "Synthetic imputation for imbalanced text corpora"
)]
struct Cli {
    /// Log level (error, warn, info, debug, trace).
    #[arg(long, global = true, env = "IMPUTEXT_LOG", default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Label distribution and per-batch coverage of a corpus.
    Analyze {
        corpus: PathBuf,
        /// jsonl or csv; guessed from the extension when omitted.
        #[arg(long)]
        format: Option<Format>,
        /// Training batch size used for the coverage table.
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
    },
    /// Synthetic examples needed per category to reach a target size.
    Plan {
        corpus: PathBuf,
        #[arg(long)]
        format: Option<Format>,
        /// Target size per category; defaults to max(200, largest category).
        #[arg(long)]
        target: Option<usize>,
        /// Below this many originals the plan warns of elevated overfitting risk.
        #[arg(long, default_value_t = DEFAULT_MIN_ORIGINALS)]
        min_originals: usize,
    },
    /// Generate candidates for every grid cell of a run config.
    Generate {
        config: PathBuf,
        /// Override the config's worker count.
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Recompute the similarity report of a run; exits 2 on any near duplicate.
    Validate { run_dir: PathBuf },
    /// Produce a comparison batch with a baseline augmenter.
    AugmentBaseline {
        corpus: PathBuf,
        #[arg(long)]
        format: Option<Format>,
        #[arg(long, value_enum)]
        method: Method,
        /// Category to augment.
        #[arg(long)]
        category: String,
        /// Number of augmented examples.
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Masking rate (ssmba).
        #[arg(long, default_value_t = imputext::baselines::masking::DEFAULT_RATE)]
        rate: f64,
        /// Mask token (ssmba).
        #[arg(long, default_value = imputext::baselines::masking::DEFAULT_MASK_TOKEN)]
        mask_token: String,
        /// Fill-mask HTTP endpoint (ssmba); the built-in lexical filler is used when omitted.
        #[arg(long)]
        fill_endpoint: Option<String>,
        /// Comma-separated operations (eda): swap, delete, insert.
        #[arg(long, default_value = "swap,delete,insert")]
        ops: String,
        /// Edit strength (eda).
        #[arg(long, default_value_t = imputext::baselines::eda::DEFAULT_STRENGTH)]
        strength: f64,
        /// Output file; JSONL to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-validate the experiment grid of a run config.
    Cv {
        config: PathBuf,
        /// Comma-separated: none, imputation, ssmba, eda. Defaults to the config's list.
        #[arg(long)]
        strategies: Option<String>,
    },
    /// Summarize a run directory.
    Report {
        run_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Markdown)]
        format: ReportFormat,
    },
    /// Start the HTTP service.
    Serve {
        #[arg(long, env = "IMPUTEXT_ADDR", default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long, env = "IMPUTEXT_DATA_DIR", default_value = "runs")]
        data_dir: PathBuf,
    },
    /// Built-in classifier behind the trainer protocol.
    Trainer {
        train: PathBuf,
        eval: PathBuf,
        hyperparams: PathBuf,
        predictions: PathBuf,
    },
    /// Write a bundled synthetic corpus.
    Fixture {
        #[arg(value_enum)]
        name: FixtureName,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    Ssmba,
    Eda,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FixtureName {
    Nostalgia,
    Speeches,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).init();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn load(path: &Path, format: Option<Format>) -> Result<Corpus> {
    let format = format.unwrap_or_else(|| Format::from_path(path));
    corpus::load_corpus(path, format).with_context(|| format!("loading {}", path.display()))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Analyze {
            corpus,
            format,
            batch_size,
        } => {
            let c = load(&corpus, format)?;
            let dist: Distribution = corpus::label_distribution(&c);
            let coverage: Vec<Coverage> = planner::coverage_table(&dist, batch_size)?;
            eprintln!("{:<24} {:>8} {:>8} {:>12}", "category", "count", "share", "per batch");
            for cov in &coverage {
                let label = cov.category.clone().unwrap_or_default();
                eprintln!(
                    "{:<24} {:>8} {:>7.1}% {:>12.2}",
                    label,
                    cov.category_count,
                    dist.shares[&label] * 100.0,
                    cov.per_batch_avg
                );
            }
            if let Some(first) = coverage.first() {
                eprintln!(
                    "total {} examples, {} batches of {batch_size}",
                    dist.total, first.num_batches
                );
            }
            print_json(&serde_json::json!({ "distribution": dist, "coverage": coverage }))?;
        }
        Command::Plan {
            corpus,
            format,
            target,
            min_originals,
        } => {
            let c = load(&corpus, format)?;
            let dist: Distribution = corpus::label_distribution(&c);
            let target = target.unwrap_or_else(|| planner::default_target(&dist));
            let plan = planner::make_plan(&dist, target, min_originals)?;
            eprintln!(
                "{:<24} {:>10} {:>8} {:>18}",
                "category", "originals", "target", "synthetic_needed"
            );
            for (label, e) in &plan.entries {
                eprintln!(
                    "{:<24} {:>10} {:>8} {:>18}",
                    label, e.original_count, e.target_total, e.synthetic_needed
                );
            }
            for w in &plan.warnings {
                eprintln!("warning: {w}");
            }
            print_json(&plan)?;
        }
        Command::Generate { config, parallel } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(p) = parallel {
                cfg.parallel = p;
            }
            let prepared = pipeline::prepare(&cfg)?;
            let store = pipeline::open_or_create(&prepared, &cfg.run_dir())?;
            let provider = cfg.provider.build()?;
            let summary = pipeline::generate(&store, &prepared, provider.as_ref())?;
            for c in &summary.cells {
                eprintln!(
                    "cell {:>5}: needed {:>5}, generated {:>5}, usable {:>5}, failed {}",
                    c.original_count,
                    c.needed,
                    c.generated,
                    c.usable,
                    c.failures.len()
                );
            }
            eprintln!("run directory: {}", store.dir().display());
            print_json(&summary)?;
            if summary.failures() > 0 {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Validate { run_dir } => {
            let (store, prepared) = pipeline::reopen(&run_dir)?;
            let report = pipeline::similarity_report(&store, &prepared)?;
            store.write_similarity(&report)?;
            let s = &report.summary;
            eprintln!(
                "{} candidates, mean max Jaccard vs originals {:.3}, vs siblings {:.3}, containment {:.3}",
                s.candidates,
                s.mean_max_jaccard_vs_original,
                s.mean_max_jaccard_vs_synthetic,
                s.mean_max_ngram_containment
            );
            for (flag, n) in &s.flag_counts {
                eprintln!("  {flag:?}: {n}");
            }
            print_json(&report)?;
            if report.count(Flag::NearDuplicate) > 0 {
                return Ok(ExitCode::from(2));
            }
        }
        Command::AugmentBaseline {
            corpus,
            format,
            method,
            category,
            count,
            seed,
            rate,
            mask_token,
            fill_endpoint,
            ops,
            strength,
            out,
        } => {
            let c = load(&corpus, format)?;
            let pool = c.category(&category)?;
            let batch = match method {
                Method::Ssmba => {
                    let provider = match fill_endpoint {
                        Some(endpoint) => FillMaskProvider::HttpEndpoint { endpoint },
                        None => FillMaskProvider::BuiltinLexical,
                    }
                    .build()?;
                    let cfg = MaskingConfig { rate, mask_token, seed };
                    ssmba_augment(&pool, count, &cfg, provider.as_ref(), seed)?
                }
                Method::Eda => {
                    let ops: Vec<EdaOp> = ops
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(|s| s.trim().parse())
                        .collect::<imputext::Result<_>>()?;
                    if ops.is_empty() {
                        bail!("--ops must name at least one operation");
                    }
                    eda_augment(&pool, count, &ops, strength, seed)?
                }
            };
            let augmented = Corpus::new(batch.into_iter().map(|a| a.example).collect())?;
            match out {
                Some(path) => {
                    corpus::write_corpus(&augmented, &path, Format::from_path(&path))?;
                    eprintln!("wrote {} examples to {}", augmented.len(), path.display());
                }
                None => corpus::write_corpus_to(&augmented, std::io::stdout().lock(), Format::Jsonl)?,
            }
        }
        Command::Cv { config, strategies } => {
            let cfg = RunConfig::load(&config)?;
            let strategies: Vec<Strategy> = match strategies {
                Some(list) => parse_strategies(&list)?,
                None => cfg.cv.strategies.clone(),
            };
            let prepared = pipeline::prepare(&cfg)?;
            let store = pipeline::open_or_create(&prepared, &cfg.run_dir())?;
            if strategies.contains(&Strategy::Imputation) && store.state() == RunState::Created {
                let provider = cfg.provider.build()?;
                pipeline::generate(&store, &prepared, provider.as_ref())?;
            }
            let trainer = cfg.trainer.build();
            let report = pipeline::evaluate(&store, &prepared, &strategies, trainer.as_ref())?;
            eprintln!(
                "{:>9} {:>10} {:>10} {:>10} {:>10} {:>10}",
                "originals", "true", "none", "imputation", "ssmba", "eda"
            );
            let f = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |x| format!("{x:.3}"));
            for d in &report.derived {
                eprintln!(
                    "{:>9} {:>10} {:>10} {:>10} {:>10} {:>10}",
                    d.original_count,
                    f(d.f1_true),
                    f(d.f1_none),
                    f(d.f1_imputation),
                    f(d.f1_ssmba),
                    f(d.f1_eda)
                );
            }
            for c in report.cells.iter().filter(|c| c.error.is_some()) {
                eprintln!(
                    "cell {} @ {} failed: {}",
                    c.strategy,
                    c.original_count,
                    c.error.as_deref().unwrap_or("")
                );
            }
            eprintln!("metrics: {}", store.dir().join(imputext::store::METRICS_FILE).display());
            print_json(&serde_json::json!({
                "run_id": store.record().run_id,
                "run_dir": store.dir(),
                "derived": report.derived,
            }))?;
            if report.cells.iter().any(|c| c.error.is_some()) {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Report { run_dir, format } => {
            let store = imputext::store::RunStore::open(&run_dir)?;
            let summary = pipeline::summarize(&store)?;
            match format {
                ReportFormat::Json => print_json(&summary)?,
                ReportFormat::Markdown => print!("{}", summary.to_markdown()),
                ReportFormat::Csv => {
                    let path = run_dir.join(imputext::store::FIGURE_FILE);
                    let csv = std::fs::read_to_string(&path)
                        .with_context(|| format!("{} has no figure table yet", run_dir.display()))?;
                    print!("{csv}");
                }
            }
        }
        Command::Serve { addr, data_dir } => {
            let token = std::env::var(imputext_service::TOKEN_ENV)
                .ok()
                .filter(|t| !t.is_empty());
            let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            eprintln!("serving {} on http://{addr}", data_dir.display());
            runtime.block_on(imputext_service::serve(
                &addr,
                imputext_service::ServiceConfig { data_dir, token },
            ))?;
        }
        Command::Trainer {
            train,
            eval,
            hyperparams,
            predictions,
        } => {
            serve_builtin_protocol(&ProtocolPaths {
                train,
                eval,
                hyperparams,
                predictions,
            })?;
        }
        Command::Fixture { name, out } => {
            let c = match name {
                FixtureName::Nostalgia => fixtures::nostalgia(),
                FixtureName::Speeches => fixtures::speeches(),
            };
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            corpus::write_corpus(&c, &out, Format::from_path(&out))?;
            eprintln!("wrote {} examples to {}", c.len(), out.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}
