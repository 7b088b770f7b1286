//! Acceptance criteria, one PASS/FAIL line each.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use http_body_util::BodyExt;
use imputext::baselines::masking::{mask_tokens, reconstruct, BuiltinLexical, MaskingConfig, DEFAULT_MASK_TOKEN};
use imputext::corpus::{write_corpus, Corpus, Format, LabeledExample, Origin};
use imputext::eval::{
    f1_scores, overfit_ratio, overfit_reduction, relative_decrease, relative_gain, stratified_folds, BuiltinTrainer,
    Strategy,
};
use imputext::generator::provider::MockProvider;
use imputext::pipeline::{self, RunConfig};
use imputext::planner::{batch_coverage, plan_experiment_grid};
use imputext::validator::{ngram_jaccard, Flag};
use imputext::{fixtures, seed, Coverage, F1Report, Score};
use imputext_service::{router, App, ServiceConfig};
use rand::Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

const BIN: &str = env!("CARGO_BIN_EXE_imputext");

type Check = fn() -> Result<String, String>;
type Ratio = fn(f64, f64) -> imputext::Result<f64>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn metric_identities() -> Result<String, String> {
    let cases: [(&str, Ratio, f64, f64, f64); 6] = [
        ("overfit_ratio", overfit_ratio, 0.851, 0.822, 0.035),
        ("overfit_ratio", overfit_ratio, 0.923, 0.895, 0.031),
        ("relative_gain", relative_gain, 0.822, 0.471, 0.745),
        ("relative_gain", relative_gain, 0.822, 0.655, 0.255),
        ("relative_decrease", relative_decrease, 0.879, 0.711, 0.191),
        ("overfit_reduction", overfit_reduction, 0.982, 0.851, 0.133),
    ];
    for (name, f, a, b, want) in cases {
        let got = f(a, b).map_err(err)?;
        ensure((got - want).abs() <= 0.001, || {
            format!("{name}({a},{b}) = {got:.4}, expected {want}")
        })?;
    }
    Ok("6 quoted figures within 0.001".into())
}

fn plan_grids() -> Result<String, String> {
    let pairs = |full, sizes: &[usize]| -> Result<Vec<(usize, usize)>, String> {
        Ok(plan_experiment_grid(full, sizes)
            .map_err(err)?
            .iter()
            .map(|g| (g.original, g.synthetic))
            .collect())
    };
    let a = pairs(151, &[50, 75, 100])?;
    ensure(a == [(50, 101), (75, 76), (100, 51)], || format!("151 grid {a:?}"))?;
    let b = pairs(218, &[50, 75, 100, 150])?;
    ensure(b == [(50, 168), (75, 143), (100, 118), (150, 68)], || {
        format!("218 grid {b:?}")
    })?;
    Ok("151 and 218 grids exact".into())
}

fn batch_coverage_check() -> Result<String, String> {
    let a: Coverage = batch_coverage(200, 2000, 16).map_err(err)?;
    ensure(a.num_batches == 125 && (a.per_batch_avg - 1.6).abs() < 1e-12, || {
        format!("{a:?}")
    })?;
    let b: Coverage = batch_coverage(1000, 1000, 16).map_err(err)?;
    let last = 1000 - (b.num_batches - 1) * 16;
    ensure(b.num_batches == 63 && last == 8, || format!("{b:?}, last batch {last}"))?;
    Ok("125 batches at 1.6; 63 batches with a last batch of 8".into())
}

fn cv_structure() -> Result<String, String> {
    let c = fixtures::nostalgia();
    ensure(c.len() == 1200 && c.count("nostalgic") == 151, || {
        "fixture shape".into()
    })?;
    let splits = stratified_folds(&c, 10, 10, 42).map_err(err)?.splits(&c);
    ensure(splits.len() == 100, || format!("{} splits", splits.len()))?;
    for r in 0..10 {
        let mut seen = vec![0u32; c.len()];
        for s in splits.iter().filter(|s| s.repeat == r) {
            s.eval.iter().for_each(|&i| seen[i] += 1);
            let pos = s.eval.iter().filter(|&&i| c.examples()[i].label == "nostalgic").count();
            ensure(pos == 15 || pos == 16, || {
                format!("repeat {r} fold has {pos} positives")
            })?;
        }
        ensure(seen.iter().all(|&k| k == 1), || {
            format!("repeat {r} is not a partition")
        })?;
    }
    let base = fixtures::nostalgia_with(9, 50, 200);
    let mut rng = seed::rng(99);
    for trial in 0..100u64 {
        let n = rng.random_range(1..120);
        let syn: Vec<LabeledExample> = (0..n)
            .map(|i| {
                LabeledExample::new(format!("s{i}"), "synthetic words", "nostalgic").with_origin(Origin::SyntheticLlm)
            })
            .collect();
        let c = base.concat(&Corpus::new(syn).map_err(err)?).map_err(err)?;
        for s in stratified_folds(&c, 10, 1, trial).map_err(err)?.splits(&c) {
            ensure(s.eval.iter().all(|&i| !c.examples()[i].origin.is_synthetic()), || {
                format!("trial {trial}: synthetic example in an eval fold")
            })?;
        }
    }
    Ok("100 splits, partitions, 15/16 positives, 100 clean trials".into())
}

fn masking_statistics() -> Result<String, String> {
    let mut rng = seed::rng(7);
    let mut total = 0.0;
    for i in 0..1000u64 {
        let n = rng.random_range(5..=60);
        let words: Vec<String> = (0..n).map(|_| format!("w{}", rng.random_range(0..500))).collect();
        let text = words.join(" ");
        let cfg = MaskingConfig {
            rate: 0.4,
            seed: i,
            ..MaskingConfig::default()
        };
        let m = mask_tokens(&text, &cfg).map_err(err)?;
        total += m.positions.len() as f64 / n as f64;
        let filled = reconstruct(&m.text, DEFAULT_MASK_TOKEN, &BuiltinLexical, i).map_err(err)?;
        let out: Vec<&str> = filled.split(' ').collect();
        ensure(out.len() == n, || format!("sentence {i}: length changed"))?;
        for (p, w) in words.iter().enumerate() {
            ensure(m.positions.contains(&p) || out[p] == w, || {
                format!("sentence {i}: position {p} altered")
            })?;
        }
    }
    let mean = total / 1000.0;
    ensure((mean - 0.40).abs() <= 0.02, || {
        format!("mean masked fraction {mean:.4}")
    })?;
    Ok(format!("mean masked fraction {mean:.4}; unmasked tokens preserved"))
}

fn desk_config(
    dir: &Path,
    sizes: &[usize],
    folds: usize,
    repeats: usize,
    similarity: f64,
) -> Result<RunConfig, String> {
    let corpus = dir.join("desk.jsonl");
    if !corpus.exists() {
        write_corpus(&fixtures::nostalgia(), &corpus, Format::Jsonl).map_err(err)?;
    }
    let raw = json!({
        "corpus": {"path": corpus},
        "category": "nostalgic",
        "original_sizes": sizes,
        "master_seed": 2024,
        "output_dir": dir.join("runs"),
        "run_id": format!("s{similarity}"),
        "provider": {"kind": "mock", "similarity": similarity},
        "cv": {"folds": folds, "repeats": repeats},
    });
    serde_json::from_value(raw).map_err(err)
}

fn validator_bounds() -> Result<String, String> {
    let same: f64 = ngram_jaccard("the old mill by the river", "the old mill by the river", 1);
    let disjoint: f64 = ngram_jaccard("the old mill", "bright new towers", 1);
    ensure(same == 1.0 && disjoint == 0.0, || {
        format!("identity {same}, disjoint {disjoint}")
    })?;
    let dir = tempfile::tempdir().map_err(err)?;
    let mut means = Vec::new();
    let mut near = Vec::new();
    for s in [0.1, 0.5, 0.9, 1.0] {
        let cfg = desk_config(dir.path(), &[50, 75, 100], 10, 10, s)?;
        let prepared = pipeline::prepare(&cfg).map_err(err)?;
        let store = pipeline::open_or_create(&prepared, &cfg.run_dir()).map_err(err)?;
        pipeline::generate(&store, &prepared, &MockProvider::new(s).map_err(err)?).map_err(err)?;
        let r = pipeline::similarity_report(&store, &prepared).map_err(err)?;
        means.push(r.summary.mean_max_jaccard_vs_original);
        near.push(r.count(Flag::NearDuplicate) as f64 / r.summary.candidates as f64);
    }
    ensure(means[0] <= means[1] && means[1] <= means[2], || {
        format!("dial means {means:?}")
    })?;
    ensure(near[3] == 1.0, || format!("s=1.0 flags {:.1}%", near[3] * 100.0))?;
    ensure(near[0] == 0.0, || format!("s=0.1 flags {:.1}%", near[0] * 100.0))?;
    Ok(format!(
        "mean max Jaccard {:.3} / {:.3} / {:.3}; near_duplicate 100% at s=1.0, 0% at s=0.1",
        means[0], means[1], means[2]
    ))
}

fn end_to_end_direction() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(err)?;
    let cfg = desk_config(dir.path(), &[50], 10, 10, 0.5)?;
    let prepared = pipeline::prepare(&cfg).map_err(err)?;
    let store = pipeline::open_or_create(&prepared, &cfg.run_dir()).map_err(err)?;
    pipeline::generate(&store, &prepared, &MockProvider::new(0.5).map_err(err)?).map_err(err)?;
    let report = pipeline::evaluate(&store, &prepared, &Strategy::ALL, &BuiltinTrainer::new()).map_err(err)?;
    let cell = |s| report.cell(s, 50).ok_or_else(|| format!("no {s} cell"));
    let f1 = |s| -> Result<Score, String> { cell(s)?.class_f1("nostalgic").ok_or_else(|| format!("{s} has no F1")) };
    let sim = |s| -> Result<Score, String> {
        cell(s)?
            .synthetic_similarity
            .ok_or_else(|| format!("{s} has no similarity"))
    };
    let (none, imputation) = (f1(Strategy::None)?, f1(Strategy::Imputation)?);
    ensure(imputation > none, || {
        format!("imputation F1 {imputation:.3} <= none {none:.3}")
    })?;
    let (mock, ssmba, eda) = (sim(Strategy::Imputation)?, sim(Strategy::Ssmba)?, sim(Strategy::Eda)?);
    ensure(ssmba > mock && eda > mock, || {
        format!("similarity mock {mock:.3}, ssmba {ssmba:.3}, eda {eda:.3}")
    })?;
    Ok(format!(
        "F1 none {none:.3} < imputation {imputation:.3}; similarity mock {mock:.3} < ssmba {ssmba:.3}, eda {eda:.3}"
    ))
}

fn cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(BIN).current_dir(dir).args(args).output().map_err(err)?;
    ensure(out.status.success(), || {
        format!("imputext {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr))
    })
}

fn cli_run(dir: &Path) -> Result<(Vec<u8>, Vec<u8>), String> {
    write_corpus(&fixtures::nostalgia(), dir.join("desk.jsonl"), Format::Jsonl).map_err(err)?;
    let cfg = json!({
        "corpus": {"path": "desk.jsonl"},
        "category": "nostalgic",
        "master_seed": 31,
        "run_id": "det",
        "provider": {"kind": "mock", "similarity": 0.5},
    });
    std::fs::write(dir.join("run.json"), cfg.to_string()).map_err(err)?;
    cli(dir, &["generate", "run.json"])?;
    cli(dir, &["cv", "run.json"])?;
    let read = |f| std::fs::read(dir.join("runs/det").join(f)).map_err(err);
    Ok((read("metrics.json")?, read("figure.csv")?))
}

async fn call(
    app: &axum::Router,
    method: Method,
    uri: &str,
    body: Option<Value>,
) -> Result<(StatusCode, Vec<u8>), String> {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .map_err(err)?;
    let resp = app.clone().oneshot(req).await.map_err(err)?;
    let status = resp.status();
    let bytes = resp.into_body().collect().await.map_err(err)?.to_bytes().to_vec();
    Ok((status, bytes))
}

async fn wait_for(app: &axum::Router, state: &str) -> Result<(), String> {
    for _ in 0..2400 {
        let (_, b) = call(app, Method::GET, "/runs/det", None).await?;
        let v: Value = serde_json::from_slice(&b).map_err(err)?;
        if v["state"] == state {
            return Ok(());
        }
        if v["state"] == "failed" {
            return Err(format!("service run failed: {}", v["last_error"]));
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    Err(format!("service run never reached {state}"))
}

fn service_run(dir: &Path) -> Result<Vec<u8>, String> {
    write_corpus(&fixtures::nostalgia(), dir.join("desk.jsonl"), Format::Jsonl).map_err(err)?;
    let app = router(App::new(ServiceConfig {
        data_dir: dir.join("data"),
        token: None,
    }));
    let cfg = json!({
        "corpus": {"path": dir.join("desk.jsonl")},
        "category": "nostalgic",
        "master_seed": 31,
        "run_id": "det",
        "provider": {"kind": "mock", "similarity": 0.5},
    });
    let rt = tokio::runtime::Runtime::new().map_err(err)?;
    rt.block_on(async {
        let (s, _) = call(&app, Method::POST, "/runs", Some(cfg)).await?;
        ensure(s == StatusCode::CREATED, || format!("create returned {s}"))?;
        for (step, state) in [("generate", "reviewing"), ("evaluate", "done")] {
            let (s, _) = call(&app, Method::POST, &format!("/runs/det/{step}"), None).await?;
            ensure(s == StatusCode::ACCEPTED, || format!("{step} returned {s}"))?;
            wait_for(&app, state).await?;
        }
        let (s, body) = call(&app, Method::GET, "/runs/det/report", None).await?;
        ensure(s == StatusCode::OK, || format!("report returned {s}"))?;
        Ok(body)
    })
}

fn determinism() -> Result<String, String> {
    let (a, b, c) = (
        tempfile::tempdir().map_err(err)?,
        tempfile::tempdir().map_err(err)?,
        tempfile::tempdir().map_err(err)?,
    );
    let first = cli_run(a.path())?;
    let second = cli_run(b.path())?;
    ensure(first.0 == second.0, || "metrics.json differs between CLI runs".into())?;
    ensure(first.1 == second.1, || "figure.csv differs between CLI runs".into())?;
    let served = service_run(c.path())?;
    ensure(served == first.0, || {
        "service report differs from the CLI report".into()
    })?;
    Ok(format!(
        "metrics.json ({} bytes) identical across two CLI runs and the service",
        first.0.len()
    ))
}

fn f1_oracle() -> Result<String, String> {
    let labels = ["a", "b", "c", "d"];
    let mut rng = seed::rng(1234);
    for t in 0..1000 {
        let n = rng.random_range(1..=20);
        let k = rng.random_range(1..=4);
        let gold: Vec<&str> = (0..n).map(|_| labels[rng.random_range(0..k)]).collect();
        let pred: Vec<&str> = (0..n).map(|_| labels[rng.random_range(0..k)]).collect();
        let classes: BTreeSet<&str> = gold.iter().chain(&pred).copied().collect();
        let mut matrix: BTreeMap<(&str, &str), usize> = BTreeMap::new();
        for (g, p) in gold.iter().zip(&pred) {
            *matrix.entry((g, p)).or_default() += 1;
        }
        let got: F1Report = f1_scores(&gold, &pred).map_err(err)?;
        ensure(got.per_class.len() == classes.len(), || {
            format!("instance {t}: class count")
        })?;
        for c in &classes {
            let tp = matrix.get(&(c, c)).copied().unwrap_or(0);
            let fp = classes
                .iter()
                .filter(|g| *g != c)
                .map(|g| matrix.get(&(g, c)).copied().unwrap_or(0))
                .sum::<usize>();
            let fneg = classes
                .iter()
                .filter(|p| *p != c)
                .map(|p| matrix.get(&(c, p)).copied().unwrap_or(0))
                .sum::<usize>();
            let want = if tp == 0 {
                0.0
            } else {
                2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
            };
            let s = &got.per_class[*c];
            ensure(
                (s.true_positives, s.false_positives, s.false_negatives) == (tp, fp, fneg),
                || format!("instance {t}, class {c}: counts differ"),
            )?;
            ensure((s.f1 - want).abs() < 1e-12, || {
                format!("instance {t}, class {c}: {} vs {want}", s.f1)
            })?;
        }
    }
    Ok("1000 instances: counts exact, F1 within 1e-12".into())
}

fn main() -> ExitCode {
    let criteria: [(&str, Duration, Check); 9] = [
        ("metric identities", Duration::from_secs(1), metric_identities),
        ("plan arithmetic", Duration::from_secs(1), plan_grids),
        ("batch coverage", Duration::from_secs(1), batch_coverage_check),
        ("cv structure", Duration::from_secs(10), cv_structure),
        ("masking statistics", Duration::from_secs(10), masking_statistics),
        (
            "validator bounds and monotonicity",
            Duration::from_secs(30),
            validator_bounds,
        ),
        ("end-to-end direction", Duration::from_secs(120), end_to_end_direction),
        ("determinism", Duration::from_secs(120), determinism),
        ("f1 oracle equivalence", Duration::from_secs(5), f1_oracle),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let result = result.and_then(|detail| {
            ensure(took <= budget, || format!("took {took:.1?}, budget {budget:?}")).map(|_| detail)
        });
        match result {
            Ok(detail) => println!("PASS {name}: {detail} ({took:.2?})"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why} ({took:.2?})");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
