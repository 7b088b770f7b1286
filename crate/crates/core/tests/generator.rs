mod support;

use std::time::{Duration, Instant};

use imputext::corpus::{Corpus, LabeledExample};
use imputext::generator::provider::{ChatConfig, ChatProvider, GenerationParams, MockProvider, RetryPolicy};
use imputext::generator::{
    build_prompt, draw_examples, prompt_hash, run_generation, GenerationJob, GenerationRecord, PromptTemplate,
};
use imputext::validator::{compute_similarity, Candidate, SimilarityReport, Thresholds};
use imputext::{fixtures, Error};
use proptest::prelude::*;
use serde_json::json;
use support::{Reply, Scripted};

fn nostalgic_pool() -> Corpus {
    fixtures::nostalgia().category("nostalgic").unwrap()
}

fn job<'a>(pool: &'a Corpus, template: &'a PromptTemplate, count: usize, parallel: usize) -> GenerationJob<'a> {
    GenerationJob {
        pool,
        template,
        prompt_version: 1,
        params: GenerationParams::default(),
        master_seed: 99,
        scope: "nostalgic/151".into(),
        id_prefix: "nostalgic-151".into(),
        start_index: 0,
        count,
        parallel,
        distinct_examples: false,
    }
}

fn strip_time(mut r: Vec<GenerationRecord>) -> Vec<GenerationRecord> {
    r.iter_mut().for_each(|x| x.created_at.clear());
    r
}

#[test]
fn builtin_prompt_wording() {
    let t = PromptTemplate::builtin("nostalgia", "nostalgic").unwrap();
    let ex: Vec<_> = (1..=5)
        .map(|i| LabeledExample::new(format!("e{i}"), format!("memory number {i}"), "nostalgic"))
        .collect();
    let p = build_prompt(&t, &ex).unwrap();
    assert!(p.starts_with("Generate a nostalgic text in english based on the examples below."));
    assert!(p.contains("Names, countries and topics should also be different."));
    for i in 1..=5 {
        assert!(p.contains(&format!("Example {i}: memory number {i}")));
    }
    assert!(!p.contains("{}"));

    let s = PromptTemplate::builtin("speeches", "international").unwrap();
    assert!(s
        .body
        .starts_with("Generate the first 500 words of a speech in English."));
    assert!(s.body.contains("international nature and tone"));
}

#[test]
fn template_slot_checks() {
    let t = PromptTemplate::builtin("nostalgia", "nostalgic").unwrap();
    assert!(matches!(t.with_body("only {} one slot"), Err(Error::Template(_))));
    assert!(PromptTemplate::new("x", "{} {} {} {} {} {}", "c").is_err());
    assert!(PromptTemplate::builtin("limericks", "c").is_err());
    assert!(t.render(&["a", "b"]).is_err());
    let ok = t.with_body("A {} B {} C {} D {} E {}").unwrap();
    assert_eq!(ok.render(&["1", "2", "3", "4", "5"]).unwrap(), "A 1 B 2 C 3 D 4 E 5");
}

#[test]
fn generation_ignores_worker_count() {
    let pool = nostalgic_pool();
    let t = PromptTemplate::builtin("nostalgia", "nostalgic").unwrap();
    let mock = MockProvider::new(0.5).unwrap();
    let serial = run_generation(&job(&pool, &t, 40, 1), &mock, &|_| Ok(())).unwrap();
    let wide = run_generation(&job(&pool, &t, 40, 8), &mock, &|_| Ok(())).unwrap();
    assert!(serial.failures.is_empty());
    assert_eq!(strip_time(serial.records), strip_time(wide.records));
}

#[test]
fn extending_a_run_keeps_earlier_candidates() {
    let pool = nostalgic_pool();
    let t = PromptTemplate::builtin("nostalgia", "nostalgic").unwrap();
    let mock = MockProvider::new(0.5).unwrap();
    let all = strip_time(
        run_generation(&job(&pool, &t, 30, 4), &mock, &|_| Ok(()))
            .unwrap()
            .records,
    );
    let head = strip_time(
        run_generation(&job(&pool, &t, 20, 4), &mock, &|_| Ok(()))
            .unwrap()
            .records,
    );
    let tail_job = GenerationJob {
        start_index: 20,
        count: 10,
        ..job(&pool, &t, 0, 3)
    };
    let tail = strip_time(run_generation(&tail_job, &mock, &|_| Ok(())).unwrap().records);
    assert_eq!(head.len() + tail.len(), all.len());
    assert_eq!([head, tail].concat(), all);
}

#[test]
fn provenance_is_complete() {
    let pool = nostalgic_pool();
    let t = PromptTemplate::builtin("nostalgia", "nostalgic").unwrap();
    let mock = MockProvider::new(0.5).unwrap();
    let j = job(&pool, &t, 5, 2);
    let batch = run_generation(&j, &mock, &|_| Ok(())).unwrap();
    for r in &batch.records {
        assert_eq!(r.example_ids.len(), 5);
        assert_eq!(r.seed, j.candidate_seed(r.index));
        let examples = draw_examples(&pool, r.seed).unwrap();
        let ids: Vec<_> = examples.iter().map(|e| e.id.clone()).collect();
        assert_eq!(ids, r.example_ids);
        assert_eq!(r.prompt_hash, prompt_hash(&build_prompt(&t, &examples).unwrap()));
        assert_eq!(r.candidate_id, format!("nostalgic-151-{:04}", r.index));
        assert_eq!(r.original_count, pool.len());
        assert!(r.model_id.starts_with("mock"));
        assert!(chrono::DateTime::parse_from_rfc3339(&r.created_at).is_ok());
    }
}

fn mean_similarity(s: f64, pool: &Corpus) -> f64 {
    let t = PromptTemplate::builtin("nostalgia", "nostalgic").unwrap();
    let mock = MockProvider::new(s).unwrap();
    let j = GenerationJob {
        params: GenerationParams::long_texts(),
        ..job(pool, &t, 60, 4)
    };
    let batch = run_generation(&j, &mock, &|_| Ok(())).unwrap();
    let views: Vec<Candidate<'_>> = batch.records.iter().map(Candidate::from).collect();
    let r: SimilarityReport<f64> = compute_similarity(&views, pool, &Thresholds::default());
    r.summary.mean_max_jaccard_vs_original
}

#[test]
fn mock_dial_orders_similarity() {
    let pool = nostalgic_pool();
    let dial: Vec<f64> = [0.0, 0.1, 0.5, 0.9, 1.0]
        .iter()
        .map(|&s| mean_similarity(s, &pool))
        .collect();
    for w in dial.windows(2) {
        assert!(w[0] < w[1], "{dial:?}");
    }
    assert_eq!(dial[4], 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mock_is_a_pure_function(seed in any::<u64>(), s in 0.0f64..=1.0) {
        let ex: Vec<String> = nostalgic_pool().examples()[..5].iter().map(|e| e.text.clone()).collect();
        let m = MockProvider::new(s).unwrap();
        let out = m.recombine(&ex, seed, 60);
        prop_assert_eq!(&out, &m.recombine(&ex, seed, 60));
        prop_assert!(!out.trim().is_empty());
    }
}

fn chat_config(url: &str) -> ChatConfig {
    ChatConfig {
        url: url.to_owned(),
        model: "test-model".into(),
        api_key: Some("sk-test".into()),
        retry: RetryPolicy {
            max_attempts: 4,
            base_delay_ms: 10,
            max_delay_ms: 2_000,
        },
        requests_per_minute: None,
        timeout_secs: 10,
    }
}

fn completion(text: &str) -> Reply {
    Reply::json(
        200,
        json!({"choices": [{"message": {"role": "assistant", "content": text}}]}),
    )
}

#[test]
fn chat_retries_rate_limits() {
    let server = Scripted::start(vec![
        Reply::json(429, json!({"error": "slow down"})),
        Reply::json(429, json!({"error": "slow down"})).with_header("Retry-After", "1"),
        completion("a fresh memory of lanterns"),
    ]);
    let p = ChatProvider::new(chat_config(&server.url)).unwrap();
    let started = Instant::now();
    let out = p.chat("the prompt", 0.7).unwrap();
    assert_eq!(out.text, "a fresh memory of lanterns");
    assert_eq!(out.attempts, 3);
    assert!(
        started.elapsed() >= Duration::from_secs(1),
        "Retry-After was not honoured"
    );

    let seen = server.join();
    assert_eq!(seen.len(), 3);
    let first = &seen[0];
    assert!(first.request_line.starts_with("POST /v1/endpoint"));
    assert_eq!(first.header("authorization"), Some("Bearer sk-test"));
    let body: serde_json::Value = serde_json::from_str(&first.body).unwrap();
    assert_eq!(
        body,
        json!({"model": "test-model", "messages": [{"role": "system", "content": "the prompt"}], "temperature": 0.7})
    );
}

#[test]
fn chat_gives_up_after_max_attempts() {
    let server = Scripted::start(vec![Reply::json(503, json!({})); 4]);
    let p = ChatProvider::new(chat_config(&server.url)).unwrap();
    match p.chat("x", 1.0) {
        Err(Error::Transport { attempts, status, .. }) => {
            assert_eq!(attempts, 4);
            assert_eq!(status, Some(503));
        }
        other => panic!("expected transport error, got {other:?}"),
    }
    assert_eq!(server.join().len(), 4);
}

#[test]
fn chat_client_errors_are_not_retried() {
    let server = Scripted::start(vec![Reply::json(400, json!({"error": "bad"}))]);
    let p = ChatProvider::new(chat_config(&server.url)).unwrap();
    assert!(matches!(
        p.chat("x", 1.0),
        Err(Error::Transport {
            attempts: 1,
            status: Some(400),
            ..
        })
    ));
    assert_eq!(server.join().len(), 1);
}

#[test]
fn chat_empty_completion() {
    let server = Scripted::start(vec![completion("   ")]);
    let p = ChatProvider::new(chat_config(&server.url)).unwrap();
    assert!(matches!(p.chat("x", 1.0), Err(Error::EmptyCompletion)));
    server.join();
}

#[test]
fn chat_failures_do_not_abort_the_batch() {
    let pool = nostalgic_pool();
    let t = PromptTemplate::builtin("nostalgia", "nostalgic").unwrap();
    let server = Scripted::start(vec![
        completion("first text"),
        Reply::json(400, json!({})),
        completion("third text"),
    ]);
    let p = ChatProvider::new(chat_config(&server.url)).unwrap();
    let batch = run_generation(&job(&pool, &t, 3, 1), &p, &|_| Ok(())).unwrap();
    assert_eq!(batch.records.len(), 2);
    assert_eq!(batch.failures.len(), 1);
    assert_eq!(batch.records[0].model_id, "test-model");
    server.join();
}
