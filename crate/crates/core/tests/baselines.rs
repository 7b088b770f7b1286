mod support;

use imputext::baselines::eda::{apply_ops, eda_augment, EdaOp};
use imputext::baselines::masking::{
    mask_tokens, reconstruct, ssmba_augment, BuiltinLexical, FillMaskProvider, MaskingConfig, DEFAULT_MASK_TOKEN,
};
use imputext::corpus::{Corpus, LabeledExample, Origin};
use imputext::{fixtures, seed, Error};
use proptest::prelude::*;
use rand::Rng;
use serde_json::json;
use support::{Reply, Scripted};

fn random_sentence(rng: &mut impl Rng) -> String {
    let n = rng.random_range(5..=60);
    (0..n)
        .map(|_| {
            let len = rng.random_range(1..=9);
            (0..len)
                .map(|_| rng.random_range(b'a'..=b'z') as char)
                .collect::<String>()
        })
        .collect::<Vec<_>>()
        .join(" ")
}

#[test]
fn masked_fraction_near_rate() {
    let mut rng = seed::rng(2024);
    let mut fractions = Vec::new();
    for i in 0..1000u64 {
        let s = random_sentence(&mut rng);
        let n = s.split(' ').count();
        let cfg = MaskingConfig {
            seed: i,
            ..MaskingConfig::default()
        };
        let m = mask_tokens(&s, &cfg).unwrap();
        let masks = m.text.split(' ').filter(|w| *w == DEFAULT_MASK_TOKEN).count();
        assert_eq!(masks, m.positions.len());
        fractions.push(masks as f64 / n as f64);

        let filled = reconstruct(&m.text, DEFAULT_MASK_TOKEN, &BuiltinLexical, i).unwrap();
        let (orig, out): (Vec<_>, Vec<_>) = (s.split(' ').collect(), filled.split(' ').collect());
        assert_eq!(orig.len(), out.len());
        for (p, (a, b)) in orig.iter().zip(&out).enumerate() {
            if !m.positions.contains(&p) {
                assert_eq!(a, b);
            }
        }
    }
    let mean = fractions.iter().sum::<f64>() / fractions.len() as f64;
    assert!((mean - 0.40).abs() <= 0.02, "mean masked fraction {mean}");
}

proptest! {
    #[test]
    fn reconstruction_keeps_unmasked_words(
        words in prop::collection::vec("[a-z]{1,6}", 1..50),
        rate in 0.05f64..=1.0,
        seed in any::<u64>(),
    ) {
        let s = words.join(" ");
        let cfg = MaskingConfig { rate, seed, ..MaskingConfig::default() };
        let m = mask_tokens(&s, &cfg).unwrap();
        prop_assert_eq!(m.positions.len(), cfg.mask_count(words.len()));
        prop_assert!(m.positions.windows(2).all(|w| w[0] < w[1]));
        let out = reconstruct(&m.text, &cfg.mask_token, &BuiltinLexical, seed).unwrap();
        let out: Vec<&str> = out.split(' ').collect();
        prop_assert_eq!(out.len(), words.len());
        for (p, w) in words.iter().enumerate() {
            if !m.positions.contains(&p) {
                prop_assert_eq!(out[p], w.as_str());
            } else {
                prop_assert_ne!(out[p], DEFAULT_MASK_TOKEN);
            }
        }
    }

    #[test]
    fn eda_ops_preserve_the_multiset_or_vocabulary(
        words in prop::collection::vec("[a-z]{1,6}", 1..40),
        strength in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let s = words.join(" ");
        let mut sorted = words.clone();
        sorted.sort();

        let swapped = apply_ops(&s, &[EdaOp::RandomSwap], strength, &mut seed::rng(seed));
        let mut sw: Vec<String> = swapped.split(' ').map(str::to_owned).collect();
        sw.sort();
        prop_assert_eq!(&sw, &sorted);

        let k = (strength * words.len() as f64).round() as usize;
        let deleted = apply_ops(&s, &[EdaOp::RandomDelete], strength, &mut seed::rng(seed));
        let n_del = deleted.split(' ').count();
        prop_assert!(n_del >= 1);
        prop_assert_eq!(n_del, words.len() - k.min(words.len() - 1));

        let inserted = apply_ops(&s, &[EdaOp::RandomInsert], strength, &mut seed::rng(seed));
        let ins: Vec<&str> = inserted.split(' ').collect();
        prop_assert_eq!(ins.len(), words.len() + k);
        prop_assert!(ins.iter().all(|w| words.iter().any(|x| x == w)));
    }
}

fn pool() -> Corpus {
    fixtures::nostalgia().category("nostalgic").unwrap()
}

#[test]
fn ssmba_batches_have_provenance() {
    let p = pool();
    let cfg = MaskingConfig::default();
    let out = ssmba_augment(&p, 25, &cfg, &BuiltinLexical, 5).unwrap();
    assert_eq!(out.len(), 25);
    for a in &out {
        assert_eq!(a.example.origin, Origin::SyntheticSsmba);
        assert_eq!(a.example.label, "nostalgic");
        let src = p.get(a.example.source_id.as_deref().unwrap()).unwrap();
        let (s, o): (Vec<_>, Vec<_>) = (
            src.text.split_whitespace().collect(),
            a.example.text.split(' ').collect(),
        );
        assert_eq!(s.len(), o.len());
        assert_eq!(a.masked_positions.len(), cfg.mask_count(s.len()));
    }
    assert_eq!(out, ssmba_augment(&p, 25, &cfg, &BuiltinLexical, 5).unwrap());
}

#[test]
fn eda_batches_have_provenance() {
    let p = pool();
    let out = eda_augment(&p, 25, &EdaOp::ALL, 0.1, 8).unwrap();
    assert_eq!(out.len(), 25);
    assert!(out
        .iter()
        .all(|a| a.example.origin == Origin::SyntheticEda && a.example.source_id.is_some()));
    assert_eq!(out, eda_augment(&p, 25, &EdaOp::ALL, 0.1, 8).unwrap());
    assert!(eda_augment(&p, 1, &EdaOp::ALL, 1.5, 8).is_err());
    assert!("shuffle".parse::<EdaOp>().is_err());
}

#[test]
fn bad_masking_configs() {
    for rate in [0.0, -0.1, 1.1, f64::NAN] {
        let cfg = MaskingConfig {
            rate,
            ..MaskingConfig::default()
        };
        assert!(mask_tokens("a b c", &cfg).is_err(), "rate {rate}");
    }
    let two_words = MaskingConfig {
        mask_token: "[ MASK ]".into(),
        ..MaskingConfig::default()
    };
    assert!(mask_tokens("a b c", &two_words).is_err());
    assert!(mask_tokens("   ", &MaskingConfig::default()).is_err());
    assert!(reconstruct("no masks here", DEFAULT_MASK_TOKEN, &BuiltinLexical, 0).is_err());
}

#[test]
fn http_fill_mask_round_trip() {
    let server = Scripted::start(vec![
        Reply::json(200, json!({"tokens": ["quiet", "harbour"]})),
        Reply::json(200, json!({"tokens": ["one"]})),
        Reply::json(500, json!({"error": "model down"})),
    ]);
    let fill = FillMaskProvider::HttpEndpoint {
        endpoint: server.url.clone(),
    }
    .build()
    .unwrap();
    let out = reconstruct("the <mask> old <mask> town", DEFAULT_MASK_TOKEN, fill.as_ref(), 1).unwrap();
    assert_eq!(out, "the quiet old harbour town");
    assert!(matches!(
        reconstruct("<mask> and <mask>", DEFAULT_MASK_TOKEN, fill.as_ref(), 1),
        Err(Error::Provider(_))
    ));
    assert!(matches!(
        reconstruct("<mask>", DEFAULT_MASK_TOKEN, fill.as_ref(), 1),
        Err(Error::Transport { status: Some(500), .. })
    ));

    let seen = server.join();
    let body: serde_json::Value = serde_json::from_str(&seen[0].body).unwrap();
    assert_eq!(
        body,
        json!({"text_with_masks": "the <mask> old <mask> town", "mask_token": "<mask>"})
    );
    assert!(FillMaskProvider::HttpEndpoint { endpoint: " ".into() }.build().is_err());
}

#[test]
fn ssmba_over_http() {
    let p = Corpus::new(vec![LabeledExample::new("a", "one two three four five", "x")]).unwrap();
    let server = Scripted::start(vec![Reply::json(200, json!({"tokens": ["NEW", "NEW"]}))]);
    let fill = FillMaskProvider::HttpEndpoint {
        endpoint: server.url.clone(),
    }
    .build()
    .unwrap();
    let out = ssmba_augment(&p, 1, &MaskingConfig::default(), fill.as_ref(), 3).unwrap();
    let words: Vec<&str> = out[0].example.text.split(' ').collect();
    for (i, w) in words.iter().enumerate() {
        if out[0].masked_positions.contains(&i) {
            assert_eq!(*w, "NEW");
        } else {
            assert_eq!(*w, ["one", "two", "three", "four", "five"][i]);
        }
    }
    server.join();
}
