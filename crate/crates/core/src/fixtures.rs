//! Bundled synthetic corpora with the shapes of the two reference datasets.
//!
//! Neither contains real annotated text. Each sentence or speech mixes a
//! shared political vocabulary with category cue words (and some cues from
//! other categories), enough for a bag-of-words classifier to find the
//! categories while leaving the minority class hard to learn from few examples.
//!
//! * [`nostalgia`]: 1,200 sentences, 151 `nostalgic` and 1,049 `not_nostalgic`,
//!   3 to 174 words.
//! * [`speeches`]: 843 speeches, 220 `famous`, 218 `international`, 213
//!   `ribboncutting`, 192 `campaign`, 139 to 1,468 words.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, LabeledExample};
use crate::seed;

pub const NOSTALGIA_SEED: u64 = 1_200_151;
pub const SPEECHES_SEED: u64 = 843_190;

const SHARED: &[&str] = &[
    "the",
    "of",
    "and",
    "to",
    "in",
    "our",
    "we",
    "a",
    "for",
    "is",
    "that",
    "will",
    "with",
    "people",
    "country",
    "party",
    "government",
    "nation",
    "citizens",
    "must",
    "be",
    "all",
    "have",
    "this",
    "are",
    "on",
    "by",
    "as",
    "not",
    "who",
    "their",
    "every",
    "public",
    "social",
    "national",
    "policy",
    "state",
    "work",
    "families",
    "community",
    "support",
    "rights",
    "democracy",
    "europe",
    "law",
    "economy",
    "security",
    "society",
    "region",
    "local",
    "freedom",
    "children",
    "health",
    "education",
    "jobs",
    "taxes",
    "parliament",
    "together",
    "strong",
    "fair",
    "new",
    "should",
    "can",
    "more",
    "it",
    "from",
    "an",
    "which",
    "also",
    "its",
    "these",
    "into",
    "where",
    "between",
    "against",
    "because",
    "while",
    "under",
    "about",
    "those",
    "many",
    "each",
    "only",
    "they",
    "his",
    "her",
    "there",
    "when",
    "what",
    "so",
    "up",
    "out",
    "one",
    "us",
    "them",
    "than",
    "any",
];

const NOSTALGIC: &[&str] = &[
    "once",
    "remember",
    "heritage",
    "tradition",
    "traditions",
    "golden",
    "bygone",
    "ancestors",
    "restore",
    "lost",
    "proud",
    "past",
    "glory",
    "homeland",
    "childhood",
    "yesterday",
    "grandparents",
    "used",
    "former",
    "times",
    "generations",
    "forgotten",
    "roots",
    "customs",
    "ancient",
    "memory",
    "memories",
    "return",
    "reclaim",
    "greatness",
    "history",
    "historic",
    "old",
    "values",
    "decline",
    "erosion",
    "village",
    "folk",
    "simpler",
    "rebuild",
    "revive",
    "nostalgia",
    "fathers",
    "mothers",
    "legacy",
    "era",
    "days",
    "again",
    "vanished",
    "treasured",
    "identity",
    "sacred",
];

const NOT_NOSTALGIC: &[&str] = &[
    "invest",
    "future",
    "digital",
    "reform",
    "innovation",
    "modernize",
    "budget",
    "climate",
    "infrastructure",
    "investment",
    "technology",
    "growth",
    "efficient",
    "transparency",
    "sustainable",
    "renewable",
    "energy",
    "broadband",
    "startups",
    "research",
    "funding",
    "pension",
    "healthcare",
    "hospitals",
    "wages",
    "minimum",
    "housing",
    "transport",
    "rail",
    "emissions",
    "targets",
    "plan",
    "program",
    "agency",
    "regulation",
    "competition",
    "market",
    "trade",
    "export",
    "skills",
    "training",
    "apprenticeships",
    "universities",
    "science",
    "data",
    "services",
    "administration",
    "procedure",
    "deficit",
    "revenue",
    "expenditure",
    "allocation",
    "modern",
    "progress",
    "tomorrow",
    "upgrade",
    "strategy",
    "measures",
    "implementation",
    "framework",
    "cooperation",
    "integration",
];

const SPEECH_CUES: [(&str, &[&str]); 4] = [
    (
        "famous",
        &[
            "destiny",
            "history",
            "courage",
            "dream",
            "freedom",
            "liberty",
            "sacrifice",
            "eternal",
            "glory",
            "revolution",
            "independence",
            "brothers",
            "sisters",
            "struggle",
            "victory",
            "spirit",
            "soul",
            "hope",
            "justice",
            "dignity",
            "heroes",
            "martyrs",
            "motherland",
            "fatherland",
            "betrayal",
        ],
    ),
    (
        "international",
        &[
            "ambassador",
            "summit",
            "bilateral",
            "delegation",
            "foreign",
            "treaty",
            "nations",
            "united",
            "partnership",
            "diplomatic",
            "friendship",
            "visit",
            "host",
            "excellency",
            "global",
            "cooperation",
            "continent",
            "world",
            "embassy",
            "trade",
            "agreement",
            "peoples",
            "multilateral",
            "counterpart",
            "guests",
        ],
    ),
    (
        "ribboncutting",
        &[
            "inaugurate",
            "inauguration",
            "bridge",
            "hospital",
            "school",
            "road",
            "plant",
            "factory",
            "project",
            "construction",
            "built",
            "completed",
            "ceremony",
            "workers",
            "engineers",
            "opening",
            "investment",
            "kilometers",
            "capacity",
            "residents",
            "municipality",
            "mayor",
            "facility",
            "water",
            "electricity",
        ],
    ),
    (
        "campaign",
        &[
            "vote",
            "votes",
            "election",
            "candidate",
            "campaign",
            "ballot",
            "opponents",
            "win",
            "rally",
            "supporters",
            "polls",
            "majority",
            "promise",
            "elect",
            "term",
            "change",
            "victory",
            "mandate",
            "volunteers",
            "district",
            "debate",
            "sunday",
            "turnout",
            "platform",
            "rivals",
        ],
    ),
];

fn pick<'a>(rng: &mut ChaCha8Rng, words: &[&'a str]) -> &'a str {
    words[rng.random_range(0..words.len())]
}

/// Right-skewed sentence length in `[min, max]` with roughly the given mean.
fn skewed_length(rng: &mut ChaCha8Rng, min: usize, max: usize, mean: f64) -> usize {
    let u: f64 = rng.random::<f64>().max(1e-12);
    let x = min as f64 + (-(u.ln())) * (mean - min as f64);
    (x.round() as usize).clamp(min, max)
}

/// Zipf-like weights so shared words repeat the way function words do.
fn shared_dist() -> WeightedIndex<f64> {
    WeightedIndex::new((0..SHARED.len()).map(|r| 1.0 / (r as f64 + 1.0))).expect("weights are positive")
}

fn sentence(rng: &mut ChaCha8Rng, len: usize, own: &[&str], other: &[&str], p_own: f64, p_other: f64) -> String {
    let shared = shared_dist();
    let mut words: Vec<&str> = Vec::with_capacity(len);
    for _ in 0..len {
        let r: f64 = rng.random();
        words.push(if r < p_own {
            pick(rng, own)
        } else if r < p_own + p_other {
            pick(rng, other)
        } else {
            SHARED[shared.sample(rng)]
        });
    }
    let mut s = words.join(" ");
    if let Some(first) = s.get(0..1) {
        s = first.to_uppercase() + &s[1..];
    }
    s.push('.');
    s
}

pub fn nostalgia() -> Corpus {
    nostalgia_with(NOSTALGIA_SEED, 151, 1049)
}

pub fn nostalgia_with(seed: u64, positives: usize, negatives: usize) -> Corpus {
    let mut rng = seed::rng(seed);
    let mut rows: Vec<(String, &str)> = Vec::with_capacity(positives + negatives);
    for i in 0..positives + negatives {
        let (label, own, other, p_own, p_other) = if i < positives {
            ("nostalgic", NOSTALGIC, NOT_NOSTALGIC, 0.35, 0.04)
        } else {
            ("not_nostalgic", NOT_NOSTALGIC, NOSTALGIC, 0.30, 0.03)
        };
        let len = if i == 0 {
            3
        } else if i == positives {
            174
        } else {
            skewed_length(&mut rng, 3, 174, 20.8)
        };
        rows.push((sentence(&mut rng, len, own, other, p_own, p_other), label));
    }
    rows.shuffle(&mut rng);
    Corpus::new(
        rows.into_iter()
            .enumerate()
            .map(|(i, (text, label))| LabeledExample::new(format!("nos-{:04}", i + 1), text, label))
            .collect(),
    )
    .expect("fixture is valid")
}

pub fn speeches() -> Corpus {
    let counts = [
        ("famous", 220),
        ("international", 218),
        ("ribboncutting", 213),
        ("campaign", 192),
    ];
    let mut rng = seed::rng(SPEECHES_SEED);
    let mut rows: Vec<(String, &str)> = Vec::with_capacity(843);
    for (c, &(label, n)) in counts.iter().enumerate() {
        let own = SPEECH_CUES[c].1;
        let other = SPEECH_CUES[(c + 1) % 4].1;
        for i in 0..n {
            let len = match (c, i) {
                (0, 0) => 139,
                (0, 1) => 1468,
                _ => skewed_length(&mut rng, 139, 1468, 415.0),
            };
            rows.push((sentence(&mut rng, len, own, other, 0.04, 0.015), label));
        }
    }
    rows.shuffle(&mut rng);
    Corpus::new(
        rows.into_iter()
            .enumerate()
            .map(|(i, (text, label))| LabeledExample::new(format!("gpd-{:03}", i + 1), text, label))
            .collect(),
    )
    .expect("fixture is valid")
}
