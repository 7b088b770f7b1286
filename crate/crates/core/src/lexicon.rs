//! Bundled word lists for the offline fill-mask provider and the mock generator.

/// Fill words in three frequency tiers, most frequent first. The fill-mask
/// provider picks the high tier half of the time, mid a third, low the rest.
pub const FILL_TIERS: [&[&str]; 3] = [
    &[
        "the", "a", "and", "of", "to", "in", "he", "she", "we", "they", "it", "was", "is", "for", "on", "with", "as",
        "at", "by", "from", "his", "her", "our", "their", "this", "that", "an", "be", "had", "have", "not", "but",
        "or", "all", "one", "so", "up", "out", "new", "more",
    ],
    &[
        "double", "open", "small", "great", "quiet", "long", "early", "late", "young", "good", "strong", "public",
        "local", "common", "simple", "whole", "final", "clear", "bright", "heavy", "every", "another", "many", "few",
        "such", "own", "same", "other", "first", "last", "high", "low", "full", "free", "near", "far", "real", "true",
        "right", "main",
    ],
    &[
        "lantern",
        "meadow",
        "harbor",
        "ledger",
        "compass",
        "orchard",
        "anvil",
        "tapestry",
        "quarry",
        "ferry",
        "granary",
        "ribbon",
        "thicket",
        "cistern",
        "bellows",
        "pantry",
        "trellis",
        "furrow",
        "kettle",
        "satchel",
        "beacon",
        "cobble",
        "dune",
        "estuary",
        "gable",
        "hamlet",
        "inlet",
        "jetty",
        "kiln",
        "lattice",
        "mantel",
        "nook",
        "outpost",
        "pier",
        "quay",
        "rafter",
        "sluice",
        "turret",
        "upland",
        "vestibule",
    ],
];

/// Proper nouns and topic words absent from the bundled corpora; the mock
/// generator uses them to stand in for "different names, countries and topics".
pub const NOVEL_WORDS: &[&str] = &[
    "arvelle",
    "brenholm",
    "castavia",
    "dornwick",
    "elsmere",
    "farrowdale",
    "galvanti",
    "hestrova",
    "ilvaran",
    "jorvik",
    "kestrel",
    "lumora",
    "marrowgate",
    "norrland",
    "ostravel",
    "pellinor",
    "quenwick",
    "rosmarck",
    "sundarim",
    "tavrell",
    "ulmsted",
    "valdrena",
    "wendmoor",
    "xantheum",
    "yarrowby",
    "zelmont",
    "aqueduct",
    "caravan",
    "telegraph",
    "almanac",
    "regatta",
    "foundry",
    "bazaar",
    "canal",
    "viaduct",
    "observatory",
    "lighthouse",
    "monastery",
    "vineyard",
    "railyard",
    "tramway",
    "cannery",
    "windmill",
    "brewery",
    "mill",
    "pavilion",
    "bandstand",
    "arcade",
    "promenade",
    "boulevard",
];

pub fn fill_word(key: u64) -> &'static str {
    let tier = match key % 6 {
        0..=2 => 0,
        3 | 4 => 1,
        _ => 2,
    };
    let words = FILL_TIERS[tier];
    words[((key >> 8) % words.len() as u64) as usize]
}

pub fn novel_word(key: u64) -> &'static str {
    NOVEL_WORDS[(key % NOVEL_WORDS.len() as u64) as usize]
}
