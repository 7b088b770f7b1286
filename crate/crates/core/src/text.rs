//! Tokenizers shared across modules.

/// Whitespace-delimited words, as used for truncation, masking and EDA.
pub fn words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Lowercased words with punctuation stripped, as used for overlap scores
/// and classifier features. Any non-alphanumeric character separates words.
pub fn normalized_words(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    lowered
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_owned)
        .collect()
}
