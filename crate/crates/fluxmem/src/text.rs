//! Shared text routines. Every module that tokenizes (embedder, BM25,
//! metrics, feature extraction) goes through [`tokenize`] so scores can
//! never disagree because of tokenizer drift.

/// Lowercase, split on non-alphanumeric characters, drop empties.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Split into sentences on `.`, `!` or `?`. Returns trimmed segments
/// without their terminators; empty segments are dropped.
pub fn split_sentences(text: &str) -> Vec<&str> {
    text.split(['.', '!', '?'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect()
}

/// First sentence of `text` including its terminator, or the whole
/// trimmed text when no terminator is present.
pub fn first_sentence(text: &str) -> String {
    let trimmed = text.trim();
    match trimmed.find(['.', '!', '?']) {
        Some(idx) => trimmed[..=idx].to_string(),
        None => trimmed.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_lowercases_and_splits() {
        assert_eq!(tokenize("Hello, World!"), vec!["hello", "world"]);
        assert_eq!(tokenize("a-b_c"), vec!["a", "b", "c"]);
        assert!(tokenize("  ...  ").is_empty());
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn sentences_split_and_trim() {
        assert_eq!(
            split_sentences("I love hiking. Do you? Yes!"),
            vec!["I love hiking", "Do you", "Yes"]
        );
        assert_eq!(first_sentence("I love hiking. More text."), "I love hiking.");
        assert_eq!(first_sentence("no terminator"), "no terminator");
    }
}
