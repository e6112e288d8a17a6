//! Text normalization: lowercase, split on non-alphanumeric boundaries,
//! drop stopwords and short terms.

use std::collections::HashSet;

#[derive(Debug, Clone)]
pub struct TokenizerConfig {
    pub stopwords: HashSet<String>,
    pub min_len: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            stopwords: HashSet::new(),
            min_len: 2,
        }
    }
}

impl TokenizerConfig {
    /// A small English stopword list for callers who want one; nothing in the
    /// library applies it implicitly.
    pub fn english() -> Self {
        const WORDS: &[&str] = &[
            "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "from", "has", "have",
            "he", "her", "his", "i", "if", "in", "is", "it", "its", "my", "no", "not", "of", "on",
            "or", "she", "so", "that", "the", "their", "they", "this", "to", "was", "we", "were",
            "with", "you",
        ];
        Self {
            stopwords: WORDS.iter().map(|w| w.to_string()).collect(),
            min_len: 2,
        }
    }
}

/// Split `text` into normalized terms. Empty output is fine.
pub fn tokenize(text: &str, config: &TokenizerConfig) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .filter(|t| t.chars().count() >= config.min_len)
        .filter(|t| !config.stopwords.contains(t))
        .collect()
}
