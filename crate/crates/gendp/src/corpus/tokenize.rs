//! Whitespace tokenization with light normalization.

/// Lowercases, splits on whitespace, and trims sentence punctuation from
/// token edges. Underscores survive so delexicalized placeholders like
/// `name_slot` stay intact.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| ".,!?;:\"()".contains(c)).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}
