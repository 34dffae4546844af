//! Shared tokenization used by retrieval, concept matching and the text encoder.

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Canonical entity label: lowercase, underscores become spaces, whitespace
/// trimmed and collapsed.
pub fn normalize_label(label: &str) -> String {
    label
        .replace('_', " ")
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}
