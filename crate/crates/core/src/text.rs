//! Small text helpers shared by the feature extractors and the offline
//! summarizer.

use std::sync::LazyLock;

use regex::Regex;

pub static URL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)(?:https?://|www\.)\S+").unwrap());

/// Lowercased alphanumeric words separated by single spaces, padded with a
/// space on both ends so that whole-word phrases can be found with `contains`.
pub fn normalize_words(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push(' ');
    let mut last_space = true;
    for c in text.chars().flat_map(char::to_lowercase) {
        if c.is_alphanumeric() {
            out.push(c);
            last_space = false;
        } else if !last_space {
            out.push(' ');
            last_space = true;
        }
    }
    if !last_space {
        out.push(' ');
    }
    out
}

/// Whole-word phrase match against text already passed through
/// [`normalize_words`].
pub fn contains_phrase(normalized: &str, phrase: &str) -> bool {
    let needle = normalize_words(phrase);
    !needle.trim().is_empty() && normalized.contains(&needle)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phrases_match_whole_words_only() {
        let n = normalize_words("Follow-back, please! I'm FREE.");
        assert_eq!(n, " follow back please i m free ");
        assert!(contains_phrase(&n, "follow back"));
        assert!(contains_phrase(&n, "free"));
        assert!(!contains_phrase(&n, "fre"));
        assert!(!contains_phrase(&n, ""));
    }
}
