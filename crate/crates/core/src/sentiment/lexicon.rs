//! Word-list baseline. Deterministic and offline; meant for tests and smoke
//! runs, not for accuracy.

use std::collections::HashSet;
use std::sync::OnceLock;

use crate::thread_model::SentimentPolarity;

const NEGATIVE_WORDS: &str = include_str!("../../data/negative_words.txt");
const POSITIVE_WORDS: &str = include_str!("../../data/positive_words.txt");

fn word_set(source: &'static str) -> HashSet<&'static str> {
    source
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

fn negative() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| word_set(NEGATIVE_WORDS))
}

fn positive() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| word_set(POSITIVE_WORDS))
}

/// Lower-cased whitespace tokens with punctuation removed.
pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace()
        .map(|t| t.chars().filter(|c| !c.is_ascii_punctuation()).collect::<String>().to_lowercase())
        .filter(|t| !t.is_empty())
}

/// `(negative hits, positive hits)` for `text`.
pub fn hits(text: &str) -> (usize, usize) {
    tokens(text).fold((0, 0), |(neg, pos), t| {
        (neg + negative().contains(t.as_str()) as usize, pos + positive().contains(t.as_str()) as usize)
    })
}

pub fn classify_text(text: &str) -> SentimentPolarity {
    let (neg, pos) = hits(text);
    match neg.cmp(&pos) {
        std::cmp::Ordering::Greater => SentimentPolarity::Negative,
        std::cmp::Ordering::Less => SentimentPolarity::Positive,
        std::cmp::Ordering::Equal => SentimentPolarity::Neutral,
    }
}
