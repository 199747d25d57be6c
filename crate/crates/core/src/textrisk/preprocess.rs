use std::collections::HashSet;
use std::sync::OnceLock;

/// Identifier recorded in model artifacts for the shipped stop-word list.
pub const STOP_WORDS_VERSION: &str = "english-v1";

const STOP_WORDS_RAW: &str = include_str!("../../data/stopwords_en_v1.txt");

pub fn stop_words() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        STOP_WORDS_RAW
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect()
    })
}

pub fn is_stop_word(token: &str) -> bool {
    stop_words().contains(token)
}

/// Lower-cases, splits on every non-alphanumeric character, keeps tokens of
/// at least two characters, drops stop words and collapses immediate repeats.
pub fn preprocess(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let mut out: Vec<String> = Vec::new();
    for token in lower.split(|c: char| !c.is_alphanumeric()) {
        if token.chars().count() < 2 || is_stop_word(token) {
            continue;
        }
        if out.last().is_some_and(|prev| prev == token) {
            continue;
        }
        out.push(token.to_string());
    }
    out
}
