use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::preprocess::STOP_WORDS_VERSION;

pub const DEFAULT_MAX_FEATURES: usize = 8192;
pub const DEFAULT_MIN_DF: usize = 5;
pub const DEFAULT_MAX_DF: f64 = 0.90;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VocabularyParams {
    pub max_features: usize,
    /// Absolute minimum document frequency.
    pub min_df: usize,
    /// Maximum document frequency as a fraction of the corpus.
    pub max_df: f64,
}

impl Default for VocabularyParams {
    fn default() -> Self {
        VocabularyParams {
            max_features: DEFAULT_MAX_FEATURES,
            min_df: DEFAULT_MIN_DF,
            max_df: DEFAULT_MAX_DF,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr")]
pub struct Vocabulary {
    /// Sorted lexicographically; a token's column is its position here.
    pub tokens: Vec<String>,
    pub params: VocabularyParams,
    pub stop_words: String,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_tokens(mut tokens: Vec<String>, params: VocabularyParams) -> Self {
        tokens.sort();
        tokens.dedup();
        let mut v = Vocabulary {
            tokens,
            params,
            stop_words: STOP_WORDS_VERSION.to_string(),
            index: HashMap::new(),
        };
        v.rebuild_index();
        v
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn column(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Sparse term counts of one document, sorted by column.
    pub fn count<S: AsRef<str>>(&self, doc: &[S]) -> Vec<(usize, f64)> {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for t in doc {
            if let Some(c) = self.column(t.as_ref()) {
                *counts.entry(c).or_default() += 1.0;
            }
        }
        counts.into_iter().collect()
    }

    pub fn vectorize<S: AsRef<str>>(&self, docs: &[Vec<S>]) -> CountMatrix {
        CountMatrix {
            n_cols: self.len(),
            rows: docs.iter().map(|d| self.count(d)).collect(),
        }
    }
}

#[derive(Deserialize)]
struct VocabularyRepr {
    tokens: Vec<String>,
    params: VocabularyParams,
    stop_words: String,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        let mut v = Vocabulary {
            tokens: r.tokens,
            params: r.params,
            stop_words: r.stop_words,
            index: HashMap::new(),
        };
        v.rebuild_index();
        v
    }
}

/// Filters tokens by document frequency, then keeps the most frequent ones
/// by total corpus count (ties broken lexicographically).
pub fn fit_vocabulary<S: AsRef<str>>(corpus: &[Vec<S>], params: VocabularyParams) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::InsufficientData("vocabulary needs a non-empty corpus".into()));
    }
    let mut doc_freq: HashMap<&str, usize> = HashMap::new();
    let mut term_freq: HashMap<&str, usize> = HashMap::new();
    for doc in corpus {
        let mut seen = HashSet::new();
        for t in doc {
            let t = t.as_ref();
            *term_freq.entry(t).or_default() += 1;
            if seen.insert(t) {
                *doc_freq.entry(t).or_default() += 1;
            }
        }
    }
    let max_docs = params.max_df * corpus.len() as f64;
    let mut kept: Vec<(&str, usize)> = doc_freq
        .into_iter()
        .filter(|&(_, df)| df >= params.min_df && df as f64 <= max_docs)
        .map(|(t, _)| (t, term_freq[t]))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    kept.truncate(params.max_features);
    Ok(Vocabulary::from_tokens(
        kept.into_iter().map(|(t, _)| t.to_string()).collect(),
        params,
    ))
}

/// Row-sparse document-term count matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMatrix {
    pub n_cols: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl CountMatrix {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n_cols = rows.first().map_or(0, Vec::len);
        CountMatrix {
            n_cols,
            rows: rows
                .iter()
                .map(|r| {
                    r.iter()
                        .enumerate()
                        .filter(|(_, v)| **v != 0.0)
                        .map(|(c, v)| (c, *v))
                        .collect()
                })
                .collect(),
        }
    }

    pub fn select(&self, rows: &[usize]) -> CountMatrix {
        CountMatrix {
            n_cols: self.n_cols,
            rows: rows.iter().map(|&r| self.rows[r].clone()).collect(),
        }
    }
}

/// Element-wise sum of two sparse rows.
pub fn add_counts(a: &[(usize, f64)], b: &[(usize, f64)]) -> Vec<(usize, f64)> {
    let mut m: BTreeMap<usize, f64> = a.iter().copied().collect();
    for &(c, v) in b {
        *m.entry(c).or_default() += v;
    }
    m.into_iter().collect()
}
