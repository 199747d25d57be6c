//! Disjoint subpopulations by pre-test quantile or by prior mention.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::StudyRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantileStratum {
    Bottom25,
    Middle50,
    Top25,
}

impl QuantileStratum {
    pub const ALL: [QuantileStratum; 3] = [
        QuantileStratum::Bottom25,
        QuantileStratum::Middle50,
        QuantileStratum::Top25,
    ];

    pub fn name(self) -> &'static str {
        match self {
            QuantileStratum::Bottom25 => "bottom25",
            QuantileStratum::Middle50 => "middle50",
            QuantileStratum::Top25 => "top25",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileStrata {
    pub label: String,
    pub q25: f64,
    pub q75: f64,
    pub assignment: BTreeMap<String, QuantileStratum>,
}

impl QuantileStrata {
    pub fn members(&self, stratum: QuantileStratum) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, s)| **s == stratum)
            .map(|(id, _)| id.as_str())
            .collect()
    }
}

/// Order statistic at 0-based index `floor(q·n)` of the sorted values.
pub fn rank_cut(sorted: &[f64], q: f64) -> f64 {
    let idx = ((q * sorted.len() as f64).floor() as usize).min(sorted.len() - 1);
    sorted[idx]
}

/// Bins studies by the 25th and 75th rank cuts of their pre-test
/// probabilities: `p < q25` is bottom, `p ≥ q75` is top, the rest middle.
pub fn quantile_strata<'a, I>(pretest: I, label: &str) -> Result<QuantileStrata>
where
    I: IntoIterator<Item = (&'a str, f64)>,
{
    let values: Vec<(&str, f64)> = pretest.into_iter().collect();
    if values.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "label `{label}`: {} records with pre-test probability, need at least 4",
            values.len()
        )));
    }
    if values.iter().any(|(_, p)| p.is_nan()) {
        return Err(Error::InvalidValue(format!("label `{label}`: NaN pre-test probability")));
    }
    let mut sorted: Vec<f64> = values.iter().map(|v| v.1).collect();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[sorted.len() - 1] {
        return Err(Error::DegenerateDistribution(format!(
            "label `{label}`: all pre-test probabilities equal {}",
            sorted[0]
        )));
    }
    let q25 = rank_cut(&sorted, 0.25);
    let q75 = rank_cut(&sorted, 0.75);
    let assignment = values
        .into_iter()
        .map(|(id, p)| {
            let s = if p < q25 {
                QuantileStratum::Bottom25
            } else if p >= q75 {
                QuantileStratum::Top25
            } else {
                QuantileStratum::Middle50
            };
            (id.to_string(), s)
        })
        .collect();
    Ok(QuantileStrata {
        label: label.to_string(),
        q25,
        q75,
        assignment,
    })
}

/// `(study_id, pretest)` for every record, or an error naming the fix.
pub fn pretest_column<'a>(records: &'a [StudyRecord], label: &str) -> Result<Vec<(&'a str, f64)>> {
    records
        .iter()
        .filter(|r| r.y.contains_key(label))
        .map(|r| {
            r.pretest_for(label)
                .map(|p| (r.study_id.as_str(), p))
                .ok_or_else(|| Error::MissingPretest {
                    label: label.to_string(),
                })
        })
        .collect()
}

/// Label name → substring phrases that constitute a prior mention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhraseList(pub BTreeMap<String, Vec<String>>);

const DEFAULT_PHRASES: &str = include_str!("../data/phrases_chexpert_adapted.json");

impl PhraseList {
    /// The adapted CheXpert phrase lists for the 13 chest X-ray labels.
    pub fn chexpert_adapted() -> Self {
        serde_json::from_str(DEFAULT_PHRASES).expect("bundled phrase list is valid JSON")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn labels(&self) -> Vec<String> {
        self.0.keys().cloned().collect()
    }

    pub fn phrases(&self, label: &str) -> Result<&[String]> {
        match self.0.get(label) {
            Some(p) if !p.is_empty() => Ok(p),
            _ => Err(Error::MissingPhraseList {
                label: label.to_string(),
                available: self
                    .0
                    .iter()
                    .filter(|(_, p)| !p.is_empty())
                    .map(|(l, _)| l.clone())
                    .collect(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MentionStratum {
    Mentioned,
    NotMentioned,
}

impl MentionStratum {
    pub fn name(self) -> &'static str {
        match self {
            MentionStratum::Mentioned => "mentioned",
            MentionStratum::NotMentioned => "not_mentioned",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentionStrata {
    pub label: String,
    pub phrases: Vec<String>,
    pub assignment: BTreeMap<String, MentionStratum>,
    /// Studies without prior notes that were left out.
    pub excluded: Vec<String>,
    /// How note text was normalized before matching.
    pub text_normalization: String,
}

impl MentionStrata {
    pub fn members(&self, stratum: MentionStratum) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, s)| **s == stratum)
            .map(|(id, _)| id.as_str())
            .collect()
    }
}

pub const MENTION_NORMALIZATION: &str = "lowercase; whitespace runs collapsed to one space; punctuation kept";

/// Lower-cases and collapses whitespace runs so multi-word phrases match
/// across line breaks and repeated spaces.
pub fn normalize_for_matching(text: &str) -> String {
    text.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn mentions_any(text: &str, phrases: &[String]) -> bool {
    let norm = normalize_for_matching(text);
    phrases
        .iter()
        .any(|p| norm.contains(normalize_for_matching(p).as_str()))
}

/// Flags a study as mentioned when any of its prior notes contains any of
/// the label's phrases. Studies without prior notes are excluded unless
/// `allow_empty_context`, in which case they are not mentioned.
pub fn mention_strata<'a, I, T>(
    prior_text: I,
    phrases: &PhraseList,
    label: &str,
    allow_empty_context: bool,
) -> Result<MentionStrata>
where
    I: IntoIterator<Item = (&'a str, Vec<T>)>,
    T: AsRef<str>,
{
    let list = phrases.phrases(label)?;
    let normalized: Vec<String> = list.iter().map(|p| normalize_for_matching(p)).collect();
    let mut assignment = BTreeMap::new();
    let mut excluded = Vec::new();
    for (study_id, notes) in prior_text {
        if notes.is_empty() && !allow_empty_context {
            excluded.push(study_id.to_string());
            continue;
        }
        let hit = notes.iter().any(|n| {
            let norm = normalize_for_matching(n.as_ref());
            normalized.iter().any(|p| norm.contains(p.as_str()))
        });
        let stratum = if hit {
            MentionStratum::Mentioned
        } else {
            MentionStratum::NotMentioned
        };
        assignment.insert(study_id.to_string(), stratum);
    }
    excluded.sort();
    Ok(MentionStrata {
        label: label.to_string(),
        phrases: list.to_vec(),
        assignment,
        excluded,
        text_normalization: MENTION_NORMALIZATION.to_string(),
    })
}
