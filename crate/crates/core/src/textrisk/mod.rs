//! Bag-of-words pre-test probability from prior notes.
//!
//! Pipeline: [`preprocess`] each note, build one token document per study
//! from its prior notes, [`fit_vocabulary`], vectorize, [`train_risk_model`]
//! and optionally attach an isotonic calibration map fit on the
//! out-of-fold predictions.

mod model;
mod preprocess;
mod vocab;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate_cv, CalibrationPoint, IsotonicMap};
use crate::dataset::{NoteRecord, StudyRecord};
use crate::error::{Error, Result};

pub use model::{
    fit_logistic, logistic, regularized_loss, top_features, train_risk_model, CvRow, FitOptions,
    FitResult, LinearRiskModel, TrainConfig, TrainOutcome, DEFAULT_GRID, DEFAULT_MAX_ITER,
};
pub use preprocess::{is_stop_word, preprocess, stop_words, STOP_WORDS_VERSION};
pub use vocab::{
    add_counts, fit_vocabulary, CountMatrix, Vocabulary, VocabularyParams, DEFAULT_MAX_DF,
    DEFAULT_MAX_FEATURES, DEFAULT_MIN_DF,
};

/// What to do for a study without prior notes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoContextPolicy {
    #[default]
    Error,
    /// Return the training prevalence.
    PriorPrevalence,
}

/// Serialized text model for one label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextRiskArtifact {
    pub label: String,
    pub vocabulary: Vocabulary,
    pub model: LinearRiskModel,
    pub stop_words: String,
    pub prevalence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<IsotonicMap>,
    #[serde(default)]
    pub cv: Vec<CvRow>,
}

impl TextRiskArtifact {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Pre-test probability from term counts summed over the prior notes.
    pub fn predict_tokens(&self, docs: &[Vec<String>]) -> f64 {
        let row = docs
            .iter()
            .fold(Vec::new(), |acc, d| add_counts(&acc, &self.vocabulary.count(d)));
        let p = self.model.predict(&row);
        match &self.calibration {
            Some(map) => map.apply(p),
            None => p,
        }
    }
}

/// Scores a study from its prior notes. Counts are summed over notes, so a
/// set of notes and their concatenation agree unless a repeated token
/// straddles the join.
pub fn predict_pretest(
    artifact: &TextRiskArtifact,
    study_id: &str,
    prior_notes: &[&NoteRecord],
    policy: NoContextPolicy,
) -> Result<f64> {
    if prior_notes.is_empty() {
        return match policy {
            NoContextPolicy::Error => Err(Error::NoContext {
                study_id: study_id.to_string(),
            }),
            NoContextPolicy::PriorPrevalence => Ok(artifact.prevalence),
        };
    }
    let docs: Vec<Vec<String>> = prior_notes.iter().map(|n| preprocess(&n.text)).collect();
    Ok(artifact.predict_tokens(&docs))
}

/// Pre-test probabilities for `records` in order.
pub fn predict_records(
    artifact: &TextRiskArtifact,
    records: &[StudyRecord],
    notes: &[NoteRecord],
    policy: NoContextPolicy,
) -> Result<Vec<f64>> {
    let index = crate::dataset::note_index(notes);
    records
        .iter()
        .map(|r| predict_pretest(artifact, &r.study_id, &prior_notes(r, &index), policy))
        .collect()
}

/// Resolves a record's `note_refs`.
pub fn prior_notes<'a>(
    record: &StudyRecord,
    index: &BTreeMap<&str, &'a NoteRecord>,
) -> Vec<&'a NoteRecord> {
    record
        .note_refs
        .iter()
        .filter_map(|id| index.get(id.as_str()).copied())
        .collect()
}

/// One preprocessed token document per study: its prior notes in chart order.
pub fn study_document(notes: &[&NoteRecord]) -> Vec<String> {
    notes.iter().flat_map(|n| preprocess(&n.text)).collect()
}

#[derive(Debug, Clone)]
pub struct TextTrainConfig {
    pub vocabulary: VocabularyParams,
    pub train: TrainConfig,
    pub calibrate: bool,
}

impl Default for TextTrainConfig {
    fn default() -> Self {
        TextTrainConfig {
            vocabulary: VocabularyParams::default(),
            train: TrainConfig::default(),
            calibrate: true,
        }
    }
}

/// End-to-end fit for one label on studies that have prior notes.
pub fn train_text_model(
    records: &[StudyRecord],
    notes: &[NoteRecord],
    label: &str,
    config: &TextTrainConfig,
) -> Result<(TextRiskArtifact, TrainOutcome)> {
    let index = crate::dataset::note_index(notes);
    let mut docs = Vec::new();
    let mut targets = Vec::new();
    let mut groups = Vec::new();
    for r in records {
        let Some(&y) = r.y.get(label) else { continue };
        let prior = prior_notes(r, &index);
        if prior.is_empty() {
            continue;
        }
        docs.push(study_document(&prior));
        targets.push(y);
        groups.push(r.subject_id.clone());
    }
    if docs.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no studies with label `{label}` and prior notes"
        )));
    }
    let vocabulary = fit_vocabulary(&docs, config.vocabulary)?;
    let counts = vocabulary.vectorize(&docs);
    let outcome = train_risk_model(&counts, &vocabulary.tokens, &targets, &groups, &config.train)?;

    let calibration = if config.calibrate {
        let points: Vec<CalibrationPoint> = groups
            .iter()
            .zip(&outcome.oof_scores)
            .zip(&targets)
            .map(|((g, &s), &t)| CalibrationPoint {
                group: g.clone(),
                score: s,
                target: t,
            })
            .collect();
        Some(calibrate_cv(&points, config.train.folds, config.train.seed)?)
    } else {
        None
    };
    let prevalence = targets.iter().filter(|&&t| t).count() as f64 / targets.len() as f64;
    let artifact = TextRiskArtifact {
        label: label.to_string(),
        stop_words: vocabulary.stop_words.clone(),
        vocabulary,
        model: outcome.model.clone(),
        prevalence,
        calibration,
        cv: outcome.cv.clone(),
    };
    Ok((artifact, outcome))
}
