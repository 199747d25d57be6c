//! Canonical data model, file ingestion, label policy and subject-level splits.
//!
//! Predictions arrive as long-form delimiter-separated rows (one row per
//! study and label); notes arrive as JSON lines. Both are UTF-8.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use chrono::{DateTime, FixedOffset};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw ternary (plus missing) label as recorded by the upstream labeler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RawLabel {
    Positive,
    Negative,
    Uncertain,
    Missing,
}

impl RawLabel {
    /// Accepts the short codes used in prediction files (`pos`, `neg`, `unc`,
    /// `na`), the long names, and the CheXpert numeric coding (`1`, `0`, `-1`,
    /// empty).
    pub fn parse(raw: &str) -> Option<RawLabel> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "pos" | "positive" | "1" | "1.0" => Some(RawLabel::Positive),
            "neg" | "negative" | "0" | "0.0" => Some(RawLabel::Negative),
            "unc" | "uncertain" | "-1" | "-1.0" => Some(RawLabel::Uncertain),
            "na" | "missing" | "" | "nan" => Some(RawLabel::Missing),
            _ => None,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            RawLabel::Positive => "pos",
            RawLabel::Negative => "neg",
            RawLabel::Uncertain => "unc",
            RawLabel::Missing => "na",
        }
    }

    /// Re-embeds a binary label as a raw one (`true` → positive).
    pub fn from_binary(y: bool) -> RawLabel {
        if y {
            RawLabel::Positive
        } else {
            RawLabel::Negative
        }
    }
}

/// Uncertain and missing findings count as negative diagnoses.
pub fn apply_label_policy(raw: RawLabel) -> bool {
    matches!(raw, RawLabel::Positive)
}

/// One evaluation instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub study_id: String,
    pub subject_id: String,
    pub labels: BTreeMap<String, RawLabel>,
    pub y: BTreeMap<String, bool>,
    pub score: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretest: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study_time: Option<DateTime<FixedOffset>>,
    #[serde(default)]
    pub note_refs: Vec<String>,
}

impl StudyRecord {
    pub fn label_names(&self) -> impl Iterator<Item = &str> {
        self.y.keys().map(String::as_str)
    }

    pub fn pretest_for(&self, label: &str) -> Option<f64> {
        self.pretest.as_ref().and_then(|p| p.get(label).copied())
    }

    /// Checks the record-level invariants.
    pub fn validate(&self) -> Result<()> {
        for (label, raw) in &self.labels {
            if self.y.get(label) != Some(&apply_label_policy(*raw)) {
                return Err(Error::Conflict(format!(
                    "study {}: y[{label}] does not follow the label policy",
                    self.study_id
                )));
            }
        }
        let y_keys: BTreeSet<_> = self.y.keys().collect();
        let s_keys: BTreeSet<_> = self.score.keys().collect();
        if y_keys != s_keys || self.labels.len() != self.y.len() {
            return Err(Error::Conflict(format!(
                "study {}: label sets of y and score differ",
                self.study_id
            )));
        }
        for (label, s) in &self.score {
            check_unit(*s).map_err(|m| {
                Error::InvalidValue(format!("study {} score[{label}]: {m}", self.study_id))
            })?;
        }
        if let Some(p) = &self.pretest {
            let p_keys: BTreeSet<_> = p.keys().collect();
            if p_keys != y_keys {
                return Err(Error::Conflict(format!(
                    "study {}: pretest labels differ from score labels",
                    self.study_id
                )));
            }
            for (label, v) in p {
                check_unit(*v).map_err(|m| {
                    Error::InvalidValue(format!("study {} pretest[{label}]: {m}", self.study_id))
                })?;
            }
        }
        Ok(())
    }
}

fn check_unit(v: f64) -> std::result::Result<(), String> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(format!("{v} is outside [0, 1]"))
    }
}

/// A free-text note attached to a subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteRecord {
    pub note_id: String,
    pub subject_id: String,
    pub chart_time: DateTime<FixedOffset>,
    pub text: String,
}

/// Column names of the predictions file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub study_id: String,
    pub subject_id: String,
    pub label: String,
    pub y_raw: String,
    pub score: String,
    /// Read when the column is present; ignored otherwise.
    pub pretest: String,
    /// Optional RFC 3339 study time, used to select prior notes.
    pub study_time: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            study_id: "study_id".into(),
            subject_id: "subject_id".into(),
            label: "label".into(),
            y_raw: "y_raw".into(),
            score: "score".into(),
            pretest: "pretest".into(),
            study_time: "study_time".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct RowEntry {
    raw: RawLabel,
    score: f64,
    pretest: Option<f64>,
}

struct Partial {
    subject_id: String,
    study_time: Option<DateTime<FixedOffset>>,
    entries: BTreeMap<String, RowEntry>,
}

pub fn ingest_predictions(path: &Path, schema: &ColumnMap) -> Result<Vec<StudyRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_predictions(file, schema)
}

/// Parses long-form prediction rows and merges them into one record per study.
///
/// Output is sorted by `study_id`, so it does not depend on row order.
pub fn read_predictions<R: Read>(reader: R, schema: &ColumnMap) -> Result<Vec<StudyRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Schema {
            column: name.to_string(),
        })
    };
    let i_study = col(&schema.study_id)?;
    let i_subject = col(&schema.subject_id)?;
    let i_label = col(&schema.label)?;
    let i_raw = col(&schema.y_raw)?;
    let i_score = col(&schema.score)?;
    let i_pretest = col(&schema.pretest).ok();
    let i_time = col(&schema.study_time).ok();

    let mut studies: BTreeMap<String, Partial> = BTreeMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let value_err = |message: String| Error::Value { line, message };
        let field = |i: usize| row.get(i).unwrap_or("");

        let study_id = field(i_study).to_string();
        let subject_id = field(i_subject).to_string();
        let label = field(i_label).to_string();
        if study_id.is_empty() || subject_id.is_empty() || label.is_empty() {
            return Err(value_err("empty identifier".into()));
        }
        let raw = RawLabel::parse(field(i_raw))
            .ok_or_else(|| value_err(format!("unrecognized label value `{}`", field(i_raw))))?;
        let score = parse_unit(field(i_score)).map_err(|m| value_err(format!("score {m}")))?;
        let pretest = match i_pretest.map(field) {
            None | Some("") => None,
            Some(v) => Some(parse_unit(v).map_err(|m| value_err(format!("pretest {m}")))?),
        };
        let study_time = match i_time.map(field) {
            None | Some("") => None,
            Some(v) => Some(
                DateTime::parse_from_rfc3339(v)
                    .map_err(|e| value_err(format!("study_time `{v}`: {e}")))?,
            ),
        };

        let partial = studies.entry(study_id.clone()).or_insert_with(|| Partial {
            subject_id: subject_id.clone(),
            study_time,
            entries: BTreeMap::new(),
        });
        if partial.subject_id != subject_id {
            return Err(Error::Conflict(format!(
                "study {study_id} is assigned to subjects {} and {subject_id}",
                partial.subject_id
            )));
        }
        if partial.study_time != study_time {
            return Err(Error::Conflict(format!(
                "study {study_id} has conflicting study times"
            )));
        }
        let entry = RowEntry {
            raw,
            score,
            pretest,
        };
        match partial.entries.get(&label) {
            Some(prev) if *prev != entry => {
                return Err(Error::Conflict(format!(
                    "duplicate (study {study_id}, label {label}) with conflicting values"
                )))
            }
            Some(_) => {}
            None => {
                partial.entries.insert(label, entry);
            }
        }
    }

    studies
        .into_iter()
        .map(|(study_id, p)| {
            let with_pretest = p.entries.values().filter(|e| e.pretest.is_some()).count();
            if with_pretest != 0 && with_pretest != p.entries.len() {
                return Err(Error::Conflict(format!(
                    "study {study_id}: pretest given for some labels but not all"
                )));
            }
            let pretest = (with_pretest != 0).then(|| {
                p.entries
                    .iter()
                    .map(|(l, e)| (l.clone(), e.pretest.unwrap_or_default()))
                    .collect()
            });
            Ok(StudyRecord {
                study_id,
                subject_id: p.subject_id,
                labels: p.entries.iter().map(|(l, e)| (l.clone(), e.raw)).collect(),
                y: p
                    .entries
                    .iter()
                    .map(|(l, e)| (l.clone(), apply_label_policy(e.raw)))
                    .collect(),
                score: p.entries.iter().map(|(l, e)| (l.clone(), e.score)).collect(),
                pretest,
                study_time: p.study_time,
                note_refs: Vec::new(),
            })
        })
        .collect()
}

fn parse_unit(v: &str) -> std::result::Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| format!("`{v}` is not a number"))?;
    check_unit(x)?;
    Ok(x)
}

pub fn ingest_notes(path: &Path) -> Result<Vec<NoteRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_notes(BufReader::new(file))
}

/// Reads one JSON note per line; blank lines are ignored.
pub fn read_notes<R: BufRead>(reader: R) -> Result<Vec<NoteRecord>> {
    let mut notes = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|e| Error::io("<notes>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let note: NoteRecord = serde_json::from_str(&line).map_err(|e| Error::Value {
            line: line_no,
            message: e.to_string(),
        })?;
        if note.text.trim().is_empty() {
            return Err(Error::Value {
                line: line_no,
                message: format!("note {} has empty text", note.note_id),
            });
        }
        notes.push(note);
    }
    Ok(notes)
}

pub fn write_notes<W: std::io::Write>(mut writer: W, notes: &[NoteRecord]) -> Result<()> {
    for note in notes {
        serde_json::to_writer(&mut writer, note)?;
        writer
            .write_all(b"\n")
            .map_err(|e| Error::io("<notes>", e))?;
    }
    Ok(())
}

/// Writes records back out in the long-form predictions layout.
pub fn write_predictions<W: std::io::Write>(writer: W, records: &[StudyRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let has_time = records.iter().any(|r| r.study_time.is_some());
    let has_pretest = records.iter().any(|r| r.pretest.is_some());
    let mut header = vec!["study_id", "subject_id", "label", "y_raw", "score"];
    if has_pretest {
        header.push("pretest");
    }
    if has_time {
        header.push("study_time");
    }
    wtr.write_record(&header)?;
    for r in records {
        for (label, raw) in &r.labels {
            let mut row = vec![
                r.study_id.clone(),
                r.subject_id.clone(),
                label.clone(),
                raw.code().to_string(),
                r.score[label].to_string(),
            ];
            if has_pretest {
                row.push(r.pretest_for(label).map(|p| p.to_string()).unwrap_or_default());
            }
            if has_time {
                row.push(r.study_time.map(|t| t.to_rfc3339()).unwrap_or_default());
            }
            wtr.write_record(&row)?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<predictions>", e))?;
    Ok(())
}

/// Fills `note_refs` with the subject's notes ordered by chart time.
///
/// When a record carries a study time only notes charted strictly before it
/// are linked; otherwise every note of the subject is treated as prior.
pub fn link_notes(records: &mut [StudyRecord], notes: &[NoteRecord]) {
    let mut by_subject: BTreeMap<&str, Vec<&NoteRecord>> = BTreeMap::new();
    for n in notes {
        by_subject.entry(n.subject_id.as_str()).or_default().push(n);
    }
    for list in by_subject.values_mut() {
        list.sort_by(|a, b| a.chart_time.cmp(&b.chart_time).then(a.note_id.cmp(&b.note_id)));
    }
    for r in records.iter_mut() {
        r.note_refs = by_subject
            .get(r.subject_id.as_str())
            .map(|list| {
                list.iter()
                    .filter(|n| r.study_time.is_none_or(|t| n.chart_time < t))
                    .map(|n| n.note_id.clone())
                    .collect()
            })
            .unwrap_or_default();
    }
}

/// Index of notes by id, for resolving `note_refs`.
pub fn note_index(notes: &[NoteRecord]) -> BTreeMap<&str, &NoteRecord> {
    notes.iter().map(|n| (n.note_id.as_str(), n)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub assignment: BTreeMap<String, Split>,
}

impl SplitAssignment {
    pub fn of(&self, subject_id: &str) -> Option<Split> {
        self.assignment.get(subject_id).copied()
    }

    pub fn count(&self, split: Split) -> usize {
        self.assignment.values().filter(|s| **s == split).count()
    }
}

/// Subject-level split: subjects are shuffled with `seed` and cut at
/// `floor(f_train·n)` and `floor((f_train+f_val)·n)`.
pub fn split_by_subject(
    records: &[StudyRecord],
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<SplitAssignment> {
    let (f_train, f_val, f_test) = fractions;
    if [f_train, f_val, f_test].iter().any(|f| !(0.0..=1.0).contains(f))
        || ((f_train + f_val + f_test) - 1.0).abs() > 1e-9
    {
        return Err(Error::Config(format!(
            "split fractions {fractions:?} must be non-negative and sum to 1"
        )));
    }
    let subjects: BTreeSet<&str> = records.iter().map(|r| r.subject_id.as_str()).collect();
    if subjects.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} distinct subjects; at least 3 are needed for a three-way split",
            subjects.len()
        )));
    }
    let mut order: Vec<&str> = subjects.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = order.len() as f64;
    let cut_train = (f_train * n + 1e-9).floor() as usize;
    let cut_val = ((f_train + f_val) * n + 1e-9).floor() as usize;
    let assignment = order
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let split = if i < cut_train {
                Split::Train
            } else if i < cut_val {
                Split::Validation
            } else {
                Split::Test
            };
            (s.to_string(), split)
        })
        .collect();
    Ok(SplitAssignment { assignment })
}

/// Every label name appearing in `records`, sorted.
pub fn label_universe(records: &[StudyRecord]) -> Vec<String> {
    let set: BTreeSet<&str> = records.iter().flat_map(|r| r.label_names()).collect();
    set.into_iter().map(str::to_string).collect()
}
