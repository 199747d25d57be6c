//! Synthetic studies where context and label share a latent risk.
//!
//! Per study and label: `r ~ U(0,1)`, `Y ~ Bernoulli(r)`,
//! `C = a·r + (1 − a)·u` with `u ~ U(0,1)`. The pre-test probability is the
//! exact posterior `P(Y = 1 | C) = E[r | C]`; given `C = c` the latent `r` is
//! uniform on `[max(0, (c − b)/a), min(1, c/a)]` with `b = 1 − a`.
//!
//! Notes are bags of filler words plus per-label context words whose counts
//! follow `C`, and a planted mention term.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Duration, FixedOffset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{link_notes, write_notes, write_predictions, NoteRecord, RawLabel, StudyRecord};
use crate::error::{Error, Result};
use crate::stratify::PhraseList;

const NOTE_SALT: u64 = 0x6e6f_7465_735f_7631;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scorer {
    /// Pre-test probability plus noise.
    Shortcut,
    /// `0.8·Y + 0.1` plus noise.
    Signal,
    /// `λ·(0.8·Y + 0.1) + (1 − λ)·pretest` plus noise.
    Mixed { lambda: f64 },
}

impl Scorer {
    fn raw(self, y: bool, pretest: f64) -> f64 {
        let signal = if y { 0.9 } else { 0.1 };
        match self {
            Scorer::Shortcut => pretest,
            Scorer::Signal => signal,
            Scorer::Mixed { lambda } => lambda * signal + (1.0 - lambda) * pretest,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoteConfig {
    #[serde(default = "default_filler")]
    pub filler: Vec<String>,
    /// Mention term per label; defaults to the label's first listed phrase.
    #[serde(default)]
    pub planted: BTreeMap<String, String>,
    /// Probability that a positive study's notes carry the planted term.
    #[serde(default = "default_prob_pos")]
    pub prob_given_pos: f64,
    #[serde(default)]
    pub prob_given_neg: f64,
    /// Negatives also carry the term with probability `history_mentions · C`.
    #[serde(default)]
    pub history_mentions: f64,
    /// Words whose per-note count is `Binomial(context_trials, C)` each.
    #[serde(default)]
    pub context_terms: BTreeMap<String, Vec<String>>,
    #[serde(default = "default_context_trials")]
    pub context_trials: u32,
    #[serde(default = "default_min_words")]
    pub min_words: usize,
    #[serde(default = "default_max_words")]
    pub max_words: usize,
}

fn default_prob_pos() -> f64 {
    0.8
}
fn default_context_trials() -> u32 {
    2
}
fn default_min_words() -> usize {
    8
}
fn default_max_words() -> usize {
    20
}

pub const FILLER: &[&str] = &[
    "patient", "admitted", "hospital", "course", "discharged", "medication", "history", "follow",
    "clinic", "vitals", "reviewed", "family", "home", "diet", "ambulating", "appetite", "labs",
    "glucose", "sodium", "potassium", "creatinine", "hemoglobin", "therapy", "physical", "nursing",
    "consult", "controlled", "oral", "intake", "urine", "blood", "temperature", "afebrile",
    "alert", "oriented", "denies", "reports", "morning", "evening", "overnight", "improved",
    "dose", "tablet", "daily", "twice", "insulin", "wound", "dressing", "skin", "intact",
    "abdomen", "soft", "bowel", "sounds", "gait", "steady", "social", "work", "education",
    "instructions", "appointment", "primary", "care", "provider", "weekly",
];

fn default_filler() -> Vec<String> {
    FILLER.iter().map(|s| s.to_string()).collect()
}

const EDEMA_CONTEXT: &[&str] = &["furosemide", "orthopnea", "diuresis", "lasix", "swelling"];

impl Default for NoteConfig {
    fn default() -> Self {
        NoteConfig {
            filler: default_filler(),
            planted: BTreeMap::new(),
            prob_given_pos: default_prob_pos(),
            prob_given_neg: 0.0,
            history_mentions: 0.0,
            context_terms: BTreeMap::new(),
            context_trials: default_context_trials(),
            min_words: default_min_words(),
            max_words: default_max_words(),
        }
    }
}

impl NoteConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("prob_given_pos", self.prob_given_pos),
            ("prob_given_neg", self.prob_given_neg),
            ("history_mentions", self.history_mentions),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} must lie in [0, 1]")));
            }
        }
        if self.prob_given_neg + self.history_mentions > 1.0 {
            return Err(Error::Config("prob_given_neg + history_mentions must not exceed 1".into()));
        }
        if self.filler.is_empty() {
            return Err(Error::Config("filler vocabulary is empty".into()));
        }
        if self.min_words > self.max_words {
            return Err(Error::Config("min_words exceeds max_words".into()));
        }
        Ok(())
    }

    /// Planted term for a label.
    pub fn planted_term(&self, label: &str) -> Result<String> {
        if let Some(t) = self.planted.get(label) {
            return Ok(t.clone());
        }
        Ok(PhraseList::chexpert_adapted().phrases(label)?[0].clone())
    }

    /// Context words for a label.
    pub fn context_for(&self, label: &str, label_index: usize) -> Vec<String> {
        if let Some(t) = self.context_terms.get(label) {
            return t.clone();
        }
        if label == "Edema" {
            return EDEMA_CONTEXT.iter().map(|s| s.to_string()).collect();
        }
        (0..5).map(|i| format!("ctx{label_index}k{i}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n: usize,
    pub coupling: f64,
    pub scorer: Scorer,
    pub noise_sd: f64,
    pub seed: u64,
    #[serde(default = "default_labels")]
    pub labels: Vec<String>,
    #[serde(default = "default_studies_per_subject")]
    pub studies_per_subject: usize,
    #[serde(default)]
    pub notes: Option<NoteConfig>,
}

fn default_labels() -> Vec<String> {
    vec!["Edema".to_string()]
}
fn default_studies_per_subject() -> usize {
    1
}

impl SynthConfig {
    pub fn new(n: usize, coupling: f64, scorer: Scorer, noise_sd: f64, seed: u64) -> Self {
        SynthConfig {
            n,
            coupling,
            scorer,
            noise_sd,
            seed,
            labels: default_labels(),
            studies_per_subject: 1,
            notes: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let c: SynthConfig = serde_json::from_str(&text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::Config(format!("n = {} must be at least 10", self.n)));
        }
        if !(0.0..=1.0).contains(&self.coupling) {
            return Err(Error::Config(format!("coupling = {} must lie in [0, 1]", self.coupling)));
        }
        if let Scorer::Mixed { lambda } = self.scorer {
            if !(0.0..=1.0).contains(&lambda) {
                return Err(Error::Config(format!("lambda = {lambda} must lie in [0, 1]")));
            }
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::Config(format!("noise_sd = {} must be positive", self.noise_sd)));
        }
        if self.labels.is_empty() {
            return Err(Error::Config("no labels".into()));
        }
        if self.studies_per_subject == 0 {
            return Err(Error::Config("studies_per_subject must be at least 1".into()));
        }
        if let Some(n) = &self.notes {
            n.validate()?;
        }
        Ok(())
    }
}

/// Generative variables of one study and label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub r: f64,
    pub y: bool,
    pub c: f64,
    pub pretest: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub config: SynthConfig,
    pub records: Vec<StudyRecord>,
    /// `truth[i][label]` for `records[i]`.
    pub truth: Vec<BTreeMap<String, Truth>>,
    pub notes: Vec<NoteRecord>,
}

impl SynthDataset {
    /// Column of one label's generative variable across studies.
    pub fn column(&self, label: &str, f: impl Fn(&Truth) -> f64) -> Vec<f64> {
        self.truth.iter().map(|t| f(&t[label])).collect()
    }

    pub fn labels_of(&self, label: &str) -> Vec<bool> {
        self.truth.iter().map(|t| t[label].y).collect()
    }

    /// Writes `predictions.csv`, `truth.csv` and, with notes, `notes.jsonl`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let create = |name: &str| {
            let p = dir.join(name);
            std::fs::File::create(&p)
                .map(std::io::BufWriter::new)
                .map_err(|e| Error::io(&p, e))
        };
        write_predictions(create("predictions.csv")?, &self.records)?;
        let mut w = csv::Writer::from_writer(create("truth.csv")?);
        w.write_record(["study_id", "label", "r", "y", "c", "pretest", "score"])?;
        for (rec, truth) in self.records.iter().zip(&self.truth) {
            for (label, t) in truth {
                w.write_record([
                    rec.study_id.clone(),
                    label.clone(),
                    t.r.to_string(),
                    u8::from(t.y).to_string(),
                    t.c.to_string(),
                    t.pretest.to_string(),
                    t.score.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io(dir, e))?;
        if self.config.notes.is_some() {
            write_notes(create("notes.jsonl")?, &self.notes)?;
        }
        Ok(())
    }
}

/// `P(Y = 1 | C = c)` under the model with the given coupling.
pub fn posterior(c: f64, coupling: f64) -> f64 {
    let a = coupling;
    if a <= 0.0 {
        return 0.5;
    }
    let b = 1.0 - a;
    let lo = ((c - b) / a).max(0.0);
    let hi = (c / a).min(1.0);
    ((lo + hi) / 2.0).clamp(0.0, 1.0)
}

fn study_rng(seed: u64, salt: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt);
    rng.set_stream(index as u64);
    rng
}

fn base_time() -> DateTime<FixedOffset> {
    DateTime::parse_from_rfc3339("2150-01-01T08:00:00+00:00").expect("valid constant")
}

pub fn generate(config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    let noise = Normal::new(0.0, config.noise_sd).map_err(|e| Error::Config(e.to_string()))?;
    let mut records = Vec::with_capacity(config.n);
    let mut truth = Vec::with_capacity(config.n);
    for i in 0..config.n {
        let mut rng = study_rng(config.seed, 0, i);
        let mut rec = StudyRecord {
            study_id: format!("s{i:06}"),
            subject_id: format!("p{:06}", i / config.studies_per_subject),
            labels: BTreeMap::new(),
            y: BTreeMap::new(),
            score: BTreeMap::new(),
            pretest: Some(BTreeMap::new()),
            study_time: Some(base_time() + Duration::days(60 * i as i64)),
            note_refs: Vec::new(),
        };
        let mut t = BTreeMap::new();
        for label in &config.labels {
            let r: f64 = rng.random();
            let y = rng.random_bool(r);
            let u: f64 = rng.random();
            let c = config.coupling * r + (1.0 - config.coupling) * u;
            let pretest = posterior(c, config.coupling);
            let score = (config.scorer.raw(y, pretest) + noise.sample(&mut rng)).clamp(0.0, 1.0);
            rec.labels.insert(label.clone(), RawLabel::from_binary(y));
            rec.y.insert(label.clone(), y);
            rec.score.insert(label.clone(), score);
            rec.pretest.as_mut().expect("set above").insert(label.clone(), pretest);
            t.insert(
                label.clone(),
                Truth {
                    r,
                    y,
                    c,
                    pretest,
                    score,
                },
            );
        }
        records.push(rec);
        truth.push(t);
    }
    let mut ds = SynthDataset {
        config: config.clone(),
        records,
        truth,
        notes: Vec::new(),
    };
    if let Some(nc) = &config.notes {
        ds.notes = generate_notes(&ds, nc)?;
        link_notes(&mut ds.records, &ds.notes);
    }
    Ok(ds)
}

/// One to three prior notes per study, charted 1–30 days before it.
pub fn generate_notes(ds: &SynthDataset, nc: &NoteConfig) -> Result<Vec<NoteRecord>> {
    nc.validate()?;
    let labels = &ds.config.labels;
    let planted = labels
        .iter()
        .map(|l| nc.planted_term(l))
        .collect::<Result<Vec<_>>>()?;
    let context: Vec<Vec<String>> = labels
        .iter()
        .enumerate()
        .map(|(k, l)| nc.context_for(l, k))
        .collect();
    let mut notes = Vec::new();
    for (i, (rec, truth)) in ds.records.iter().zip(&ds.truth).enumerate() {
        let mut rng = study_rng(ds.config.seed, NOTE_SALT, i);
        let n_notes = rng.random_range(1..=3usize);
        let mut bodies: Vec<Vec<String>> = (0..n_notes)
            .map(|_| {
                let len = rng.random_range(nc.min_words..=nc.max_words);
                (0..len)
                    .map(|_| nc.filler[rng.random_range(0..nc.filler.len())].clone())
                    .collect()
            })
            .collect();
        for (k, label) in labels.iter().enumerate() {
            let t = &truth[label];
            let trials = Binomial::new(u64::from(nc.context_trials), t.c.clamp(0.0, 1.0))
                .map_err(|e| Error::Config(e.to_string()))?;
            for body in bodies.iter_mut() {
                for word in &context[k] {
                    for _ in 0..trials.sample(&mut rng) {
                        let at = rng.random_range(0..=body.len());
                        body.insert(at, word.clone());
                    }
                }
            }
            let p = if t.y {
                nc.prob_given_pos
            } else {
                nc.prob_given_neg + nc.history_mentions * t.c
            };
            if rng.random_bool(p.clamp(0.0, 1.0)) {
                let which = rng.random_range(0..bodies.len());
                let at = rng.random_range(0..=bodies[which].len());
                bodies[which].insert(at, planted[k].clone());
            }
        }
        let study_time = rec.study_time.expect("synthetic studies are timestamped");
        let mut offsets: Vec<i64> = Vec::new();
        while offsets.len() < n_notes {
            let d = rng.random_range(1..=30i64);
            if !offsets.contains(&d) {
                offsets.push(d);
            }
        }
        offsets.sort_unstable_by(|a, b| b.cmp(a));
        for (k, (body, days)) in bodies.into_iter().zip(offsets).enumerate() {
            notes.push(NoteRecord {
                note_id: format!("{}-n{k}", rec.study_id),
                subject_id: rec.subject_id.clone(),
                chart_time: study_time - Duration::days(days),
                text: body.join(" ") + ".",
            });
        }
    }
    Ok(notes)
}
