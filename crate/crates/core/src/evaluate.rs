//! Whole-dataset analyses: per-label subgroups, bootstrap, one report.

use serde::{Deserialize, Serialize};

use crate::dataset::{note_index, NoteRecord, StudyRecord};
use crate::error::{Error, Result};
use crate::matchset::MatchOptions;
use crate::resample::{
    assemble_report, bootstrap_matched, bootstrap_subgroups, BootstrapConfig, LabelTrace, MatchInput,
    StratumReport, Subgroup,
};
use crate::stratify::{mention_strata, pretest_column, quantile_strata, MentionStratum, PhraseList, QuantileStratum};
use crate::textrisk::{predict_pretest, prior_notes, NoContextPolicy, TextRiskArtifact};

fn subgroup<'a>(name: &str, records: impl Iterator<Item = &'a StudyRecord>, label: &str) -> Subgroup {
    let (y, s) = records.map(|r| (r.y[label], r.score[label])).unzip();
    Subgroup::new(name, y, s)
}

fn labelled<'a>(records: &'a [StudyRecord], label: &'a str) -> impl Iterator<Item = &'a StudyRecord> {
    records.iter().filter(move |r| r.y.contains_key(label))
}

fn run_labels<F>(analysis: &str, labels: &[String], config: &BootstrapConfig, f: F) -> Result<StratumReport>
where
    F: Fn(&str, u32) -> Result<LabelTrace>,
{
    config.validate()?;
    let results = labels
        .iter()
        .enumerate()
        .map(|(k, l)| (l.clone(), f(l, k as u32)))
        .collect();
    assemble_report(analysis, config, results)
}

/// Quartile strata of the pre-test probability; difference is
/// `bottom25 − top25`.
pub fn eval_strata(records: &[StudyRecord], labels: &[String], config: &BootstrapConfig) -> Result<StratumReport> {
    run_labels("strata", labels, config, |label, stream| {
        let strata = quantile_strata(pretest_column(records, label)?, label)?;
        let groups: Vec<Subgroup> = QuantileStratum::ALL
            .iter()
            .map(|&q| {
                let members = labelled(records, label).filter(|r| strata.assignment.get(&r.study_id) == Some(&q));
                subgroup(q.name(), members, label)
            })
            .collect();
        bootstrap_subgroups(label, &groups, &[(0, 2)], config, stream)
    })
}

/// Prior-mention subgroups; difference is `not_mentioned − mentioned`.
pub fn eval_mentions(
    records: &[StudyRecord],
    notes: &[NoteRecord],
    phrases: &PhraseList,
    labels: &[String],
    allow_empty_context: bool,
    config: &BootstrapConfig,
) -> Result<StratumReport> {
    let index = note_index(notes);
    run_labels("mentions", labels, config, |label, stream| {
        let prior = labelled(records, label).map(|r| {
            let texts: Vec<&str> = prior_notes(r, &index).iter().map(|n| n.text.as_str()).collect();
            (r.study_id.as_str(), texts)
        });
        let strata = mention_strata(prior, phrases, label, allow_empty_context)?;
        let groups: Vec<Subgroup> = [MentionStratum::NotMentioned, MentionStratum::Mentioned]
            .iter()
            .map(|&m| {
                let members = labelled(records, label).filter(|r| strata.assignment.get(&r.study_id) == Some(&m));
                subgroup(m.name(), members, label)
            })
            .collect();
        bootstrap_subgroups(label, &groups, &[(0, 1)], config, stream)
    })
}

/// Full set against the re-matched set; difference is `full − matched`.
pub fn eval_matched(
    records: &[StudyRecord],
    labels: &[String],
    opts: MatchOptions,
    config: &BootstrapConfig,
) -> Result<StratumReport> {
    run_labels("matched", labels, config, |label, stream| {
        let rows: Vec<&StudyRecord> = labelled(records, label).collect();
        let pretest = rows
            .iter()
            .map(|r| {
                r.pretest_for(label).ok_or_else(|| Error::MissingPretest {
                    label: label.to_string(),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let ids: Vec<&str> = rows.iter().map(|r| r.study_id.as_str()).collect();
        let y: Vec<bool> = rows.iter().map(|r| r.y[label]).collect();
        let s: Vec<f64> = rows.iter().map(|r| r.score[label]).collect();
        let input = MatchInput {
            ids: &ids,
            y: &y,
            scores: &s,
            pretest: &pretest,
        };
        bootstrap_matched(label, input, opts, config, stream)
    })
}

/// How many studies received a model pre-test probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PretestFill {
    pub scored: usize,
    pub no_context: usize,
}

/// Replaces each record's pre-test probability for the artifact's label
/// with the text model's prediction from its prior notes.
pub fn fill_pretest(
    records: &mut [StudyRecord],
    notes: &[NoteRecord],
    artifact: &TextRiskArtifact,
    policy: NoContextPolicy,
) -> Result<PretestFill> {
    let index = note_index(notes);
    let mut fill = PretestFill {
        scored: 0,
        no_context: 0,
    };
    for r in records.iter_mut() {
        if !r.y.contains_key(&artifact.label) {
            continue;
        }
        let prior = prior_notes(r, &index);
        if prior.is_empty() {
            fill.no_context += 1;
        }
        let p = predict_pretest(artifact, &r.study_id, &prior, policy)?;
        r.pretest
            .get_or_insert_with(Default::default)
            .insert(artifact.label.clone(), p);
        fill.scored += 1;
    }
    Ok(fill)
}
