//! Stratified bootstrap for AUROC comparisons.
//!
//! Every resample draws positives from positives and negatives from
//! negatives, so class counts are those of the original set. Iteration `i`
//! of stream `k` uses its own ChaCha stream, which makes the report
//! independent of thread count and scheduling.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matchset::{assign, match_pairs, MatchOptions};
use crate::metrics::RankedScores;

pub const DEFAULT_ITERATIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub iterations: usize,
    pub seed: u64,
    /// Lower and upper percentiles of the interval.
    pub ci: (f64, f64),
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            iterations: DEFAULT_ITERATIONS,
            seed: 0,
            ci: (2.5, 97.5),
        }
    }
}

impl BootstrapConfig {
    /// Central interval of the given coverage, e.g. 95 → (2.5, 97.5).
    pub fn with_level(iterations: usize, seed: u64, level: f64) -> Result<Self> {
        let tail = (100.0 - level) / 2.0;
        let c = BootstrapConfig {
            iterations,
            seed,
            ci: (tail, 100.0 - tail),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        let (lo, hi) = self.ci;
        if !(lo > 0.0 && lo < hi && hi < 100.0) {
            return Err(Error::Config(format!(
                "percentiles ({lo}, {hi}) must satisfy 0 < low < high < 100"
            )));
        }
        Ok(())
    }
}

/// Random source for one iteration of one stream.
pub fn iteration_rng(seed: u64, stream: u32, iteration: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 32) | iteration as u64);
    rng
}

/// Indices of each class.
#[derive(Debug, Clone)]
pub struct ClassSplit {
    pub pos: Vec<usize>,
    pub neg: Vec<usize>,
    len: usize,
}

impl ClassSplit {
    pub fn new(y: &[bool]) -> Self {
        let (pos, neg): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| y[i]);
        ClassSplit { pos, neg, len: y.len() }
    }

    fn check(&self) -> Result<()> {
        if self.pos.is_empty() || self.neg.is_empty() {
            return Err(Error::DegenerateTarget(format!(
                "{} positives and {} negatives; stratified resampling needs both",
                self.pos.len(),
                self.neg.len()
            )));
        }
        Ok(())
    }

    /// Multiplicity of each original index in one stratified resample.
    pub fn draw_counts<R: Rng>(&self, rng: &mut R) -> Vec<u32> {
        let mut counts = vec![0u32; self.len];
        for class in [&self.pos, &self.neg] {
            for _ in 0..class.len() {
                counts[class[rng.random_range(0..class.len())]] += 1;
            }
        }
        counts
    }
}

/// Sorted index multiset of one stratified resample.
pub fn stratified_resample(y: &[bool], seed: u64, iteration: usize) -> Result<Vec<usize>> {
    let split = ClassSplit::new(y);
    split.check()?;
    let counts = split.draw_counts(&mut iteration_rng(seed, 0, iteration));
    Ok(counts
        .iter()
        .enumerate()
        .flat_map(|(i, &c)| std::iter::repeat_n(i, c as usize))
        .collect())
}

/// Nearest-rank percentile of ascending-sorted values.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let rank = (q / 100.0 * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub used: usize,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.ci_low <= v && v <= self.ci_high
    }
}

/// Mean and percentile interval over the defined iteration values.
pub fn summarize(samples: &[Option<f64>], ci: (f64, f64)) -> Option<Interval> {
    let mut v: Vec<f64> = samples.iter().flatten().copied().collect();
    if v.is_empty() {
        return None;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.sort_by(f64::total_cmp);
    Some(Interval {
        mean,
        ci_low: percentile(&v, ci.0),
        ci_high: percentile(&v, ci.1),
        used: v.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub group: String,
    pub n: usize,
    pub n_pos: usize,
    pub n_neg: usize,
    pub point: Option<f64>,
    pub mean: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffStats {
    /// Difference is `minuend − subtrahend`.
    pub minuend: String,
    pub subtrahend: String,
    pub point: Option<f64>,
    pub mean: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    /// The interval excludes 0.
    pub significant: bool,
    pub skipped: usize,
}

impl DiffStats {
    pub fn interval(&self) -> Option<Interval> {
        Some(Interval {
            mean: self.mean?,
            ci_low: self.ci_low?,
            ci_high: self.ci_high?,
            used: 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchStats {
    pub pairs: usize,
    pub unmatched: usize,
    pub dropped: usize,
    pub mean_gap: f64,
    pub max_gap: f64,
    pub bootstrap_mean_pairs: f64,
    pub bootstrap_mean_dropped: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    pub label: String,
    pub groups: Vec<GroupStats>,
    pub differences: Vec<DiffStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matching: Option<MatchStats>,
}

impl LabelReport {
    pub fn group(&self, name: &str) -> Option<&GroupStats> {
        self.groups.iter().find(|g| g.group == name)
    }

    pub fn difference(&self, minuend: &str, subtrahend: &str) -> Option<&DiffStats> {
        self.differences
            .iter()
            .find(|d| d.minuend == minuend && d.subtrahend == subtrahend)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelError {
    pub label: String,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumReport {
    pub analysis: String,
    pub iterations: usize,
    pub seed: u64,
    pub ci: (f64, f64),
    pub labels: Vec<LabelReport>,
    /// Per-iteration mean over labels; present with two or more labels.
    /// Its counts are totals over labels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub macro_average: Option<LabelReport>,
    #[serde(default)]
    pub errors: Vec<LabelError>,
}

impl StratumReport {
    pub fn label(&self, name: &str) -> Option<&LabelReport> {
        self.labels.iter().find(|l| l.label == name)
    }
}

/// A label's report together with its per-iteration values, kept so that
/// several labels can be averaged iteration by iteration.
#[derive(Debug, Clone)]
pub struct LabelTrace {
    pub report: LabelReport,
    group_samples: Vec<Vec<Option<f64>>>,
    diff_samples: Vec<Vec<Option<f64>>>,
}

/// One subgroup of studies for a single label.
#[derive(Debug, Clone, PartialEq)]
pub struct Subgroup {
    pub name: String,
    pub y: Vec<bool>,
    pub scores: Vec<f64>,
}

impl Subgroup {
    pub fn new(name: &str, y: Vec<bool>, scores: Vec<f64>) -> Self {
        Subgroup {
            name: name.to_string(),
            y,
            scores,
        }
    }

    fn checked_split(&self, label: &str) -> Result<ClassSplit> {
        if self.y.len() != self.scores.len() {
            return Err(Error::Shape(format!(
                "subgroup `{}`: {} labels but {} scores",
                self.name,
                self.y.len(),
                self.scores.len()
            )));
        }
        let split = ClassSplit::new(&self.y);
        let reason = match (split.pos.len(), split.neg.len()) {
            (0, 0) => Some("no studies"),
            (0, _) => Some("no positives"),
            (_, 0) => Some("no negatives"),
            _ => None,
        };
        if let Some(reason) = reason {
            return Err(Error::DegenerateSubgroup {
                label: label.to_string(),
                group: self.name.clone(),
                reason: reason.to_string(),
            });
        }
        Ok(split)
    }
}

fn transpose(rows: Vec<Vec<Option<f64>>>, width: usize) -> Vec<Vec<Option<f64>>> {
    let mut cols = vec![Vec::with_capacity(rows.len()); width];
    for row in rows {
        for (c, v) in cols.iter_mut().zip(row) {
            c.push(v);
        }
    }
    cols
}

fn group_stats(name: &str, n: (usize, usize), point: Option<f64>, samples: &[Option<f64>], ci: (f64, f64)) -> GroupStats {
    let s = summarize(samples, ci);
    GroupStats {
        group: name.to_string(),
        n: n.0 + n.1,
        n_pos: n.0,
        n_neg: n.1,
        point,
        mean: s.map(|i| i.mean),
        ci_low: s.map(|i| i.ci_low),
        ci_high: s.map(|i| i.ci_high),
        skipped: samples.len() - s.map_or(0, |i| i.used),
    }
}

fn diff_stats(minuend: &str, subtrahend: &str, point: Option<f64>, samples: &[Option<f64>], ci: (f64, f64)) -> DiffStats {
    let s = summarize(samples, ci);
    DiffStats {
        minuend: minuend.to_string(),
        subtrahend: subtrahend.to_string(),
        point,
        mean: s.map(|i| i.mean),
        ci_low: s.map(|i| i.ci_low),
        ci_high: s.map(|i| i.ci_high),
        significant: s.is_some_and(|i| !i.contains(0.0)),
        skipped: samples.len() - s.map_or(0, |i| i.used),
    }
}

fn differences(groups: &[Vec<Option<f64>>], contrasts: &[(usize, usize)]) -> Vec<Vec<Option<f64>>> {
    contrasts
        .iter()
        .map(|&(a, b)| {
            groups[a]
                .iter()
                .zip(&groups[b])
                .map(|(x, y)| Some((*x)? - (*y)?))
                .collect()
        })
        .collect()
}

fn require_ci(label: &str, diffs: &[DiffStats]) -> Result<()> {
    if diffs.iter().any(|d| d.mean.is_none()) {
        return Err(Error::UndefinedCi {
            label: label.to_string(),
        });
    }
    Ok(())
}

/// Resamples each subgroup independently (stratified on the label) and
/// compares AUROCs for each `(minuend, subtrahend)` contrast.
pub fn bootstrap_subgroups(
    label: &str,
    groups: &[Subgroup],
    contrasts: &[(usize, usize)],
    config: &BootstrapConfig,
    stream: u32,
) -> Result<LabelTrace> {
    config.validate()?;
    if contrasts.iter().any(|&(a, b)| a >= groups.len() || b >= groups.len()) {
        return Err(Error::Config("contrast refers to a missing subgroup".into()));
    }
    let splits = groups
        .iter()
        .map(|g| g.checked_split(label))
        .collect::<Result<Vec<_>>>()?;
    let ranked = groups
        .iter()
        .map(|g| RankedScores::new(&g.y, &g.scores))
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<Option<f64>> = ranked
        .iter()
        .map(|r| r.auroc_weighted(&vec![1; r.len()]).value)
        .collect();

    let rows: Vec<Vec<Option<f64>>> = (0..config.iterations)
        .into_par_iter()
        .map(|i| {
            let mut rng = iteration_rng(config.seed, stream, i);
            splits
                .iter()
                .zip(&ranked)
                .map(|(split, r)| r.auroc_weighted(&split.draw_counts(&mut rng)).value)
                .collect()
        })
        .collect();
    let group_samples = transpose(rows, groups.len());
    let diff_samples = differences(&group_samples, contrasts);

    let report = LabelReport {
        label: label.to_string(),
        groups: groups
            .iter()
            .zip(&splits)
            .zip(&points)
            .zip(&group_samples)
            .map(|(((g, sp), &p), s)| group_stats(&g.name, (sp.pos.len(), sp.neg.len()), p, s, config.ci))
            .collect(),
        differences: contrasts
            .iter()
            .zip(&diff_samples)
            .map(|(&(a, b), s)| {
                let point = points[a].zip(points[b]).map(|(x, y)| x - y);
                diff_stats(&groups[a].name, &groups[b].name, point, s, config.ci)
            })
            .collect(),
        matching: None,
    };
    require_ci(label, &report.differences)?;
    Ok(LabelTrace {
        report,
        group_samples,
        diff_samples,
    })
}

/// Two-subgroup comparison, `a − b`.
pub fn bootstrap_subgroup_diff(label: &str, a: &Subgroup, b: &Subgroup, config: &BootstrapConfig) -> Result<LabelReport> {
    Ok(bootstrap_subgroups(label, &[a.clone(), b.clone()], &[(0, 1)], config, 0)?.report)
}

/// Studies of one label for the matched analysis.
#[derive(Debug, Clone, Copy)]
pub struct MatchInput<'a> {
    pub ids: &'a [&'a str],
    pub y: &'a [bool],
    pub scores: &'a [f64],
    pub pretest: &'a [f64],
}

pub const FULL: &str = "full";
pub const MATCHED: &str = "matched";

/// Full-set versus matched-set AUROC, re-matching inside every resample.
/// The difference is `full − matched`.
pub fn bootstrap_matched(
    label: &str,
    input: MatchInput<'_>,
    opts: MatchOptions,
    config: &BootstrapConfig,
    stream: u32,
) -> Result<LabelTrace> {
    config.validate()?;
    let n = input.y.len();
    if input.ids.len() != n || input.scores.len() != n || input.pretest.len() != n {
        return Err(Error::Shape("matched input columns differ in length".into()));
    }
    let split = ClassSplit::new(input.y);
    if split.pos.is_empty() || split.neg.is_empty() {
        return Err(Error::EmptyClass(format!(
            "label `{label}` has {} positives and {} negatives",
            split.pos.len(),
            split.neg.len()
        )));
    }
    let ranked = RankedScores::new(input.y, input.scores)?;
    let by_key = |a: &usize, b: &usize| {
        input.pretest[*a]
            .total_cmp(&input.pretest[*b])
            .then_with(|| input.ids[*a].cmp(input.ids[*b]))
    };
    let mut pos_order = split.pos.clone();
    pos_order.sort_by(by_key);
    let mut neg_order = split.neg.clone();
    neg_order.sort_by(by_key);

    let side = |class: &[usize]| -> Vec<(&str, f64)> {
        class.iter().map(|&i| (input.ids[i], input.pretest[i])).collect()
    };
    let original = match_pairs(&side(&split.pos), &side(&split.neg), opts)?;
    let index_of: std::collections::HashMap<&str, usize> =
        input.ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let mut matched_counts = vec![0u32; n];
    for p in &original.pairs {
        matched_counts[index_of[p.pos_study_id.as_str()]] += 1;
        matched_counts[index_of[p.neg_study_id.as_str()]] += 1;
    }
    let full_point = ranked.auroc_weighted(&vec![1; n]).value;
    let matched_point = ranked.auroc_weighted(&matched_counts).value;

    struct Iter {
        full: Option<f64>,
        matched: Option<f64>,
        pairs: usize,
        dropped: usize,
    }
    let iters: Vec<Iter> = (0..config.iterations)
        .into_par_iter()
        .map(|i| -> Result<Iter> {
            let mut rng = iteration_rng(config.seed, stream, i);
            let counts = split.draw_counts(&mut rng);
            let full = ranked.auroc_weighted(&counts).value;
            let expand = |order: &[usize]| -> Vec<usize> {
                order
                    .iter()
                    .flat_map(|&k| std::iter::repeat_n(k, counts[k] as usize))
                    .collect()
            };
            let pos = expand(&pos_order);
            let neg = expand(&neg_order);
            let (small, large) = if pos.len() <= neg.len() { (&pos, &neg) } else { (&neg, &pos) };
            let sv: Vec<f64> = small.iter().map(|&k| input.pretest[k]).collect();
            let lv: Vec<f64> = large.iter().map(|&k| input.pretest[k]).collect();
            let mut mc = vec![0u32; n];
            let (mut pairs, mut dropped) = (0, 0);
            for (a, b) in assign(&sv, &lv, opts.solver)? {
                if opts.max_gap.is_some_and(|g| (sv[a] - lv[b]).abs() > g) {
                    dropped += 1;
                    continue;
                }
                mc[small[a]] += 1;
                mc[large[b]] += 1;
                pairs += 1;
            }
            let matched = if pairs == 0 { None } else { ranked.auroc_weighted(&mc).value };
            Ok(Iter {
                full,
                matched,
                pairs,
                dropped,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let full_samples: Vec<Option<f64>> = iters.iter().map(|t| t.full).collect();
    let matched_samples: Vec<Option<f64>> = iters.iter().map(|t| t.matched).collect();
    let group_samples = vec![full_samples, matched_samples];
    let diff_samples = differences(&group_samples, &[(0, 1)]);
    let n_matched_pairs = original.pairs.len();
    let report = LabelReport {
        label: label.to_string(),
        groups: vec![
            group_stats(FULL, (split.pos.len(), split.neg.len()), full_point, &group_samples[0], config.ci),
            group_stats(MATCHED, (n_matched_pairs, n_matched_pairs), matched_point, &group_samples[1], config.ci),
        ],
        differences: vec![diff_stats(
            FULL,
            MATCHED,
            full_point.zip(matched_point).map(|(a, b)| a - b),
            &diff_samples[0],
            config.ci,
        )],
        matching: Some(MatchStats {
            pairs: n_matched_pairs,
            unmatched: original.unmatched,
            dropped: original.dropped,
            mean_gap: if n_matched_pairs == 0 {
                0.0
            } else {
                original.total_cost / n_matched_pairs as f64
            },
            max_gap: original.max_gap(),
            bootstrap_mean_pairs: iters.iter().map(|t| t.pairs as f64).sum::<f64>() / iters.len() as f64,
            bootstrap_mean_dropped: iters.iter().map(|t| t.dropped as f64).sum::<f64>() / iters.len() as f64,
        }),
    };
    require_ci(label, &report.differences)?;
    Ok(LabelTrace {
        report,
        group_samples,
        diff_samples,
    })
}

/// Single-label matched comparison.
pub fn bootstrap_matched_diff(label: &str, input: MatchInput<'_>, opts: MatchOptions, config: &BootstrapConfig) -> Result<LabelReport> {
    Ok(bootstrap_matched(label, input, opts, config, 0)?.report)
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, count) = values.flatten().fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Iteration-wise mean across labels that share group and contrast layout.
fn macro_row(traces: &[&LabelTrace], ci: (f64, f64)) -> LabelReport {
    let first = &traces[0].report;
    let iterations = traces[0].group_samples.first().map_or(0, Vec::len);
    let average = |pick: &dyn Fn(&LabelTrace) -> &Vec<Option<f64>>| -> Vec<Option<f64>> {
        (0..iterations)
            .map(|i| mean_defined(traces.iter().map(|t| pick(t)[i])))
            .collect()
    };
    let groups = first
        .groups
        .iter()
        .enumerate()
        .map(|(g, stats)| {
            let samples = average(&|t: &LabelTrace| &t.group_samples[g]);
            let point = mean_defined(traces.iter().map(|t| t.report.groups[g].point));
            let n_pos = traces.iter().map(|t| t.report.groups[g].n_pos).sum();
            let n_neg = traces.iter().map(|t| t.report.groups[g].n_neg).sum();
            group_stats(&stats.group, (n_pos, n_neg), point, &samples, ci)
        })
        .collect();
    let differences = first
        .differences
        .iter()
        .enumerate()
        .map(|(d, stats)| {
            let samples = average(&|t: &LabelTrace| &t.diff_samples[d]);
            let point = mean_defined(traces.iter().map(|t| t.report.differences[d].point));
            diff_stats(&stats.minuend, &stats.subtrahend, point, &samples, ci)
        })
        .collect();
    LabelReport {
        label: "macro".to_string(),
        groups,
        differences,
        matching: None,
    }
}

/// Collects per-label results into one report. Failed labels are listed in
/// `errors`; if every label failed the first error is returned.
pub fn assemble_report(
    analysis: &str,
    config: &BootstrapConfig,
    results: Vec<(String, Result<LabelTrace>)>,
) -> Result<StratumReport> {
    let mut traces = Vec::new();
    let mut errors = Vec::new();
    let mut first_err = None;
    for (label, r) in results {
        match r {
            Ok(t) => traces.push(t),
            Err(e) => {
                errors.push(LabelError {
                    label,
                    kind: e.kind().to_string(),
                    message: e.to_string(),
                });
                first_err.get_or_insert(e);
            }
        }
    }
    if traces.is_empty() {
        return Err(first_err.unwrap_or_else(|| Error::Config("no labels selected".into())));
    }
    let macro_average = if traces.len() > 1 {
        let refs: Vec<&LabelTrace> = traces.iter().collect();
        Some(macro_row(&refs, config.ci))
    } else {
        None
    };
    Ok(StratumReport {
        analysis: analysis.to_string(),
        iterations: config.iterations,
        seed: config.seed,
        ci: config.ci,
        labels: traces.into_iter().map(|t| t.report).collect(),
        macro_average,
        errors,
    })
}

/// One row of the plot-ready table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub analysis: String,
    pub label: String,
    /// `auroc` or `difference`.
    pub kind: String,
    /// Subgroup name, or `a-b` for a difference.
    pub group: String,
    pub point: Option<f64>,
    pub mean: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub n: Option<usize>,
    pub n_pos: Option<usize>,
    pub n_neg: Option<usize>,
    pub skipped: usize,
    pub significant: Option<bool>,
}

pub fn long_form(report: &StratumReport) -> Vec<PlotRow> {
    let mut rows = Vec::new();
    for l in report.labels.iter().chain(&report.macro_average) {
        for g in &l.groups {
            rows.push(PlotRow {
                analysis: report.analysis.clone(),
                label: l.label.clone(),
                kind: "auroc".into(),
                group: g.group.clone(),
                point: g.point,
                mean: g.mean,
                ci_low: g.ci_low,
                ci_high: g.ci_high,
                n: Some(g.n),
                n_pos: Some(g.n_pos),
                n_neg: Some(g.n_neg),
                skipped: g.skipped,
                significant: None,
            });
        }
        for d in &l.differences {
            rows.push(PlotRow {
                analysis: report.analysis.clone(),
                label: l.label.clone(),
                kind: "difference".into(),
                group: format!("{}-{}", d.minuend, d.subtrahend),
                point: d.point,
                mean: d.mean,
                ci_low: d.ci_low,
                ci_high: d.ci_high,
                n: None,
                n_pos: None,
                n_neg: None,
                skipped: d.skipped,
                significant: Some(d.significant),
            });
        }
    }
    rows
}

pub fn write_long_form<W: Write>(writer: W, rows: &[PlotRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(std::path::Path::new("<long-form>"), e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn cfg(iterations: usize, seed: u64) -> BootstrapConfig {
        BootstrapConfig {
            iterations,
            seed,
            ci: (2.5, 97.5),
        }
    }

    #[test]
    fn resample_keeps_class_counts() {
        let y: Vec<bool> = (0..100).map(|i| i < 10).collect();
        for i in 0..200 {
            let idx = stratified_resample(&y, 7, i).unwrap();
            assert_eq!(idx.len(), 100);
            assert_eq!(idx.iter().filter(|&&k| y[k]).count(), 10);
        }
        assert_eq!(stratified_resample(&y, 7, 3).unwrap(), stratified_resample(&y, 7, 3).unwrap());
        assert_ne!(stratified_resample(&y, 7, 3).unwrap(), stratified_resample(&y, 7, 4).unwrap());
    }

    #[test]
    fn singletons_resample_to_themselves() {
        assert_eq!(stratified_resample(&[true, false], 1, 0).unwrap(), vec![0, 1]);
    }

    #[test]
    fn single_class_rejected() {
        assert!(matches!(
            stratified_resample(&[true, true], 1, 0),
            Err(Error::DegenerateTarget(_))
        ));
    }

    #[test]
    fn nearest_rank_percentiles() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(percentile(&v, 2.5), 1.0);
        assert_eq!(percentile(&v, 50.0), 5.0);
        assert_eq!(percentile(&v, 97.5), 10.0);
        assert_eq!(percentile(&[3.0], 2.5), 3.0);
        let v: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(percentile(&v, 2.5), 25.0);
        assert_eq!(percentile(&v, 97.5), 975.0);
    }

    #[test]
    fn config_validation() {
        assert!(cfg(0, 1).validate().is_err());
        assert!(BootstrapConfig { ci: (97.5, 2.5), ..cfg(10, 1) }.validate().is_err());
        assert_eq!(BootstrapConfig::with_level(10, 1, 90.0).unwrap().ci, (5.0, 95.0));
    }

    fn noisy(n: usize, signal: f64, seed: u64) -> Subgroup {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let y: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
        let s = y
            .iter()
            .map(|&t| signal * f64::from(u8::from(t)) + noise.sample(&mut rng))
            .collect();
        Subgroup::new("g", y, s)
    }

    #[test]
    fn one_iteration_collapses_interval() {
        let r = bootstrap_subgroup_diff("L", &noisy(40, 1.0, 1), &noisy(40, 0.0, 2), &cfg(1, 5)).unwrap();
        let d = &r.differences[0];
        assert_eq!(d.ci_low, d.ci_high);
        assert_eq!(d.ci_low, d.mean);
    }

    #[test]
    fn null_difference_centered() {
        let a = noisy(500, 1.0, 11);
        let b = noisy(500, 1.0, 12);
        let r = bootstrap_subgroup_diff("L", &a, &b, &cfg(2000, 3)).unwrap();
        let d = r.differences[0].interval().unwrap();
        assert!(d.contains(0.0));
        assert!(d.mean.abs() < 0.05);
    }

    #[test]
    fn informative_versus_noise_is_significant() {
        let r = bootstrap_subgroup_diff("L", &noisy(300, 2.0, 1), &noisy(300, 0.0, 2), &cfg(1000, 3)).unwrap();
        assert!(r.differences[0].significant);
        assert!(r.differences[0].mean.unwrap() > 0.0);
    }

    #[test]
    fn degenerate_subgroup_named() {
        let bad = Subgroup::new("top25", vec![true, true], vec![0.1, 0.2]);
        match bootstrap_subgroup_diff("Edema", &noisy(10, 1.0, 1), &bad, &cfg(10, 1)) {
            Err(Error::DegenerateSubgroup { group, .. }) => assert_eq!(group, "top25"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constant_scores_matched() {
        let ids = ["a", "b", "c", "d"];
        let y = [true, false, true, false];
        let s = [0.3; 4];
        let p = [0.1, 0.2, 0.3, 0.4];
        let input = MatchInput {
            ids: &ids,
            y: &y,
            scores: &s,
            pretest: &p,
        };
        let r = bootstrap_matched_diff("L", input, MatchOptions::default(), &cfg(50, 1)).unwrap();
        assert_eq!(r.groups[0].mean, Some(0.5));
        assert_eq!(r.groups[1].mean, Some(0.5));
        assert_eq!(r.differences[0].mean, Some(0.0));
    }

    #[test]
    fn single_positive_gives_one_pair() {
        let ids = ["a", "b", "c"];
        let y = [true, false, false];
        let input = MatchInput {
            ids: &ids,
            y: &y,
            scores: &[0.9, 0.1, 0.5],
            pretest: &[0.5, 0.1, 0.45],
        };
        let r = bootstrap_matched_diff("L", input, MatchOptions::default(), &cfg(20, 1)).unwrap();
        let m = r.matching.unwrap();
        assert_eq!(m.pairs, 1);
        assert_eq!(m.unmatched, 1);
        assert_eq!(r.groups[1].n, 2);
    }

    #[test]
    fn caliper_attrition_can_leave_nothing() {
        let ids = ["a", "b"];
        let input = MatchInput {
            ids: &ids,
            y: &[true, false],
            scores: &[0.9, 0.1],
            pretest: &[0.9, 0.1],
        };
        let opts = MatchOptions {
            max_gap: Some(0.1),
            ..Default::default()
        };
        assert!(matches!(
            bootstrap_matched_diff("L", input, opts, &cfg(5, 1)),
            Err(Error::UndefinedCi { .. })
        ));
    }

    #[test]
    fn identical_across_thread_counts() {
        let a = noisy(200, 1.0, 1);
        let b = noisy(150, 0.5, 2);
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let t = bootstrap_subgroups("L", &[a.clone(), b.clone()], &[(0, 1)], &cfg(500, 9), 0).unwrap();
                serde_json::to_string(&assemble_report("strata", &cfg(500, 9), vec![("L".into(), Ok(t))]).unwrap()).unwrap()
            })
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn macro_row_averages_labels() {
        let t1 = bootstrap_subgroups("A", &[noisy(60, 1.0, 1), noisy(60, 0.0, 2)], &[(0, 1)], &cfg(100, 1), 0).unwrap();
        let t2 = bootstrap_subgroups("B", &[noisy(60, 2.0, 3), noisy(60, 0.5, 4)], &[(0, 1)], &cfg(100, 1), 1).unwrap();
        let expect = (t1.report.groups[0].point.unwrap() + t2.report.groups[0].point.unwrap()) / 2.0;
        let r = assemble_report("x", &cfg(100, 1), vec![("A".into(), Ok(t1)), ("B".into(), Ok(t2))]).unwrap();
        let m = r.macro_average.unwrap();
        assert!((m.groups[0].point.unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn failed_labels_are_listed() {
        let t1 = bootstrap_subgroups("A", &[noisy(20, 1.0, 1), noisy(20, 0.0, 2)], &[(0, 1)], &cfg(10, 1), 0);
        let bad = Subgroup::new("g", vec![true], vec![0.1]);
        let t2 = bootstrap_subgroups("B", &[bad.clone(), bad], &[(0, 1)], &cfg(10, 1), 1);
        let r = assemble_report("x", &cfg(10, 1), vec![("A".into(), t1), ("B".into(), t2)]).unwrap();
        assert_eq!(r.labels.len(), 1);
        assert_eq!(r.errors[0].kind, "degenerate_subgroup");
    }

    #[test]
    fn long_form_has_group_and_difference_rows() {
        let t = bootstrap_subgroups("A", &[noisy(20, 1.0, 1), noisy(20, 0.0, 2)], &[(0, 1)], &cfg(10, 1), 0).unwrap();
        let r = assemble_report("x", &cfg(10, 1), vec![("A".into(), Ok(t))]).unwrap();
        let rows = long_form(&r);
        assert_eq!(rows.len(), 3);
        let mut buf = Vec::new();
        write_long_form(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("analysis,label,kind,group,point,mean,ci_low,ci_high,n,n_pos,n_neg,skipped,significant\n"));
    }
}
