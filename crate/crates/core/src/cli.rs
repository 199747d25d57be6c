//! `ctx-strata` command line.
//!
//! Exit codes: 0 success, 1 internal failure, 2 user or data error. Errors
//! are written to stderr as one JSON object per line.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::{calibrate_cv, CalibrationPoint};
use crate::dataset::{
    apply_label_policy, ingest_notes, ingest_predictions, label_universe, link_notes, read_notes, ColumnMap,
    NoteRecord, RawLabel, StudyRecord,
};
use crate::error::{Error, Result};
use crate::evaluate::{eval_matched, eval_mentions, eval_strata, fill_pretest, PretestFill};
use crate::matchset::{match_pairs, split_by_class, MatchOptions, Solver};
use crate::resample::{long_form, write_long_form, BootstrapConfig, StratumReport};
use crate::stratify::{mention_strata, pretest_column, quantile_strata, PhraseList};
use crate::synthlab::{generate, SynthConfig};
use crate::textrisk::{
    prior_notes, train_text_model, NoContextPolicy, TextRiskArtifact, TextTrainConfig, VocabularyParams,
    DEFAULT_GRID, DEFAULT_MAX_DF, DEFAULT_MAX_FEATURES, DEFAULT_MIN_DF,
};

#[derive(Debug, Parser, Serialize)]
#[command(name = "ctx-strata", version, about = "Context-stratified evaluation of probabilistic classifiers")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GlobalArgs {
    /// Random seed; `synth` uses the config's seed unless this is given.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value_t = crate::resample::DEFAULT_ITERATIONS)]
    pub iterations: usize,
    /// Confidence level in percent.
    #[arg(long, global = true, default_value_t = 95.0)]
    pub ci: f64,
    /// Comma-separated label names; default is every label in the data.
    #[arg(long, global = true, value_delimiter = ',')]
    pub labels: Vec<String>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Record the wall-clock start time in the manifest. Reruns then differ.
    #[arg(long, global = true)]
    pub timestamp: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoContextArg {
    Error,
    PriorPrevalence,
}

impl From<NoContextArg> for NoContextPolicy {
    fn from(a: NoContextArg) -> Self {
        match a {
            NoContextArg::Error => NoContextPolicy::Error,
            NoContextArg::PriorPrevalence => NoContextPolicy::PriorPrevalence,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InputArgs {
    /// Directory written by `ingest`.
    #[arg(long, conflicts_with_all = ["predictions", "notes"])]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub notes: Option<PathBuf>,
    /// Predictions column holding the pre-test probability.
    #[arg(long, default_value = "pretest")]
    pub pretest_col: String,
    #[arg(long, default_value = "study_id")]
    pub study_col: String,
    #[arg(long, default_value = "subject_id")]
    pub subject_col: String,
    #[arg(long, default_value = "label")]
    pub label_col: String,
    #[arg(long, default_value = "y_raw")]
    pub y_col: String,
    #[arg(long, default_value = "score")]
    pub score_col: String,
    #[arg(long, default_value = "study_time")]
    pub study_time_col: String,
    /// Text model artifact; replaces the pre-test probability of its label.
    #[arg(long)]
    pub text_model: Vec<PathBuf>,
    /// Handling of studies without prior notes when applying a text model.
    #[arg(long, value_enum, default_value = "error")]
    pub no_context: NoContextArg,
}

impl InputArgs {
    fn columns(&self) -> ColumnMap {
        ColumnMap {
            study_id: self.study_col.clone(),
            subject_id: self.subject_col.clone(),
            label: self.label_col.clone(),
            y_raw: self.y_col.clone(),
            score: self.score_col.clone(),
            pretest: self.pretest_col.clone(),
            study_time: self.study_time_col.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrataMode {
    Quantile,
    Mention,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverArg {
    Dp,
    Hungarian,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MatchArgs {
    /// Drop matched pairs whose pre-test gap exceeds this.
    #[arg(long)]
    pub max_gap: Option<f64>,
    #[arg(long, value_enum, default_value = "dp")]
    pub solver: SolverArg,
}

impl MatchArgs {
    fn options(&self) -> Result<MatchOptions> {
        if let Some(g) = self.max_gap {
            if !(g >= 0.0) {
                return Err(Error::Config(format!("--max-gap {g} must be non-negative")));
            }
        }
        Ok(MatchOptions {
            solver: match self.solver {
                SolverArg::Dp => Solver::SortedDp,
                SolverArg::Hungarian => Solver::Hungarian,
            },
            max_gap: self.max_gap,
        })
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MentionArgs {
    /// JSON mapping label to phrases; default is the built-in adapted list.
    #[arg(long)]
    pub phrases: Option<PathBuf>,
    /// Put studies without prior notes in `not_mentioned` instead of dropping them.
    #[arg(long)]
    pub allow_empty_context: bool,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Validate predictions and notes, link prior notes, write a store directory.
    Ingest(InputArgs),
    /// Generate a synthetic dataset from a JSON config.
    Synth {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fit a bag-of-words pre-test model for one label.
    TrainText {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        label: Option<String>,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        /// Comma-separated L2 strengths searched by grouped cross-validation.
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_GRID.to_vec())]
        grid: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_MAX_FEATURES)]
        max_features: usize,
        #[arg(long, default_value_t = DEFAULT_MIN_DF)]
        min_df: usize,
        #[arg(long, default_value_t = DEFAULT_MAX_DF)]
        max_df: f64,
        #[arg(long)]
        no_calibrate: bool,
    },
    /// Cross-validated isotonic calibration map from a score table.
    Calibrate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value = "score")]
        score_col: String,
        #[arg(long, default_value = "y")]
        target_col: String,
        #[arg(long, default_value = "subject_id")]
        group_col: String,
        #[arg(long, default_value_t = 5)]
        folds: usize,
    },
    /// Write a study-to-stratum table.
    Stratify {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_enum)]
        mode: StrataMode,
        #[command(flatten)]
        mention: MentionArgs,
    },
    /// Write optimal positive-negative pairs for one label.
    Match {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        label: Option<String>,
        #[command(flatten)]
        matching: MatchArgs,
    },
    /// AUROC by pre-test quartile stratum.
    EvalStrata {
        #[command(flatten)]
        input: InputArgs,
    },
    /// AUROC with and without prior mentions.
    EvalMentions {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        mention: MentionArgs,
    },
    /// AUROC on the full set and on re-matched sets.
    EvalMatched {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        matching: MatchArgs,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Ingest(_) => "ingest",
            Command::Synth { .. } => "synth",
            Command::TrainText { .. } => "train-text",
            Command::Calibrate { .. } => "calibrate",
            Command::Stratify { .. } => "stratify",
            Command::Match { .. } => "match",
            Command::EvalStrata { .. } => "eval-strata",
            Command::EvalMentions { .. } => "eval-mentions",
            Command::EvalMatched { .. } => "eval-matched",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timestamps {
    pub started: String,
}

/// Provenance embedded in every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub seed: u64,
    /// Only with `--timestamp`, so that default reruns are byte-identical.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamps: Option<Timestamps>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Serialize)]
struct ReportFile<'a> {
    manifest: &'a RunManifest,
    report: &'a StratumReport,
}

struct Ctx {
    manifest: RunManifest,
}

impl Ctx {
    fn read(&mut self, path: &Path) -> Result<()> {
        if self.manifest.inputs.iter().any(|d| d.path == path) {
            return Ok(());
        }
        let sha256 = sha256_file(path)?;
        self.manifest.inputs.push(InputDigest {
            path: path.to_path_buf(),
            sha256,
        });
        Ok(())
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn required_out(global: &GlobalArgs) -> Result<&Path> {
    global
        .out
        .as_deref()
        .ok_or_else(|| Error::Config("--out is required for this command".into()))
}

struct Loaded {
    records: Vec<StudyRecord>,
    notes: Vec<NoteRecord>,
    fills: Vec<(String, PretestFill)>,
}

const STORE_RECORDS: &str = "records.jsonl";
const STORE_NOTES: &str = "notes.jsonl";

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Value {
                line: i as u64 + 1,
                message: format!("{}: {e}", path.display()),
            })
        })
        .collect()
}

fn load(input: &InputArgs, ctx: &mut Ctx) -> Result<Loaded> {
    let (mut records, notes) = if let Some(dir) = &input.store {
        let rp = dir.join(STORE_RECORDS);
        let np = dir.join(STORE_NOTES);
        ctx.read(&rp)?;
        let records: Vec<StudyRecord> = read_jsonl(&rp)?;
        for r in &records {
            r.validate()?;
        }
        let notes = if np.exists() {
            ctx.read(&np)?;
            let file = std::fs::File::open(&np).map_err(|e| Error::io(&np, e))?;
            read_notes(std::io::BufReader::new(file))?
        } else {
            Vec::new()
        };
        (records, notes)
    } else {
        let pp = input
            .predictions
            .as_ref()
            .ok_or_else(|| Error::Config("pass --store or --predictions".into()))?;
        ctx.read(pp)?;
        let mut records = ingest_predictions(pp, &input.columns())?;
        let notes = match &input.notes {
            Some(np) => {
                ctx.read(np)?;
                ingest_notes(np)?
            }
            None => Vec::new(),
        };
        link_notes(&mut records, &notes);
        (records, notes)
    };
    let mut fills = Vec::new();
    for path in &input.text_model {
        ctx.read(path)?;
        let artifact = TextRiskArtifact::load(path)?;
        let fill = fill_pretest(&mut records, &notes, &artifact, input.no_context.into())?;
        fills.push((artifact.label.clone(), fill));
    }
    Ok(Loaded { records, notes, fills })
}

fn resolve_labels(global: &GlobalArgs, records: &[StudyRecord]) -> Result<Vec<String>> {
    let universe = label_universe(records);
    if global.labels.is_empty() {
        if universe.is_empty() {
            return Err(Error::InsufficientData("no labels in the input".into()));
        }
        return Ok(universe);
    }
    for l in &global.labels {
        if !universe.contains(l) {
            return Err(Error::Config(format!(
                "label `{l}` not in the data; available: {}",
                universe.join(", ")
            )));
        }
    }
    Ok(global.labels.clone())
}

fn single_label(explicit: &Option<String>, global: &GlobalArgs, records: &[StudyRecord]) -> Result<String> {
    if let Some(l) = explicit {
        let universe = label_universe(records);
        if !universe.contains(l) {
            return Err(Error::Config(format!(
                "label `{l}` not in the data; available: {}",
                universe.join(", ")
            )));
        }
        return Ok(l.clone());
    }
    let labels = resolve_labels(global, records)?;
    match labels.as_slice() {
        [one] => Ok(one.clone()),
        _ => Err(Error::Config(format!(
            "this command needs one label; pass --label (candidates: {})",
            labels.join(", ")
        ))),
    }
}

fn phrase_list(args: &MentionArgs, ctx: &mut Ctx) -> Result<PhraseList> {
    match &args.phrases {
        Some(p) => {
            ctx.read(p)?;
            PhraseList::load(p)
        }
        None => Ok(PhraseList::chexpert_adapted()),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

/// Fixed-width text table of a report.
pub fn render_table(report: &StratumReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<28} {:<26} {:>7} {:>7} {:>8} {:>8} {:>8} {:>8} {:>7}",
        "label", "group", "n", "n_pos", "point", "mean", "ci_low", "ci_high", "skipped"
    );
    for l in report.labels.iter().chain(&report.macro_average) {
        for g in &l.groups {
            let _ = writeln!(
                out,
                "{:<28} {:<26} {:>7} {:>7} {:>8} {:>8} {:>8} {:>8} {:>7}",
                l.label,
                g.group,
                g.n,
                g.n_pos,
                fmt_opt(g.point),
                fmt_opt(g.mean),
                fmt_opt(g.ci_low),
                fmt_opt(g.ci_high),
                g.skipped
            );
        }
        for d in &l.differences {
            let name = format!("{} - {}{}", d.minuend, d.subtrahend, if d.significant { " *" } else { "" });
            let _ = writeln!(
                out,
                "{:<28} {:<26} {:>7} {:>7} {:>8} {:>8} {:>8} {:>8} {:>7}",
                l.label,
                name,
                "",
                "",
                fmt_opt(d.point),
                fmt_opt(d.mean),
                fmt_opt(d.ci_low),
                fmt_opt(d.ci_high),
                d.skipped
            );
        }
        if let Some(m) = &l.matching {
            let _ = writeln!(
                out,
                "{:<28} pairs {} unmatched {} dropped {} mean gap {:.4} max gap {:.4}",
                l.label, m.pairs, m.unmatched, m.dropped, m.mean_gap, m.max_gap
            );
        }
    }
    for e in &report.errors {
        let _ = writeln!(out, "{:<28} error [{}] {}", e.label, e.kind, e.message);
    }
    out
}

fn emit_report(report: &StratumReport, ctx: &Ctx, global: &GlobalArgs) -> Result<()> {
    if let Some(dir) = &global.out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let file = ReportFile {
            manifest: &ctx.manifest,
            report,
        };
        write_file(&dir.join("report.json"), &json_bytes(&file)?)?;
        let mut buf = Vec::new();
        write_long_form(&mut buf, &long_form(report))?;
        write_file(&dir.join("long_form.csv"), &buf)?;
    }
    print!("{}", render_table(report));
    Ok(())
}

fn bootstrap_config(global: &GlobalArgs) -> Result<BootstrapConfig> {
    BootstrapConfig::with_level(global.iterations, global.seed.unwrap_or(0), global.ci)
}

fn report_fills(fills: &[(String, PretestFill)]) {
    for (label, f) in fills {
        eprintln!(
            "{}",
            serde_json::json!({"info": "text_model_applied", "label": label, "scored": f.scored, "no_context": f.no_context})
        );
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let global = &cli.global;
    let started = global.timestamp.then(|| Timestamps {
        started: chrono::DateTime::<chrono::Utc>::from(std::time::SystemTime::now()).to_rfc3339(),
    });
    let mut ctx = Ctx {
        manifest: RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: cli.command.name().to_string(),
            config: serde_json::to_value(cli)?,
            inputs: Vec::new(),
            seed: global.seed.unwrap_or(0),
            timestamps: started,
        },
    };
    match &cli.command {
        Command::Ingest(input) => {
            let out = required_out(global)?.to_path_buf();
            let loaded = load(input, &mut ctx)?;
            let mut buf = Vec::new();
            for r in &loaded.records {
                serde_json::to_writer(&mut buf, r)?;
                buf.push(b'\n');
            }
            write_file(&out.join(STORE_RECORDS), &buf)?;
            let mut buf = Vec::new();
            crate::dataset::write_notes(&mut buf, &loaded.notes)?;
            write_file(&out.join(STORE_NOTES), &buf)?;
            write_file(&out.join("manifest.json"), &json_bytes(&ctx.manifest)?)?;
            let linked = loaded.records.iter().filter(|r| !r.note_refs.is_empty()).count();
            println!(
                "{} studies, {} labels, {} notes, {} studies with prior notes",
                loaded.records.len(),
                label_universe(&loaded.records).len(),
                loaded.notes.len(),
                linked
            );
        }
        Command::Synth { config } => {
            let out = required_out(global)?.to_path_buf();
            ctx.read(config)?;
            let mut c = SynthConfig::load(config)?;
            if let Some(seed) = global.seed {
                c.seed = seed;
            }
            ctx.manifest.seed = c.seed;
            let ds = generate(&c)?;
            ds.write_dir(&out)?;
            write_file(&out.join("manifest.json"), &json_bytes(&ctx.manifest)?)?;
            println!("{} studies, {} notes written to {}", ds.records.len(), ds.notes.len(), out.display());
        }
        Command::TrainText {
            input,
            label,
            folds,
            grid,
            max_features,
            min_df,
            max_df,
            no_calibrate,
        } => {
            let out = required_out(global)?.to_path_buf();
            let loaded = load(input, &mut ctx)?;
            let label = single_label(label, global, &loaded.records)?;
            let config = TextTrainConfig {
                vocabulary: VocabularyParams {
                    max_features: *max_features,
                    min_df: *min_df,
                    max_df: *max_df,
                },
                train: crate::textrisk::TrainConfig {
                    grid: grid.clone(),
                    folds: *folds,
                    seed: global.seed.unwrap_or(0),
                    fit: Default::default(),
                },
                calibrate: !no_calibrate,
            };
            let (artifact, outcome) = train_text_model(&loaded.records, &loaded.notes, &label, &config)?;
            artifact.save(&out)?;
            write_file(&sidecar(&out), &json_bytes(&ctx.manifest)?)?;
            for w in &outcome.warnings {
                eprintln!("{}", serde_json::json!({"warning": w}));
            }
            for row in &outcome.cv {
                println!("lambda {:<8} mean CV AUROC {}", row.regularization, fmt_opt(row.mean_auroc));
            }
            println!(
                "selected lambda {} with {} features",
                artifact.model.regularization,
                artifact.vocabulary.len()
            );
            for (t, c) in crate::textrisk::top_features(&artifact.model, 10) {
                println!("  {t:<24} {c:+.4}");
            }
        }
        Command::Calibrate {
            input,
            score_col,
            target_col,
            group_col,
            folds,
        } => {
            let out = required_out(global)?.to_path_buf();
            ctx.read(input)?;
            let points = read_score_table(input, score_col, target_col, group_col)?;
            let map = calibrate_cv(&points, *folds, global.seed.unwrap_or(0))?;
            write_file(&out, &json_bytes(&map)?)?;
            write_file(&sidecar(&out), &json_bytes(&ctx.manifest)?)?;
            println!("{} points, {} breakpoints", points.len(), map.breakpoints.len());
        }
        Command::Stratify { input, mode, mention } => {
            let out = required_out(global)?.to_path_buf();
            let loaded = load(input, &mut ctx)?;
            report_fills(&loaded.fills);
            let labels = resolve_labels(global, &loaded.records)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["study_id", "label", "stratum"])?;
            match mode {
                StrataMode::Quantile => {
                    for label in &labels {
                        let q = quantile_strata(pretest_column(&loaded.records, label)?, label)?;
                        for (id, s) in &q.assignment {
                            w.write_record([id.as_str(), label.as_str(), s.name()])?;
                        }
                        println!("{label}: q25 {:.6} q75 {:.6}", q.q25, q.q75);
                    }
                }
                StrataMode::Mention => {
                    let phrases = phrase_list(mention, &mut ctx)?;
                    let index = crate::dataset::note_index(&loaded.notes);
                    for label in &labels {
                        let prior = loaded.records.iter().filter(|r| r.y.contains_key(label)).map(|r| {
                            let t: Vec<&str> = prior_notes(r, &index).iter().map(|n| n.text.as_str()).collect();
                            (r.study_id.as_str(), t)
                        });
                        let m = mention_strata(prior, &phrases, label, mention.allow_empty_context)?;
                        for (id, s) in &m.assignment {
                            w.write_record([id.as_str(), label.as_str(), s.name()])?;
                        }
                        println!(
                            "{label}: {} mentioned, {} not mentioned, {} excluded without prior notes",
                            m.members(crate::stratify::MentionStratum::Mentioned).len(),
                            m.members(crate::stratify::MentionStratum::NotMentioned).len(),
                            m.excluded.len()
                        );
                    }
                }
            }
            let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
            write_file(&out, &bytes)?;
            write_file(&sidecar(&out), &json_bytes(&ctx.manifest)?)?;
        }
        Command::Match { input, label, matching } => {
            let out = required_out(global)?.to_path_buf();
            let loaded = load(input, &mut ctx)?;
            report_fills(&loaded.fills);
            let label = single_label(label, global, &loaded.records)?;
            let (pos, neg) = split_by_class(&loaded.records, &label)?;
            let m = match_pairs(&pos, &neg, matching.options()?)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["pos_study_id", "neg_study_id", "gap"])?;
            for p in &m.pairs {
                w.write_record([p.pos_study_id.clone(), p.neg_study_id.clone(), p.gap.to_string()])?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
            write_file(&out, &bytes)?;
            write_file(&sidecar(&out), &json_bytes(&ctx.manifest)?)?;
            println!(
                "{label}: {} pairs, {} unmatched, {} dropped by caliper, total gap {:.6}",
                m.pairs.len(),
                m.unmatched,
                m.dropped,
                m.total_cost
            );
        }
        Command::EvalStrata { input } => {
            let config = bootstrap_config(global)?;
            let loaded = load(input, &mut ctx)?;
            report_fills(&loaded.fills);
            let labels = resolve_labels(global, &loaded.records)?;
            let report = eval_strata(&loaded.records, &labels, &config)?;
            emit_report(&report, &ctx, global)?;
        }
        Command::EvalMentions { input, mention } => {
            let config = bootstrap_config(global)?;
            let loaded = load(input, &mut ctx)?;
            let phrases = phrase_list(mention, &mut ctx)?;
            ctx.manifest.config["text_normalization"] = crate::stratify::MENTION_NORMALIZATION.into();
            let labels = resolve_labels(global, &loaded.records)?;
            let report = eval_mentions(
                &loaded.records,
                &loaded.notes,
                &phrases,
                &labels,
                mention.allow_empty_context,
                &config,
            )?;
            emit_report(&report, &ctx, global)?;
        }
        Command::EvalMatched { input, matching } => {
            let config = bootstrap_config(global)?;
            let opts = matching.options()?;
            let loaded = load(input, &mut ctx)?;
            report_fills(&loaded.fills);
            let labels = resolve_labels(global, &loaded.records)?;
            let report = eval_matched(&loaded.records, &labels, opts, &config)?;
            emit_report(&report, &ctx, global)?;
        }
    }
    Ok(())
}

fn read_score_table(path: &Path, score_col: &str, target_col: &str, group_col: &str) -> Result<Vec<CalibrationPoint>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Schema {
            column: name.to_string(),
        })
    };
    let (si, ti, gi) = (col(score_col)?, col(target_col)?, col(group_col)?);
    let mut points = Vec::new();
    for (k, row) in rdr.records().enumerate() {
        let row = row?;
        let line = k as u64 + 2;
        let score: f64 = row[si].parse().map_err(|_| Error::Value {
            line,
            message: format!("score `{}` is not a number", &row[si]),
        })?;
        if !score.is_finite() {
            return Err(Error::Value {
                line,
                message: "score must be finite".into(),
            });
        }
        let raw = RawLabel::parse(&row[ti]).ok_or_else(|| Error::Value {
            line,
            message: format!("target `{}` is not a label value", &row[ti]),
        })?;
        points.push(CalibrationPoint {
            group: row[gi].to_string(),
            score,
            target: apply_label_policy(raw),
        });
    }
    Ok(points)
}

/// Machine-readable error line.
pub fn error_record(kind: &str, message: &str, exit_code: i32) -> String {
    serde_json::json!({"error": kind, "message": message, "exit_code": exit_code}).to_string()
}

/// Parses `args`, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            eprintln!("{}", error_record("usage", e.to_string().trim_end(), 2));
            return 2;
        }
        Err(e) => {
            let _ = e.print();
            return 0;
        }
    };
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run(&cli)));
    let _ = std::io::stdout().flush();
    match result {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            let code = if e.is_user_error() { 2 } else { 1 };
            eprintln!("{}", error_record(e.kind(), &e.to_string(), code));
            code
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "internal failure".into());
            eprintln!("{}", error_record("internal", &msg, 1));
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn global_flags_after_subcommand() {
        let cli = Cli::try_parse_from([
            "ctx-strata", "eval-strata", "--predictions", "p.csv", "--iterations", "50", "--labels", "Edema,Fracture",
        ])
        .unwrap();
        assert_eq!(cli.global.iterations, 50);
        assert_eq!(cli.global.labels, vec!["Edema", "Fracture"]);
        assert_eq!(cli.global.ci, 95.0);
    }

    #[test]
    fn defaults() {
        let cli = Cli::try_parse_from(["ctx-strata", "match", "--predictions", "p.csv"]).unwrap();
        assert_eq!(cli.global.iterations, 10_000);
        assert!(cli.global.seed.is_none());
    }

    #[test]
    fn usage_error_exit_code() {
        assert_eq!(main_with_args(["ctx-strata", "eval-strata", "--iterations", "x"]), 2);
        assert_eq!(main_with_args(["ctx-strata", "frobnicate"]), 2);
    }
}
