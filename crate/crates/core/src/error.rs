use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: missing column `{column}`")]
    Schema { column: String },

    #[error("value error at line {line}: {message}")]
    Value { line: u64, message: String },

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("degenerate target: {0}")]
    DegenerateTarget(String),

    #[error("insufficient groups: {groups} distinct groups for {folds} folds")]
    InsufficientGroups { groups: usize, folds: usize },

    #[error("degenerate distribution: {0}")]
    DegenerateDistribution(String),

    #[error("no phrase list for label `{label}`; available labels: {}", available.join(", "))]
    MissingPhraseList { label: String, available: Vec<String> },

    #[error("empty class: {0}")]
    EmptyClass(String),

    #[error("degenerate subgroup `{group}` for label `{label}`: {reason}")]
    DegenerateSubgroup {
        label: String,
        group: String,
        reason: String,
    },

    #[error("study `{study_id}` has no prior notes")]
    NoContext { study_id: String },

    #[error("pre-test probability missing for label `{label}`; pass --pretest-col to read it from the predictions file or --text-model to derive it from prior notes")]
    MissingPretest { label: String },

    #[error("no usable bootstrap iterations for label `{label}`")]
    UndefinedCi { label: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for the error record written to stderr.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Schema { .. } => "schema",
            Error::Value { .. } | Error::InvalidValue(_) => "value",
            Error::Conflict(_) => "conflict",
            Error::InsufficientData(_) => "insufficient_data",
            Error::Shape(_) => "shape",
            Error::UndefinedMetric(_) => "undefined_metric",
            Error::DegenerateTarget(_) => "degenerate_target",
            Error::InsufficientGroups { .. } => "insufficient_groups",
            Error::DegenerateDistribution(_) => "degenerate_distribution",
            Error::MissingPhraseList { .. } => "missing_phrase_list",
            Error::EmptyClass(_) => "empty_class",
            Error::DegenerateSubgroup { .. } => "degenerate_subgroup",
            Error::NoContext { .. } => "no_context",
            Error::MissingPretest { .. } => "missing_pretest",
            Error::UndefinedCi { .. } => "undefined_ci",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    /// Whether the failure is attributable to user input rather than the tool.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Shape(_))
    }
}
