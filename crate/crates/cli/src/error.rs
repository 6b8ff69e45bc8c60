use std::io;
use std::path::PathBuf;

use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}:{line}: question {question_id:?} repeats sample_index {sample_index}", path.display())]
    DuplicateSampleIndex {
        path: PathBuf,
        line: usize,
        question_id: String,
        sample_index: u64,
    },
    #[error("question {0:?} has no correctness label")]
    MissingLabel(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] uqkit_core::Error),
}

#[derive(Serialize)]
struct JsonError<'a> {
    error: &'a str,
    message: String,
    exit_code: i32,
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for I/O failures, 1 for everything the input or arguments got wrong.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        use uqkit_core::Error as E;
        match self {
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "parse",
            CliError::DuplicateSampleIndex { .. } => "duplicate_sample_index",
            CliError::MissingLabel(_) => "missing_label",
            CliError::Usage(_) => "usage",
            CliError::Core(e) => match e {
                E::MissingEos => "missing_eos",
                E::EmptySequence => "empty_sequence",
                E::InvalidSequence(_) => "invalid_sequence",
                E::EmptyAnswerSet(_) => "empty_answer_set",
                E::InvalidMeta(_) => "invalid_meta",
                E::InvalidMass(_) => "invalid_mass",
                E::InconsistentDuplicate { .. } => "inconsistent_duplicate",
                E::InvalidPartition(_) => "invalid_partition",
                E::DegenerateMass => "degenerate_mass",
                E::BackendUnavailable(_) => "backend_unavailable",
                E::StateSpaceTooLarge { .. } => "state_space_too_large",
                E::InvalidTree(_) => "invalid_tree",
                E::UnknownSequence { .. } => "unknown_sequence",
                E::DegenerateLabels => "degenerate_labels",
                E::NonFiniteScore(_) => "non_finite_score",
                E::InsufficientSamples { .. } => "insufficient_samples",
                E::MissingLabel(_) => "missing_label",
            },
        }
    }

    /// One-line JSON object for `--json-errors`.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&JsonError {
            error: self.kind(),
            message: self.to_string(),
            exit_code: self.exit_code(),
        })
        .expect("plain struct serializes")
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map_or(0, |p| p.line() as usize);
        match e.into_kind() {
            csv::ErrorKind::Io(source) => CliError::io("<csv>", source),
            other => CliError::Parse {
                path: PathBuf::from("<csv>"),
                line,
                message: format!("{other:?}"),
            },
        }
    }
}
