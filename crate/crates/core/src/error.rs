use alloc::string::String;

/// Errors raised by scoring, clustering, simulation and evaluation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("sequence carries no EOS log-probability")]
    MissingEos,
    #[error("sequence has no tokens")]
    EmptySequence,
    #[error("invalid sequence: {0}")]
    InvalidSequence(String),
    #[error("answer set {0:?} has no samples")]
    EmptyAnswerSet(String),
    #[error("invalid sampling metadata: {0}")]
    InvalidMeta(String),
    #[error("observed EOS-inclusive probability mass {0} exceeds 1")]
    InvalidMass(f64),
    #[error(
        "duplicate token path has joint log-probability {found}, first occurrence had {expected}"
    )]
    InconsistentDuplicate { expected: f64, found: f64 },
    #[error("cluster assignment is not a partition of the unique answers: {0}")]
    InvalidPartition(String),
    #[error("total cluster probability mass is zero")]
    DegenerateMass,
    #[error("equivalence backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("sequence space exceeds the enumeration cap of {cap}")]
    StateSpaceTooLarge { cap: usize },
    #[error("invalid sequence tree: {0}")]
    InvalidTree(String),
    #[error("sample {index} is not a complete path of the tree")]
    UnknownSequence { index: usize },
    #[error("labels are single-class; AUROC is undefined")]
    DegenerateLabels,
    #[error("non-finite score for question {0:?}")]
    NonFiniteScore(String),
    #[error("question {question_id:?} has {available} samples but {required} are required")]
    InsufficientSamples {
        question_id: String,
        available: usize,
        required: usize,
    },
    #[error("question {0:?} has no correctness label")]
    MissingLabel(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
