use thiserror::Error;

use crate::telemetry::Producer;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("cannot align series onto a common window: {0}")]
    Alignment(String),
    #[error("input has no node power series")]
    MissingPower,
    #[error("unknown container id: {0}")]
    UnknownContainer(String),
    #[error("no container series for producer {0}")]
    ProducerAbsent(Producer),
    #[error("target container set is empty")]
    EmptyTargetSet,
    #[error("degenerate matrix after cleaning: {0}")]
    DegenerateMatrix(String),
    #[error("frame holds cumulative counters; convert to rates first")]
    NotRates,
    #[error("linear system is singular even with ridge regularization")]
    SingularFit,
    #[error("invalid hyperparameter: {0}")]
    HyperParam(String),
    #[error("feature mismatch: {0}")]
    FeatureMismatch(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("incremental update unsupported for {0}")]
    UnsupportedIncremental(String),
    #[error("model store: {0}")]
    StoreIo(String),
    #[error("corrupt model archive: {0}")]
    CorruptArchive(String),
    #[error("no candidate models supplied")]
    NoCandidate,
    #[error("idling background power profile not provided")]
    MissingProfile,
    #[error("no model in store matches the query")]
    NoModel,
    #[error("degenerate power range: max(P) does not exceed the profile")]
    DegenerateRange,
    #[error("empty input")]
    EmptyInput,
    #[error("invalid generator spec: {0}")]
    Spec(String),
    #[error("feature matrix has no labels")]
    MissingLabels,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Exit code for the CLI: usage problems are reported by clap before we
    /// get here, so everything carried by this type is a data error.
    pub fn exit_code(&self) -> i32 {
        2
    }
}
