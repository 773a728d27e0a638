use thiserror::Error;

/// Errors raised while loading or evaluating models.
#[derive(Debug, Error)]
pub enum Error {
    /// A document does not match the expected schema.
    #[error("schema error in {document}: {message}")]
    Schema { document: String, message: String },

    /// A model was parsed but breaks one or more invariants.
    #[error("invalid {what}: {}", .violations.join("; "))]
    Invalid { what: String, violations: Vec<String> },

    #[error("unknown cache level `{0}`")]
    UnknownLevel(String),

    #[error("unknown link `{0}`")]
    UnknownLink(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("no throughput entry for `{0}` operations")]
    MissingThroughput(String),

    #[error("no latency entry for `{0}` on the dependency chain")]
    MissingLatency(String),

    #[error("overlap policy has no rule for data served from {0}")]
    UncoveredResidence(String),

    #[error("contribution {label} is nonzero but not covered by the rule for {residence}")]
    UncoveredContribution { label: String, residence: String },

    #[error("residence places `{array}` in {level}, which this machine does not have")]
    InconsistentResidence { array: String, level: String },

    #[error("requested {requested} cores but the machine only has {available}")]
    TooManyCores { requested: usize, available: usize },

    #[error("{0}")]
    InsufficientData(String),

    #[error("no overlapping points between prediction and measurement")]
    NoOverlap,

    #[error("core-count grids differ between `{0}` and `{1}`")]
    MismatchedGrid(String, String),

    #[error("{0}")]
    InvalidInput(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
