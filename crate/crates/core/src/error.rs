use std::path::PathBuf;

/// Errors surfaced by the toolkit.
///
/// Every variant maps onto a short machine-parsable class via [`Error::class`],
/// which the command-line front end prints on failure.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("agent is not on leg {leg}: lateral offset {offset:.3} m exceeds lane width")]
    NotOnLeg { leg: u32, offset: f64 },

    #[error("agent is not inside the circulating lane (radius {radius:.3} m)")]
    NotCirculating { radius: f64 },

    #[error("history window has {got} states, need {need}")]
    InsufficientHistory { got: usize, need: usize },

    #[error("horizon mismatch: predicted {predicted} steps, truth has {truth}")]
    HorizonMismatch { predicted: usize, truth: usize },

    #[error("labels contain a single class: {0}")]
    DegenerateLabels(String),

    #[error("no window exceeded the deviation threshold {threshold}")]
    EmptyMiningResult { threshold: f64 },

    #[error("need {need} scenarios per bucket, found {found}")]
    SampleShortfall { need: usize, found: usize },

    #[error("schema: {0}")]
    Schema(String),

    #[error("config: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("model file: {0}")]
    Model(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable, single-token error class used in CLI diagnostics.
    pub fn class(&self) -> &'static str {
        match self {
            Error::NotOnLeg { .. } => "not-on-leg",
            Error::NotCirculating { .. } => "not-circulating",
            Error::InsufficientHistory { .. } => "insufficient-history",
            Error::HorizonMismatch { .. } => "horizon-mismatch",
            Error::DegenerateLabels(_) => "degenerate-labels",
            Error::EmptyMiningResult { .. } => "empty-mining-result",
            Error::SampleShortfall { .. } => "sample-shortfall",
            Error::Schema(_) | Error::Csv(_) => "schema",
            Error::Config(_) => "config",
            Error::InvalidArgument(_) => "usage",
            Error::Model(_) => "model",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
