use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty point set")]
    EmptyPointSet,
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("unknown label {0}")]
    UnknownLabel(String),
    #[error("shape has no segments")]
    EmptyShape,
    #[error("node {0} has no box")]
    MissingGeometry(usize),
    #[error("invalid cost entry at ({row}, {col})")]
    InvalidCost { row: usize, col: usize },
    #[error("invalid segmentation: {0}")]
    InvalidSegmentation(String),
    #[error("merge source {0} appears more than once")]
    DuplicateSource(usize),
    #[error("unknown node {0}")]
    UnknownNode(usize),
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("invalid hierarchy: {0}")]
    InvalidHierarchy(String),
    #[error("{context}: {message}")]
    Parse { context: String, message: String },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(context: impl Into<String>, message: impl std::fmt::Display) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable class name, used for CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyPointSet => "empty_point_set",
            Error::InvalidBox(_) => "invalid_box",
            Error::UnknownLabel(_) => "unknown_label",
            Error::EmptyShape => "empty_shape",
            Error::MissingGeometry(_) => "missing_geometry",
            Error::InvalidCost { .. } => "invalid_cost",
            Error::InvalidSegmentation(_) => "invalid_segmentation",
            Error::DuplicateSource(_) => "duplicate_source",
            Error::UnknownNode(_) => "unknown_node",
            Error::InvalidProbability(_) => "invalid_probability",
            Error::InvalidHierarchy(_) => "invalid_hierarchy",
            Error::Parse { .. } => "parse",
            Error::Numeric(_) => "numeric",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }

    /// True for failures caused by numerics rather than bad input data.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_))
    }
}
