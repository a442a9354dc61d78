use thiserror::Error;

pub type Result<T> = std::result::Result<T, GsaError>;

#[derive(Debug, Error)]
pub enum GsaError {
    /// Malformed input text. `line` is 1-based.
    #[error("{format}: line {line}: {message}")]
    Parse {
        format: &'static str,
        line: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("no testable gene sets")]
    NoTestableSets,

    #[error("{0}: no genes left")]
    EmptyResult(&'static str),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Error raised inside a named pipeline stage.
    #[error("stage `{stage}`: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<GsaError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl GsaError {
    pub(crate) fn parse(format: &'static str, line: usize, message: impl Into<String>) -> Self {
        GsaError::Parse {
            format,
            line,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        GsaError::Invalid(message.into())
    }

    /// True when the root cause is a numerical failure rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            GsaError::Numerical(_) => true,
            GsaError::Stage { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            already @ GsaError::Stage { .. } => already,
            other => GsaError::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }
}
