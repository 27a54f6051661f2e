use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("interquartile range of variable {0} is zero")]
    DegenerateScale(usize),

    #[error("requested {requested} users but the population has {available}")]
    SplitOverflow { requested: usize, available: usize },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("ill-posed fit: {0}")]
    IllPosed(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("single-class input: {0}")]
    SingleClass(String),

    #[error("csv line {line}: {msg}")]
    Csv { line: u64, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error("serialization: {0}")]
    Serde(String),

    #[error("shadow model {index}: {source}")]
    Shadow {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("signal {signal} at record {record}, model {model}: {source}")]
    Signal {
        record: usize,
        model: usize,
        signal: String,
        #[source]
        source: Box<Error>,
    },

    #[error("stage `{stage}`: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    /// Wraps an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line()).unwrap_or(0);
        Error::Csv {
            line,
            msg: e.to_string(),
        }
    }
}
