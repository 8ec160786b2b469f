use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("size error: {0}")]
    Size(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("degenerate denominator: {0}")]
    DegenerateDenominator(String),
    #[error("degenerate training set: {0}")]
    DegenerateTraining(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),
    #[error("model state error: {0}")]
    ModelState(String),
    #[error("training divergence: {0}")]
    Divergence(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("stage {stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Tag an error with the pipeline stage it came from; exit codes
    /// pass through.
    pub fn in_stage(self, stage: &str) -> Error {
        Error::Stage { stage: stage.to_string(), source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the CLI for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_) | Error::Config(_) => 2,
            Error::Divergence(_)
            | Error::DegenerateDenominator(_)
            | Error::DegenerateTraining(_)
            | Error::DegenerateBatch(_)
            | Error::UndefinedMetric(_) => 4,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}
