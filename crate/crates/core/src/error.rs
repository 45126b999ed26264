use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid observable: {0}")]
    InvalidObservable(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// `|<post|pre>|` fell below the overlap floor.
    #[error("near-orthogonal postselection: |<post|pre>| = {overlap:e}")]
    NearOrthogonalPostselection { overlap: f64 },

    #[error("covariance matrix is not positive definite: {0}")]
    InvalidCovariance(String),

    #[error("grid does not cover the state: {0}")]
    GridCoverage(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("wavefunction not normalized (norm = {norm})")]
    Normalization { norm: f64 },

    #[error("couplings act in mixed pointer representations")]
    Representation,

    #[error("postselection probability {probability:e} below threshold")]
    PostselectionFailed { probability: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("unusable probe: Im(Aw) = {im:e} is too small to expose correlations")]
    UnusableProbe { im: f64 },

    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },

    #[error("scenario {scenario}: {source}")]
    Scenario {
        scenario: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn in_scenario(self, scenario: &str) -> Self {
        match self {
            e @ Error::Scenario { .. } => e,
            e => Error::Scenario {
                scenario: scenario.to_string(),
                source: Box::new(e),
            },
        }
    }

    /// True for errors that stem from bad input documents rather than physics.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config { .. } | Error::Io(_) => true,
            Error::Scenario { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
