use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {matrix} at t={t}: expected {expected}, got {got}")]
    TimestepDimension {
        matrix: &'static str,
        t: usize,
        expected: String,
        got: String,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("self-loop assumption violated: information graph is missing self-loop(s) at node(s) {nodes:?}")]
    MissingSelfLoop { nodes: Vec<usize> },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("local-authority assumption violated: subsystem(s) {subsystems:?} cannot causally affect their own output")]
    NoLocalAuthority { subsystems: Vec<usize> },

    #[error("relaxed graph failed the partial-nestedness post-check: {0}")]
    RelaxationUnstable(String),

    #[error("support shape matrix is singular")]
    SingularShape,

    #[error("moment matrix is not positive definite (min eigenvalue {min_eigenvalue:.3e}, threshold {threshold:.3e})")]
    NotPositiveDefinite { min_eigenvalue: f64, threshold: f64 },

    #[error("invalid disturbance model: {0}")]
    InvalidDisturbance(String),

    #[error("rejection sampler acceptance rate {rate:.2e} is below 1e-4")]
    RejectionRate { rate: f64 },

    #[error("sampling is not available for the {0} family")]
    SamplingUnsupported(&'static str),

    #[error("matrix is not symmetric positive semidefinite: {0}")]
    NotPsd(String),

    #[error("invalid conic program: {0}")]
    InvalidProgram(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("invalid problem file: {0}")]
    Schema(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn at(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, with stage labels stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
