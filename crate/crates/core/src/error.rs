use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("grid too coarse: only {nodes} interior node(s) along the {axis} axis (need at least 3)")]
    GridTooCoarse { axis: char, nodes: usize },

    #[error("perturbed polygon is not simple: {0}")]
    SelfIntersecting(String),

    #[error("field length {got} does not match grid size {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("conjugate gradients did not converge: relative residual {residual:.3e} after {iterations} iterations (tol {tol:.1e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        tol: f64,
    },

    #[error("eigensolver did not converge: max residual {residual:.3e} after {iterations} sweeps")]
    EigenNotConverged { iterations: usize, residual: f64 },

    #[error("moment recursion failed at level k = {level}: {source}")]
    MomentLevel {
        level: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid moment sequence: {0}")]
    InvalidMoments(String),

    #[error("Hankel positivity violated: {0}")]
    HankelNotPsd(String),

    #[error("Hankel section is numerically rank deficient at size {size}: {detail}")]
    RankDeficient { size: usize, detail: String },

    #[error("recovered weight {weight:.3e} at node {node:.6e} is negative beyond tolerance")]
    NegativeWeight { node: f64, weight: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("insufficient coverage: {0}")]
    InsufficientCoverage(String),

    #[error("ill-conditioned: {0}")]
    IllConditioned(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed CSV: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
