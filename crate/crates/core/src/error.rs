use thiserror::Error;

/// Errors raised anywhere in the discretization, solve and refinement pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate domain: side lengths {0} x {1}")]
    DegenerateDomain(f64, f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bisection closure exceeded depth {depth} at element {element}")]
    ClosureDepth { element: usize, depth: usize },

    #[error("singular local DOF system on element {0}")]
    SingularElement(usize),

    #[error("unsupported quadrature degree {0}")]
    UnsupportedDegree(usize),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:e})")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("singular Schur complement (active constraint rows are dependent)")]
    SingularSchur,

    #[error("no active-set candidate satisfies the KKT conditions")]
    NoFeasibleCandidate,

    #[error("primal-dual active set did not converge in {0} iterations")]
    PdasMaxIterations(usize),

    #[error("primal-dual active set is cycling (iteration {0})")]
    PdasCycling(usize),

    #[error("constraint set declares {0}")]
    ConstraintCase(&'static str),

    #[error("all marking indicators are zero")]
    ZeroIndicators,

    #[error("not enough records: {have} < window {window}")]
    NotEnoughRecords { have: usize, window: usize },

    #[error("unknown problem '{0}'")]
    UnknownProblem(String),

    #[error("adaptive iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {message}")]
    Schema { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
