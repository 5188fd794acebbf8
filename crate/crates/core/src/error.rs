use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("overflow after {iterate} iterates")]
    Overflow { iterate: usize },
    #[error("root finder did not converge (max residual {max_residual:e})")]
    RootFindingFailure { max_residual: f64 },
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
    #[error("point too deep for Boettcher branch tracking (green {green:e})")]
    TooDeep { green: f64 },
    #[error("Newton divergence at level index {level}")]
    NewtonDivergence { level: usize },
    #[error("landing unresolved for angle {angle}")]
    LandingUnresolved { angle: String },
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
    #[error("not a hyperbolic postcritically finite polynomial: {0}")]
    NotHyperbolicPcf(String),
    #[error("angle search failed: {0}")]
    AngleSearchFailed(String),
    #[error("not admissible: {0}")]
    NotAdmissible(String),
    #[error("point lies on the puzzle graph (distance {distance:e})")]
    OnBoundary { distance: f64 },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("refinement failed: {0}")]
    RefinementFailed(String),
    #[error("polynomial solve failed: {0}")]
    SolveFailure(String),
    #[error("branch ambiguity: {0}")]
    BranchAmbiguity(String),
    #[error("no convergence after {iterations} steps (last displacement {last:e})")]
    NoConvergence { iterations: usize, last: f64 },
    #[error("substitution overflow: {0}")]
    SubstitutionOverflow(String),
    #[error("transport failure: {0}")]
    TransportFailure(String),
    #[error("verification failed: {0}")]
    VerificationFailed(String),
    #[error("fiber is not postcritically finite: {0}")]
    NotPcfFiber(String),
}
