use thiserror::Error;

/// Errors raised by game evaluation, the equilibrium solvers and the fairness layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GneError {
    #[error("point outside the cost domain: {0}")]
    Domain(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("invalid transformation: {0}")]
    InvalidTransformation(String),

    #[error("invalid game parameters: {0}")]
    InvalidParams(String),

    #[error("game has no affine pseudo-gradient representation")]
    NotAffine,

    #[error("feasible set is empty: weighted lower bounds {weighted_lb} exceed budget {budget}")]
    InfeasibleSet { weighted_lb: f64, budget: f64 },

    #[error("point violates the feasible set by {violation:e}")]
    Infeasible { violation: f64 },

    #[error("agent {agent}: other agents leave {residual} of the budget, below its lower bound")]
    InfeasibleResidual { agent: usize, residual: f64 },

    #[error("no convergence after {iterations} iterations (natural residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("no active-set pattern satisfies the KKT conditions")]
    NoValidPattern,

    #[error("dimension {0} too large for active-set enumeration (max 20)")]
    DimensionTooLarge(usize),

    #[error("no nonnegative multipliers make the point stationary (residual {0:e})")]
    NotStationary(f64),

    #[error("fairness metric requires a benchmark outcome")]
    MissingBenchmark,

    #[error("no grid point produced a usable equilibrium ({converged} converged, {domain_failures} metric domain failures)")]
    AllPointsFailed {
        converged: usize,
        domain_failures: usize,
    },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, GneError>;
