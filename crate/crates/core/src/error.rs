use thiserror::Error;

/// Every failure the library reports. Messages are stable and are matched on
/// by the harness when it records per-cell failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("degenerate scenario space")]
    DegenerateScenarioSpace,
    #[error("decision outside feasible region")]
    OutsideRegion,
    #[error("exact expectation unavailable")]
    ExactExpectationUnavailable,
    #[error("grid oracle limited to desk-scale dimensions")]
    GridOracleTooLarge,
    #[error("grid enumeration infeasible")]
    GridEnumerationInfeasible,
    #[error("recourse dual unbounded (primal infeasible)")]
    DualUnbounded,
    #[error("infeasible master")]
    InfeasibleMaster,
    #[error("infeasible region")]
    InfeasibleRegion,
    #[error("replication solve failed: {0}")]
    ReplicationSolveFailed(String),
    #[error("variance undefined")]
    VarianceUndefined,
    #[error("invalid confidence level")]
    InvalidConfidenceLevel,
    #[error("no replications")]
    NoReplications,
    #[error("supplied point not ε-optimal")]
    NotEpsilonOptimal,
    #[error("termination condition unmet")]
    TerminationUnmet,
    #[error("anchor outside region")]
    AnchorOutsideRegion,
    #[error("dual reduction requires full row rank")]
    RankDeficient,
    #[error("recourse infeasible at (x, ξ) for scenario {0}")]
    RecourseInfeasible(usize),
    #[error("τ too small for Q")]
    StepSizeTooSmall,
    #[error("bound requires finite Ξ")]
    BoundRequiresFiniteSpace,
    #[error("target set empty")]
    TargetSetEmpty,
    #[error("invalid tolerance")]
    InvalidTolerance,
    #[error("enumeration too large")]
    EnumerationTooLarge,
    #[error("exponent out of range")]
    ExponentOutOfRange,
    #[error("insufficient declared constants: {0}")]
    InsufficientConstants(String),
    #[error("no macro-replication outcomes")]
    EmptyRuns,
    #[error("cannot fit log rate")]
    CannotFitRate,
    #[error("solver did not converge: {0}")]
    NotConverged(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
