use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("kernel entry P[{row}][{col}] = {value} is negative")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("row {row} sums to {sum}, exceeding 1")]
    RowSumExceedsOne { row: usize, sum: f64 },
    #[error("declared mode does not match the kernel: {0}")]
    ModeMismatch(String),
    #[error("ergodic chain is not irreducible ({0} strongly connected components)")]
    Reducible(usize),
    #[error("chain is not in ergodic mode")]
    NotErgodic,
    #[error("linear system is singular (pivot {pivot:.3e} below threshold)")]
    SingularSystem { pivot: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("augmented kernel marginal at ({aux}, {state}) -> {target} differs from base by {diff:.3e}")]
    MarginalMismatch {
        aux: usize,
        state: usize,
        target: usize,
        diff: f64,
    },
    #[error("cost table is missing the cemetery value for auxiliary state {aux}")]
    MissingCemeteryValue { aux: usize },
    #[error("no gradient table supplied for the twist check")]
    NoGradient,
    #[error("value iteration failed to converge after {sweeps} sweeps (residual {residual:.3e})")]
    NonConvergence { sweeps: usize, residual: f64 },
    #[error("Doob-Meyer increment {value:.3e} at state {index} is negative beyond tolerance")]
    NegativeIncrement { index: usize, value: f64 },
    #[error("cost violates the submartingale assumption (worst increment {value:.3e} at state {index})")]
    SubmartingaleViolated { index: usize, value: f64 },
    #[error("(mu, nu) are not in balayage order")]
    NotOrdered,
    #[error("invariant distribution has a zero entry at state {0}")]
    ZeroGammaState(usize),
    #[error("simplex numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("LP is infeasible")]
    Infeasible,
    #[error("LP is unbounded")]
    Unbounded,
    #[error("duality gap {gap:.3e} exceeds acceptance tolerance {tol:.3e}")]
    GapTooLarge { gap: f64, tol: f64 },
    #[error("dual ascent stagnated with gap {gap:.3e}")]
    NoProgress { gap: f64 },
    #[error("pushforward mass leak {0:.3e} exceeds tolerance")]
    MassLeak(f64),
    #[error("{truncated} of {total} simulated paths hit the step cap")]
    ExcessTruncation { truncated: usize, total: usize },
    #[error("invalid problem file: {0}")]
    InvalidProblem(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
