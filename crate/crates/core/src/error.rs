use thiserror::Error;

/// Everything that can go wrong inside the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("characteristic speed {speed:e} too close to zero at the {side} state")]
    NearZeroSpeed { side: &'static str, speed: f64 },
    #[error("endpoint Jacobian eigenvalues are not real and simple at the {0} state")]
    NotHyperbolic(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no connecting profile found: {0}")]
    NoConnection(String),
    #[error("grid too short: tail value {tail:e} exceeds tolerance {tol:e}")]
    GridTooShort { tail: f64, tol: f64 },
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("iteration failed to converge: {0}")]
    NonConvergence(String),
    #[error("unstable count changed under refinement: {coarse} at h, {fine} at h/2")]
    UnresolvedSpectrum { coarse: usize, fine: usize },
    #[error("defective eigenvalue cluster near {0}")]
    DefectiveCluster(f64),
    #[error("eigenfunction {index} has mean {mean:e}, cannot build a decaying antiderivative")]
    NonZeroMean { index: usize, mean: f64 },
    #[error("fixed-point map is not a contraction (measured factor {0:.3})")]
    NoContraction(f64),
    #[error("horizon too short: tail bound {0:e}")]
    HorizonTooShort(f64),
    #[error("solution blew up at t = {0}")]
    BlowUp(f64),
    #[error("shift denominator 1 + pi2(v_x) = {0:.3} fell below 1/2")]
    DenominatorSmall(f64),
    #[error("no constant C <= {c_max} satisfies the damping inequality (needed {needed:e})")]
    Infeasible { needed: f64, c_max: f64 },
    #[error("argument outside the domain: {0}")]
    DomainError(String),
    #[error("snapshot spacing {gap} too coarse for the time quadrature")]
    SnapshotGapTooLarge { gap: f64 },
    #[error("rate fit outside the asymptotic regime: {0}")]
    NotInAsymptoticRegime(String),
    #[error("shooting diverged: {0}")]
    ShootingDiverged(String),
    #[error("ambiguous root: {0}")]
    AmbiguousRoot(String),
    #[error("no exit from the R-neighbourhood before t = {0}")]
    NoExit(f64),
    #[error("no constants in the search box dominate the Green remainder")]
    TemplateInfeasible,
    #[error("singular linear system at pivot {0}")]
    Singular(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
