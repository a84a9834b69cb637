use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("symmetric eigensolver did not converge")]
    EigenNotConverged,

    #[error("no unique Lyapunov solution: spectral radius {radius} with discount {gamma}")]
    LyapunovUnstable { radius: f64, gamma: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("matrix is not positive definite (min eigenvalue {0:e})")]
    NotPd(f64),

    #[error("singular linear system")]
    Singular,

    #[error("policy is not proper: closed-loop spectral radius {radius} >= {bound}")]
    ImproperPolicy { radius: f64, bound: f64 },

    #[error("data matrix is rank deficient (rank {rank}, need {expected})")]
    RankDeficient { rank: usize, expected: usize },

    #[error("iteration cap of {0} exceeded")]
    IterationCap(usize),

    #[error("no strictly feasible multiplier vector: {0}")]
    NoStrictlyFeasible(String),

    #[error("pole placement failed after {0} attempts")]
    PolePlacement(usize),

    #[error("open-loop matrix violates the stability precondition (radius {0})")]
    OpenLoopUnstable(f64),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
