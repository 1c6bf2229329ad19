/// Error type shared by all modules of the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("singular matrix in {context}: eigenvalue at {eigenvalue}")]
    Singular { context: String, eigenvalue: f64 },

    #[error("uncontrollable pair (A, B): controllability matrix has rank {rank} < {dim}")]
    Uncontrollable { rank: usize, dim: usize },

    #[error("Riccati iteration did not converge within {0} iterations")]
    RiccatiNoConvergence(usize),

    #[error("QP infeasible: constraint {index} violated by {violation:.3e}")]
    QpInfeasible { index: usize, violation: f64 },

    #[error(
        "QP iteration cap {cap} reached (stationarity {stationarity:.3e}, primal {primal:.3e})"
    )]
    QpIterationCap {
        cap: usize,
        stationarity: f64,
        primal: f64,
    },

    #[error("model error: {0}")]
    Model(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
