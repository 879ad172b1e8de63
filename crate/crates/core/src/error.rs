use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian")]
    NotHermitian,

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("index {index} out of range for {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("{n_qubits} qubits exceeds the dense-matrix cap of {cap}")]
    SizeCapExceeded { n_qubits: usize, cap: usize },

    #[error("family {family} takes {expected} angle(s), got {got}")]
    ArityMismatch { family: String, expected: usize, got: usize },

    #[error("family {0} is already in matchgate form")]
    FamilyMismatch(String),

    #[error("model is not constant-depth eligible: {0}")]
    IneligibleModel(String),

    #[error("model cannot be downfolded: {0}")]
    IneligibleForDownfold(String),

    #[error("optimizer did not converge: best cost {best_cost:e} after {restarts} restart(s)")]
    NonConvergence { best_cost: f64, restarts: usize, best_angles: Vec<f64> },

    #[error("circuit still contains an undecomposed G gate at placement {0}")]
    UndecomposedGate(usize),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown verification suite `{0}`")]
    UnknownSuite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
