use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A map or index points outside the space it is supposed to land in.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("space mismatch: {0}")]
    SpaceMismatch(String),

    /// A caller broke a documented precondition (bad weights, bad metric, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("unknown builtin example `{0}`")]
    UnknownExample(String),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("did not converge: {0}")]
    Convergence(String),

    /// Internal invariant failed; always a bug or a numerically broken input.
    #[error("invariant failure: {0}")]
    Invariant(String),

    #[error("policy incompatible with information structure: {0}")]
    PolicyInfo(String),

    #[error("artifact error: {0}")]
    Artifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
