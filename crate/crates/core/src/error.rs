use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value at {what}")]
    NonFinite { what: String },

    #[error("not strongly convex on bracket: {0}")]
    NotConvex(String),

    /// The slope of an iterate broke the cap `l`. Carries the offending iterate as
    /// `(ξ, g)` pairs so the caller can checkpoint it.
    #[error(
        "slope budget violated at iteration {iteration}: slope {slope:.6e} at node {node} exceeds l_cap {l_cap:.6e}"
    )]
    SlopeBudget { iteration: usize, node: usize, slope: f64, l_cap: f64, checkpoint: Vec<(f64, f64)> },

    #[error("invalid parameters: {0}")]
    Params(String),

    /// A parameter combination breaks a slope budget such as `γσ²T·l < 1`.
    #[error("slope budget: {0}")]
    Budget(String),

    #[error("no convergence: {0}")]
    NonConvergence(String),

    #[error("grid coverage: {0}")]
    GridCoverage(String),

    #[error("assembly invariant broken: {0}")]
    Assembly(String),

    #[error("time stepping: {0}")]
    Stepping(String),

    #[error("singular drift at t = T")]
    SingularDrift,

    #[error("degenerate law: {0}")]
    Degenerate(String),

    #[error("grid exits in {exits} of {steps} steps exceed the allowed fraction")]
    GridExit { exits: usize, steps: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error: {0}")]
    Parse(String),
}
