use thiserror::Error;

/// Errors produced anywhere in the coordination toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("graph is disconnected (algebraic connectivity {lambda2:.3e})")]
    DisconnectedGraph { lambda2: f64 },

    #[error("edge ({i}, {j}) has non-positive weight {weight}")]
    InvalidWeight { i: usize, j: usize, weight: f64 },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid sector bounds: {0}")]
    InvalidBounds(String),

    #[error("invalid objective constants: {0}")]
    InvalidConstants(String),

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("reference point cannot be constructed: {0}")]
    SingularReference(String),

    #[error("agent model violates its standing assumptions: {0}")]
    InvalidModel(String),

    #[error("invalid sector data for the LMI: {0}")]
    InvalidSector(String),

    #[error("LMI infeasible: best achievable margin t = {t:.6e}")]
    Infeasible { t: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("gain synthesis failed at stage `{stage}`: {detail}")]
    SynthesisInfeasible { stage: &'static str, detail: String },

    #[error("simulation diverged at t = {time}")]
    Diverged { time: f64 },

    #[error("no recorded samples inside window [{start}, {end}]")]
    EmptyWindow { start: f64, end: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
