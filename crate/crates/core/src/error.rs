use thiserror::Error;

/// Errors surfaced by the simulation and training library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("action outside the configured action box: accel={accel}, steer={steer}")]
    ActionOutsideBox { accel: f64, steer: f64 },

    #[error("degenerate geometry: coincident agent positions")]
    DegenerateGeometry,

    #[error("domain error: {0}")]
    Domain(&'static str),

    #[error("parameter vector has length {got}, expected {expected}")]
    ParamLength { got: usize, expected: usize },

    #[error("parameter file format error: {0}")]
    ParamFormat(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown builtin scenario `{0}`")]
    UnknownScenario(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
