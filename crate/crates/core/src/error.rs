use thiserror::Error;

/// Unified error type for graph construction, simulation and solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown location `{0}`")]
    UnknownLocation(String),

    #[error("unknown mode `{0}`")]
    UnknownMode(String),

    #[error("duplicate edge {mode} {from}->{to}")]
    DuplicateEdge {
        mode: String,
        from: String,
        to: String,
    },

    #[error("edge attribute out of range: {0}")]
    Attribute(String),

    #[error("cost model applied to unsupported edge kind: {0}")]
    ModelApplicability(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("value outside domain: {0}")]
    Domain(String),

    #[error("traveler {0} has no path to its destination")]
    EmptyPathSet(usize),

    #[error("traveler {traveler}: plan discontinuous at edge {edge}")]
    IllegalPath { traveler: usize, edge: usize },

    #[error("traveler {0} is not active")]
    NotActive(usize),

    #[error("edge {edge} tail does not match traveler {traveler} position")]
    WrongTail { traveler: usize, edge: usize },

    #[error("time must not run backwards: now {now}, requested {requested}")]
    TimeReversal { now: i64, requested: i64 },

    #[error("probability row does not normalize: sum {sum}")]
    Normalization { sum: f64 },

    #[error("posterior undefined: signal row annihilates the prior")]
    DegeneratePosterior,

    #[error("homotopy continuation stalled at alpha {alpha} (step {step})")]
    ContinuationFailure { alpha: f64, step: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("toml parse error: {0}")]
    Toml(#[from] toml::de::Error),
}
