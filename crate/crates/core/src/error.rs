use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid size: need at least {min} agents, got {n}")]
    InvalidSize { n: usize, min: usize },

    #[error("{name} = {value} is outside its valid range")]
    OutOfRange { name: &'static str, value: f64 },

    #[error("agent index {index} out of range for {n} agents")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("self-loop on agent {0}")]
    SelfLoop(usize),

    #[error("topology kind {0} does not match the requested generator")]
    KindMismatch(&'static str),

    #[error("power iteration did not converge after {iterations} iterations (Gelfand estimate {gelfand})")]
    NotConverged { iterations: usize, gelfand: f64 },

    #[error("state vector length {got} does not match {n} agents")]
    StateLength { got: usize, n: usize },

    #[error("state entry s[{index}] = {value} is not a probability")]
    StateEntry { index: usize, value: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("trace shape mismatch: expected {expected_n} agents x {expected_rounds} rounds, got {n} x {rounds}")]
    ShapeMismatch {
        expected_n: usize,
        expected_rounds: usize,
        n: usize,
        rounds: usize,
    },

    #[error("at least {needed} observed rounds are required, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("no traces supplied")]
    EmptyTraces,

    #[error("unknown attack policy `{0}`")]
    UnknownPolicy(String),

    #[error("route called on a {0} atom; only yellow atoms are routed")]
    NotYellow(&'static str),

    #[error("derived_from edge {from} -> {to} would close a cycle in the lineage graph")]
    LineageCycle { from: usize, to: usize },

    #[error("hub and leaf must differ (both {0})")]
    IdenticalNodes(usize),
}
