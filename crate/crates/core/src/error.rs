use thiserror::Error;

use crate::types::RobotId;

/// Rejected round inputs.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("intent for unknown robot {0}")]
    UnknownRobot(RobotId),
    #[error("duplicate intent for robot {0}")]
    DuplicateIntent(RobotId),
    #[error("missing intent for robot {0}")]
    MissingIntent(RobotId),
    #[error("edge {edge} out of range for ring of size {n}")]
    EdgeOutOfRange { edge: usize, n: usize },
    #[error("{removed} edges removed, cap is {cap}")]
    TooManyRemoved { removed: usize, cap: usize },
    #[error("scheduler violated the activation bound: robot {robot} asleep for {slept} rounds (f = {f})")]
    FairnessViolated { robot: RobotId, slept: u64, f: u64 },
    #[error("intent from sleeping robot {0}")]
    SleepingIntent(RobotId),
}

/// Protocol-level invariant breaks. These indicate an engine bug.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("protocol corruption: {0}")]
    Corruption(String),
    #[error("decide called on a terminated robot")]
    Terminated,
}

/// Invalid configuration of a run, an adversary or an experiment.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("unknown robot {0} in adversary target")]
    UnknownTarget(RobotId),
    #[error("trap target robot {robot} is at node {node}, outside the strip {u}-{v}")]
    TrapOutsideStrip {
        robot: RobotId,
        node: usize,
        u: usize,
        v: usize,
    },
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trace diverges at round {round}: {detail}")]
    Divergence { round: u64, detail: String },
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config file: {0}")]
    Toml(#[from] toml::de::Error),
}
