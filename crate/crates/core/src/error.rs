use thiserror::Error;

use crate::context::DeviceId;
use crate::graph::MethodId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("cycle detected involving method `{0}`")]
    CycleDetected(MethodId),
    #[error("edge ({0}, {1}) references an unknown method")]
    DanglingEdge(MethodId, MethodId),
    #[error("graph has no unique entry or exit: {0}")]
    NoEntryOrExit(String),
    #[error("duplicate method id `{0}`")]
    DuplicateId(MethodId),
    #[error("invalid method `{0}`: {1}")]
    InvalidNode(MethodId, String),
    #[error("unknown benchmark `{0}`")]
    UnknownBenchmark(String),
    #[error("graph file: {0}")]
    Format(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContextError {
    #[error("signatures were produced with different bucketing configurations")]
    IncompatibleBucketing,
    #[error("topology must contain exactly one source device, found {0}")]
    SourceCount(usize),
    #[error("unknown device `{0}`")]
    UnknownDevice(DeviceId),
    #[error("invalid device `{0}`: {1}")]
    InvalidDevice(DeviceId, String),
    #[error("invalid link {0} -> {1}: {2}")]
    InvalidLink(DeviceId, DeviceId, String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExpandError {
    #[error("topology has no devices")]
    NoCandidates,
    #[error("no link from `{0}` to `{1}`")]
    MissingLink(DeviceId, DeviceId),
    #[error("device `{0}` is fully loaded (zero effective speed)")]
    ZeroEffectiveSpeed(DeviceId),
    #[error("assignment is inconsistent with the expanded graph: {0}")]
    InconsistentAssignment(String),
    #[error("lambda must lie in [0, 1], got {0}")]
    InvalidLambda(f64),
    #[error(transparent)]
    Context(#[from] ContextError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AcoError {
    #[error("expanded graph has no layers")]
    EmptyGraph,
    #[error("search space of {0} paths exceeds the enumeration cap {1}")]
    TooLarge(u128, u128),
    #[error("invalid ACO parameters: {0}")]
    InvalidParams(String),
    #[error("executed prefix is not a proper prefix of the topological order")]
    BadPrefix,
    #[error(transparent)]
    Expand(#[from] ExpandError),
}

/// A scenario file that cannot be used; `field` is a dotted path.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read `{path}`: {message}")]
    Io { path: String, message: String },
    #[error("line {line}, column {column}: `{field}`: {message}")]
    Parse {
        line: usize,
        column: usize,
        field: String,
        message: String,
    },
    #[error("`{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("unknown sweep parameter `{0}` (expected lambda, merge, dissemination, invalidation, theta or capacity)")]
    UnknownParameter(String),
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(#[from] ConfigError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error(transparent)]
    Expand(#[from] ExpandError),
    #[error(transparent)]
    Aco(#[from] AcoError),
    #[error("cannot write output: {0}")]
    Output(String),
}
