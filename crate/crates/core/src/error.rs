use alloc::string::String;

use crate::types::GroupId;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("rotation needs an even number of dimensions, got {0}")]
    OddRotation(usize),

    #[error("value {value} at position {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },

    #[error("rate is undefined: no true positives in the selected slice")]
    NoPositives,

    #[error("both label classes are required ({0})")]
    SingleClass(&'static str),

    #[error("group {group} has no {class} examples")]
    MissingGroupClass { group: GroupId, class: &'static str },

    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),

    #[error("solver did not converge after {iterations} iterations (max KKT violation {violation:e})")]
    NotConverged { iterations: usize, violation: f64 },

    #[error("class weights for y={class} sum to {sum}, expected 1")]
    WeightsNotNormalized { class: u8, sum: f64 },

    #[error("threshold orientation: tau1 ({tau1}) must not exceed tau0 ({tau0})")]
    ThresholdOrientation { tau0: f64, tau1: f64 },

    #[error("group means are equal; the bound is undefined")]
    EqualMeans,

    #[error("count must be at least one")]
    ZeroCount,

    #[error("missing required columns: {0}")]
    MissingColumns(String),
}
