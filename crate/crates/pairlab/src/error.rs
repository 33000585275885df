//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {0} has near-zero norm and cannot be normalized")]
    ZeroNormRow(usize),

    /// A loss produced a gradient with the wrong sign: positive pairs must
    /// have non-positive entries, negative pairs non-negative ones.
    #[error("gradient sign violation at pair ({i}, {j}): got {value}")]
    SignViolation { i: usize, j: usize, value: f64 },

    #[error("no (anchor, positive, negative) triplet can be formed")]
    NoValidTriplets,

    #[error("anchor {0} and every other anchor lack positive or negative partners")]
    AnchorWithoutPartners(usize),

    #[error("only {eligible} classes have at least {per_class} samples; batch needs {needed}")]
    InsufficientClassPopulation {
        eligible: usize,
        needed: usize,
        per_class: usize,
    },

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("file contains no data lines")]
    EmptyFile,

    #[error("every query lacks a same-class gallery sample")]
    DegenerateGallery,

    #[error("gradient check failed for {method} at entry ({i}, {j}): score {score}")]
    ToleranceExceeded {
        method: String,
        i: usize,
        j: usize,
        score: f64,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
