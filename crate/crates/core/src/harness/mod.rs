//! Generators, file formats and experiment drivers.

pub mod contour;
pub mod ldpc;
pub mod report;
pub mod spinglass;
pub mod study;
pub mod uai;

use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error("malformed alist: {0}")]
    MalformedAlist(String),
    #[error("alist column and row lists disagree: {0}")]
    InconsistentAdjacency(String),
    #[error("invalid code: {0}")]
    InvalidCode(String),
    #[error("crossover probability {0} outside (0, 0.5)")]
    CrossoverOutOfRange(f64),
    #[error("malformed UAI: {0}")]
    MalformedUai(String),
    #[error("negative probability {value} in UAI factor {factor}")]
    NegativeProbability { factor: usize, value: f64 },
    #[error("invalid parameters: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}
