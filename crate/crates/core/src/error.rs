use thiserror::Error;

use crate::expr::{EvalError, ParseError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error in {what}: {source}")]
    Parse {
        what: &'static str,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("potential is negative ({value}) at {point:?}")]
    NegativePotential { point: Vec<f64>, value: f64 },
    #[error("point has dimension {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("well {index} at {point:?} has W = {value:e}, above tolerance {tolerance:e}")]
    WellAboveTolerance {
        index: usize,
        point: Vec<f64>,
        value: f64,
        tolerance: f64,
    },
    #[error("wells {0} and {1} coincide")]
    DuplicateWell(usize, usize),
    #[error("confinement minorant is negative ({value}) at t = {t}")]
    NegativeMinorant { t: f64, value: f64 },
    #[error("confinement integral stays below {target} up to radius {max_radius}; minorant is likely not divergent")]
    ConfinementNotDivergent { target: f64, max_radius: f64 },
    #[error("point {point:?} lies outside the grid box")]
    OutsideBox { point: Vec<f64> },
    #[error("grid would have {nodes} nodes, above the cap of {cap}")]
    NodeCap { nodes: usize, cap: usize },
    #[error("points {0:?} and {1:?} snap to the same grid node; refine the grid")]
    SnapCollision(Vec<f64>, Vec<f64>),
    #[error("target node unreachable")]
    Unreachable,
    #[error("degenerate curve: {0}")]
    DegenerateCurve(String),
    #[error("non-finite gradient during geodesic refinement")]
    NanGradient,
    #[error("STI violation along path at {point:?}: run chain_decompose")]
    StiViolationAlongPath { point: Vec<f64> },
    #[error("time step too large: reparametrization overshoots after {halvings} halvings")]
    StepTooLarge { halvings: usize },
    #[error("well chain: {0}")]
    Chain(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("malformed problem file {path}: {message}")]
    Format { path: String, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn at_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error beneath any stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}
