use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the respiratory extraction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("stack contains no slices")]
    EmptyStack,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite data: {0}")]
    NonFiniteData(String),
    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("invalid phantom config: {0}")]
    ConfigInvalid(String),

    #[error("cutoff {cutoff_hz} Hz is not below the Nyquist frequency {nyquist_hz} Hz")]
    CutoffAboveNyquist { cutoff_hz: f64, nyquist_hz: f64 },
    #[error("invalid filter spec: {0}")]
    InvalidFilter(String),
    #[error("series of {frames} frames is too short for a filter of half-length {half_length}")]
    SeriesTooShort { frames: usize, half_length: usize },

    #[error("eigensolver did not converge within {0} iterations")]
    ConvergenceFailure(usize),
    #[error("input matrix is not symmetric (max asymmetry {0:e})")]
    NonSymmetricInput(f64),
    #[error("requested {k} eigenpairs from a {n}x{n} matrix")]
    InvalidRank { k: usize, n: usize },
    #[error("degenerate spectrum on slice {slice}: lambda2/lambda1 = {ratio:e}")]
    DegenerateSpectrum { slice: usize, ratio: f64 },

    #[error("zero variance: {0}")]
    ZeroVariance(String),
    #[error("sign correction needs at least two slices")]
    SingleSlice,
    #[error("frame {frame} of slice {slice} has zero total mass")]
    ZeroMass { slice: usize, frame: usize },
    #[error("every center-of-mass curve is constant; global sign undecidable")]
    AllCurvesDegenerate,
    #[error("maximal center-of-mass correlation is exactly zero; global sign undecidable")]
    ZeroCorrelation,

    #[error("need at least two triggers, got {0}")]
    TooFewTriggers(usize),
    #[error("invalid triggers: {0}")]
    InvalidTriggers(String),
    #[error("need at least two heartbeats, got {0}")]
    TooFewBeats(usize),
    #[error("stability filter rejected every heartbeat on slice {0}")]
    AllBeatsTransitional(usize),
    #[error("signal stage {0} is not valid here")]
    WrongStage(String),

    #[error("ROI {0} lies outside the image")]
    RoiOutOfBounds(String),
    #[error("no ground truth available")]
    NoGroundTruth,

    #[error("missing metadata: {0}")]
    MissingMetadata(String),
    #[error("tensor shape does not match metadata: {0}")]
    ShapeMismatchWithMetadata(String),
    #[error("unsupported dtype {0}")]
    UnsupportedDType(String),
    #[error("malformed file {path}: {msg}")]
    Malformed { path: PathBuf, msg: String },
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoFailure {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 validation, 3 degenerate data, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DegenerateSpectrum { .. }
            | Error::ZeroCorrelation
            | Error::AllCurvesDegenerate
            | Error::ZeroVariance(_)
            | Error::ZeroMass { .. }
            | Error::ConvergenceFailure(_)
            | Error::AllBeatsTransitional(_) => 3,
            Error::IoFailure { .. }
            | Error::MissingMetadata(_)
            | Error::ShapeMismatchWithMetadata(_)
            | Error::UnsupportedDType(_)
            | Error::Malformed { .. } => 4,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
