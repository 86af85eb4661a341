use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
///
/// Variants are grouped by the stage that raises them. [`Error::is_io`]
/// separates filesystem problems from validation failures so the CLI can
/// map them to distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    // signal primitives
    #[error("signal is empty or too short ({0} samples)")]
    EmptySignal(usize),
    #[error("non-finite value in input")]
    NonFiniteInput,
    #[error("need at least 2 knots, got {0}")]
    TooFewKnots(usize),
    #[error("knot times must be strictly increasing (index {0})")]
    NonMonotonicKnots(usize),
    #[error("invalid band {low_hz}..{high_hz} Hz for sample rate {rate_hz} Hz")]
    InvalidBand { low_hz: f64, high_hz: f64, rate_hz: f64 },
    #[error("signal of {len} samples is shorter than filter length {taps}")]
    SignalTooShort { len: usize, taps: usize },
    #[error("sigma must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    // isti features
    #[error("no peaks detected in {0}")]
    NoPeaksDetected(&'static str),
    #[error("fewer than two ISTI knots ({0} matched beats)")]
    FewerThanTwoKnots(usize),
    #[error("scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("window {window_s} s is longer than the record ({record_s} s)")]
    WindowLongerThanRecord { window_s: f64, record_s: f64 },
    #[error("region {0:?} lies outside the frame")]
    RoiOutOfBounds([usize; 4]),

    // emission
    #[error("rectangle {0:?} lies outside the frame or has zero area")]
    RectOutOfBounds([usize; 4]),
    #[error("need at least {need} frames, got {got}")]
    TooFewFrames { need: usize, got: usize },

    // neural
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("probabilities do not form a distribution (sum {0})")]
    NotADistribution(f64),
    #[error("target {0} outside [0, 1]")]
    TargetOutOfRange(f64),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("targets do not align with feature frames: {0}")]
    AlignmentError(String),

    // stress
    #[error("training set contains a single class")]
    SingleClassDataset,
    #[error("probability {0} outside [0, 1]")]
    OutOfRangeProbability(f64),

    // metrics
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("input has zero variance")]
    ZeroVariance,
    #[error("no positive labels")]
    NoPositives,

    // synth
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("{0:.2}% of pixels would clip at the 16-bit range")]
    CountOverflowRisk(f64),

    // formats
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("file truncated: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: u64, found: u64 },
    #[error("declared dimensions overflow")]
    DimensionOverflow,
    #[error("duplicate tensor name {0:?}")]
    DuplicateTensorName(String),
    #[error("tensor/descriptor mismatch: {0}")]
    ShapeMismatchWithDescriptor(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors raised by the filesystem rather than by validation.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
