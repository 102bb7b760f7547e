use std::path::PathBuf;

/// Errors raised anywhere in the extraction and classification pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("temporal variance must be positive, got {0}")]
    NonPositiveVariance(f64),
    #[error("distribution parameter c must be > 1, got {0}")]
    BadRatio(f64),
    #[error("cascade must have at least one stage")]
    NoStages,
    #[error("scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },
    #[error("temporal state used before initialization")]
    UninitializedState,
    #[error("sample grid is empty")]
    EmptyGrid,
    #[error("derivative of temporal order {order} needs {needed} frames, only {seen} seen")]
    InsufficientHistory {
        order: usize,
        needed: usize,
        seen: u64,
    },
    #[error("unsupported derivative order ({m1},{m2},{n})")]
    UnsupportedOrder { m1: usize, m2: usize, n: usize },
    #[error("unknown field set `{0}`")]
    UnknownFieldSet(String),
    #[error("missing channel {0} in jet response")]
    MissingChannels(String),
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("covariance is degenerate (all-constant input)")]
    DegenerateCovariance,
    #[error("cannot accumulate into a normalized histogram")]
    NormalizedHistogramWrite,
    #[error("cannot normalize an empty histogram")]
    EmptyHistogram,
    #[error("incompatible histograms: {0}")]
    IncompatibleHistograms(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("training set contains a single class")]
    SingleClassTraining,
    #[error("SVM solver did not converge within {0} iterations")]
    NonConvergence(usize),
    #[error("validation scheme does not fit dataset: {0}")]
    SchemeMismatch(String),
    #[error("unsupported input format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("frame {index} is {actual}, stream is {expected}")]
    DimensionChangeMidStream {
        index: usize,
        expected: String,
        actual: String,
    },
    #[error("duplicate manifest path {0}")]
    DuplicatePath(PathBuf),
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("class `{0}` has no entries")]
    EmptyClass(String),
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("temporal factor {0} is not an integer power of the distribution parameter")]
    NonIntegerTemporalFactor(f64),
    #[error("manifest line {line}: {message}")]
    ManifestSyntax { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonPositiveVariance(_) => "NonPositiveVariance",
            Error::BadRatio(_) => "BadRatio",
            Error::NoStages => "NoStages",
            Error::NonPositiveScale(_) => "NonPositiveScale",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::UninitializedState => "UninitializedState",
            Error::EmptyGrid => "EmptyGrid",
            Error::InsufficientHistory { .. } => "InsufficientHistory",
            Error::UnsupportedOrder { .. } => "UnsupportedOrder",
            Error::UnknownFieldSet(_) => "UnknownFieldSet",
            Error::MissingChannels(_) => "MissingChannels",
            Error::InsufficientSamples { .. } => "InsufficientSamples",
            Error::DegenerateCovariance => "DegenerateCovariance",
            Error::NormalizedHistogramWrite => "NormalizedHistogramWrite",
            Error::EmptyHistogram => "EmptyHistogram",
            Error::IncompatibleHistograms(_) => "IncompatibleHistograms",
            Error::EmptyTrainingSet => "EmptyTrainingSet",
            Error::SingleClassTraining => "SingleClassTraining",
            Error::NonConvergence(_) => "NonConvergence",
            Error::SchemeMismatch(_) => "SchemeMismatch",
            Error::UnsupportedFormat(_) => "UnsupportedFormat",
            Error::CorruptHeader(_) => "CorruptHeader",
            Error::DimensionChangeMidStream { .. } => "DimensionChangeMidStream",
            Error::DuplicatePath(_) => "DuplicatePath",
            Error::MissingFile(_) => "MissingFile",
            Error::EmptyClass(_) => "EmptyClass",
            Error::BadParams(_) => "BadParams",
            Error::NonIntegerTemporalFactor(_) => "NonIntegerTemporalFactor",
            Error::ManifestSyntax { .. } => "ManifestSyntax",
            Error::Io(_) => "Io",
        }
    }

    pub(crate) fn dims(expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
