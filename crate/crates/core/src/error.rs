//! Error type shared across the crate.

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("csv schema error: {0}")]
    CsvSchema(String),

    #[error("csv parse error at data row {row}: {message}")]
    CsvParse { row: usize, message: String },

    #[error("feature {index} has {distinct} distinct values, need at least {needed}")]
    InsufficientDistinctValues {
        index: usize,
        distinct: usize,
        needed: usize,
    },

    #[error("weights must be non-negative and finite with at least one positive entry")]
    InvalidWeights,

    #[error("labels must be 0 or 1, found {0}")]
    InvalidLabel(String),

    #[error("information matrix is singular; collinear columns: {0:?}")]
    SingularInformation(Vec<usize>),

    #[error("model did not converge; {0}")]
    NotConverged(String),

    #[error("class {class} has {got} labeled records, need at least 2")]
    TooFewLabeled { class: u8, got: usize },

    #[error("selection scorer unavailable: {0}")]
    ScorerUnavailable(String),

    #[error("target acceptance rate {rate} unachievable: {reason}")]
    RateUnachievable { rate: f64, reason: String },

    #[error("acceptance rates must be strictly decreasing within (0, 1]")]
    NonMonotoneRates,

    #[error("no financed records to fit on")]
    NoFinancedRecords,

    #[error("{count} records have zero financing propensity; inverse-propensity weights are undefined")]
    ZeroPropensity { count: usize },

    #[error("fewer than 2 score bands contain financed records")]
    TooFewPopulatedBands,

    #[error("band count {k} exceeds the number of distinct scores ({distinct})")]
    TooManyBands { k: usize, distinct: usize },

    #[error("labels contain a single class; ranking metrics are undefined")]
    SingleClassLabels,

    #[error("bootstrap requires at least {min} resamples, got {got}")]
    TooFewResamples { min: usize, got: usize },

    #[error("insufficient replications: need at least {min}, got {got}")]
    InsufficientReplications { min: usize, got: usize },

    #[error("train/test leakage: {0} record ids appear in both sets")]
    TestLeakage(usize),

    #[error("numerical failure in {context}: {source}")]
    Numerical {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    /// Wrap an error with the experiment coordinates it occurred at, so
    /// callers can name the failing method/rate/cell.
    pub fn in_context(self, context: impl Into<String>) -> Self {
        Error::Numerical {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
