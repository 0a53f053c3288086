use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed row {line}: expected {expected} fields, found {found}")]
    MalformedRow {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {line}: unparseable value {value:?} in column {column:?}")]
    BadValue {
        line: usize,
        column: String,
        value: String,
    },
    #[error("row {line}: failure label {value:?} is not 0 or 1")]
    BadLabel { line: usize, value: String },
    #[error("duplicate firm-year key ({firm_id}, {year})")]
    DuplicateKey { firm_id: String, year: i32 },
    #[error("header mismatch: {0}")]
    BadHeader(String),
    #[error("panel invariant violated: {0}")]
    InvalidPanel(String),
    #[error("too few records: {0}")]
    TooFewRecords(String),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("missing values are not allowed by this model")]
    MissingNotAllowed,
    #[error("feature arity mismatch: model expects {expected}, got {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("training labels contain a single class")]
    DegenerateLabels,
    #[error("input contains missing values")]
    MissingInput,
    #[error("complete separation detected (coefficient norm {0:e})")]
    Separation(f64),
    #[error("feature {0:?} has no observed values")]
    AllMissingFeature(String),
    #[error("argument outside the model domain: {0}")]
    BadDomain(String),
    #[error("metric requires both outcome classes")]
    OneClass,
    #[error("metric requires at least one positive label")]
    NoPositives,
    #[error("contingency table has a zero margin")]
    ZeroMargin,
    #[error("indicator for {0:?} is constant; odds ratio undefined")]
    DegenerateIndicator(String),
    #[error("year {0} has fewer than 10 predictions")]
    TooFewPredictions(i32),
    #[error("no decile thresholds for year {0}")]
    MissingYearThresholds(i32),
    #[error("no consecutive survivor pairs")]
    NoPairs,
    #[error("both flag sets are empty")]
    EmptyUnion,
    #[error("exact Shapley values support at most {max} players, got {found}")]
    TooManyFeatures { max: usize, found: usize },
    #[error("feature {0:?} has no group label")]
    UnlabeledFeature(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MalformedRow { .. } => "MalformedRow",
            Error::BadValue { .. } => "BadValue",
            Error::BadLabel { .. } => "BadLabel",
            Error::DuplicateKey { .. } => "DuplicateKey",
            Error::BadHeader(_) => "BadHeader",
            Error::InvalidPanel(_) => "InvalidPanel",
            Error::TooFewRecords(_) => "TooFewRecords",
            Error::BadConfig(_) => "BadConfig",
            Error::MissingNotAllowed => "MissingNotAllowed",
            Error::ArityMismatch { .. } => "ArityMismatch",
            Error::DegenerateLabels => "DegenerateLabels",
            Error::MissingInput => "MissingInput",
            Error::Separation(_) => "Separation",
            Error::AllMissingFeature(_) => "AllMissingFeature",
            Error::BadDomain(_) => "BadDomain",
            Error::OneClass => "OneClass",
            Error::NoPositives => "NoPositives",
            Error::ZeroMargin => "ZeroMargin",
            Error::DegenerateIndicator(_) => "DegenerateIndicator",
            Error::TooFewPredictions(_) => "TooFewPredictions",
            Error::MissingYearThresholds(_) => "MissingYearThresholds",
            Error::NoPairs => "NoPairs",
            Error::EmptyUnion => "EmptyUnion",
            Error::TooManyFeatures { .. } => "TooManyFeatures",
            Error::UnlabeledFeature(_) => "UnlabeledFeature",
            Error::LengthMismatch(_) => "LengthMismatch",
            Error::Io(_) => "IoError",
            Error::Csv(_) => "CsvError",
            Error::Json(_) => "JsonError",
        }
    }
}
