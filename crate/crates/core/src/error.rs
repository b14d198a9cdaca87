use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by every analysis in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("variant mismatch: {0}")]
    VariantMismatch(String),

    #[error("invalid point: {0}")]
    InvalidPoint(String),

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("system is not invertible; negative times are not admissible")]
    NonInvertible,

    /// The trajectory left every bounded region before the requested time.
    /// `blowup_time` is signed: negative for backward blowup.
    #[error("trajectory diverged at t = {blowup_time}")]
    Diverged { blowup_time: f64 },

    #[error("symbolic horizon exhausted: shift by {needed} requested, horizon is {available}")]
    HorizonExhausted { needed: u64, available: u64 },

    #[error("time {0} is not admissible for this system")]
    InvalidTime(String),

    #[error("expression `{source_text}` column {column}: {message}")]
    Expr {
        source_text: String,
        column: usize,
        message: String,
    },

    #[error("map `{name}` produced a non-finite value at {at}")]
    Domain { name: String, at: String },

    #[error("symbolic rule produced an invalid value at index {index}: {reason}")]
    RuleValue { index: u64, reason: String },

    /// At least one member of a compact set diverged under the induced map.
    /// Entry `i` holds the blowup time of point `i`, if any.
    #[error("image diverged for {} of {} points", .blowups.iter().filter(|b| b.is_some()).count(), .blowups.len())]
    ImageDiverged { blowups: Vec<Option<f64>> },

    #[error("the empty word is not an element of the semigroup")]
    EmptyWord,

    #[error("generator {generator} failed at word position {position}: {source}")]
    WordDomain {
        position: usize,
        generator: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("orbit sample {value} leaves the bounding region")]
    OrbitNotBounded { value: String },

    #[error("not a conjugacy: residual {residual:e} exceeds {tolerance:e} ({detail})")]
    NotAConjugacy {
        residual: f64,
        tolerance: f64,
        detail: String,
    },

    #[error("generators {a} and {b} do not commute: residual {residual:e}")]
    NonAbelian { a: usize, b: usize, residual: f64 },
}

impl Error {
    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}
