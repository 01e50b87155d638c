use std::fmt;

use thiserror::Error;

/// Position within an input file, used to report parse failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Byte(u64),
    Line(u64),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Byte(b) => write!(f, "byte {b}"),
            Location::Line(l) => write!(f, "line {l}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed header at {location}: {message}")]
    MalformedHeader { location: Location, message: String },
    #[error("dimension mismatch at {location}: {message}")]
    DimensionMismatch { location: Location, message: String },
    #[error("non-finite value at {location}")]
    NonFiniteValue { location: Location },
    #[error("label {label} out of range at {location}")]
    LabelOutOfRange { location: Location, label: i64 },
    #[error("invalid cloud: {0}")]
    InvalidCloud(String),
    #[error("io failure: {0}")]
    Io(#[from] std::io::Error),

    #[error("spatial index requires at least one point")]
    EmptyInput,
    #[error("k = {k} exceeds the {available} available candidates")]
    KTooLarge { k: usize, available: usize },

    #[error("non-finite input in row {row}")]
    NonFiniteInput { row: usize },
    #[error("score polarity mismatch: expected {expected}, found {found}")]
    PolarityMismatch {
        expected: &'static str,
        found: &'static str,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("seed pool of {pool} points is smaller than m = {m}")]
    PoolSmallerThanM { pool: usize, m: usize },
    #[error("invalid region-growing config: {0}")]
    InvalidHuaConfig(String),

    #[error("region of {size} points is too small for a graph")]
    RegionTooSmall { size: usize },
    #[error("degenerate mixture input: {0}")]
    DegenerateInput(String),
    #[error("point index {index} out of range for {len} points")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("label {label} out of range for {classes} classes in row {row}")]
    ClassLabelOutOfRange { row: usize, label: i64, classes: usize },
    #[error("temperature must be positive and finite")]
    NonpositiveTemperature,
    #[error("novel label {label} in row {row} outside [{lo}, {hi})")]
    NovelLabelOutOfRange { row: usize, label: i64, lo: i64, hi: i64 },
    #[error("row {row} is not on the probability simplex")]
    InvalidSimplexRow { row: usize },

    #[error("ranking metric needs both positives and negatives")]
    SingleClassInput,
    #[error("class set is empty or no class in it is present")]
    EmptyClassSet,

    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
