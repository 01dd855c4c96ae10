//! Error type shared by every module of the crate.

use std::fmt;
use std::io;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug)]
pub enum Error {
    /// A state vector violates the invariants of its model.
    InvalidState { day: i64, reason: String },
    /// Parameters outside their admissible domain.
    InvalidParams(String),
    /// `N - D(t)` reached zero or below during a SEIR step.
    PopulationExhausted { day: i64 },
    /// A trajectory does not cover a requested day.
    MissingDay(i64),
    /// A relative tolerance band was requested against a zero reference value.
    ZeroReference { day: i64, component: usize },
    InvalidFitness(String),
    InvalidGrid(String),
    IndexOutOfRange { index: u64, cardinality: u64 },
    InvalidDistribution(String),
    /// Exhaustive enumeration refused because the grid is larger than the guard.
    GuardExceeded { cardinality: u64, limit: u64 },
    InvalidBoundQuery(String),
    /// Failure while evaluating one candidate; wraps the underlying error.
    Candidate { index: u64, source: Box<Error> },
    MissingColumn(String),
    NonContiguousDates { previous: String, next: String },
    DecreasingCumulative { column: String, date: String },
    MalformedRecord { line: u64, reason: String },
    InsufficientData(String),
    /// No candidate in the pre-sample produced a usable week of simulation.
    CalibrationFailed(String),
    EmptyGoodSet,
    Io(io::Error),
    Csv(csv::Error),
    Json(serde_json::Error),
}

impl Error {
    pub(crate) fn at_candidate(self, index: u64) -> Error {
        match self {
            e @ Error::Candidate { .. } => e,
            e => Error::Candidate {
                index,
                source: Box::new(e),
            },
        }
    }

    /// True for errors caused by bad input data rather than bad configuration.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::MissingColumn(_)
                | Error::NonContiguousDates { .. }
                | Error::DecreasingCumulative { .. }
                | Error::MalformedRecord { .. }
                | Error::InsufficientData(_)
                | Error::Csv(_)
                | Error::Io(_)
        )
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidState { day, reason } => write!(f, "invalid state at day {day}: {reason}"),
            Error::InvalidParams(msg) => write!(f, "invalid parameters: {msg}"),
            Error::PopulationExhausted { day } => {
                write!(f, "population exhausted at day {day} (N - D <= 0)")
            }
            Error::MissingDay(day) => write!(f, "trajectory does not cover day {day}"),
            Error::ZeroReference { day, component } => write!(
                f,
                "relative band undefined: reference value of component {component} is zero at day {day}"
            ),
            Error::InvalidFitness(msg) => write!(f, "invalid fitness specification: {msg}"),
            Error::InvalidGrid(msg) => write!(f, "invalid candidate grid: {msg}"),
            Error::IndexOutOfRange { index, cardinality } => {
                write!(f, "grid index {index} out of range (cardinality {cardinality})")
            }
            Error::InvalidDistribution(msg) => write!(f, "invalid sampling distribution: {msg}"),
            Error::GuardExceeded { cardinality, limit } => write!(
                f,
                "grid cardinality {cardinality} exceeds the exhaustive-scan limit {limit}"
            ),
            Error::InvalidBoundQuery(msg) => write!(f, "invalid bound query: {msg}"),
            Error::Candidate { index, source } => write!(f, "candidate {index}: {source}"),
            Error::MissingColumn(col) => write!(f, "missing column `{col}`"),
            Error::NonContiguousDates { previous, next } => {
                write!(f, "dates not contiguous: {previous} followed by {next}")
            }
            Error::DecreasingCumulative { column, date } => {
                write!(f, "cumulative column `{column}` decreases at {date}")
            }
            Error::MalformedRecord { line, reason } => write!(f, "line {line}: {reason}"),
            Error::InsufficientData(msg) => write!(f, "insufficient data: {msg}"),
            Error::CalibrationFailed(msg) => write!(f, "tolerance calibration failed: {msg}"),
            Error::EmptyGoodSet => write!(f, "no sampled candidate fits the observed window"),
            Error::Io(e) => write!(f, "io error: {e}"),
            Error::Csv(e) => write!(f, "csv error: {e}"),
            Error::Json(e) => write!(f, "json error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Candidate { source, .. } => Some(source.as_ref()),
            Error::Io(e) => Some(e),
            Error::Csv(e) => Some(e),
            Error::Json(e) => Some(e),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(e: io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e)
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e)
    }
}
