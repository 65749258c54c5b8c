use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

use crate::panel::Fips;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Config,
    Runtime,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed csv: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: missing column `{column}` in header")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}:{line}: unparseable date `{value}` (expected YYYY-MM-DD)")]
    BadDate { path: PathBuf, line: u64, value: String },

    #[error("{path}:{line}: non-numeric value `{value}`")]
    BadValue { path: PathBuf, line: u64, value: String },

    #[error("invalid county identifier `{0}` (expected up to 5 digits)")]
    BadFips(String),

    #[error("{path}: conflicting duplicate for ({date}, {county}): {first} vs {second}")]
    ConflictingDuplicate { path: PathBuf, date: NaiveDate, county: Fips, first: f64, second: f64 },

    #[error("{0}: panel has no rows")]
    EmptyInput(String),

    #[error("date range {start}..={end} is not inside panel `{panel}`")]
    IndexOutOfRange { panel: String, start: NaiveDate, end: NaiveDate },

    #[error("panel `{0}` has no complete counties on the requested range")]
    NoCompleteCounties(String),

    #[error("panels share no dates")]
    EmptyDateIntersection,

    #[error("panels share no counties")]
    EmptyCountyIntersection,

    #[error("county {county}: baseline mean {mean} is zero")]
    DegenerateBaseline { county: Fips, mean: f64 },

    #[error("county {0}: no values inside the baseline window")]
    EmptyBaseline(Fips),

    #[error("series too short: {len} days, need at least {needed}")]
    SeriesTooShort { len: usize, needed: usize },

    #[error("too few usable rows: {rows} (need at least 2)")]
    TooFewRows { rows: usize },

    #[error("input contains non-finite values")]
    NonFinite,

    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("county sets differ between model kinds on {date} lookahead {lookahead}")]
    CountyMismatch { date: NaiveDate, lookahead: u32 },

    #[error("duplicate prediction record for {county} on {date} lookahead {lookahead}")]
    DuplicateRecord { date: NaiveDate, lookahead: u32, county: Fips },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("county {county}, window ending {train_end}, lookahead {lookahead}: {source}")]
    Fit {
        county: Fips,
        train_end: NaiveDate,
        lookahead: u32,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. }
            | Error::Csv { .. }
            | Error::MissingColumn { .. }
            | Error::BadDate { .. }
            | Error::BadValue { .. }
            | Error::BadFips(_)
            | Error::ConflictingDuplicate { .. }
            | Error::EmptyInput(_)
            | Error::NoCompleteCounties(_)
            | Error::EmptyDateIntersection
            | Error::EmptyCountyIntersection
            | Error::DegenerateBaseline { .. }
            | Error::EmptyBaseline(_) => ErrorKind::Input,
            Error::Config(_) | Error::IndexOutOfRange { .. } | Error::SeriesTooShort { .. } => ErrorKind::Config,
            _ => ErrorKind::Runtime,
        }
    }
}
