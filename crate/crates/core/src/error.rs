use std::path::PathBuf;

use crate::strata::Stratum;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Variants are grouped by [`ErrorClass`], which the command-line tool maps
/// onto its exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic: expected RALN, found {found:?}")]
    BadMagic { found: [u8; 4] },
    #[error("version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("trailing bytes: expected {expected} bytes, found {found}")]
    TrailingBytes { expected: u64, found: u64 },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("metadata length mismatch: {items} items in metadata, {rows} rows in embeddings")]
    MetadataLengthMismatch { items: usize, rows: usize },
    #[error("malformed metadata {path}: {message}")]
    Metadata { path: PathBuf, message: String },
    #[error("line {line}: ragged row, expected {expected} fields, found {found}")]
    RaggedRow {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: cannot parse {field:?} as a number")]
    Parse { line: u64, field: String },
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("bad csv header: {0}")]
    BadHeader(String),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("invalid shape: {0}")]
    Shape(String),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("zero-norm vector at row {row}")]
    ZeroNorm { row: usize },
    #[error("item lists differ at position {position}")]
    ItemMismatch { position: usize },
    #[error("stratum {stratum} has {size} items, at least {required} required")]
    UndersizedStratum {
        stratum: Stratum,
        size: usize,
        required: usize,
    },
    #[error("length mismatch: {left} values vs {right} labels")]
    LengthMismatch { left: usize, right: usize },
    #[error("score {score} for item {id:?} outside [{min}, {max}]")]
    ScoreOutOfRange {
        id: String,
        score: f64,
        min: f64,
        max: f64,
    },
    #[error("k = {k} out of range for n = {n} (need 1 <= k <= n - 1)")]
    InvalidK { k: usize, n: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

/// Coarse failure category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Unreadable, malformed or inconsistent input files.
    Input,
    /// Inputs parse but violate a cross-file or statistical data contract.
    DataContract,
    /// A caller-supplied parameter is out of range.
    Parameter,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            Io { .. }
            | BadMagic { .. }
            | VersionMismatch { .. }
            | UnsupportedDtype(_)
            | Truncated { .. }
            | TrailingBytes { .. }
            | NonFinite { .. }
            | MetadataLengthMismatch { .. }
            | Metadata { .. }
            | RaggedRow { .. }
            | Parse { .. }
            | Csv { .. }
            | BadHeader(_)
            | DuplicateId(_)
            | Shape(_)
            | InvalidSpec(_) => ErrorClass::Input,
            DimensionMismatch { .. }
            | ZeroNorm { .. }
            | ItemMismatch { .. }
            | UndersizedStratum { .. }
            | LengthMismatch { .. }
            | ScoreOutOfRange { .. } => ErrorClass::DataContract,
            InvalidK { .. } | InvalidParameter(_) => ErrorClass::Parameter,
        }
    }
}
