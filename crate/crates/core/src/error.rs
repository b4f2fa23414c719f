use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GenomeError {
    #[error("empty program")]
    Empty,
    #[error("prefix sequence is not a single complete expression")]
    Inconsistent,
    #[error("unrecognised token `{0}`")]
    BadToken(String),
    #[error("node `{0}` is not part of the problem's function set")]
    ForeignNode(String),
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} contains no fitness cases")]
    Empty(PathBuf),
    #[error("line {line}: expected {expected} columns, found {found}")]
    Arity {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: column {column} value `{value}` is not numeric")]
    NotNumeric {
        line: usize,
        column: usize,
        value: String,
    },
    #[error("line {line}: column {column} value is not finite")]
    NotFinite { line: usize, column: usize },
    #[error("line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("population member {member}: {source}")]
    Program {
        member: usize,
        #[source]
        source: GenomeError,
    },
    #[error("efficiency saving is undefined: no member would have been evaluated")]
    EmptyLedger,
}
