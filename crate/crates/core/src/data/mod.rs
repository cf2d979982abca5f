//! Raw series ingestion, z-score normalization, calendar features,
//! sliding windows and chronological splits.

mod batches;
mod io;
pub(crate) mod series;
mod split;
mod time_features;
mod windows;
mod zscore;

use thiserror::Error;

pub use batches::{iterate_batches, Batch, BatchIter};
pub use io::{
    checksum, decode_binary, encode_binary, load_raw, parse_csv, read_binary, read_csv, sidecar_path,
    write_binary, write_csv, Format, BINARY_MAGIC, BINARY_VERSION,
};
pub use series::{RawSeries, SeriesMeta};
pub use split::{split_counts, SplitRatio};
pub use time_features::build_time_features;
pub use windows::{make_windows, window_count, PreparedData, Sample, SampleSet};
pub use zscore::NormStats;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot access {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: u64,
        column: usize,
        message: String,
    },
    #[error("byte offset {offset}: {message}")]
    Binary { offset: u64, message: String },
    #[error("metadata: {0}")]
    Metadata(String),
    #[error("invalid series: {0}")]
    Series(String),
    #[error("normalization error: {0}")]
    Normalization(String),
    #[error("windowing error: {0}")]
    Windowing(String),
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;
