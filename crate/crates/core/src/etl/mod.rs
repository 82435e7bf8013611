//! Batch extract-transform-load: parse source files, resolve region keys
//! through per-level dictionaries, and merge the result into the store.
//!
//! A job runs parse -> resolve -> normalize -> merge -> temporal roll-up ->
//! spatial roll-up, and commits as a single store transaction.

mod config;
mod job;
mod parse;
mod resolve;

use std::path::PathBuf;

use chrono::NaiveDate;
use serde::Serialize;
use thiserror::Error;

use crate::fact_store::{Measure, StoreError};

pub use config::{Dictionary, DictionaryEntry, FieldMap, MeasureField, RegionKeyKind, SourceDescriptor, SourceFormat};
pub use job::{commit_job, prepare_job, register_dictionary, run_job, IngestReport, Phase, PreparedJob};
pub use parse::{parse_source, ParsedPayload};
pub use resolve::{normalize_region_id, resolve_regions, Resolution, ResolvedRecord, SUPPORTED_COUNTRIES};

/// Header of the reject sidecar CSV.
pub const REJECTS_CSV_HEADER: &str = "row_index,reason,raw_region_key,raw_date";

/// One (row, measure) observation as read from a source payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    /// 0-based index of the data row (header excluded).
    pub row_index: usize,
    pub region_key: String,
    pub date: NaiveDate,
    pub measure: Measure,
    pub value: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Reject {
    pub row_index: usize,
    pub reason: String,
    pub raw_region_key: String,
    pub raw_date: String,
}

#[derive(Debug, Error)]
pub enum EtlError {
    #[error("payload is not valid UTF-8: {0}")]
    Decode(#[from] std::str::Utf8Error),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("source is missing mapped columns: {}", .0.join(", "))]
    MissingColumns(Vec<String>),
    #[error("malformed CSV payload: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed JSON payload: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid configuration file {path}: {source}")]
    Toml {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("unsupported country {0:?}")]
    UnsupportedCountry(String),
    #[error("empty intrinsic region id")]
    EmptyRegionId,
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl EtlError {
    /// Errors caused by the payload itself rather than configuration or store.
    pub fn is_parse_error(&self) -> bool {
        matches!(self, EtlError::Decode(_) | EtlError::Csv(_) | EtlError::Json(_))
    }
}

pub type Result<T, E = EtlError> = std::result::Result<T, E>;

/// Writes rejects as CSV (see [`REJECTS_CSV_HEADER`]).
pub fn write_rejects_csv<W: std::io::Write>(out: W, rejects: &[Reject]) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    writer.write_record(REJECTS_CSV_HEADER.split(','))?;
    for r in rejects {
        writer.write_record([
            r.row_index.to_string().as_str(),
            &r.reason,
            &r.raw_region_key,
            &r.raw_date,
        ])?;
    }
    writer.flush()?;
    Ok(())
}
