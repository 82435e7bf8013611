//! Embedded, file-backed dimensional fact store.
//!
//! Measures (case counts) are stored against a spatial dimension (regions and
//! their many-to-one hierarchy) and a temporal dimension (day/week periods).
//! Every row also carries the snapshot `version` that wrote it; rows are never
//! overwritten by later snapshots, so any earlier state of the data can be
//! queried again.

mod aggregate;
mod persist;
mod store;
mod types;

use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

pub use aggregate::{SpatialAggregation, TemporalAggregation};
pub use store::Store;
pub use types::{
    is_sunday, week_ending, Centroid, CountryCode, DataValue, MappingType, MappingTypeId,
    Measure, MergeReport, Observations, Region, RegionMapping, RegionType, RegionTypeId,
    TimePeriod,
};

/// Header of the row export CSV.
pub const ROWS_CSV_HEADER: &str = "region_id,date,timeperiod_type,datavalue_type,value,version";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("invalid country code {0:?}")]
    InvalidCountry(String),
    #[error("unknown {kind} {name:?}")]
    UnknownName { kind: &'static str, name: String },
    #[error("unknown region type id {0}")]
    UnknownRegionType(u32),
    #[error("unknown mapping type id {0}")]
    UnknownMappingType(u32),
    #[error("unknown region {0:?}")]
    UnknownRegion(String),
    #[error("region id {region_id:?} does not start with country code {country}")]
    RegionPrefix {
        region_id: String,
        country: CountryCode,
    },
    #[error("invalid centroid ({lat}, {lon}) for region {region_id:?}")]
    InvalidCentroid {
        region_id: String,
        lat: f64,
        lon: f64,
    },
    #[error("{what} {key:?} already registered with different attributes")]
    Conflict { what: &'static str, key: String },
    #[error("region type {name:?} level {level} in {country}: {reason}")]
    InvalidRegionType {
        name: String,
        country: CountryCode,
        level: u8,
        reason: &'static str,
    },
    #[error("invalid mapping: {0}")]
    InvalidMapping(String),
    #[error("row version {row} differs from batch version {batch}")]
    VersionMismatch { row: NaiveDate, batch: NaiveDate },
    #[error("duplicate key in batch: {region_id} {date} {period} {measure}")]
    DuplicateKey {
        region_id: String,
        date: NaiveDate,
        period: TimePeriod,
        measure: Measure,
    },
    #[error("week row for {region_id} dated {date}, which is not a Sunday")]
    WeekNotSunday { region_id: String, date: NaiveDate },
    #[error("invalid date range {from} > {to}")]
    InvalidRange { from: NaiveDate, to: NaiveDate },
    #[error("store has no snapshots")]
    NoSnapshots,
    #[error("version {requested} predates the earliest snapshot {earliest}")]
    VersionTooEarly {
        requested: NaiveDate,
        earliest: NaiveDate,
    },
    #[error("region {region_id} has no daily {measure} data to aggregate")]
    NoDailyData { region_id: String, measure: Measure },
    #[error("store is opened read-only")]
    ReadOnly,
    #[error("store at {path} is locked by another writer")]
    Locked { path: PathBuf },
    #[error("corrupt store file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;
