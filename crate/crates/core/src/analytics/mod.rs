//! Spatial and temporal analyses on store snapshots: neighbour search by
//! centroid distance, time-lagged correlations across national borders, and
//! z-score outlier detection against a rolling baseline.

mod border;
mod correlation;
mod geo;
mod outliers;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fact_store::{Measure, Store, StoreError, TimePeriod};

pub use border::{
    border_effect, border_effects, write_border_csv, BorderConfig, BorderEffectRecord, BorderReport, SkippedRegion,
    BORDER_CSV_HEADER,
};
pub use correlation::{correlation_at_lag, lagged_correlation, pearson, LagCorrelation, MIN_OVERLAP};
pub use geo::{haversine_km, neighbors_within, Neighbor, NeighborSet, EARTH_RADIUS_KM};
pub use outliers::{
    detect_outliers, rolling_baseline, write_outliers_csv, zscores, OutlierConfig, OutlierEvent, OUTLIER_CSV_HEADER,
};

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("only {got} overlapping observations at lag {lag}; at least {needed} are required")]
    InsufficientOverlap { lag: i64, got: usize, needed: usize },
    #[error("series {0} has zero variance over the compared span")]
    ZeroVariance(String),
    #[error("region {0} has no neighbours within the radius")]
    NoNeighbors(String),
    #[error("region {0} has no same-country neighbour within the radius")]
    NoWithinNeighbors(String),
    #[error("region {0} has no population; incidence is undefined")]
    NoPopulation(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("series too short: need at least {needed} observations, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = AnalyticsError> = std::result::Result<T, E>;

/// Units of the analysed series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// Cases per 100,000 inhabitants.
    #[default]
    Incidence,
    Counts,
}

/// Daily values of one region over `[from, to]` as seen at `version`, one
/// entry per day; days without a row count as 0.
pub fn daily_values(
    store: &Store,
    region_id: &str,
    measure: Measure,
    from: NaiveDate,
    to: NaiveDate,
    version: NaiveDate,
    scale: Scale,
) -> Result<Vec<f64>> {
    let obs = store.query_series(region_id, measure, TimePeriod::Day, from, to, version)?;
    let mut values = vec![0.0; (to - from).num_days() as usize + 1];
    for (date, v) in &obs.points {
        values[(*date - from).num_days() as usize] = *v as f64;
    }
    if scale == Scale::Incidence {
        let population = store
            .region(region_id)
            .map(|r| r.population)
            .ok_or_else(|| StoreError::UnknownRegion(region_id.to_string()))?;
        if population == 0 {
            return Err(AnalyticsError::NoPopulation(region_id.to_string()));
        }
        let factor = 100_000.0 / population as f64;
        values.iter_mut().for_each(|v| *v *= factor);
    }
    Ok(values)
}
