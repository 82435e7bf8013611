//! Regional surveillance data pipeline: a versioned dimensional fact store,
//! batch ingestion, ARIMA/Holt forecasting with snapshot backtests, and
//! spatial correlation and outlier analytics.

pub mod analytics;
pub mod etl;
pub mod fact_store;
pub mod forecast;

pub use fact_store::{
    Centroid, CountryCode, DataValue, Measure, MergeReport, Observations, Region, RegionTypeId,
    Store, StoreError, TimePeriod,
};
