//! Forecasting: power transforms, fixed-order (S)ARIMA, damped Holt and
//! additive Holt-Winters, the linear mix of two models, and a backtest
//! harness over store snapshots.

pub mod arima;
pub mod backtest;
pub mod boxcox;
pub mod holt;
pub mod holt_winters;
pub mod metrics;
pub mod mix;
pub mod optim;
pub mod pipeline;
pub mod series;

pub use arima::{ArimaModel, ArimaOrder, SeasonalOrder};
pub use backtest::{
    backtest, wednesdays, write_backtest_csv, write_backtest_entries_csv, BacktestEntry, BacktestReport, BacktestSummary,
    SkippedOrigin, Variant, BACKTEST_CSV_HEADER, BACKTEST_ENTRIES_CSV_HEADER,
};
pub use boxcox::{box_cox, guerrero_lambda, inverse_box_cox, CountTransform};
pub use holt::HoltModel;
pub use holt_winters::HoltWintersModel;
pub use metrics::{mape, Mape};
pub use mix::{choose_m, choose_m_mapped, mix_forecast, MixChoice};
pub use pipeline::{
    forecast_daily, forecast_series, forecast_weekly, last_sunday, write_forecasts_csv, ForecastPoint, ForecastResult, LambdaChoice,
    MixWeight, ModelConfig, FORECAST_CSV_HEADER,
};
pub use series::{Frequency, TimeSeries};

use crate::fact_store::StoreError;

/// Point forecasts with a 95% interval per horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Forecast {
    pub point: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Forecast {
    pub fn len(&self) -> usize {
        self.point.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point.is_empty()
    }

    /// Builds symmetric normal intervals from per-horizon variances.
    pub fn from_variances(point: Vec<f64>, variances: &[f64]) -> Self {
        let (lower, upper) = point
            .iter()
            .zip(variances)
            .map(|(p, v)| {
                let half = Z_95 * v.max(0.0).sqrt();
                (p - half, p + half)
            })
            .unzip();
        Self { point, lower, upper }
    }
}

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, thiserror::Error)]
pub enum ForecastError {
    #[error("series too short: need at least {needed} observations, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("optimizer did not converge; last objective value {last_objective}")]
    NonConvergence { last_objective: f64 },
    #[error("forecasts have different horizon counts ({left} and {right})")]
    MismatchedHorizons { left: usize, right: usize },
    #[error("every actual value is zero; percentage error is undefined")]
    AllActualsZero,
    #[error("{region_id}: {source}")]
    Region {
        region_id: String,
        #[source]
        source: Box<ForecastError>,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl ForecastError {
    pub fn for_region(self, region_id: &str) -> Self {
        match self {
            e @ ForecastError::Region { .. } => e,
            e => ForecastError::Region {
                region_id: region_id.to_string(),
                source: Box::new(e),
            },
        }
    }

    /// The error with any region annotation removed.
    pub fn root(&self) -> &ForecastError {
        match self {
            ForecastError::Region { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T, E = ForecastError> = std::result::Result<T, E>;
