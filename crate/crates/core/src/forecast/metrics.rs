use serde::Serialize;

use super::{ForecastError, Result};

/// Mean absolute percentage error over the pairs with a nonzero actual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Mape {
    pub percent: f64,
    pub n_used: usize,
    pub n_excluded_zero_actuals: usize,
}

/// Absolute percentage error of one forecast, `None` when the actual is 0.
pub fn ape(forecast: f64, actual: f64) -> Option<f64> {
    (actual != 0.0).then(|| 100.0 * ((forecast - actual) / actual).abs())
}

pub fn mape(forecast: &[f64], actual: &[f64]) -> Result<Mape> {
    if forecast.len() != actual.len() {
        return Err(ForecastError::MismatchedHorizons {
            left: forecast.len(),
            right: actual.len(),
        });
    }
    let errors: Vec<f64> = forecast
        .iter()
        .zip(actual)
        .filter_map(|(f, a)| ape(*f, *a))
        .collect();
    if errors.is_empty() {
        return Err(ForecastError::AllActualsZero);
    }
    Ok(Mape {
        percent: errors.iter().sum::<f64>() / errors.len() as f64,
        n_used: errors.len(),
        n_excluded_zero_actuals: actual.len() - errors.len(),
    })
}
