//! Linear combination of two models' forecasts.

use serde::Serialize;

use super::metrics::mape;
use super::{Forecast, ForecastError, Result};

fn blend(a: f64, b: f64, m: f64) -> f64 {
    if a == b {
        return a;
    }
    (m * a + (1.0 - m) * b).clamp(a.min(b), a.max(b))
}

/// `m·f1 + (1 − m)·f2` for points and both interval bounds.
pub fn mix_forecast(f1: &Forecast, f2: &Forecast, m: f64) -> Result<Forecast> {
    if !(0.0..=1.0).contains(&m) {
        return Err(ForecastError::InvalidConfig(format!("mix weight {m} is outside [0, 1]")));
    }
    if f1.len() != f2.len() {
        return Err(ForecastError::MismatchedHorizons {
            left: f1.len(),
            right: f2.len(),
        });
    }
    let mix = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| blend(*x, *y, m)).collect();
    Ok(Forecast {
        point: mix(&f1.point, &f2.point),
        lower: mix(&f1.lower, &f2.lower),
        upper: mix(&f1.upper, &f2.upper),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixChoice {
    pub m: f64,
    /// Holdout MAPE of the mixed predictions at `m`; absent when defaulted.
    pub holdout_mape: Option<f64>,
    pub defaulted: bool,
}

impl MixChoice {
    pub const DEFAULT_M: f64 = 0.5;

    pub fn fixed(m: f64) -> Self {
        Self {
            m,
            holdout_mape: None,
            defaulted: false,
        }
    }

    pub fn default_with_warning(reason: &str) -> Self {
        log::warn!("mix weight defaults to {}: {reason}", Self::DEFAULT_M);
        Self {
            m: Self::DEFAULT_M,
            holdout_mape: None,
            defaulted: true,
        }
    }
}

/// Grid search over m ∈ {0, 0.01, …, 1} for the weight whose mixed one-step
/// predictions have the lowest MAPE against `actual`; equal scores go to
/// the m closest to 0.5.
pub fn choose_m(actual: &[f64], pred_a: &[f64], pred_b: &[f64]) -> Result<MixChoice> {
    choose_m_mapped(actual, pred_a, pred_b, |x| x)
}

/// As [`choose_m`], with predictions on a transformed scale: each mixed
/// prediction goes through `inverse` before it is scored against `actual`.
pub fn choose_m_mapped(
    actual: &[f64],
    pred_a: &[f64],
    pred_b: &[f64],
    inverse: impl Fn(f64) -> f64,
) -> Result<MixChoice> {
    if pred_a.len() != actual.len() || pred_b.len() != actual.len() {
        return Err(ForecastError::MismatchedHorizons {
            left: pred_a.len().min(pred_b.len()),
            right: actual.len(),
        });
    }
    if actual.iter().all(|a| *a == 0.0) {
        return Ok(MixChoice::default_with_warning("holdout actuals are all zero"));
    }
    let mut best: Option<(f64, i32)> = None;
    for k in 0..=100i32 {
        let m = k as f64 / 100.0;
        let mixed: Vec<f64> = pred_a.iter().zip(pred_b).map(|(a, b)| inverse(blend(*a, *b, m))).collect();
        let score = mape(&mixed, actual)?.percent;
        let better = match best {
            None => true,
            Some((s, bk)) => {
                score < s - 1e-12 * s.max(1.0)
                    || (score <= s + 1e-12 * s.max(1.0) && (k - 50).abs() < (bk - 50).abs())
            }
        };
        if better {
            best = Some((score, k));
        }
    }
    let (score, k) = best.expect("grid is not empty");
    Ok(MixChoice {
        m: k as f64 / 100.0,
        holdout_mape: Some(score),
        defaulted: false,
    })
}
