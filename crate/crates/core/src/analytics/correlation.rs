use serde::Serialize;

use super::{AnalyticsError, Result};
use crate::forecast::TimeSeries;

/// Smallest number of date-aligned pairs accepted at any lag.
pub const MIN_OVERLAP: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LagCorrelation {
    /// Days by which `b` trails `a`.
    pub lag: i64,
    pub corr: f64,
}

/// Pearson correlation of two equally long samples, clamped to [-1, 1].
/// `None` when either sample has zero variance or fewer than two points.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x[..n].iter().zip(&y[..n]) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Pairs `a(t)` with `b(t + lag)` over the dates both series cover.
fn aligned(a: &TimeSeries, b: &TimeSeries, lag: i64) -> (Vec<f64>, Vec<f64>) {
    let offset = (b.start - a.start).num_days();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (i, x) in a.values.iter().enumerate() {
        let j = i as i64 + lag - offset;
        if j >= 0 {
            if let Some(y) = b.values.get(j as usize) {
                xs.push(*x);
                ys.push(*y);
            }
        }
    }
    (xs, ys)
}

/// Correlation between `a(t)` and `b(t + lag)` on daily series.
pub fn correlation_at_lag(a: &TimeSeries, b: &TimeSeries, lag: i64) -> Result<f64> {
    let (xs, ys) = aligned(a, b, lag);
    if xs.len() < MIN_OVERLAP {
        return Err(AnalyticsError::InsufficientOverlap {
            lag,
            got: xs.len(),
            needed: MIN_OVERLAP,
        });
    }
    pearson(&xs, &ys).ok_or_else(|| {
        let flat = if pearson(&xs, &xs).is_none() { &a.region_id } else { &b.region_id };
        AnalyticsError::ZeroVariance(flat.clone())
    })
}

/// Lag in `[-max_lag, max_lag]` with the highest correlation. Ties go to the
/// smaller `|lag|`, then to the negative lag.
pub fn lagged_correlation(a: &TimeSeries, b: &TimeSeries, max_lag: u32) -> Result<LagCorrelation> {
    let max_lag = max_lag as i64;
    let mut best: Option<LagCorrelation> = None;
    let lags = std::iter::once(0).chain((1..=max_lag).flat_map(|k| [-k, k]));
    for lag in lags {
        let corr = correlation_at_lag(a, b, lag)?;
        if best.is_none_or(|b| corr > b.corr) {
            best = Some(LagCorrelation { lag, corr });
        }
    }
    Ok(best.expect("lag 0 is always evaluated"))
}
