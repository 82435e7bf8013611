//! Box-Cox power transform and Guerrero's method for choosing its parameter.

use super::{ForecastError, Result};

/// `(y^λ - 1) / λ`, or `ln y` at λ = 0. Evaluated through `expm1` so that
/// λ close to 0 stays accurate.
pub fn box_cox_value(y: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        y.ln()
    } else {
        (lambda * y.ln()).exp_m1() / lambda
    }
}

/// Inverse of [`box_cox_value`]. Outside the transform's range (λ·z ≤ -1)
/// the result is clamped: 0 for λ > 0, `f64::MAX` for λ < 0.
pub fn inverse_box_cox_value(z: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return z.exp();
    }
    let base = lambda * z;
    if base <= -1.0 {
        return if lambda > 0.0 { 0.0 } else { f64::MAX };
    }
    let y = (base.ln_1p() / lambda).exp();
    if y.is_finite() {
        y
    } else {
        f64::MAX
    }
}

pub fn box_cox(values: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if !lambda.is_finite() {
        return Err(ForecastError::InvalidConfig(format!("Box-Cox lambda {lambda} is not finite")));
    }
    values
        .iter()
        .map(|&y| {
            if !y.is_finite() || y < 0.0 || (y == 0.0 && lambda <= 0.0) {
                Err(ForecastError::InvalidData(format!(
                    "Box-Cox with lambda {lambda} needs positive values, got {y}"
                )))
            } else {
                Ok(box_cox_value(y, lambda))
            }
        })
        .collect()
}

pub fn inverse_box_cox(values: &[f64], lambda: f64) -> Vec<f64> {
    values.iter().map(|&z| inverse_box_cox_value(z, lambda)).collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_sd(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Coefficient of variation of `sd_i / mean_i^(1-λ)` over the window
/// statistics.
pub fn guerrero_objective(stats: &[(f64, f64)], lambda: f64) -> f64 {
    let ratios: Vec<f64> = stats
        .iter()
        .map(|(m, s)| s / m.powf(1.0 - lambda))
        .collect();
    sample_sd(&ratios) / mean(&ratios)
}

/// Chooses λ ∈ [-1, 2] (step 0.01) minimizing the coefficient of variation
/// of `sd / mean^(1-λ)` across consecutive non-overlapping windows. The
/// oldest `n mod window_length` observations are dropped so that the most
/// recent data fill whole windows. A series without within-window
/// variation returns 1.
pub fn guerrero_lambda(values: &[f64], window_length: usize) -> Result<f64> {
    if window_length < 2 {
        return Err(ForecastError::InvalidConfig(format!(
            "Guerrero window length must be at least 2, got {window_length}"
        )));
    }
    if values.len() < 2 * window_length {
        return Err(ForecastError::TooShort {
            needed: 2 * window_length,
            got: values.len(),
        });
    }
    if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(ForecastError::InvalidData(format!(
            "Guerrero needs positive values, got {bad}"
        )));
    }
    let used = values.len() / window_length * window_length;
    let stats: Vec<(f64, f64)> = values[values.len() - used..]
        .chunks(window_length)
        .map(|w| (mean(w), sample_sd(w)))
        .collect();
    if stats.iter().all(|(_, s)| *s == 0.0) {
        return Ok(1.0);
    }
    let mut best = (f64::INFINITY, 1.0);
    for k in 0..=300 {
        let lambda = (k as f64 - 100.0) / 100.0;
        let cv = guerrero_objective(&stats, lambda);
        if cv < best.0 {
            best = (cv, lambda);
        }
    }
    Ok(best.1)
}

/// Variance-stabilizing transform as applied before model fitting: Box-Cox
/// on `y + 1` so that zero counts are admissible, or the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountTransform {
    lambda: Option<f64>,
}

impl CountTransform {
    pub const SHIFT: f64 = 1.0;

    pub fn identity() -> Self {
        Self { lambda: None }
    }

    pub fn box_cox(lambda: f64) -> Self {
        Self {
            lambda: Some(lambda),
        }
    }

    pub fn lambda(&self) -> Option<f64> {
        self.lambda
    }

    pub fn forward(&self, y: f64) -> f64 {
        match self.lambda {
            None => y,
            Some(l) => box_cox_value(y.max(0.0) + Self::SHIFT, l),
        }
    }

    pub fn inverse(&self, z: f64) -> f64 {
        match self.lambda {
            None => z,
            Some(l) => inverse_box_cox_value(z, l) - Self::SHIFT,
        }
    }

    pub fn forward_all(&self, ys: &[f64]) -> Vec<f64> {
        ys.iter().map(|y| self.forward(*y)).collect()
    }
}
