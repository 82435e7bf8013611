//! Holt's linear trend method with optional damping.

use super::optim::NelderMead;
use super::{Forecast, ForecastError, Result};

pub(crate) const PHI_MIN: f64 = 0.8;
pub(crate) const PHI_MAX: f64 = 0.98;

pub(crate) fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// How the damping parameter is determined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Damping {
    None,
    Fixed(f64),
    Fitted,
}

impl Damping {
    pub(crate) fn from_flags(damped: bool, phi: Option<f64>) -> Result<Self> {
        match (damped, phi) {
            (false, _) => Ok(Damping::None),
            (true, None) => Ok(Damping::Fitted),
            (true, Some(p)) if p > 0.0 && p <= 1.0 => Ok(Damping::Fixed(p)),
            (true, Some(p)) => Err(ForecastError::InvalidConfig(format!(
                "damping phi must be in (0, 1], got {p}"
            ))),
        }
    }

    pub(crate) fn start(&self) -> Option<f64> {
        (*self == Damping::Fitted).then(|| logit(0.5))
    }

    pub(crate) fn value(&self, raw: Option<f64>) -> f64 {
        match self {
            Damping::None => 1.0,
            Damping::Fixed(p) => *p,
            Damping::Fitted => PHI_MIN + (PHI_MAX - PHI_MIN) * logistic(raw.unwrap_or(0.0)),
        }
    }
}

/// `φ + φ² + … + φʰ`.
pub(crate) fn damped_sum(phi: f64, h: usize) -> f64 {
    let mut sum = 0.0;
    let mut power = 1.0;
    for _ in 0..h {
        power *= phi;
        sum += power;
    }
    sum
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoltModel {
    pub alpha: f64,
    pub beta: f64,
    pub phi: f64,
    pub level: f64,
    pub trend: f64,
    pub sse: f64,
    n: usize,
    level0: f64,
    trend0: f64,
}

struct Pass {
    level: f64,
    trend: f64,
    sse: f64,
    predictions: Vec<f64>,
}

fn run(y: &[f64], alpha: f64, beta: f64, phi: f64, keep: bool) -> Pass {
    let mut level = y[0];
    let mut trend = y[1] - y[0];
    let mut sse = 0.0;
    let mut predictions = Vec::new();
    for &obs in &y[1..] {
        let pred = level + phi * trend;
        let e = obs - pred;
        if keep {
            predictions.push(pred);
        }
        sse += e * e;
        level = pred + alpha * e;
        trend = phi * trend + beta * e;
    }
    Pass {
        level,
        trend,
        sse,
        predictions,
    }
}

impl HoltModel {
    /// Fits α and β = α·u (u ∈ (0, 1)) by least squares on one-step
    /// errors. With `damped` and no `phi`, φ is fitted in [0.8, 0.98];
    /// without `damped`, φ = 1.
    pub fn fit(values: &[f64], damped: bool, phi: Option<f64>) -> Result<Self> {
        if values.len() < 3 {
            return Err(ForecastError::TooShort {
                needed: 3,
                got: values.len(),
            });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(ForecastError::InvalidData(format!("non-finite observation {bad}")));
        }
        let damping = Damping::from_flags(damped, phi)?;
        let unpack = |x: &[f64]| {
            let alpha = logistic(x[0]);
            let beta = alpha * logistic(x[1]);
            let phi = damping.value(x.get(2).copied());
            (alpha, beta, phi)
        };
        let mut x0 = vec![logit(0.5), logit(0.1)];
        x0.extend(damping.start());
        let scale = values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64 + 1.0;
        let best = NelderMead::default().minimize(
            |x| {
                let (a, b, p) = unpack(x);
                run(values, a, b, p, false).sse / scale
            },
            &x0,
        )?;
        let (alpha, beta, phi) = unpack(&best.x);
        let pass = run(values, alpha, beta, phi, false);
        Ok(Self {
            alpha,
            beta,
            phi,
            level: pass.level,
            trend: pass.trend,
            sse: pass.sse,
            n: values.len(),
            level0: values[0],
            trend0: values[1] - values[0],
        })
    }

    pub fn sigma2(&self) -> f64 {
        self.sse / (self.n - 1) as f64
    }

    pub fn initial_state(&self) -> (f64, f64) {
        (self.level0, self.trend0)
    }

    pub fn forecast(&self, h: usize) -> Forecast {
        let point = (1..=h)
            .map(|k| self.level + damped_sum(self.phi, k) * self.trend)
            .collect();
        let mut acc = 1.0;
        let variances: Vec<f64> = (1..=h)
            .map(|k| {
                if k > 1 {
                    let c = self.alpha + self.beta * damped_sum(self.phi, k - 1);
                    acc += c * c;
                }
                self.sigma2() * acc
            })
            .collect();
        Forecast::from_variances(point, &variances)
    }

    /// One-step predictions for `extended[n..]` with the fitted smoothing
    /// parameters, `n` being the training length.
    pub fn one_step_predictions(&self, extended: &[f64]) -> Result<Vec<f64>> {
        if extended.len() < self.n {
            return Err(ForecastError::InvalidData(
                "extended series is shorter than the training series".into(),
            ));
        }
        let pass = run(extended, self.alpha, self.beta, self.phi, true);
        Ok(pass.predictions[self.n - 1..].to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_is_flat() {
        let m = HoltModel::fit(&[7.0; 12], true, None).unwrap();
        assert!(m.trend.abs() < 1e-12);
        assert!(m.forecast(4).point.iter().all(|p| (p - 7.0).abs() < 1e-12));
    }

    #[test]
    fn exact_linear_trend_undamped() {
        let y: Vec<f64> = (0..20).map(|t| 2.0 * t as f64).collect();
        let m = HoltModel::fit(&y, false, None).unwrap();
        let f = m.forecast(5);
        for (h, p) in f.point.iter().enumerate() {
            assert!((p - (38.0 + 2.0 * (h + 1) as f64)).abs() < 1e-6);
        }
    }

    #[test]
    fn damped_linear_trend_falls_short() {
        let y: Vec<f64> = (0..20).map(|t| 2.0 * t as f64).collect();
        let m = HoltModel::fit(&y, true, Some(0.9)).unwrap();
        assert_eq!(m.phi, 0.9);
        let f = m.forecast(8);
        for (h, p) in f.point.iter().enumerate() {
            let h = (h + 1) as f64;
            let oracle = m.level + (1..=h as i32).map(|i| 0.9f64.powi(i)).sum::<f64>() * m.trend;
            assert!((p - oracle).abs() < 1e-9);
            assert!(*p < 38.0 + 2.0 * h);
        }
    }

    #[test]
    fn fitted_damping_stays_in_bounds() {
        let y: Vec<f64> = (0..30).map(|t| (t as f64).sqrt() * 10.0 + (t % 3) as f64).collect();
        let m = HoltModel::fit(&y, true, None).unwrap();
        assert!((PHI_MIN..=PHI_MAX).contains(&m.phi));
        assert!(m.alpha > 0.0 && m.alpha < 1.0 && m.beta >= 0.0 && m.beta <= m.alpha);
    }

    #[test]
    fn damped_increments_shrink_by_phi() {
        let y = [3.0, 5.0, 8.0, 9.0, 13.0, 14.0, 18.0, 19.0, 22.0, 26.0];
        let m = HoltModel::fit(&y, true, Some(0.85)).unwrap();
        let f = m.forecast(12).point;
        for h in 1..f.len() - 1 {
            let d0 = f[h] - f[h - 1];
            let d1 = f[h + 1] - f[h];
            assert!((d1 - 0.85 * d0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(HoltModel::fit(&[1.0, 2.0], false, None), Err(ForecastError::TooShort { .. })));
        assert!(HoltModel::fit(&[1.0, 2.0, 3.0], true, Some(1.5)).is_err());
    }

    #[test]
    fn one_step_predictions_continue_the_filter() {
        let y = [3.0, 5.0, 8.0, 9.0, 13.0, 14.0, 18.0, 19.0, 22.0, 26.0];
        let m = HoltModel::fit(&y[..8], true, None).unwrap();
        let p = m.one_step_predictions(&y).unwrap();
        assert_eq!(p.len(), 2);
        assert!((p[0] - m.forecast(1).point[0]).abs() < 1e-12);
    }
}
