//! Additive Holt-Winters with optionally damped trend.

use super::holt::{damped_sum, logistic, logit, Damping};
use super::optim::NelderMead;
use super::{Forecast, ForecastError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct HoltWintersModel {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub phi: f64,
    pub level: f64,
    pub trend: f64,
    /// Seasonal indices by position `t mod period`, summing to 0.
    pub seasonal: Vec<f64>,
    pub sse: f64,
    period: usize,
    n: usize,
}

#[derive(Debug, Clone)]
struct State {
    level: f64,
    trend: f64,
    seasonal: Vec<f64>,
}

/// Level and trend from the first two seasons' means; seasonal indices
/// from the detrended first season, normalized to sum to 0. The state is
/// dated at the end of the first season.
fn initial_state(y: &[f64], m: usize) -> State {
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let first = mean(&y[..m]);
    let second = mean(&y[m..2 * m]);
    let trend = (second - first) / m as f64;
    let centre = (m as f64 - 1.0) / 2.0;
    let mut seasonal: Vec<f64> = (0..m)
        .map(|i| y[i] - (first + trend * (i as f64 - centre)))
        .collect();
    let shift = mean(&seasonal);
    seasonal.iter_mut().for_each(|s| *s -= shift);
    State {
        level: first + trend * centre,
        trend,
        seasonal,
    }
}

struct Pass {
    state: State,
    sse: f64,
    predictions: Vec<f64>,
}

fn run(y: &[f64], m: usize, alpha: f64, beta: f64, gamma: f64, phi: f64, keep: bool) -> Pass {
    let mut st = initial_state(y, m);
    let mut sse = 0.0;
    let mut predictions = Vec::new();
    for (t, &obs) in y.iter().enumerate().skip(m) {
        let idx = t % m;
        let base = st.level + phi * st.trend;
        let pred = base + st.seasonal[idx];
        let e = obs - pred;
        if keep {
            predictions.push(pred);
        }
        sse += e * e;
        st.level = base + alpha * e;
        st.trend = phi * st.trend + beta * e;
        st.seasonal[idx] += gamma * e;
    }
    Pass {
        state: st,
        sse,
        predictions,
    }
}

impl HoltWintersModel {
    /// Fits α, β = α·u and γ = (1 − α)·v by least squares on one-step
    /// errors after the first season.
    pub fn fit(values: &[f64], period: usize, damped: bool, phi: Option<f64>) -> Result<Self> {
        if period < 2 {
            return Err(ForecastError::InvalidConfig(format!(
                "seasonal period must be at least 2, got {period}"
            )));
        }
        if values.len() < 2 * period {
            return Err(ForecastError::TooShort {
                needed: 2 * period,
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
            let gamma = (1.0 - alpha) * logistic(x[2]);
            (alpha, beta, gamma, damping.value(x.get(3).copied()))
        };
        let mut x0 = vec![logit(0.3), logit(0.1), logit(0.1)];
        x0.extend(damping.start());
        let scale = values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64 + 1.0;
        let best = NelderMead::default().minimize(
            |x| {
                let (a, b, g, p) = unpack(x);
                run(values, period, a, b, g, p, false).sse / scale
            },
            &x0,
        )?;
        let (alpha, beta, gamma, phi) = unpack(&best.x);
        let pass = run(values, period, alpha, beta, gamma, phi, false);
        let mut state = pass.state;
        let shift = state.seasonal.iter().sum::<f64>() / period as f64;
        state.seasonal.iter_mut().for_each(|s| *s -= shift);
        state.level += shift;
        Ok(Self {
            alpha,
            beta,
            gamma,
            phi,
            level: state.level,
            trend: state.trend,
            seasonal: state.seasonal,
            sse: pass.sse,
            period,
            n: values.len(),
        })
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn sigma2(&self) -> f64 {
        self.sse / (self.n - self.period) as f64
    }

    pub fn forecast(&self, h: usize) -> Forecast {
        let m = self.period;
        let point = (1..=h)
            .map(|k| self.level + damped_sum(self.phi, k) * self.trend + self.seasonal[(self.n - 1 + k) % m])
            .collect();
        let mut acc = 1.0;
        let variances: Vec<f64> = (1..=h)
            .map(|k| {
                if k > 1 {
                    let j = k - 1;
                    let seasonal = if j % m == 0 { self.gamma } else { 0.0 };
                    let c = self.alpha + self.beta * damped_sum(self.phi, j) + seasonal;
                    acc += c * c;
                }
                self.sigma2() * acc
            })
            .collect();
        Forecast::from_variances(point, &variances)
    }

    /// One-step predictions for `extended[n..]` with the fitted parameters.
    pub fn one_step_predictions(&self, extended: &[f64]) -> Result<Vec<f64>> {
        if extended.len() < self.n {
            return Err(ForecastError::InvalidData(
                "extended series is shorter than the training series".into(),
            ));
        }
        let pass = run(extended, self.period, self.alpha, self.beta, self.gamma, self.phi, true);
        Ok(pass.predictions[self.n - self.period..].to_vec())
    }
}
