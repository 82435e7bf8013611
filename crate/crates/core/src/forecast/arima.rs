//! Fixed-order seasonal ARIMA.
//!
//! The differenced series is standardized and fitted as a stationary ARMA
//! model: conditional sum of squares first, then refinement of the exact
//! Gaussian likelihood computed with a Kalman filter. Coefficients are
//! searched through a partial-autocorrelation reparameterization, which
//! keeps every candidate stationary and invertible.

use serde::{Deserialize, Serialize};

use super::optim::NelderMead;
use super::{Forecast, ForecastError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl ArimaOrder {
    pub const fn new(p: usize, d: usize, q: usize) -> Self {
        Self { p, d, q }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeasonalOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub period: usize,
}

impl SeasonalOrder {
    pub const fn new(p: usize, d: usize, q: usize, period: usize) -> Self {
        Self { p, d, q, period }
    }

    /// No seasonal component.
    pub const fn none() -> Self {
        Self::new(0, 0, 0, 1)
    }
}

impl Default for SeasonalOrder {
    fn default() -> Self {
        Self::none()
    }
}

/// Polynomial product; coefficients in ascending powers of the backshift.
fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// `(1 - B)^d (1 - B^s)^D` as a coefficient vector.
fn differencing_poly(d: usize, seasonal_d: usize, s: usize) -> Vec<f64> {
    let mut poly = vec![1.0];
    for _ in 0..d {
        poly = poly_mul(&poly, &[1.0, -1.0]);
    }
    let mut seasonal = vec![0.0; s + 1];
    seasonal[0] = 1.0;
    seasonal[s] = -1.0;
    for _ in 0..seasonal_d {
        poly = poly_mul(&poly, &seasonal);
    }
    poly
}

fn apply_differencing(y: &[f64], delta: &[f64]) -> Vec<f64> {
    let k = delta.len() - 1;
    (k..y.len())
        .map(|t| delta.iter().enumerate().map(|(i, c)| c * y[t - i]).sum())
        .collect()
}

/// Largest partial autocorrelation magnitude. Without a margin the
/// likelihood of over-differenced or over-parameterized fits keeps
/// improving linearly in the raw parameter towards the boundary.
const MAX_PACF: f64 = 0.99;

/// Maps unconstrained values to the coefficients of a stationary AR
/// polynomial `1 - φ₁B - … - φₚBᵖ` through partial autocorrelations,
/// each bounded by `MAX_PACF` so the roots stay off the unit circle.
fn pacf_to_ar(u: &[f64]) -> Vec<f64> {
    let mut phi: Vec<f64> = Vec::with_capacity(u.len());
    for (k, &x) in u.iter().enumerate() {
        let r = MAX_PACF * x.tanh();
        let mut next = vec![0.0; k + 1];
        for j in 0..k {
            next[j] = phi[j] - r * phi[k - 1 - j];
        }
        next[k] = r;
        phi = next;
    }
    phi
}

/// Expands nonseasonal and seasonal AR coefficients into one lag vector.
fn expand_ar(ar: &[f64], sar: &[f64], s: usize) -> Vec<f64> {
    let mut a = vec![1.0];
    a.extend(ar.iter().map(|c| -c));
    let mut b = vec![0.0; sar.len() * s + 1];
    b[0] = 1.0;
    for (i, c) in sar.iter().enumerate() {
        b[(i + 1) * s] = -c;
    }
    poly_mul(&a, &b)[1..].iter().map(|c| -c).collect()
}

fn expand_ma(ma: &[f64], sma: &[f64], s: usize) -> Vec<f64> {
    let mut a = vec![1.0];
    a.extend_from_slice(ma);
    let mut b = vec![0.0; sma.len() * s + 1];
    b[0] = 1.0;
    for (i, c) in sma.iter().enumerate() {
        b[(i + 1) * s] = *c;
    }
    poly_mul(&a, &b)[1..].to_vec()
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    p: usize,
    q: usize,
    sp: usize,
    sq: usize,
    s: usize,
    mean: bool,
}

impl Layout {
    fn len(&self) -> usize {
        self.p + self.q + self.sp + self.sq + usize::from(self.mean)
    }
}

/// Coefficients of the standardized ARMA model.
#[derive(Debug, Clone, PartialEq)]
struct Coefficients {
    ar: Vec<f64>,
    ma: Vec<f64>,
    sar: Vec<f64>,
    sma: Vec<f64>,
    mu: f64,
    phi: Vec<f64>,
    theta: Vec<f64>,
}

impl Coefficients {
    fn from_raw(layout: &Layout, u: &[f64]) -> Self {
        let (ar_u, rest) = u.split_at(layout.p);
        let (ma_u, rest) = rest.split_at(layout.q);
        let (sar_u, rest) = rest.split_at(layout.sp);
        let (sma_u, rest) = rest.split_at(layout.sq);
        let ar = pacf_to_ar(ar_u);
        let ma: Vec<f64> = pacf_to_ar(ma_u).iter().map(|c| -c).collect();
        let sar = pacf_to_ar(sar_u);
        let sma: Vec<f64> = pacf_to_ar(sma_u).iter().map(|c| -c).collect();
        let phi = expand_ar(&ar, &sar, layout.s);
        let theta = expand_ma(&ma, &sma, layout.s);
        Self {
            ar,
            ma,
            sar,
            sma,
            mu: rest.first().copied().unwrap_or(0.0),
            phi,
            theta,
        }
    }

    fn css(&self, z: &[f64]) -> f64 {
        let start = self.phi.len();
        let mut e = vec![0.0; z.len()];
        let mut sum = 0.0;
        for t in start..z.len() {
            let mut v = z[t] - self.mu;
            for (i, c) in self.phi.iter().enumerate() {
                v -= c * (z[t - 1 - i] - self.mu);
            }
            for (j, c) in self.theta.iter().enumerate() {
                if t > j {
                    v -= c * e[t - 1 - j];
                }
            }
            e[t] = v;
            sum += v * v;
        }
        sum
    }
}

/// ARMA(p', q') in the Harvey state-space form with state dimension
/// `max(p', q' + 1)`.
struct StateSpace {
    r: usize,
    phi: Vec<f64>,
    rvec: Vec<f64>,
}

struct FilterOutput {
    sumlog: f64,
    ssq: f64,
    nu: usize,
    predictions: Vec<f64>,
    state: Vec<f64>,
}

impl StateSpace {
    fn new(c: &Coefficients) -> Self {
        let r = c.phi.len().max(c.theta.len() + 1);
        let mut phi = c.phi.clone();
        phi.resize(r, 0.0);
        let mut rvec = vec![1.0];
        rvec.extend_from_slice(&c.theta);
        rvec.resize(r, 0.0);
        Self { r, phi, rvec }
    }

    /// `T M T'` for the companion transition, in O(r²).
    fn conjugate(&self, m: &[f64], out: &mut [f64], tmp: &mut [f64]) {
        let r = self.r;
        for i in 0..r {
            for j in 0..r {
                let below = if i + 1 < r { m[(i + 1) * r + j] } else { 0.0 };
                tmp[i * r + j] = self.phi[i] * m[j] + below;
            }
        }
        for i in 0..r {
            for j in 0..r {
                let right = if j + 1 < r { tmp[i * r + j + 1] } else { 0.0 };
                out[i * r + j] = tmp[i * r] * self.phi[j] + right;
            }
        }
    }

    /// Stationary state covariance, solving `P = T P T' + R R'` by doubling.
    fn initial_covariance(&self) -> Option<Vec<f64>> {
        let r = self.r;
        let mut p: Vec<f64> = (0..r * r).map(|k| self.rvec[k / r] * self.rvec[k % r]).collect();
        let mut a = vec![0.0; r * r];
        for i in 0..r {
            a[i * r] = self.phi[i];
            if i + 1 < r {
                a[i * r + i + 1] = 1.0;
            }
        }
        let mut ap = vec![0.0; r * r];
        let mut apa = vec![0.0; r * r];
        let mut aa = vec![0.0; r * r];
        for _ in 0..80 {
            matmul(&a, &p, &mut ap, r, false);
            matmul(&ap, &a, &mut apa, r, true);
            let mut change: f64 = 0.0;
            let mut size: f64 = 1.0;
            for k in 0..r * r {
                p[k] += apa[k];
                change = change.max(apa[k].abs());
                size = size.max(p[k].abs());
            }
            if !size.is_finite() {
                return None;
            }
            if change <= 1e-14 * size {
                return Some(p);
            }
            matmul(&a, &a, &mut aa, r, false);
            std::mem::swap(&mut a, &mut aa);
        }
        None
    }

    fn filter(&self, z: &[f64], mu: f64, keep_predictions: bool) -> Option<FilterOutput> {
        let r = self.r;
        let mut p = self.initial_covariance()?;
        let mut p_upd = vec![0.0; r * r];
        let mut p_next = vec![0.0; r * r];
        let mut tmp = vec![0.0; r * r];
        let mut a = vec![0.0; r];
        let mut a_upd = vec![0.0; r];
        let mut steady = false;
        let mut out = FilterOutput {
            sumlog: 0.0,
            ssq: 0.0,
            nu: 0,
            predictions: Vec::new(),
            state: Vec::new(),
        };
        for &obs in z {
            let f = p[0];
            if !(f.is_finite() && f > 0.0) {
                return None;
            }
            let v = obs - mu - a[0];
            if keep_predictions {
                out.predictions.push(mu + a[0]);
            }
            out.sumlog += f.ln();
            out.ssq += v * v / f;
            out.nu += 1;
            for i in 0..r {
                a_upd[i] = a[i] + p[i * r] / f * v;
            }
            for i in 0..r {
                a[i] = self.phi[i] * a_upd[0] + if i + 1 < r { a_upd[i + 1] } else { 0.0 };
            }
            if !steady {
                for i in 0..r {
                    for j in 0..r {
                        p_upd[i * r + j] = p[i * r + j] - p[i * r] * p[j] / f;
                    }
                }
                self.conjugate(&p_upd, &mut p_next, &mut tmp);
                let mut change: f64 = 0.0;
                for i in 0..r {
                    for j in 0..r {
                        let k = i * r + j;
                        p_next[k] += self.rvec[i] * self.rvec[j];
                        change = change.max((p_next[k] - p[k]).abs());
                    }
                }
                std::mem::swap(&mut p, &mut p_next);
                steady = change < 1e-12;
            }
        }
        out.state = a;
        Some(out)
    }

    fn step(&self, a: &[f64]) -> Vec<f64> {
        (0..self.r)
            .map(|i| self.phi[i] * a[0] + if i + 1 < self.r { a[i + 1] } else { 0.0 })
            .collect()
    }
}

/// `out = a * b` or `a * b'` for square row-major matrices.
fn matmul(a: &[f64], b: &[f64], out: &mut [f64], r: usize, transpose_b: bool) {
    for i in 0..r {
        for j in 0..r {
            let mut s = 0.0;
            for k in 0..r {
                let bkj = if transpose_b { b[j * r + k] } else { b[k * r + j] };
                s += a[i * r + k] * bkj;
            }
            out[i * r + j] = s;
        }
    }
}

fn safe_ln(x: f64) -> f64 {
    x.max(1e-300).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArimaModel {
    order: ArimaOrder,
    seasonal: SeasonalOrder,
    values: Vec<f64>,
    delta: Vec<f64>,
    center: f64,
    scale: f64,
    coefficients: Coefficients,
    sigma2_z: f64,
    loglik: f64,
}

impl ArimaModel {
    pub fn fit_arima(values: &[f64], order: ArimaOrder) -> Result<Self> {
        Self::fit(values, order, SeasonalOrder::none())
    }

    pub fn fit(values: &[f64], order: ArimaOrder, seasonal: SeasonalOrder) -> Result<Self> {
        if seasonal.period == 0 {
            return Err(ForecastError::InvalidConfig("seasonal period must be at least 1".into()));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(ForecastError::InvalidData(format!("non-finite observation {bad}")));
        }
        let s = seasonal.period;
        let layout = Layout {
            p: order.p,
            q: order.q,
            sp: seasonal.p,
            sq: seasonal.q,
            s,
            mean: order.d + seasonal.d == 0,
        };
        let delta = differencing_poly(order.d, seasonal.d, s);
        let lags = order.p + s * seasonal.p + order.q + s * seasonal.q;
        let needed = lags + 2 + delta.len() - 1;
        if values.len() < needed {
            return Err(ForecastError::TooShort {
                needed,
                got: values.len(),
            });
        }

        let w = apply_differencing(values, &delta);
        let n = w.len() as f64;
        let center = if layout.mean { w.iter().sum::<f64>() / n } else { 0.0 };
        let spread = (w.iter().map(|x| (x - center).powi(2)).sum::<f64>() / n).sqrt();
        let scale = if spread > 1e-12 * (1.0 + center.abs()) { spread } else { 1.0 };
        let z: Vec<f64> = w.iter().map(|x| (x - center) / scale).collect();

        let optimizer = NelderMead::default();
        let x0 = vec![0.0; layout.len()];
        let css_start = expand_ar(&vec![0.0; layout.p], &vec![0.0; layout.sp], s).len();
        let css_n = (z.len() - css_start) as f64;
        let css = optimizer.minimize(
            |u| {
                let c = Coefficients::from_raw(&layout, u);
                0.5 * css_n * safe_ln(c.css(&z) / css_n)
            },
            &x0,
        )?;
        let ml = optimizer.minimize(
            |u| {
                let c = Coefficients::from_raw(&layout, u);
                match StateSpace::new(&c).filter(&z, c.mu, false) {
                    Some(f) => 0.5 * (f.nu as f64 * safe_ln(f.ssq / f.nu as f64) + f.sumlog),
                    None => f64::INFINITY,
                }
            },
            &css.x,
        )?;

        let coefficients = Coefficients::from_raw(&layout, &ml.x);
        let filtered = StateSpace::new(&coefficients)
            .filter(&z, coefficients.mu, false)
            .ok_or_else(|| ForecastError::InvalidData("Kalman filter failed at the fitted parameters".into()))?;
        let nu = filtered.nu as f64;
        let sigma2_z = filtered.ssq / nu;
        let loglik = -0.5
            * (nu * (safe_ln(sigma2_z) + 1.0 + (2.0 * std::f64::consts::PI).ln())
                + filtered.sumlog
                + 2.0 * nu * scale.ln());
        Ok(Self {
            order,
            seasonal,
            values: values.to_vec(),
            delta,
            center,
            scale,
            coefficients,
            sigma2_z,
            loglik,
        })
    }

    pub fn order(&self) -> ArimaOrder {
        self.order
    }

    pub fn seasonal_order(&self) -> SeasonalOrder {
        self.seasonal
    }

    pub fn ar(&self) -> &[f64] {
        &self.coefficients.ar
    }

    pub fn ma(&self) -> &[f64] {
        &self.coefficients.ma
    }

    pub fn seasonal_ar(&self) -> &[f64] {
        &self.coefficients.sar
    }

    pub fn seasonal_ma(&self) -> &[f64] {
        &self.coefficients.sma
    }

    /// Mean of the differenced series, when the model has one.
    pub fn mean(&self) -> Option<f64> {
        (self.order.d + self.seasonal.d == 0).then_some(self.center + self.scale * self.coefficients.mu)
    }

    /// Innovation variance on the differenced scale.
    pub fn sigma2(&self) -> f64 {
        self.sigma2_z * self.scale * self.scale
    }

    pub fn log_likelihood(&self) -> f64 {
        self.loglik
    }

    fn standardize(&self, y: &[f64]) -> Vec<f64> {
        apply_differencing(y, &self.delta)
            .iter()
            .map(|x| (x - self.center) / self.scale)
            .collect()
    }

    fn filter(&self, y: &[f64], keep_predictions: bool) -> Result<FilterOutput> {
        let z = self.standardize(y);
        StateSpace::new(&self.coefficients)
            .filter(&z, self.coefficients.mu, keep_predictions)
            .ok_or_else(|| ForecastError::InvalidData("Kalman filter failed".into()))
    }

    /// One-step prediction errors on the differenced scale.
    pub fn residuals(&self) -> Result<Vec<f64>> {
        let out = self.filter(&self.values, true)?;
        let z = self.standardize(&self.values);
        Ok(z.iter()
            .zip(&out.predictions)
            .map(|(obs, pred)| (obs - pred) * self.scale)
            .collect())
    }

    /// One-step-ahead predictions for `extended[n..]`, where `n` is the
    /// training length, using the fitted coefficients and the actual values
    /// observed before each target.
    pub fn one_step_predictions(&self, extended: &[f64]) -> Result<Vec<f64>> {
        let n = self.values.len();
        if extended.len() < n {
            return Err(ForecastError::InvalidData(
                "extended series is shorter than the training series".into(),
            ));
        }
        let out = self.filter(extended, true)?;
        let lag = self.delta.len() - 1;
        Ok((n..extended.len())
            .map(|t| {
                let w_hat = self.center + self.scale * out.predictions[t - lag];
                w_hat - (1..self.delta.len()).map(|k| self.delta[k] * extended[t - k]).sum::<f64>()
            })
            .collect())
    }

    /// Point forecasts for horizons 1..=h with 95% normal intervals.
    pub fn forecast(&self, h: usize) -> Result<Forecast> {
        let out = self.filter(&self.values, false)?;
        let ss = StateSpace::new(&self.coefficients);
        let mut state = out.state;
        let mut history = self.values.clone();
        let mut point = Vec::with_capacity(h);
        for _ in 0..h {
            let w_hat = self.center + self.scale * (self.coefficients.mu + state[0]);
            let t = history.len();
            let y_hat = w_hat - (1..self.delta.len()).map(|k| self.delta[k] * history[t - k]).sum::<f64>();
            history.push(y_hat);
            point.push(y_hat);
            state = ss.step(&state);
        }

        let mut ar_poly = vec![1.0];
        ar_poly.extend(self.coefficients.phi.iter().map(|c| -c));
        let full = poly_mul(&ar_poly, &self.delta);
        let mut psi = vec![1.0];
        let mut variances = Vec::with_capacity(h);
        let mut acc = 0.0;
        for j in 0..h {
            if j > 0 {
                let theta = self.coefficients.theta.get(j - 1).copied().unwrap_or(0.0);
                let ar: f64 = (1..full.len().min(j + 1)).map(|i| full[i] * psi[j - i]).sum();
                psi.push(theta - ar);
            }
            acc += psi[j] * psi[j];
            variances.push(self.sigma2() * acc);
        }
        Ok(Forecast::from_variances(point, &variances))
    }
}
