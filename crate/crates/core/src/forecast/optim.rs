//! Derivative-free Nelder-Mead simplex minimizer.
//!
//! Bounded parameters are handled by the callers through smooth
//! reparameterizations, so the search itself is unconstrained.

use super::{ForecastError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMead {
    /// Stop when `f_high - f_low <= reltol * (|f_low| + 1)`.
    pub reltol: f64,
    pub max_iterations: usize,
    /// Size of the initial simplex along each axis.
    pub initial_step: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            reltol: 1e-8,
            max_iterations: 500,
            initial_step: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
}

impl NelderMead {
    /// Minimizes `f` from `x0`. Non-finite objective values count as +inf.
    /// Exceeding `max_iterations` is an error carrying the best value seen.
    pub fn minimize<F: FnMut(&[f64]) -> f64>(&self, mut f: F, x0: &[f64]) -> Result<Minimum> {
        let n = x0.len();
        let mut eval = |x: &[f64]| {
            let v = f(x);
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        };
        if n == 0 {
            let value = eval(x0);
            return Ok(Minimum {
                x: Vec::new(),
                value,
                iterations: 0,
            });
        }

        let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        simplex.push(x0.to_vec());
        for i in 0..n {
            let mut p = x0.to_vec();
            let step = if p[i].abs() > 1.0 {
                self.initial_step * p[i].abs()
            } else {
                self.initial_step
            };
            p[i] += step;
            simplex.push(p);
        }
        let mut values: Vec<f64> = simplex.iter().map(|p| eval(p)).collect();
        if values[0] == f64::INFINITY {
            return Err(ForecastError::InvalidData(
                "objective is not finite at the starting point".into(),
            ));
        }

        let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
        let mut order: Vec<usize> = (0..=n).collect();
        for iteration in 0..=self.max_iterations {
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
            let (best, worst, second) = (order[0], order[n], order[n - 1]);
            let f_low = values[best];
            if values[worst] - f_low <= self.reltol * (f_low.abs() + 1.0) {
                return Ok(Minimum {
                    x: simplex[best].clone(),
                    value: f_low,
                    iterations: iteration,
                });
            }
            if iteration == self.max_iterations {
                return Err(ForecastError::NonConvergence { last_objective: f_low });
            }

            let mut centroid = vec![0.0; n];
            for &i in &order[..n] {
                for (c, x) in centroid.iter_mut().zip(&simplex[i]) {
                    *c += x / n as f64;
                }
            }
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&simplex[worst])
                    .map(|(c, w)| c + t * (w - c))
                    .collect()
            };

            let reflected = along(-alpha);
            let f_r = eval(&reflected);
            if f_r < f_low {
                let expanded = along(-gamma);
                let f_e = eval(&expanded);
                if f_e < f_r {
                    simplex[worst] = expanded;
                    values[worst] = f_e;
                } else {
                    simplex[worst] = reflected;
                    values[worst] = f_r;
                }
                continue;
            }
            if f_r < values[second] {
                simplex[worst] = reflected;
                values[worst] = f_r;
                continue;
            }
            let (contracted, f_c) = if f_r < values[worst] {
                let c = along(-rho);
                let fc = eval(&c);
                (c, fc)
            } else {
                let c = along(rho);
                let fc = eval(&c);
                (c, fc)
            };
            if f_c < values[worst].min(f_r) {
                simplex[worst] = contracted;
                values[worst] = f_c;
                continue;
            }
            let anchor = simplex[best].clone();
            for &i in &order[1..] {
                for (x, a) in simplex[i].iter_mut().zip(&anchor) {
                    *x = a + sigma * (*x - a);
                }
                values[i] = eval(&simplex[i]);
            }
        }
        unreachable!("loop returns on its last iteration")
    }
}
