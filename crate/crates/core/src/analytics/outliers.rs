use std::io::Write;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{AnalyticsError, Result};
use crate::forecast::TimeSeries;

pub const OUTLIER_CSV_HEADER: &str = "region_id,date,observed,expected,residual,z_score,excess_cases";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutlierConfig {
    /// Width of the centred rolling mean (odd, at least 3).
    pub baseline_window: usize,
    /// Number of preceding residuals used for the standard deviation.
    pub std_window: usize,
    pub z_threshold: f64,
    /// Cap on baseline re-estimation rounds.
    pub max_iterations: usize,
}

impl Default for OutlierConfig {
    fn default() -> Self {
        Self {
            baseline_window: 7,
            std_window: 28,
            z_threshold: 3.0,
            max_iterations: 20,
        }
    }
}

impl OutlierConfig {
    pub fn validate(&self) -> Result<()> {
        check_window(self.baseline_window)?;
        if self.std_window < 2 {
            return Err(AnalyticsError::InvalidParameter(format!(
                "standard deviation window must be at least 2, got {}",
                self.std_window
            )));
        }
        if self.z_threshold.is_nan() || self.z_threshold <= 0.0 {
            return Err(AnalyticsError::InvalidParameter(format!(
                "z threshold must be positive, got {}",
                self.z_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutlierEvent {
    pub region_id: String,
    /// First day of the event whose z-score reaches the threshold.
    pub date: NaiveDate,
    pub observed: f64,
    pub expected: f64,
    pub residual: f64,
    pub z_score: f64,
    /// Sum of positive residuals over the surrounding run of days whose
    /// z-score exceeds half the threshold.
    pub excess_cases: f64,
}

fn check_window(window: usize) -> Result<()> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(AnalyticsError::InvalidParameter(format!(
            "baseline window must be odd and at least 3, got {window}"
        )));
    }
    Ok(())
}

/// Centred rolling mean over `values[t - w/2 ..= t + w/2]`, truncated at the
/// ends of the series.
pub fn rolling_baseline(values: &[f64], window: usize) -> Result<Vec<f64>> {
    check_window(window)?;
    if window > values.len() {
        return Err(AnalyticsError::TooShort {
            needed: window,
            got: values.len(),
        });
    }
    Ok(masked_baseline(values, window, &vec![false; values.len()]))
}

/// Rolling mean that ignores masked days. When a whole window is masked it
/// widens until it reaches an unmasked day.
fn masked_baseline(values: &[f64], window: usize, mask: &[bool]) -> Vec<f64> {
    let n = values.len();
    let any_unmasked = mask.iter().any(|m| !m);
    (0..n)
        .map(|t| {
            let mut half = window / 2;
            loop {
                let (lo, hi) = (t.saturating_sub(half), (t + half).min(n - 1));
                let (sum, count) = (lo..=hi)
                    .filter(|&i| !mask[i] || !any_unmasked)
                    .fold((0.0, 0usize), |(s, c), i| (s + values[i], c + 1));
                if count > 0 {
                    return sum / count as f64;
                }
                half += 1;
            }
        })
        .collect()
}

/// `residuals[t]` divided by the sample standard deviation of the `window`
/// residuals before `t`. `None` for the first `window` days and where that
/// deviation is zero.
pub fn zscores(residuals: &[f64], window: usize) -> Vec<Option<f64>> {
    (0..residuals.len())
        .map(|t| {
            if t < window || window < 2 {
                return None;
            }
            let past = &residuals[t - window..t];
            let mean = past.iter().sum::<f64>() / window as f64;
            let var = past.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (window - 1) as f64;
            let sd = var.sqrt();
            (sd > 0.0).then(|| residuals[t] / sd)
        })
        .collect()
}

struct Pass {
    baseline: Vec<f64>,
    residuals: Vec<f64>,
    z: Vec<Option<f64>>,
    /// Half-open index ranges of runs above half the threshold that contain
    /// a day at or above the threshold.
    runs: Vec<(usize, usize)>,
}

fn pass(values: &[f64], config: &OutlierConfig, mask: &[bool]) -> Pass {
    let baseline = masked_baseline(values, config.baseline_window, mask);
    // Residuals at rounding level are zero; otherwise a flat series far from
    // the origin produces arbitrary z-scores.
    let residuals: Vec<f64> = values
        .iter()
        .zip(&baseline)
        .map(|(y, b)| {
            let r = y - b;
            if r.abs() <= 1e-9 * y.abs().max(b.abs()).max(1.0) {
                0.0
            } else {
                r
            }
        })
        .collect();
    let z = zscores(&residuals, config.std_window);
    let above = |t: usize, level: f64| z[t].is_some_and(|z| z >= level);
    let half = config.z_threshold / 2.0;
    let mut runs = Vec::new();
    let mut t = 0;
    while t < values.len() {
        if z[t].is_some_and(|z| z > half) {
            let start = t;
            while t < values.len() && z[t].is_some_and(|z| z > half) {
                t += 1;
            }
            if (start..t).any(|i| above(i, config.z_threshold)) {
                runs.push((start, t));
            }
        } else {
            t += 1;
        }
    }
    Pass {
        baseline,
        residuals,
        z,
        runs,
    }
}

/// Z-score outliers of a daily series against a rolling-mean baseline.
///
/// Days belonging to a detected event are left out of the baseline and the
/// detection is repeated until the set of event days no longer changes, so a
/// multi-day burst does not inflate its own expected value. Each contiguous
/// run yields one event dated at its first day at or above the threshold.
pub fn detect_outliers(series: &TimeSeries, config: &OutlierConfig) -> Result<Vec<OutlierEvent>> {
    config.validate()?;
    let values = &series.values;
    let needed = 2 * config.std_window.max(config.baseline_window);
    if values.len() < needed {
        return Err(AnalyticsError::TooShort {
            needed,
            got: values.len(),
        });
    }

    let mut mask = vec![false; values.len()];
    let mut current = pass(values, config, &mask);
    for _ in 0..config.max_iterations {
        let mut next_mask = vec![false; values.len()];
        for &(a, b) in &current.runs {
            next_mask[a..b].iter_mut().for_each(|m| *m = true);
        }
        if next_mask == mask {
            break;
        }
        mask = next_mask;
        current = pass(values, config, &mask);
    }

    if current.z.iter().all(Option::is_none) {
        log::warn!(
            "{}: residuals have zero variance; no outliers can be scored",
            series.region_id
        );
        return Ok(Vec::new());
    }

    Ok(current
        .runs
        .iter()
        .map(|&(a, b)| {
            let onset = (a..b)
                .find(|&t| current.z[t].is_some_and(|z| z >= config.z_threshold))
                .expect("runs contain a day at the threshold");
            OutlierEvent {
                region_id: series.region_id.clone(),
                date: series.date_at(onset),
                observed: values[onset],
                expected: current.baseline[onset],
                residual: current.residuals[onset],
                z_score: current.z[onset].unwrap_or_default(),
                excess_cases: current.residuals[a..b].iter().map(|r| r.max(0.0)).sum(),
            }
        })
        .collect())
}

pub fn write_outliers_csv<W: Write>(out: W, events: &[OutlierEvent]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(OUTLIER_CSV_HEADER.split(','))?;
    for e in events {
        w.write_record([
            e.region_id.clone(),
            e.date.to_string(),
            e.observed.to_string(),
            format!("{:.4}", e.expected),
            format!("{:.4}", e.residual),
            format!("{:.4}", e.z_score),
            format!("{:.4}", e.excess_cases),
        ])?;
    }
    w.flush()?;
    Ok(())
}
