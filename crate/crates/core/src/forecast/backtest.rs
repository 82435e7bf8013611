//! Snapshot backtest: train on the data as known at each origin, score
//! weekly totals against the values known one to four weeks later.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rayon::prelude::*;
use serde::Serialize;

use super::metrics::ape;
use super::pipeline::{daily_training_series, forecast_series, last_sunday, weekly_training_series, ModelConfig};
use super::series::Frequency;
use super::Result;
use crate::fact_store::{Measure, Store, TimePeriod};

pub const BACKTEST_CSV_HEADER: &str = "model_tag,horizon,mape_percent,n_origins,n_excluded_zero_actuals";
pub const BACKTEST_ENTRIES_CSV_HEADER: &str = "model_tag,region_id,origin,horizon,target_date,forecast,actual,ape";

/// Weeks ahead scored for every origin.
pub const WEEKS: usize = 4;

/// A named model configuration under test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Variant {
    pub tag: String,
    pub frequency: Frequency,
    pub config: ModelConfig,
}

impl Variant {
    pub fn weekly() -> Self {
        Self {
            tag: "weekly".into(),
            frequency: Frequency::Weekly,
            config: ModelConfig::weekly(),
        }
    }

    pub fn daily_with_box_cox() -> Self {
        Self {
            tag: "daily_originT".into(),
            frequency: Frequency::Daily,
            config: ModelConfig::daily(),
        }
    }

    pub fn daily_without_box_cox() -> Self {
        Self {
            tag: "daily_originF".into(),
            frequency: Frequency::Daily,
            config: ModelConfig {
                use_box_cox: false,
                ..ModelConfig::daily()
            },
        }
    }

    /// The weekly model and the daily model with and without Box-Cox.
    pub fn standard_set() -> Vec<Self> {
        vec![Self::weekly(), Self::daily_with_box_cox(), Self::daily_without_box_cox()]
    }
}

/// Every Wednesday in `[from, to]`.
pub fn wednesdays(from: NaiveDate, to: NaiveDate) -> Vec<NaiveDate> {
    let offset = (7 + Weekday::Wed.num_days_from_monday() as i64
        - from.weekday().num_days_from_monday() as i64)
        % 7;
    let mut out = Vec::new();
    let mut day = from + Duration::days(offset);
    while day <= to {
        out.push(day);
        day += Duration::days(7);
    }
    out
}

/// One scored forecast of a weekly total.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestEntry {
    pub model_tag: String,
    pub region_id: String,
    pub origin: NaiveDate,
    pub horizon: usize,
    /// Sunday closing the forecast week.
    pub target_date: NaiveDate,
    pub forecast: f64,
    pub actual: f64,
    /// Absolute percentage error; `None` when the actual is 0.
    pub ape: Option<f64>,
}

/// A forecast origin, or one region/variant at an origin, that was not
/// scored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedOrigin {
    pub origin: NaiveDate,
    pub region_id: Option<String>,
    pub model_tag: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestSummary {
    pub model_tag: String,
    pub horizon: usize,
    /// Mean APE over every scored forecast; `None` if all actuals were 0.
    pub mape_percent: Option<f64>,
    /// Forecasts with a nonzero actual.
    pub n_origins: usize,
    pub n_excluded_zero_actuals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestReport {
    pub schedule: Vec<NaiveDate>,
    pub entries: Vec<BacktestEntry>,
    pub skipped: Vec<SkippedOrigin>,
    pub summary: Vec<BacktestSummary>,
}

impl BacktestReport {
    /// MAPE per (region, horizon) for `model_tag`.
    pub fn region_mape(&self, model_tag: &str) -> BTreeMap<(String, usize), f64> {
        let mut acc: BTreeMap<(String, usize), (f64, usize)> = BTreeMap::new();
        for e in self.entries.iter().filter(|e| e.model_tag == model_tag) {
            if let Some(a) = e.ape {
                let slot = acc.entry((e.region_id.clone(), e.horizon)).or_default();
                slot.0 += a;
                slot.1 += 1;
            }
        }
        acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
    }

    /// Median over regions of the per-region MAPE at `horizon`.
    pub fn median_region_mape(&self, model_tag: &str, horizon: usize) -> Option<f64> {
        let mut values: Vec<f64> = self
            .region_mape(model_tag)
            .into_iter()
            .filter(|((_, h), _)| *h == horizon)
            .map(|(_, v)| v)
            .collect();
        if values.is_empty() {
            return None;
        }
        values.sort_by(f64::total_cmp);
        let mid = values.len() / 2;
        Some(if values.len() % 2 == 1 {
            values[mid]
        } else {
            (values[mid - 1] + values[mid]) / 2.0
        })
    }

    pub fn summary_for(&self, model_tag: &str, horizon: usize) -> Option<&BacktestSummary> {
        self.summary
            .iter()
            .find(|s| s.model_tag == model_tag && s.horizon == horizon)
    }
}

type TaskOutcome = std::result::Result<Vec<BacktestEntry>, SkippedOrigin>;

fn weekly_actual(store: &Store, region_id: &str, measure: Measure, sunday: NaiveDate, version: NaiveDate) -> Option<f64> {
    store
        .query_series(region_id, measure, TimePeriod::Week, sunday, sunday, version)
        .ok()?
        .points
        .first()
        .map(|(_, v)| *v as f64)
}

fn run_task(
    store: &Store,
    region_id: &str,
    measure: Measure,
    origin: NaiveDate,
    variant: &Variant,
) -> TaskOutcome {
    let skip = |reason: String| SkippedOrigin {
        origin,
        region_id: Some(region_id.to_string()),
        model_tag: Some(variant.tag.clone()),
        reason,
    };
    let anchor = last_sunday(origin);
    let sundays: Vec<NaiveDate> = (1..=WEEKS).map(|k| anchor + Duration::days(7 * k as i64)).collect();

    // Weekly totals forecast for each of the scored Sundays.
    let forecasts: Vec<f64> = match variant.frequency {
        Frequency::Weekly => {
            let series = weekly_training_series(store, region_id, measure, origin).map_err(|e| skip(e.to_string()))?;
            let mut config = variant.config.clone();
            let last = *sundays.last().expect("weeks > 0");
            let needed = ((last - series.end()).num_days() / 7).max(1) as usize;
            config.horizons = needed;
            let result =
                forecast_series(&series, origin, &config, &variant.tag).map_err(|e| skip(e.to_string()))?;
            let mut out = Vec::with_capacity(WEEKS);
            for s in &sundays {
                match result.points.iter().find(|p| p.target_date == *s) {
                    Some(p) => out.push(p.point),
                    None => return Err(skip(format!("no weekly forecast for {s}"))),
                }
            }
            out
        }
        Frequency::Daily => {
            let series = daily_training_series(store, region_id, measure, origin, variant.config.trim_days)
                .map_err(|e| skip(e.to_string()))?;
            let last = *sundays.last().expect("weeks > 0");
            let fit_end = series.end();
            if fit_end > last {
                return Err(skip("training data extend past the scored weeks".into()));
            }
            let mut config = variant.config.clone();
            config.horizons = ((last - fit_end).num_days() as usize).max(1);
            let result =
                forecast_series(&series, origin, &config, &variant.tag).map_err(|e| skip(e.to_string()))?;
            let mut by_day: BTreeMap<NaiveDate, f64> = series.observations().collect();
            by_day.extend(result.points.iter().map(|p| (p.target_date, p.point)));
            sundays
                .iter()
                .map(|s| (0..7).map(|i| by_day.get(&(*s - Duration::days(i))).copied().unwrap_or(0.0)).sum())
                .collect()
        }
    };

    let mut entries = Vec::with_capacity(WEEKS);
    for (k, (sunday, forecast)) in sundays.iter().zip(forecasts).enumerate() {
        let test_version = origin + Duration::days(7 * (k as i64 + 1));
        let Some(actual) = weekly_actual(store, region_id, measure, *sunday, test_version) else {
            return Err(skip(format!("no weekly value for {sunday} at version {test_version}")));
        };
        entries.push(BacktestEntry {
            model_tag: variant.tag.clone(),
            region_id: region_id.to_string(),
            origin,
            horizon: k + 1,
            target_date: *sunday,
            forecast,
            actual,
            ape: ape(forecast, actual),
        });
    }
    Ok(entries)
}

/// Runs every variant for every region at every origin. An origin without
/// its training snapshot or any of its four test snapshots is skipped as a
/// whole; fit failures skip only the affected region and variant.
pub fn backtest(
    store: &Store,
    regions: &[String],
    measure: Measure,
    origins: &[NaiveDate],
    variants: &[Variant],
) -> Result<BacktestReport> {
    for v in variants {
        v.config.validate()?;
    }
    let mut skipped = Vec::new();
    let mut usable = Vec::new();
    for &origin in origins {
        let missing: Vec<NaiveDate> = (0..=WEEKS as i64)
            .map(|k| origin + Duration::days(7 * k))
            .filter(|v| !store.has_snapshot(*v))
            .collect();
        if missing.is_empty() {
            usable.push(origin);
        } else {
            let list: Vec<String> = missing.iter().map(|d| d.to_string()).collect();
            skipped.push(SkippedOrigin {
                origin,
                region_id: None,
                model_tag: None,
                reason: format!("missing snapshot(s) {}", list.join(", ")),
            });
        }
    }

    let tasks: Vec<(NaiveDate, &String, &Variant)> = usable
        .iter()
        .flat_map(|o| regions.iter().flat_map(move |r| variants.iter().map(move |v| (*o, r, v))))
        .collect();
    let outcomes: Vec<TaskOutcome> = tasks
        .par_iter()
        .map(|(origin, region, variant)| run_task(store, region, measure, *origin, variant))
        .collect();

    let mut entries = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(mut e) => entries.append(&mut e),
            Err(s) => skipped.push(s),
        }
    }
    entries.sort_by(|a, b| {
        (&a.model_tag, &a.region_id, a.origin, a.horizon).cmp(&(&b.model_tag, &b.region_id, b.origin, b.horizon))
    });
    skipped.sort_by(|a, b| {
        (a.origin, &a.region_id, &a.model_tag, &a.reason).cmp(&(b.origin, &b.region_id, &b.model_tag, &b.reason))
    });

    let mut summary = Vec::new();
    for v in variants {
        for h in 1..=WEEKS {
            let scored: Vec<&BacktestEntry> =
                entries.iter().filter(|e| e.model_tag == v.tag && e.horizon == h).collect();
            let apes: Vec<f64> = scored.iter().filter_map(|e| e.ape).collect();
            summary.push(BacktestSummary {
                model_tag: v.tag.clone(),
                horizon: h,
                mape_percent: (!apes.is_empty()).then(|| apes.iter().sum::<f64>() / apes.len() as f64),
                n_origins: apes.len(),
                n_excluded_zero_actuals: scored.len() - apes.len(),
            });
        }
    }
    Ok(BacktestReport {
        schedule: origins.to_vec(),
        entries,
        skipped,
        summary,
    })
}

/// Writes the per-(variant, horizon) table (see [`BACKTEST_CSV_HEADER`]).
pub fn write_backtest_csv<W: Write>(out: W, report: &BacktestReport) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(BACKTEST_CSV_HEADER.split(','))?;
    for s in &report.summary {
        w.write_record([
            s.model_tag.clone(),
            s.horizon.to_string(),
            s.mape_percent.map(|m| format!("{m:.4}")).unwrap_or_default(),
            s.n_origins.to_string(),
            s.n_excluded_zero_actuals.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes every scored forecast (see [`BACKTEST_ENTRIES_CSV_HEADER`]); the
/// APE column is empty where the actual was 0.
pub fn write_backtest_entries_csv<W: Write>(out: W, report: &BacktestReport) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(BACKTEST_ENTRIES_CSV_HEADER.split(','))?;
    for e in &report.entries {
        w.write_record([
            e.model_tag.clone(),
            e.region_id.clone(),
            e.origin.to_string(),
            e.horizon.to_string(),
            e.target_date.to_string(),
            format!("{:.4}", e.forecast),
            format!("{:.0}", e.actual),
            e.ape.map(|a| format!("{a:.6}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
