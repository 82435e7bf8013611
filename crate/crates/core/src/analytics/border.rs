use std::io::Write;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::Serialize;

use super::correlation::lagged_correlation;
use super::geo::{neighbors_within, NeighborSet};
use super::{daily_values, AnalyticsError, Result, Scale};
use crate::fact_store::{CountryCode, Measure, Region, Store};
use crate::forecast::{Frequency, TimeSeries};

pub const BORDER_CSV_HEADER: &str = "region_id,avg_corr_within,avg_corr_cross,difference,n_within,n_cross";

#[derive(Debug, Clone, PartialEq)]
pub struct BorderConfig {
    pub radius_km: f64,
    pub max_lag: u32,
    pub measure: Measure,
    pub from: NaiveDate,
    pub to: NaiveDate,
    pub version: NaiveDate,
    pub scale: Scale,
}

impl BorderConfig {
    pub fn new(measure: Measure, from: NaiveDate, to: NaiveDate, version: NaiveDate) -> Self {
        Self {
            radius_km: 100.0,
            max_lag: 14,
            measure,
            from,
            to,
            version,
            scale: Scale::Incidence,
        }
    }
}

/// Average best lagged correlation with same-country and with cross-country
/// neighbours. `difference = avg_corr_cross - avg_corr_within`; positive
/// values mean the region moves more closely with its foreign neighbours.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BorderEffectRecord {
    pub region_id: String,
    pub avg_corr_within: f64,
    /// `None` when no foreign region lies within the radius.
    pub avg_corr_cross: Option<f64>,
    pub difference: Option<f64>,
    pub n_within: usize,
    pub n_cross: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedRegion {
    pub region_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BorderReport {
    /// Ordered by region id.
    pub records: Vec<BorderEffectRecord>,
    pub skipped: Vec<SkippedRegion>,
}

impl BorderReport {
    /// Records with at least one cross-country neighbour.
    pub fn exportable(&self) -> impl Iterator<Item = &BorderEffectRecord> {
        self.records.iter().filter(|r| r.n_cross > 0)
    }
}

fn level_of(store: &Store, region: &Region) -> Option<u8> {
    store.region_type(region.region_type_id).map(|t| t.level)
}

fn series(store: &Store, region_id: &str, config: &BorderConfig) -> Result<TimeSeries> {
    let values = daily_values(store, region_id, config.measure, config.from, config.to, config.version, config.scale)?;
    TimeSeries::new(region_id, config.measure, Frequency::Daily, config.from, values)
        .map_err(|e| AnalyticsError::InvalidParameter(e.to_string()))
}

fn validate(config: &BorderConfig) -> Result<()> {
    if !(config.radius_km >= 0.0 && config.radius_km.is_finite()) {
        return Err(AnalyticsError::InvalidParameter(format!(
            "radius must be a finite non-negative distance, got {}",
            config.radius_km
        )));
    }
    if config.from > config.to {
        return Err(AnalyticsError::InvalidParameter(format!(
            "date range {} .. {} is empty",
            config.from, config.to
        )));
    }
    Ok(())
}

fn record_for(store: &Store, focal: &Region, neighbors: &NeighborSet, config: &BorderConfig) -> Result<BorderEffectRecord> {
    if neighbors.is_empty() {
        return Err(AnalyticsError::NoNeighbors(focal.region_id.clone()));
    }
    if neighbors.within_country().next().is_none() {
        return Err(AnalyticsError::NoWithinNeighbors(focal.region_id.clone()));
    }
    let own = series(store, &focal.region_id, config)?;
    let (mut within, mut cross) = (Vec::new(), Vec::new());
    for n in &neighbors.neighbors {
        let other = series(store, &n.region_id, config)?;
        let best = lagged_correlation(&own, &other, config.max_lag)?;
        if n.same_country {
            within.push(best.corr);
        } else {
            cross.push(best.corr);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let avg_corr_within = mean(&within);
    let avg_corr_cross = (!cross.is_empty()).then(|| mean(&cross));
    Ok(BorderEffectRecord {
        region_id: focal.region_id.clone(),
        avg_corr_within,
        avg_corr_cross,
        difference: avg_corr_cross.map(|c| c - avg_corr_within),
        n_within: within.len(),
        n_cross: cross.len(),
    })
}

/// Border-effect record for one region, comparing it with regions of the
/// same hierarchy level.
pub fn border_effect(store: &Store, region_id: &str, config: &BorderConfig) -> Result<BorderEffectRecord> {
    validate(config)?;
    let focal = store
        .region(region_id)
        .ok_or_else(|| crate::fact_store::StoreError::UnknownRegion(region_id.to_string()))?;
    let level = level_of(store, focal);
    let candidates = store.regions().filter(|r| level_of(store, r) == level);
    let neighbors = neighbors_within(focal, candidates, config.radius_km);
    record_for(store, focal, &neighbors, config)
}

/// Border-effect records for every region of the given countries (all
/// countries when `countries` is empty). Neighbours are drawn from the same
/// countries and hierarchy level. Regions that cannot be scored are listed
/// in `skipped` with the reason.
pub fn border_effects(store: &Store, countries: &[CountryCode], config: &BorderConfig) -> Result<BorderReport> {
    validate(config)?;
    let in_scope = |r: &Region| countries.is_empty() || r.country().is_some_and(|c| countries.contains(&c));
    let mut regions: Vec<&Region> = store.regions().filter(|r| in_scope(r)).collect();
    regions.sort_by(|a, b| a.region_id.cmp(&b.region_id));

    let outcomes: Vec<(String, Result<BorderEffectRecord>)> = regions
        .par_iter()
        .map(|focal| {
            let level = level_of(store, focal);
            let candidates = regions.iter().copied().filter(|r| level_of(store, r) == level);
            let neighbors = neighbors_within(focal, candidates, config.radius_km);
            (focal.region_id.clone(), record_for(store, focal, &neighbors, config))
        })
        .collect();

    let mut report = BorderReport::default();
    for (region_id, outcome) in outcomes {
        match outcome {
            Ok(record) => report.records.push(record),
            Err(e @ (AnalyticsError::Store(_) | AnalyticsError::Io(_) | AnalyticsError::Csv(_))) => return Err(e),
            Err(e) => {
                log::debug!("border effect for {region_id} skipped: {e}");
                report.skipped.push(SkippedRegion {
                    region_id,
                    reason: e.to_string(),
                });
            }
        }
    }
    Ok(report)
}

/// Writes records with at least one cross-country neighbour.
pub fn write_border_csv<W: Write>(out: W, report: &BorderReport) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(BORDER_CSV_HEADER.split(','))?;
    for r in report.exportable() {
        let (Some(cross), Some(diff)) = (r.avg_corr_cross, r.difference) else {
            continue;
        };
        w.write_record([
            r.region_id.clone(),
            format!("{:.6}", r.avg_corr_within),
            format!("{cross:.6}"),
            format!("{diff:.6}"),
            r.n_within.to_string(),
            r.n_cross.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
