use std::collections::{BTreeSet, HashSet};

use chrono::NaiveDate;
use log::warn;
use serde::Serialize;

use super::config::{Dictionary, SourceDescriptor};
use super::parse::parse_source;
use super::resolve::{normalize_region_id, resolve_regions};
use super::{EtlError, Reject, Result};
use crate::fact_store::{
    is_sunday, Centroid, DataValue, Measure, MergeReport, Region, RegionTypeId, Store, TimePeriod,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Parse,
    Resolve,
    Normalize,
    Merge,
    AggregateTemporal,
    AggregateSpatial,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestReport {
    pub source_id: String,
    pub version: NaiveDate,
    /// (row, measure) cells read from the payload.
    pub rows_read: usize,
    pub rows_merged: MergeReport,
    pub rows_rejected: Vec<Reject>,
    pub temporal: MergeReport,
    pub spatial: MergeReport,
    pub orphans: Vec<String>,
    pub notes: Vec<String>,
    /// Phases in the order they ran.
    pub phases: Vec<Phase>,
}

/// A payload that has been parsed, resolved and normalized but not yet
/// written. Preparing is pure, so several sources can be prepared in
/// parallel and committed one at a time.
#[derive(Debug, Clone)]
pub struct PreparedJob {
    pub source_id: String,
    pub period: TimePeriod,
    pub dictionary: Dictionary,
    /// (region id, date, measure, value), in payload order.
    pub observations: Vec<(String, NaiveDate, Measure, u64)>,
    pub rejects: Vec<Reject>,
    pub cells_read: usize,
    pub phases: Vec<Phase>,
}

pub fn prepare_job(
    descriptor: &SourceDescriptor,
    dictionary: &Dictionary,
    payload: &[u8],
) -> Result<PreparedJob> {
    descriptor.validate()?;
    if dictionary.country != descriptor.country
        || !dictionary.level.eq_ignore_ascii_case(&descriptor.spatial_level)
    {
        return Err(EtlError::Config(format!(
            "dictionary {} {} does not match source {} ({} {})",
            dictionary.country,
            dictionary.level,
            descriptor.source_id,
            descriptor.country,
            descriptor.spatial_level
        )));
    }
    let mut phases = vec![Phase::Parse];
    let parsed = parse_source(descriptor, payload)?;
    let cells_read = parsed.cells_read();
    let mut rejects = parsed.rejects;

    phases.push(Phase::Resolve);
    let resolution = resolve_regions(parsed.records, dictionary);
    for (record, reason) in resolution.unresolved {
        rejects.push(Reject {
            row_index: record.row_index,
            reason,
            raw_region_key: record.region_key,
            raw_date: record.date.to_string(),
        });
    }

    phases.push(Phase::Normalize);
    let country = descriptor.country.as_str();
    let mut seen = HashSet::new();
    let mut observations = Vec::with_capacity(resolution.resolved.len());
    for r in resolution.resolved {
        let region_id = normalize_region_id(country, &r.intrinsic_id)?;
        let rec = r.record;
        let reason = if descriptor.timeperiod == TimePeriod::Week && !is_sunday(rec.date) {
            Some("week date is not a Sunday")
        } else if !seen.insert((region_id.clone(), rec.date, rec.measure)) {
            Some("duplicate key")
        } else {
            None
        };
        match reason {
            Some(reason) => rejects.push(Reject {
                row_index: rec.row_index,
                reason: reason.into(),
                raw_region_key: rec.region_key,
                raw_date: rec.date.to_string(),
            }),
            None => observations.push((region_id, rec.date, rec.measure, rec.value)),
        }
    }
    rejects.sort_by_key(|r| r.row_index);

    Ok(PreparedJob {
        source_id: descriptor.source_id.clone(),
        period: descriptor.timeperiod,
        dictionary: dictionary.clone(),
        observations,
        rejects,
        cells_read,
        phases,
    })
}

/// Registers every dictionary entry as a region and maps it onto its parent
/// when the parent is known. Returns warnings for parents not registered.
pub fn register_dictionary(store: &mut Store, dictionary: &Dictionary) -> Result<Vec<String>> {
    let region_type = store
        .region_type_by_name(dictionary.country, &dictionary.level)
        .cloned()
        .ok_or_else(|| {
            EtlError::Config(format!(
                "region type {} is not configured for {}",
                dictionary.level, dictionary.country
            ))
        })?;
    store.transaction(|s| {
        let mut warnings = Vec::new();
        let country = dictionary.country.as_str();
        for e in &dictionary.entries {
            let region_id = normalize_region_id(country, &e.intrinsic_id)?;
            s.register_region(Region {
                region_id: region_id.clone(),
                name: e.name.trim().to_string(),
                abbreviation: e.abbreviation.clone(),
                region_type_id: region_type.id,
                centroid: Centroid::new(e.lat, e.lon),
                population: e.population,
            })?;
            let Some(parent) = &e.parent else { continue };
            let parent_id = normalize_region_id(country, parent)?;
            if s.region(&parent_id).is_none() {
                let msg = format!("parent {parent_id} of {region_id} is not registered");
                warn!("{msg}");
                warnings.push(msg);
                continue;
            }
            let mapping = s.ensure_parent_mapping_type(region_type.id)?;
            s.register_mapping(&region_id, &parent_id, mapping)?;
        }
        Ok(warnings)
    })
}

fn country_root(store: &Store, dictionary: &Dictionary) -> Option<RegionTypeId> {
    store.region_type_at_level(dictionary.country, 0).map(|t| t.id)
}

/// Writes a prepared job under snapshot `version` as one transaction.
pub fn commit_job(prepared: PreparedJob, store: &mut Store, version: NaiveDate) -> Result<IngestReport> {
    let PreparedJob {
        source_id,
        period,
        dictionary,
        observations,
        rejects,
        cells_read,
        mut phases,
    } = prepared;

    store.transaction(|s| {
        let mut notes = register_dictionary(s, &dictionary)?;

        phases.push(Phase::Merge);
        let batch: Vec<DataValue> = observations
            .iter()
            .map(|(region_id, date, measure, value)| DataValue {
                region_id: region_id.clone(),
                date: *date,
                period,
                measure: *measure,
                value: *value,
                version,
            })
            .collect();
        let rows_merged = s.upsert_values(&batch, version)?;

        let touched: BTreeSet<(&str, Measure)> = observations
            .iter()
            .map(|(r, _, m, _)| (r.as_str(), *m))
            .collect();
        let measures: BTreeSet<Measure> = touched.iter().map(|(_, m)| *m).collect();

        phases.push(Phase::AggregateTemporal);
        let mut temporal = MergeReport::default();
        if period == TimePeriod::Day {
            for (region_id, measure) in &touched {
                temporal += s.aggregate_temporal(region_id, *measure, version)?.merge;
            }
        } else if !touched.is_empty() {
            notes.push(format!("{source_id} reports weekly data; no temporal roll-up"));
        }

        phases.push(Phase::AggregateSpatial);
        let mut spatial = MergeReport::default();
        let mut orphans = BTreeSet::new();
        if let Some(root) = country_root(s, &dictionary) {
            let periods: &[TimePeriod] = match period {
                TimePeriod::Day => &TimePeriod::ALL,
                TimePeriod::Week => &[TimePeriod::Week],
            };
            for measure in &measures {
                for p in periods {
                    let agg = s.aggregate_spatial(root, *measure, *p, version)?;
                    spatial += agg.merge;
                    orphans.extend(agg.orphans);
                }
            }
        }

        Ok(IngestReport {
            source_id: source_id.clone(),
            version,
            rows_read: cells_read,
            rows_merged,
            rows_rejected: rejects.clone(),
            temporal,
            spatial,
            orphans: orphans.into_iter().collect(),
            notes,
            phases: phases.clone(),
        })
    })
}

/// Parses, resolves, normalizes and merges one payload, then rolls the
/// merged data up in time and space. Either the whole job commits or the
/// store is left untouched.
pub fn run_job(
    descriptor: &SourceDescriptor,
    dictionary: &Dictionary,
    payload: &[u8],
    version: NaiveDate,
    store: &mut Store,
) -> Result<IngestReport> {
    let prepared = prepare_job(descriptor, dictionary, payload)?;
    commit_job(prepared, store, version)
}
