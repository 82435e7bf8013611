//! Roll-ups along the temporal (day -> week) and spatial (child -> parent
//! region) dimensions. Results are written back under the requested version.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use log::warn;

use super::store::{SeriesKey, Store};
use super::types::*;
use super::{Result, StoreError};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TemporalAggregation {
    /// Week rows as computed, ascending by date.
    pub rows: Vec<DataValue>,
    pub merge: MergeReport,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpatialAggregation {
    /// Rows computed for every level processed, lowest level first.
    pub rows: Vec<DataValue>,
    pub merge: MergeReport,
    /// Child regions without a parent mapping; their values were not summed.
    pub orphans: Vec<String>,
}

/// Sums daily points into Monday–Sunday weeks keyed by the closing Sunday.
/// Days without a point contribute 0.
pub fn weekly_sums(points: &[(NaiveDate, u64)]) -> BTreeMap<NaiveDate, u64> {
    let mut weeks = BTreeMap::new();
    for (date, value) in points {
        *weeks.entry(week_ending(*date)).or_insert(0) += value;
    }
    weeks
}

impl Store {
    /// Builds week rows for one region and measure from the daily rows
    /// visible at `version`, and writes them back under `version`.
    pub fn aggregate_temporal(
        &mut self,
        region_id: &str,
        measure: Measure,
        version: NaiveDate,
    ) -> Result<TemporalAggregation> {
        if self.region(region_id).is_none() {
            return Err(StoreError::UnknownRegion(region_id.to_string()));
        }
        self.check_version(version)?;
        let key = SeriesKey {
            region_id: region_id.to_string(),
            period: TimePeriod::Day,
            measure,
        };
        let daily = self.visible_points(&key, NaiveDate::MIN, NaiveDate::MAX, version);
        if daily.is_empty() {
            return Err(StoreError::NoDailyData {
                region_id: region_id.to_string(),
                measure,
            });
        }
        let rows: Vec<DataValue> = weekly_sums(&daily)
            .into_iter()
            .map(|(sunday, value)| DataValue {
                region_id: region_id.to_string(),
                date: sunday,
                period: TimePeriod::Week,
                measure,
                value,
                version,
            })
            .collect();
        let merge = self.upsert_values(&rows, version)?;
        Ok(TemporalAggregation { rows, merge })
    }

    /// Sums child values into every region of `parent_type`, one hierarchy
    /// level at a time starting from the finest level mapped below it.
    ///
    /// A region that has mapped children takes the sum of its children at
    /// each date any child has data; a region without children keeps its own
    /// rows and counts as a leaf. Children lacking a parent are reported as
    /// orphans and skipped.
    pub fn aggregate_spatial(
        &mut self,
        parent_type: RegionTypeId,
        measure: Measure,
        period: TimePeriod,
        version: NaiveDate,
    ) -> Result<SpatialAggregation> {
        if self.region_type(parent_type).is_none() {
            return Err(StoreError::UnknownRegionType(parent_type.0));
        }
        self.check_version(version)?;

        // Mapping chain from `parent_type` downwards, then walked bottom-up.
        let mut chain = Vec::new();
        let mut current = parent_type;
        while let Some(m) = self.mapping_type_into(current) {
            chain.push(m.clone());
            current = m.child_type;
        }
        chain.reverse();

        self.transaction(|s| {
            let mut outcome = SpatialAggregation::default();
            for mapping in &chain {
                let mut sums: BTreeMap<(String, NaiveDate), u64> = BTreeMap::new();
                let children: Vec<String> = s
                    .regions_of_type(mapping.child_type)
                    .map(|r| r.region_id.clone())
                    .collect();
                for child in children {
                    let Some(parent) = s.parent_of(&child, mapping.id).map(str::to_string) else {
                        if s.has_series(&child, measure, period) {
                            warn!("{child} has no parent under {}; skipped", mapping.name);
                        }
                        outcome.orphans.push(child);
                        continue;
                    };
                    let key = SeriesKey {
                        region_id: child,
                        period,
                        measure,
                    };
                    for (date, value) in
                        s.visible_points(&key, NaiveDate::MIN, NaiveDate::MAX, version)
                    {
                        *sums.entry((parent.clone(), date)).or_insert(0) += value;
                    }
                }
                let rows: Vec<DataValue> = sums
                    .into_iter()
                    .map(|((region_id, date), value)| DataValue {
                        region_id,
                        date,
                        period,
                        measure,
                        value,
                        version,
                    })
                    .collect();
                outcome.merge += s.upsert_values(&rows, version)?;
                outcome.rows.extend(rows);
            }
            Ok(outcome)
        })
    }
}
