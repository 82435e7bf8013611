use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use super::persist::{self, WriterLock};
use super::types::*;
use super::{Result, StoreError};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub(crate) struct SeriesKey {
    pub region_id: String,
    pub period: TimePeriod,
    pub measure: Measure,
}

/// date -> version -> value
pub(crate) type VersionedSeries = BTreeMap<NaiveDate, BTreeMap<NaiveDate, u64>>;

#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct Dimensions {
    pub region_types: Vec<RegionType>,
    pub regions: BTreeMap<String, Region>,
    pub mapping_types: Vec<MappingType>,
    /// (mapping type, child) -> parent
    pub mappings: BTreeMap<(MappingTypeId, String), String>,
}

#[derive(Debug)]
enum Undo {
    Row {
        key: SeriesKey,
        date: NaiveDate,
        version: NaiveDate,
        prev: Option<u64>,
    },
    Snapshot(NaiveDate),
    RegionTypePushed,
    MappingTypePushed,
    RegionInserted(String),
    MappingInserted((MappingTypeId, String)),
}

#[derive(Debug, Default)]
struct Dirty {
    dimensions: bool,
    manifest: bool,
    versions: BTreeSet<NaiveDate>,
}

/// The fact store. Writes go through `&mut self` and are committed atomically
/// per call, or per [`Store::transaction`] when grouped; reads take `&self`
/// and only ever see committed state.
#[derive(Debug)]
pub struct Store {
    root: Option<PathBuf>,
    read_only: bool,
    pub(crate) dims: Dimensions,
    pub(crate) facts: BTreeMap<SeriesKey, VersionedSeries>,
    snapshots: BTreeSet<NaiveDate>,
    journal: Vec<Undo>,
    tx_depth: usize,
    dirty: Dirty,
    _lock: Option<WriterLock>,
}

impl Store {
    /// A store that lives only in memory.
    pub fn in_memory() -> Self {
        Self {
            root: None,
            read_only: false,
            dims: Dimensions::default(),
            facts: BTreeMap::new(),
            snapshots: BTreeSet::new(),
            journal: Vec::new(),
            tx_depth: 0,
            dirty: Dirty::default(),
            _lock: None,
        }
    }

    /// Opens (creating if needed) a store directory for writing. Holds the
    /// directory's writer lock until dropped.
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        std::fs::create_dir_all(&root)?;
        let lock = WriterLock::acquire(&root)?;
        let mut store = Self::load(root)?;
        store._lock = Some(lock);
        Ok(store)
    }

    /// Opens an existing store directory for queries only.
    pub fn open_read_only(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        if !root.is_dir() {
            return Err(StoreError::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("store directory {} does not exist", root.display()),
            )));
        }
        let mut store = Self::load(root)?;
        store.read_only = true;
        Ok(store)
    }

    fn load(root: PathBuf) -> Result<Self> {
        let loaded = persist::load(&root)?;
        let mut store = Self::in_memory();
        store.dims = loaded.dimensions;
        store.snapshots = loaded.snapshots;
        for row in loaded.rows {
            let key = SeriesKey {
                region_id: row.region_id,
                period: row.period,
                measure: row.measure,
            };
            store
                .facts
                .entry(key)
                .or_default()
                .entry(row.date)
                .or_default()
                .insert(row.version, row.value);
        }
        store.root = Some(root);
        Ok(store)
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn is_read_only(&self) -> bool {
        self.read_only
    }

    // ---------------------------------------------------------------------
    // transactions

    /// Runs `f` as one atomic unit: if it returns `Err`, every change it made
    /// is undone; if it returns `Ok`, the changes are committed (and flushed to
    /// disk for a file-backed store). Nested calls join the outer unit.
    pub fn transaction<T, E>(&mut self, f: impl FnOnce(&mut Store) -> Result<T, E>) -> Result<T, E>
    where
        E: From<StoreError>,
    {
        if self.read_only {
            return Err(StoreError::ReadOnly.into());
        }
        let mark = self.journal.len();
        self.tx_depth += 1;
        let outcome = f(self);
        self.tx_depth -= 1;
        match outcome {
            Ok(value) => {
                if self.tx_depth == 0 {
                    if let Err(err) = self.flush() {
                        self.rollback_to(0);
                        return Err(err.into());
                    }
                    self.journal.clear();
                }
                Ok(value)
            }
            Err(err) => {
                self.rollback_to(mark);
                Err(err)
            }
        }
    }

    fn rollback_to(&mut self, mark: usize) {
        while self.journal.len() > mark {
            match self.journal.pop().expect("journal entry") {
                Undo::Row {
                    key,
                    date,
                    version,
                    prev,
                } => {
                    let series = self.facts.get_mut(&key).expect("journaled series");
                    let versions = series.get_mut(&date).expect("journaled date");
                    match prev {
                        Some(v) => {
                            versions.insert(version, v);
                        }
                        None => {
                            versions.remove(&version);
                            if versions.is_empty() {
                                series.remove(&date);
                                if series.is_empty() {
                                    self.facts.remove(&key);
                                }
                            }
                        }
                    }
                }
                Undo::Snapshot(version) => {
                    self.snapshots.remove(&version);
                }
                Undo::RegionTypePushed => {
                    self.dims.region_types.pop();
                }
                Undo::MappingTypePushed => {
                    self.dims.mapping_types.pop();
                }
                Undo::RegionInserted(id) => {
                    self.dims.regions.remove(&id);
                }
                Undo::MappingInserted(key) => {
                    self.dims.mappings.remove(&key);
                }
            }
        }
    }

    fn flush(&mut self) -> Result<()> {
        let Some(root) = self.root.clone() else {
            self.dirty = Dirty::default();
            return Ok(());
        };
        let mut staged = Vec::new();
        for version in &self.dirty.versions {
            let rows: Vec<DataValue> = self.rows().filter(|r| r.version == *version).collect();
            staged.push(persist::stage_version_file(&root, *version, &rows)?);
        }
        if self.dirty.dimensions {
            staged.push(persist::stage_dimensions(&root, &self.dims)?);
        }
        if self.dirty.manifest || !staged.is_empty() {
            staged.push(persist::stage_manifest(&root, &self.snapshots)?);
        }
        persist::commit_staged(staged)?;
        self.dirty = Dirty::default();
        Ok(())
    }

    fn touch_dimensions(&mut self, undo: Undo) {
        if self.tx_depth > 0 {
            self.journal.push(undo);
        }
        self.dirty.dimensions = true;
    }

    fn put_row(&mut self, key: SeriesKey, date: NaiveDate, version: NaiveDate, value: u64) {
        let prev = self
            .facts
            .entry(key.clone())
            .or_default()
            .entry(date)
            .or_default()
            .insert(version, value);
        if self.tx_depth > 0 {
            self.journal.push(Undo::Row {
                key,
                date,
                version,
                prev,
            });
        }
        self.dirty.versions.insert(version);
    }

    fn add_snapshot(&mut self, version: NaiveDate) {
        if self.snapshots.insert(version) {
            if self.tx_depth > 0 {
                self.journal.push(Undo::Snapshot(version));
            }
            self.dirty.manifest = true;
        }
    }

    // ---------------------------------------------------------------------
    // dimensions

    /// Registers one level of a country's hierarchy. Levels must be added
    /// top-down (0 first) so that they stay contiguous.
    pub fn register_region_type(
        &mut self,
        name: &str,
        country: CountryCode,
        level: u8,
    ) -> Result<RegionTypeId> {
        if let Some(existing) = self
            .dims
            .region_types
            .iter()
            .find(|t| t.country == country && t.name == name)
        {
            if existing.level == level {
                return Ok(existing.id);
            }
            return Err(StoreError::Conflict {
                what: "region type",
                key: format!("{country}/{name}"),
            });
        }
        let invalid = |reason| StoreError::InvalidRegionType {
            name: name.to_string(),
            country,
            level,
            reason,
        };
        if name.trim().is_empty() {
            return Err(invalid("empty name"));
        }
        let levels: BTreeSet<u8> = self
            .dims
            .region_types
            .iter()
            .filter(|t| t.country == country)
            .map(|t| t.level)
            .collect();
        if levels.contains(&level) {
            return Err(invalid("level already taken"));
        }
        if level > 0 && !levels.contains(&(level - 1)) {
            return Err(invalid("levels must be contiguous from 0"));
        }
        self.transaction(|s| {
            s.touch_dimensions(Undo::RegionTypePushed);
            let id = RegionTypeId(s.dims.region_types.len() as u32 + 1);
            s.dims.region_types.push(RegionType {
                id,
                name: name.to_string(),
                country,
                level,
            });
            Ok(id)
        })
    }

    pub fn region_types(&self) -> &[RegionType] {
        &self.dims.region_types
    }

    pub fn region_type(&self, id: RegionTypeId) -> Option<&RegionType> {
        self.dims.region_types.iter().find(|t| t.id == id)
    }

    pub fn region_type_by_name(&self, country: CountryCode, name: &str) -> Option<&RegionType> {
        self.dims
            .region_types
            .iter()
            .find(|t| t.country == country && t.name.eq_ignore_ascii_case(name))
    }

    pub fn region_type_at_level(&self, country: CountryCode, level: u8) -> Option<&RegionType> {
        self.dims
            .region_types
            .iter()
            .find(|t| t.country == country && t.level == level)
    }

    fn require_region_type(&self, id: RegionTypeId) -> Result<&RegionType> {
        self.region_type(id).ok_or(StoreError::UnknownRegionType(id.0))
    }

    /// Registers the one-step-up mapping between two region types.
    /// Idempotent for an identical (name, child, parent) triple. Names are
    /// unique within a country.
    pub fn register_mapping_type(
        &mut self,
        name: &str,
        child_type: RegionTypeId,
        parent_type: RegionTypeId,
    ) -> Result<MappingTypeId> {
        let child = self.require_region_type(child_type)?.clone();
        let parent = self.require_region_type(parent_type)?.clone();
        if child.country != parent.country {
            return Err(StoreError::InvalidMapping(format!(
                "{} and {} belong to different countries",
                child.name, parent.name
            )));
        }
        if child.level != parent.level + 1 {
            return Err(StoreError::InvalidMapping(format!(
                "{} (level {}) is not one level below {} (level {})",
                child.name, child.level, parent.name, parent.level
            )));
        }
        if let Some(existing) = self
            .dims
            .mapping_types
            .iter()
            .find(|m| m.child_type == child_type && m.parent_type == parent_type)
        {
            if existing.name == name {
                return Ok(existing.id);
            }
            return Err(StoreError::Conflict {
                what: "mapping type",
                key: existing.name.clone(),
            });
        }
        let same_country = |m: &MappingType| {
            self.region_type(m.child_type)
                .is_some_and(|t| t.country == child.country)
        };
        if self.dims.mapping_types.iter().any(|m| m.name == name && same_country(m)) {
            return Err(StoreError::Conflict {
                what: "mapping type",
                key: name.to_string(),
            });
        }
        self.transaction(|s| {
            s.touch_dimensions(Undo::MappingTypePushed);
            let id = MappingTypeId(s.dims.mapping_types.len() as u32 + 1);
            s.dims.mapping_types.push(MappingType {
                id,
                name: name.to_string(),
                child_type,
                parent_type,
            });
            Ok(id)
        })
    }

    /// Registers the mapping type between `child_type` and the level directly
    /// above it, named `<Child>_To_<Parent>`.
    pub fn ensure_parent_mapping_type(&mut self, child_type: RegionTypeId) -> Result<MappingTypeId> {
        let child = self.require_region_type(child_type)?.clone();
        if child.level == 0 {
            return Err(StoreError::InvalidMapping(format!(
                "{} is a national level and has no parent",
                child.name
            )));
        }
        let parent = self
            .region_type_at_level(child.country, child.level - 1)
            .cloned()
            .ok_or(StoreError::InvalidMapping(format!(
                "no region type above {}",
                child.name
            )))?;
        if let Some(existing) = self.mapping_type_between(child_type, parent.id) {
            return Ok(existing.id);
        }
        let name = format!("{}_To_{}", child.name, parent.name);
        self.register_mapping_type(&name, child_type, parent.id)
    }

    pub fn mapping_types(&self) -> &[MappingType] {
        &self.dims.mapping_types
    }

    pub fn mapping_type(&self, id: MappingTypeId) -> Option<&MappingType> {
        self.dims.mapping_types.iter().find(|m| m.id == id)
    }

    pub fn mapping_type_between(
        &self,
        child_type: RegionTypeId,
        parent_type: RegionTypeId,
    ) -> Option<&MappingType> {
        self.dims
            .mapping_types
            .iter()
            .find(|m| m.child_type == child_type && m.parent_type == parent_type)
    }

    /// Mapping type whose parent side is `parent_type`, if any.
    pub fn mapping_type_into(&self, parent_type: RegionTypeId) -> Option<&MappingType> {
        self.dims
            .mapping_types
            .iter()
            .find(|m| m.parent_type == parent_type)
    }

    /// Registers a region. Re-registering an identical region is a no-op.
    pub fn register_region(&mut self, region: Region) -> Result<String> {
        let region_type = self.require_region_type(region.region_type_id)?;
        let country = region_type.country;
        if region.region_id.len() <= 2 || !region.region_id.starts_with(country.as_str()) {
            return Err(StoreError::RegionPrefix {
                region_id: region.region_id,
                country,
            });
        }
        if !region.centroid.is_valid() {
            return Err(StoreError::InvalidCentroid {
                region_id: region.region_id,
                lat: region.centroid.lat,
                lon: region.centroid.lon,
            });
        }
        if let Some(existing) = self.dims.regions.get(&region.region_id) {
            if *existing == region {
                return Ok(region.region_id);
            }
            return Err(StoreError::Conflict {
                what: "region",
                key: region.region_id,
            });
        }
        self.transaction(|s| {
            let id = region.region_id.clone();
            s.touch_dimensions(Undo::RegionInserted(id.clone()));
            s.dims.regions.insert(id.clone(), region);
            Ok(id)
        })
    }

    pub fn region(&self, region_id: &str) -> Option<&Region> {
        self.dims.regions.get(region_id)
    }

    /// All regions ordered by id.
    pub fn regions(&self) -> impl Iterator<Item = &Region> {
        self.dims.regions.values()
    }

    pub fn regions_of_type(&self, id: RegionTypeId) -> impl Iterator<Item = &Region> {
        self.dims
            .regions
            .values()
            .filter(move |r| r.region_type_id == id)
    }

    fn require_region(&self, region_id: &str) -> Result<&Region> {
        self.region(region_id)
            .ok_or_else(|| StoreError::UnknownRegion(region_id.to_string()))
    }

    /// Maps `child` onto `parent`. A child has at most one parent per mapping
    /// type; re-registering the same pair is a no-op.
    pub fn register_mapping(
        &mut self,
        child_region_id: &str,
        parent_region_id: &str,
        mapping_type_id: MappingTypeId,
    ) -> Result<()> {
        let mapping_type = self
            .mapping_type(mapping_type_id)
            .ok_or(StoreError::UnknownMappingType(mapping_type_id.0))?
            .clone();
        let child = self.require_region(child_region_id)?;
        let parent = self.require_region(parent_region_id)?;
        if child.region_type_id != mapping_type.child_type
            || parent.region_type_id != mapping_type.parent_type
        {
            return Err(StoreError::InvalidMapping(format!(
                "{child_region_id} -> {parent_region_id} does not match {}",
                mapping_type.name
            )));
        }
        let key = (mapping_type_id, child_region_id.to_string());
        match self.dims.mappings.get(&key) {
            Some(existing) if existing == parent_region_id => Ok(()),
            Some(_) => Err(StoreError::Conflict {
                what: "region mapping",
                key: format!("{} ({})", child_region_id, mapping_type.name),
            }),
            None => self.transaction(|s| {
                s.touch_dimensions(Undo::MappingInserted(key.clone()));
                s.dims.mappings.insert(key, parent_region_id.to_string());
                Ok(())
            }),
        }
    }

    pub fn parent_of(&self, child_region_id: &str, mapping_type_id: MappingTypeId) -> Option<&str> {
        self.dims
            .mappings
            .get(&(mapping_type_id, child_region_id.to_string()))
            .map(String::as_str)
    }

    /// Children of `parent_region_id` under a mapping type, ordered by id.
    pub fn children_of(&self, parent_region_id: &str, mapping_type_id: MappingTypeId) -> Vec<&str> {
        self.dims
            .mappings
            .iter()
            .filter(|((m, _), p)| *m == mapping_type_id && p.as_str() == parent_region_id)
            .map(|((_, c), _)| c.as_str())
            .collect()
    }

    pub fn mappings(&self) -> impl Iterator<Item = RegionMapping> + '_ {
        self.dims
            .mappings
            .iter()
            .map(|((m, c), p)| RegionMapping {
                child_region_id: c.clone(),
                parent_region_id: p.clone(),
                mapping_type_id: *m,
            })
    }

    // ---------------------------------------------------------------------
    // facts

    /// Committed snapshot versions, ascending.
    pub fn snapshots(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.snapshots.iter().copied()
    }

    pub fn has_snapshot(&self, version: NaiveDate) -> bool {
        self.snapshots.contains(&version)
    }

    pub fn latest_snapshot(&self) -> Option<NaiveDate> {
        self.snapshots.iter().next_back().copied()
    }

    pub(crate) fn check_version(&self, version: NaiveDate) -> Result<()> {
        let earliest = *self.snapshots.iter().next().ok_or(StoreError::NoSnapshots)?;
        if version < earliest {
            return Err(StoreError::VersionTooEarly {
                requested: version,
                earliest,
            });
        }
        Ok(())
    }

    /// Merges a batch written by snapshot `version`.
    ///
    /// Each key is compared against the value visible at `version`: absent
    /// keys are inserted, changed values get a new row under `version`, equal
    /// values are left alone. Rows of other versions are never modified. The
    /// whole batch is validated before anything is written.
    pub fn upsert_values(&mut self, batch: &[DataValue], version: NaiveDate) -> Result<MergeReport> {
        let mut seen = HashSet::with_capacity(batch.len());
        for row in batch {
            if row.version != version {
                return Err(StoreError::VersionMismatch {
                    row: row.version,
                    batch: version,
                });
            }
            self.require_region(&row.region_id)?;
            if row.period == TimePeriod::Week && !is_sunday(row.date) {
                return Err(StoreError::WeekNotSunday {
                    region_id: row.region_id.clone(),
                    date: row.date,
                });
            }
            if !seen.insert((&row.region_id, row.date, row.period, row.measure)) {
                return Err(StoreError::DuplicateKey {
                    region_id: row.region_id.clone(),
                    date: row.date,
                    period: row.period,
                    measure: row.measure,
                });
            }
        }
        if batch.is_empty() {
            return Ok(MergeReport::default());
        }
        self.transaction(|s| {
            let mut report = MergeReport::default();
            for row in batch {
                let key = SeriesKey {
                    region_id: row.region_id.clone(),
                    period: row.period,
                    measure: row.measure,
                };
                match s.value_at(&key, row.date, version) {
                    None => {
                        s.put_row(key, row.date, version, row.value);
                        report.inserted += 1;
                    }
                    Some(current) if current == row.value => report.unchanged += 1,
                    Some(_) => {
                        s.put_row(key, row.date, version, row.value);
                        report.updated += 1;
                    }
                }
            }
            s.add_snapshot(version);
            Ok(report)
        })
    }

    pub(crate) fn value_at(&self, key: &SeriesKey, date: NaiveDate, version: NaiveDate) -> Option<u64> {
        self.facts
            .get(key)?
            .get(&date)?
            .range(..=version)
            .next_back()
            .map(|(_, v)| *v)
    }

    /// Observations of one series in `[from, to]` as they were known at
    /// snapshot `version`.
    pub fn query_series(
        &self,
        region_id: &str,
        measure: Measure,
        period: TimePeriod,
        from: NaiveDate,
        to: NaiveDate,
        version: NaiveDate,
    ) -> Result<Observations> {
        if from > to {
            return Err(StoreError::InvalidRange { from, to });
        }
        self.require_region(region_id)?;
        self.check_version(version)?;
        let key = SeriesKey {
            region_id: region_id.to_string(),
            period,
            measure,
        };
        let points = self.visible_points(&key, from, to, version);
        Ok(Observations {
            region_id: region_id.to_string(),
            measure,
            period,
            version,
            points,
        })
    }

    /// Full visible history of a series at `version`.
    pub fn query_all(
        &self,
        region_id: &str,
        measure: Measure,
        period: TimePeriod,
        version: NaiveDate,
    ) -> Result<Observations> {
        self.query_series(
            region_id,
            measure,
            period,
            NaiveDate::MIN,
            NaiveDate::MAX,
            version,
        )
    }

    pub(crate) fn visible_points(
        &self,
        key: &SeriesKey,
        from: NaiveDate,
        to: NaiveDate,
        version: NaiveDate,
    ) -> Vec<(NaiveDate, u64)> {
        let Some(series) = self.facts.get(key) else {
            return Vec::new();
        };
        series
            .range(from..=to)
            .filter_map(|(date, versions)| {
                versions
                    .range(..=version)
                    .next_back()
                    .map(|(_, v)| (*date, *v))
            })
            .collect()
    }

    pub(crate) fn has_series(&self, region_id: &str, measure: Measure, period: TimePeriod) -> bool {
        self.facts.contains_key(&SeriesKey {
            region_id: region_id.to_string(),
            period,
            measure,
        })
    }

    /// Every stored row, ordered by (region, period, measure, date, version).
    pub fn rows(&self) -> impl Iterator<Item = DataValue> + '_ {
        self.facts.iter().flat_map(|(key, series)| {
            series.iter().flat_map(move |(date, versions)| {
                versions.iter().map(move |(version, value)| DataValue {
                    region_id: key.region_id.clone(),
                    date: *date,
                    period: key.period,
                    measure: key.measure,
                    value: *value,
                    version: *version,
                })
            })
        })
    }

    pub fn row_count(&self) -> usize {
        self.facts
            .values()
            .flat_map(|s| s.values())
            .map(|v| v.len())
            .sum()
    }

    /// Writes every row as CSV (see [`super::ROWS_CSV_HEADER`]).
    pub fn export_csv<W: Write>(&self, out: W) -> Result<()> {
        persist::write_rows_csv(out, self.rows())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn de() -> CountryCode {
        CountryCode::new("DE").unwrap()
    }

    fn dresden(kreis: RegionTypeId) -> Region {
        Region {
            region_id: "DE14162".into(),
            name: "Dresden".into(),
            abbreviation: "DD".into(),
            region_type_id: kreis,
            centroid: Centroid::new(51.05, 13.74),
            population: 556_780,
        }
    }

    fn german_store() -> (Store, RegionTypeId, RegionTypeId) {
        let mut s = Store::in_memory();
        s.register_region_type("Staat", de(), 0).unwrap();
        let land = s.register_region_type("Bundesland", de(), 1).unwrap();
        let kreis = s.register_region_type("Kreis", de(), 2).unwrap();
        (s, land, kreis)
    }

    fn value(region: &str, date: &str, v: u64, version: &str) -> DataValue {
        DataValue {
            region_id: region.into(),
            date: d(date),
            period: TimePeriod::Day,
            measure: Measure::Infected,
            value: v,
            version: d(version),
        }
    }

    #[test]
    fn register_region_returns_id_and_is_idempotent() {
        let (mut s, _, kreis) = german_store();
        assert_eq!(s.register_region(dresden(kreis)).unwrap(), "DE14162");
        let before = s.dims.clone();
        assert_eq!(s.register_region(dresden(kreis)).unwrap(), "DE14162");
        assert_eq!(s.dims, before);
    }

    #[test]
    fn register_region_rejects_bad_prefix_and_conflicts() {
        let (mut s, _, kreis) = german_store();
        let mut bad = dresden(kreis);
        bad.region_id = "XX14162".into();
        assert!(matches!(
            s.register_region(bad),
            Err(StoreError::RegionPrefix { .. })
        ));
        s.register_region(dresden(kreis)).unwrap();
        let mut changed = dresden(kreis);
        changed.population += 1;
        assert!(matches!(
            s.register_region(changed),
            Err(StoreError::Conflict { .. })
        ));
        let mut unknown = dresden(kreis);
        unknown.region_type_id = RegionTypeId(99);
        assert!(matches!(
            s.register_region(unknown),
            Err(StoreError::UnknownRegionType(99))
        ));
    }

    #[test]
    fn region_type_levels_are_contiguous_and_unique() {
        let mut s = Store::in_memory();
        assert!(s.register_region_type("Kreis", de(), 2).is_err());
        s.register_region_type("Staat", de(), 0).unwrap();
        assert!(s.register_region_type("Land", de(), 0).is_err());
        assert!(s.register_region_type("Staat", de(), 1).is_err());
        let cz = CountryCode::new("CZ").unwrap();
        s.register_region_type("Stat", cz, 0).unwrap();
    }

    #[test]
    fn mapping_type_must_step_one_level() {
        let (mut s, land, kreis) = german_store();
        let staat = s.region_type_at_level(de(), 0).unwrap().id;
        assert!(s.register_mapping_type("Kreis_To_Staat", kreis, staat).is_err());
        let id = s.register_mapping_type("Kreis_To_Bundesland", kreis, land).unwrap();
        assert_eq!(s.ensure_parent_mapping_type(kreis).unwrap(), id);
    }

    #[test]
    fn mapping_is_many_to_one() {
        let (mut s, land, kreis) = german_store();
        let m = s.ensure_parent_mapping_type(kreis).unwrap();
        s.register_region(dresden(kreis)).unwrap();
        for (id, name) in [("DE14", "Sachsen"), ("DE09", "Bayern")] {
            s.register_region(Region {
                region_id: id.into(),
                name: name.into(),
                abbreviation: String::new(),
                region_type_id: land,
                centroid: Centroid::new(50.0, 12.0),
                population: 1,
            })
            .unwrap();
        }
        s.register_mapping("DE14162", "DE14", m).unwrap();
        s.register_mapping("DE14162", "DE14", m).unwrap();
        assert!(s.register_mapping("DE14162", "DE09", m).is_err());
        assert!(s.register_mapping("DE14", "DE14162", m).is_err());
        assert_eq!(s.parent_of("DE14162", m), Some("DE14"));
        assert_eq!(s.children_of("DE14", m), vec!["DE14162"]);
    }

    #[test]
    fn upsert_reports_and_versions() {
        let (mut s, _, kreis) = german_store();
        s.register_region(dresden(kreis)).unwrap();
        assert_eq!(s.upsert_values(&[], d("2022-01-01")).unwrap(), MergeReport::default());

        let v1 = d("2022-01-05");
        let batch = vec![
            value("DE14162", "2022-01-01", 10, "2022-01-05"),
            value("DE14162", "2022-01-02", 11, "2022-01-05"),
            value("DE14162", "2022-01-03", 12, "2022-01-05"),
        ];
        assert_eq!(s.upsert_values(&batch, v1).unwrap(), MergeReport::new(3, 0, 0));
        assert_eq!(s.upsert_values(&batch, v1).unwrap(), MergeReport::new(0, 0, 3));

        let v2 = d("2022-01-12");
        let revised = vec![value("DE14162", "2022-01-01", 12, "2022-01-12")];
        assert_eq!(s.upsert_values(&revised, v2).unwrap(), MergeReport::new(0, 1, 0));

        let at = |version| {
            s.query_series(
                "DE14162",
                Measure::Infected,
                TimePeriod::Day,
                d("2022-01-01"),
                d("2022-01-01"),
                version,
            )
            .unwrap()
            .points
        };
        assert_eq!(at(v2), vec![(d("2022-01-01"), 12)]);
        assert_eq!(at(v1), vec![(d("2022-01-01"), 10)]);
        assert_eq!(s.row_count(), 4);
    }

    #[test]
    fn upsert_validates_whole_batch_first() {
        let (mut s, _, kreis) = german_store();
        s.register_region(dresden(kreis)).unwrap();
        let v = d("2022-01-05");
        let dup = vec![
            value("DE14162", "2022-01-01", 1, "2022-01-05"),
            value("DE14162", "2022-01-01", 2, "2022-01-05"),
        ];
        assert!(matches!(
            s.upsert_values(&dup, v),
            Err(StoreError::DuplicateKey { .. })
        ));
        let unknown = vec![
            value("DE14162", "2022-01-01", 1, "2022-01-05"),
            value("DE99999", "2022-01-01", 1, "2022-01-05"),
        ];
        assert!(matches!(
            s.upsert_values(&unknown, v),
            Err(StoreError::UnknownRegion(_))
        ));
        let mut week = value("DE14162", "2022-01-05", 1, "2022-01-05");
        week.period = TimePeriod::Week;
        assert!(matches!(
            s.upsert_values(&[week], v),
            Err(StoreError::WeekNotSunday { .. })
        ));
        assert!(matches!(
            s.upsert_values(&[value("DE14162", "2022-01-01", 1, "2022-01-06")], v),
            Err(StoreError::VersionMismatch { .. })
        ));
        assert_eq!(s.row_count(), 0);
        assert_eq!(s.snapshots().count(), 0);
    }

    #[test]
    fn query_errors_and_empty_ranges() {
        let (mut s, _, kreis) = german_store();
        s.register_region(dresden(kreis)).unwrap();
        let v = d("2022-01-05");
        assert!(matches!(
            s.query_all("DE14162", Measure::Infected, TimePeriod::Day, v),
            Err(StoreError::NoSnapshots)
        ));
        s.upsert_values(&[value("DE14162", "2022-01-01", 1, "2022-01-05")], v)
            .unwrap();
        let empty = s
            .query_series(
                "DE14162",
                Measure::Dead,
                TimePeriod::Day,
                d("2021-01-01"),
                d("2021-02-01"),
                v,
            )
            .unwrap();
        assert!(empty.is_empty());
        assert!(matches!(
            s.query_all("DE14162", Measure::Infected, TimePeriod::Day, d("2022-01-04")),
            Err(StoreError::VersionTooEarly { .. })
        ));
        assert!(matches!(
            s.query_series(
                "DE14162",
                Measure::Infected,
                TimePeriod::Day,
                d("2022-02-01"),
                d("2022-01-01"),
                v
            ),
            Err(StoreError::InvalidRange { .. })
        ));
        assert!(matches!(
            s.query_all("DE00000", Measure::Infected, TimePeriod::Day, v),
            Err(StoreError::UnknownRegion(_))
        ));
    }

    #[test]
    fn failed_transaction_rolls_back_everything() {
        let (mut s, _, kreis) = german_store();
        s.register_region(dresden(kreis)).unwrap();
        let before_rows = s.row_count();
        let outcome: Result<()> = s.transaction(|tx| {
            tx.upsert_values(
                &[value("DE14162", "2022-01-01", 5, "2022-01-05")],
                d("2022-01-05"),
            )?;
            tx.register_region_type("Gemeinde", de(), 3)?;
            Err(StoreError::NoSnapshots)
        });
        assert!(outcome.is_err());
        assert_eq!(s.row_count(), before_rows);
        assert_eq!(s.snapshots().count(), 0);
        assert_eq!(s.region_types().len(), 3);
    }

    #[test]
    fn csv_export_has_header_and_iso_dates() {
        let (mut s, _, kreis) = german_store();
        s.register_region(dresden(kreis)).unwrap();
        s.upsert_values(
            &[value("DE14162", "2022-03-13", 7, "2022-03-16")],
            d("2022-03-16"),
        )
        .unwrap();
        let mut out = Vec::new();
        s.export_csv(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "region_id,date,timeperiod_type,datavalue_type,value,version\n\
             DE14162,2022-03-13,day,infected,7,2022-03-16\n"
        );
    }
}
