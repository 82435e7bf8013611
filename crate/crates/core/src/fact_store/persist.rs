//! On-disk layout of a store directory:
//!
//! ```text
//! <root>/manifest.json       snapshot list
//! <root>/dimensions.json     region types, regions, mapping types, mappings
//! <root>/values/<date>.csv   rows written by one snapshot version
//! <root>/LOCK                present while a writer holds the store
//! ```
//!
//! Files are written to a temporary name and renamed into place; the manifest
//! is renamed last.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::store::Dimensions;
use super::types::*;
use super::{Result, StoreError, ROWS_CSV_HEADER};

const MANIFEST: &str = "manifest.json";
const DIMENSIONS: &str = "dimensions.json";
const VALUES_DIR: &str = "values";
const LOCK: &str = "LOCK";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    snapshots: Vec<NaiveDate>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct DimensionsFile {
    region_types: Vec<RegionType>,
    regions: Vec<Region>,
    mapping_types: Vec<MappingType>,
    mappings: Vec<RegionMapping>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    region_id: String,
    date: NaiveDate,
    timeperiod_type: TimePeriod,
    datavalue_type: Measure,
    value: u64,
    version: NaiveDate,
}

pub(crate) struct Loaded {
    pub dimensions: Dimensions,
    pub snapshots: BTreeSet<NaiveDate>,
    pub rows: Vec<DataValue>,
}

/// Exclusive writer lock, released on drop.
#[derive(Debug)]
pub(crate) struct WriterLock {
    path: PathBuf,
}

impl WriterLock {
    pub fn acquire(root: &Path) -> Result<Self> {
        let path = root.join(LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(StoreError::Locked {
                path: root.to_path_buf(),
            }),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for WriterLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn corrupt(path: &Path, reason: impl ToString) -> StoreError {
    StoreError::Corrupt {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

fn version_path(root: &Path, version: NaiveDate) -> PathBuf {
    root.join(VALUES_DIR).join(format!("{version}.csv"))
}

pub(crate) fn load(root: &Path) -> Result<Loaded> {
    let manifest_path = root.join(MANIFEST);
    let snapshots: BTreeSet<NaiveDate> = if manifest_path.exists() {
        let manifest: Manifest = serde_json::from_slice(&fs::read(&manifest_path)?)
            .map_err(|e| corrupt(&manifest_path, e))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(corrupt(
                &manifest_path,
                format!("unsupported format version {}", manifest.format_version),
            ));
        }
        manifest.snapshots.into_iter().collect()
    } else {
        BTreeSet::new()
    };

    let dims_path = root.join(DIMENSIONS);
    let file: DimensionsFile = if dims_path.exists() {
        serde_json::from_slice(&fs::read(&dims_path)?).map_err(|e| corrupt(&dims_path, e))?
    } else {
        DimensionsFile::default()
    };
    let dimensions = Dimensions {
        region_types: file.region_types,
        regions: file
            .regions
            .into_iter()
            .map(|r| (r.region_id.clone(), r))
            .collect(),
        mapping_types: file.mapping_types,
        mappings: file
            .mappings
            .into_iter()
            .map(|m| ((m.mapping_type_id, m.child_region_id), m.parent_region_id))
            .collect::<BTreeMap<_, _>>(),
    };

    let mut rows = Vec::new();
    for version in &snapshots {
        let path = version_path(root, *version);
        if !path.exists() {
            continue;
        }
        let mut reader = csv::Reader::from_path(&path)?;
        for record in reader.deserialize::<CsvRow>() {
            let row = record.map_err(|e| corrupt(&path, e))?;
            if row.version != *version {
                return Err(corrupt(&path, format!("row version {}", row.version)));
            }
            rows.push(DataValue {
                region_id: row.region_id,
                date: row.date,
                period: row.timeperiod_type,
                measure: row.datavalue_type,
                value: row.value,
                version: row.version,
            });
        }
    }
    Ok(Loaded {
        dimensions,
        snapshots,
        rows,
    })
}

pub(crate) fn write_rows_csv<W: Write>(out: W, rows: impl Iterator<Item = DataValue>) -> Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "{ROWS_CSV_HEADER}")?;
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    for row in rows {
        writer.serialize(CsvRow {
            region_id: row.region_id,
            date: row.date,
            timeperiod_type: row.period,
            datavalue_type: row.measure,
            value: row.value,
            version: row.version,
        })?;
    }
    writer.flush()?;
    Ok(())
}

/// A file written under a temporary name, waiting to be renamed.
pub(crate) struct Staged {
    tmp: PathBuf,
    dest: PathBuf,
}

fn stage(dest: PathBuf, write: impl FnOnce(File) -> Result<()>) -> Result<Staged> {
    if let Some(parent) = dest.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut name = dest.file_name().expect("file name").to_os_string();
    name.push(".tmp");
    let tmp = dest.with_file_name(name);
    let file = File::create(&tmp)?;
    write(file)?;
    Ok(Staged { tmp, dest })
}

pub(crate) fn stage_version_file(root: &Path, version: NaiveDate, rows: &[DataValue]) -> Result<Staged> {
    stage(version_path(root, version), |f| {
        write_rows_csv(f, rows.iter().cloned())
    })
}

pub(crate) fn stage_dimensions(root: &Path, dims: &Dimensions) -> Result<Staged> {
    let file = DimensionsFile {
        region_types: dims.region_types.clone(),
        regions: dims.regions.values().cloned().collect(),
        mapping_types: dims.mapping_types.clone(),
        mappings: dims
            .mappings
            .iter()
            .map(|((m, c), p)| RegionMapping {
                child_region_id: c.clone(),
                parent_region_id: p.clone(),
                mapping_type_id: *m,
            })
            .collect(),
    };
    stage(root.join(DIMENSIONS), |f| {
        let mut w = BufWriter::new(f);
        serde_json::to_writer_pretty(&mut w, &file)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    })
}

pub(crate) fn stage_manifest(root: &Path, snapshots: &BTreeSet<NaiveDate>) -> Result<Staged> {
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        snapshots: snapshots.iter().copied().collect(),
    };
    stage(root.join(MANIFEST), |f| {
        let mut w = BufWriter::new(f);
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    })
}

/// Renames staged files into place in order; the manifest must come last.
pub(crate) fn commit_staged(staged: Vec<Staged>) -> Result<()> {
    for s in staged {
        fs::rename(&s.tmp, &s.dest)?;
    }
    Ok(())
}
