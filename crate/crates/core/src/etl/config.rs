use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EtlError, Result};
use crate::fact_store::{CountryCode, Measure, TimePeriod};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionKeyKind {
    IntrinsicId,
    Name,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureField {
    pub column: String,
    pub measure: Measure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldMap {
    pub region: String,
    pub date: String,
    pub measures: Vec<MeasureField>,
}

/// How to read one source feed. Loaded from TOML:
///
/// ```toml
/// source_id = "rki_kreise"
/// country = "DE"
/// format = "csv"
/// delimiter = ";"
/// region_key_kind = "intrinsic_id"
/// timeperiod = "day"
/// spatial_level = "Kreis"
/// date_format = "%Y-%m-%d"
///
/// [fields]
/// region = "IdLandkreis"
/// date = "Meldedatum"
/// measures = [
///   { column = "AnzahlFall", measure = "infected" },
///   { column = "AnzahlTodesfall", measure = "dead" },
/// ]
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceDescriptor {
    pub source_id: String,
    pub country: CountryCode,
    pub format: SourceFormat,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    pub region_key_kind: RegionKeyKind,
    pub timeperiod: TimePeriod,
    /// Name of the region type the feed reports at.
    pub spatial_level: String,
    #[serde(default = "default_date_format")]
    pub date_format: String,
    pub fields: FieldMap,
}

fn default_delimiter() -> char {
    ','
}

fn default_date_format() -> String {
    "%Y-%m-%d".to_string()
}

impl SourceDescriptor {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let descriptor: Self = toml::from_str(text).map_err(|source| EtlError::Toml {
            path: "<inline>".into(),
            source,
        })?;
        descriptor.validate()?;
        Ok(descriptor)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let descriptor: Self = toml::from_str(&text).map_err(|source| EtlError::Toml {
            path: path.to_path_buf(),
            source,
        })?;
        descriptor.validate()?;
        Ok(descriptor)
    }

    pub fn validate(&self) -> Result<()> {
        let config = |msg: String| Err(EtlError::Config(msg));
        if self.source_id.trim().is_empty() {
            return config("source_id is empty".into());
        }
        if self.fields.region.trim().is_empty() || self.fields.date.trim().is_empty() {
            return config(format!("{}: region and date fields must be mapped", self.source_id));
        }
        if self.fields.measures.is_empty() {
            return config(format!("{}: at least one measure field is required", self.source_id));
        }
        let mut seen = HashSet::new();
        for m in &self.fields.measures {
            if !seen.insert(m.measure) {
                return config(format!("{}: measure {} mapped twice", self.source_id, m.measure));
            }
        }
        if !self.delimiter.is_ascii() {
            return config(format!("{}: delimiter must be ASCII", self.source_id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionaryEntry {
    pub intrinsic_id: String,
    pub name: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    #[serde(default)]
    pub abbreviation: String,
    pub lat: f64,
    pub lon: f64,
    pub population: u64,
    /// Intrinsic id of the parent region one level up, if any.
    #[serde(default)]
    pub parent: Option<String>,
}

/// Canonical list of the regions of one country and level. Loaded from TOML:
///
/// ```toml
/// country = "DE"
/// level = "Kreis"
///
/// [[entries]]
/// intrinsic_id = "14162"
/// name = "Dresden"
/// aliases = ["Stadt Dresden", "Dresden, Stadt"]
/// lat = 51.05
/// lon = 13.74
/// population = 556780
/// parent = "14"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dictionary {
    pub country: CountryCode,
    /// Region type name of the entries.
    pub level: String,
    #[serde(default)]
    pub entries: Vec<DictionaryEntry>,
}

impl Dictionary {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let dictionary: Self = toml::from_str(text).map_err(|source| EtlError::Toml {
            path: "<inline>".into(),
            source,
        })?;
        dictionary.validate()?;
        Ok(dictionary)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let dictionary: Self = toml::from_str(&text).map_err(|source| EtlError::Toml {
            path: path.to_path_buf(),
            source,
        })?;
        dictionary.validate()?;
        Ok(dictionary)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for e in &self.entries {
            let id = e.intrinsic_id.trim();
            if id.is_empty() {
                return Err(EtlError::Config(format!(
                    "{} {}: entry {:?} has an empty intrinsic_id",
                    self.country, self.level, e.name
                )));
            }
            if !ids.insert(id) {
                return Err(EtlError::Config(format!(
                    "{} {}: intrinsic_id {id} listed twice",
                    self.country, self.level
                )));
            }
            if e.name.trim().is_empty() && e.aliases.iter().all(|a| a.trim().is_empty()) {
                return Err(EtlError::Config(format!(
                    "{} {}: entry {id} has no name",
                    self.country, self.level
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DESCRIPTOR: &str = r#"
source_id = "rki"
country = "DE"
format = "csv"
region_key_kind = "intrinsic_id"
timeperiod = "day"
spatial_level = "Kreis"

[fields]
region = "IdLandkreis"
date = "Meldedatum"
measures = [
  { column = "AnzahlFall", measure = "infected" },
  { column = "AnzahlTodesfall", measure = "dead" },
]
"#;

    #[test]
    fn descriptor_parses_with_defaults() {
        let d = SourceDescriptor::from_toml_str(DESCRIPTOR).unwrap();
        assert_eq!(d.delimiter, ',');
        assert_eq!(d.date_format, "%Y-%m-%d");
        assert_eq!(d.fields.measures.len(), 2);
        assert_eq!(d.fields.measures[1].measure, Measure::Dead);
    }

    #[test]
    fn descriptor_without_measures_is_rejected() {
        let text = DESCRIPTOR.replace(
            "measures = [\n  { column = \"AnzahlFall\", measure = \"infected\" },\n  { column = \"AnzahlTodesfall\", measure = \"dead\" },\n]",
            "measures = []",
        );
        assert!(matches!(
            SourceDescriptor::from_toml_str(&text),
            Err(EtlError::Config(_))
        ));
    }

    #[test]
    fn unknown_keys_are_errors() {
        let text = format!("{DESCRIPTOR}\nbogus = 1\n");
        assert!(SourceDescriptor::from_toml_str(&text).is_err());
    }

    #[test]
    fn dictionary_ids_must_be_unique() {
        let text = r#"
country = "DE"
level = "Kreis"
[[entries]]
intrinsic_id = "14162"
name = "Dresden"
lat = 51.05
lon = 13.74
population = 1
[[entries]]
intrinsic_id = "14162"
name = "Dresden again"
lat = 51.05
lon = 13.74
population = 1
"#;
        assert!(matches!(
            Dictionary::from_toml_str(text),
            Err(EtlError::Config(_))
        ));
    }
}
