//! Pipeline configuration file.
//!
//! ```toml
//! store = "store"
//! export_dir = "exports"
//! dictionaries = ["dict/de_staat.toml", "dict/de_kreis.toml"]
//! sources = ["sources/de_daily.toml"]
//!
//! [[countries]]
//! code = "DE"
//! levels = ["Staat", "Kreis"]
//!
//! [forecast.weekly]
//! horizons = 4
//!
//! [forecast.daily]
//! use_box_cox = false
//!
//! [analytics]
//! radius_km = 100.0
//! max_lag = 14
//!
//! [analytics.outliers]
//! z_threshold = 3.0
//! ```
//!
//! Relative paths are resolved against the directory holding the file.
//! Forecast sections override single keys of the built-in weekly and daily
//! defaults.

use std::path::{Path, PathBuf};

use epipipe::analytics::{OutlierConfig, Scale};
use epipipe::etl::{Dictionary, SourceDescriptor};
use epipipe::forecast::ModelConfig;
use epipipe::CountryCode;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountryHierarchy {
    pub code: CountryCode,
    /// Region type names from the nation (level 0) downwards.
    pub levels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticsDefaults {
    pub radius_km: f64,
    pub max_lag: u32,
    pub scale: Scale,
    pub outliers: OutlierConfig,
}

impl Default for AnalyticsDefaults {
    fn default() -> Self {
        Self {
            radius_km: 100.0,
            max_lag: 14,
            scale: Scale::Incidence,
            outliers: OutlierConfig::default(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ForecastSections {
    weekly: Option<toml::Table>,
    daily: Option<toml::Table>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    store: PathBuf,
    #[serde(default = "default_export_dir")]
    export_dir: PathBuf,
    #[serde(default)]
    countries: Vec<CountryHierarchy>,
    #[serde(default)]
    dictionaries: Vec<PathBuf>,
    #[serde(default)]
    sources: Vec<PathBuf>,
    #[serde(default)]
    forecast: ForecastSections,
    #[serde(default)]
    analytics: AnalyticsDefaults,
}

fn default_export_dir() -> PathBuf {
    PathBuf::from("exports")
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub store: PathBuf,
    pub export_dir: PathBuf,
    pub countries: Vec<CountryHierarchy>,
    /// Registered in this order before every ingest, so parents go first.
    pub dictionaries: Vec<Dictionary>,
    pub sources: Vec<SourceDescriptor>,
    pub weekly: ModelConfig,
    pub daily: ModelConfig,
    pub analytics: AnalyticsDefaults,
}

fn overlay(base: ModelConfig, table: Option<toml::Table>, section: &str) -> Result<ModelConfig, CliError> {
    let Some(table) = table else { return Ok(base) };
    let mut merged = toml::Table::try_from(&base)
        .map_err(|e| CliError::Config(format!("forecast.{section}: {e}")))?;
    merged.extend(table);
    let config: ModelConfig = toml::Value::Table(merged)
        .try_into()
        .map_err(|e| CliError::Config(format!("forecast.{section}: {e}")))?;
    Ok(config)
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let existing = |p: &Path| {
            let full = resolve(p);
            if full.is_file() {
                Ok(full)
            } else {
                Err(CliError::Config(format!("referenced file {} does not exist", full.display())))
            }
        };

        let dictionaries = raw
            .dictionaries
            .iter()
            .map(|p| Dictionary::load(existing(p)?).map_err(|e| CliError::Config(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let sources = raw
            .sources
            .iter()
            .map(|p| SourceDescriptor::load(existing(p)?).map_err(|e| CliError::Config(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;

        let config = Self {
            store: resolve(&raw.store),
            export_dir: resolve(&raw.export_dir),
            countries: raw.countries,
            dictionaries,
            sources,
            weekly: overlay(ModelConfig::weekly(), raw.forecast.weekly, "weekly")?,
            daily: overlay(ModelConfig::daily(), raw.forecast.daily, "daily")?,
            analytics: raw.analytics,
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        for (name, model) in [("weekly", &self.weekly), ("daily", &self.daily)] {
            model
                .validate()
                .map_err(|e| CliError::Config(format!("forecast.{name}: {e}")))?;
        }
        self.analytics
            .outliers
            .validate()
            .map_err(|e| CliError::Config(format!("analytics.outliers: {e}")))?;
        if !(self.analytics.radius_km >= 0.0 && self.analytics.radius_km.is_finite()) {
            return bad(format!("analytics.radius_km must be non-negative, got {}", self.analytics.radius_km));
        }
        for c in &self.countries {
            if c.levels.is_empty() {
                return bad(format!("country {} lists no levels", c.code));
            }
        }
        let mut ids: Vec<&str> = self.sources.iter().map(|s| s.source_id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return bad(format!("source id {} is declared twice", w[0]));
        }
        for s in &self.sources {
            if self.dictionary_for(s).is_none() {
                return bad(format!(
                    "source {} reads {} {} but no dictionary covers that level",
                    s.source_id, s.country, s.spatial_level
                ));
            }
        }
        Ok(())
    }

    pub fn source(&self, source_id: &str) -> Option<&SourceDescriptor> {
        self.sources.iter().find(|s| s.source_id == source_id)
    }

    pub fn dictionary_for(&self, source: &SourceDescriptor) -> Option<&Dictionary> {
        self.dictionaries
            .iter()
            .find(|d| d.country == source.country && d.level == source.spatial_level)
    }
}
