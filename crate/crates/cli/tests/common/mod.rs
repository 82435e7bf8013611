//! Temporary pipeline workspaces: dictionaries, source descriptors and a
//! configuration file written to disk, plus payload helpers.

#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use epipipe::etl::IngestReport;
use epipipe_cli::{cmd_ingest, CliError, Context, IngestArgs, PipelineConfig};
use tempfile::TempDir;

pub fn d(s: &str) -> NaiveDate {
    s.parse().expect("valid date")
}

pub struct County {
    pub id: &'static str,
    pub lat: f64,
    pub lon: f64,
    pub population: u64,
}

pub const fn county(id: &'static str, lat: f64, lon: f64, population: u64) -> County {
    County {
        id,
        lat,
        lon,
        population,
    }
}

pub struct Workspace {
    pub dir: TempDir,
    pub config_path: PathBuf,
}

fn source_toml(country: &str) -> String {
    format!(
        r#"source_id = "{src}"
country = "{country}"
format = "csv"
region_key_kind = "intrinsic_id"
timeperiod = "day"
spatial_level = "Kreis"

[fields]
region = "id"
date = "date"
measures = [{{ column = "cases", measure = "infected" }}]
"#,
        src = source_id(country)
    )
}

pub fn source_id(country: &str) -> String {
    format!("{}_daily", country.to_ascii_lowercase())
}

impl Workspace {
    /// One workspace with a two-level hierarchy (nation, county) for each
    /// country. Ids in `counties` carry the country prefix (`DE01001`).
    pub fn new(countries: &[(&str, &[County])]) -> Self {
        let dir = tempfile::tempdir().expect("temp dir");
        let root = dir.path();
        std::fs::create_dir_all(root.join("dict")).unwrap();
        std::fs::create_dir_all(root.join("sources")).unwrap();
        let mut config = String::from("store = \"store\"\nexport_dir = \"out\"\n");
        let (mut dicts, mut sources, mut hierarchy) = (Vec::new(), Vec::new(), String::new());
        for (k, (code, counties)) in countries.iter().enumerate() {
            let lower = code.to_ascii_lowercase();
            let nation = format!(
                "country = \"{code}\"\nlevel = \"Staat\"\n\n[[entries]]\nintrinsic_id = \"0\"\nname = \"{code}\"\nlat = {}\nlon = 0.0\npopulation = 1000000\n",
                -60.0 + 30.0 * k as f64
            );
            std::fs::write(root.join(format!("dict/{lower}_staat.toml")), nation).unwrap();
            let mut kreis = format!("country = \"{code}\"\nlevel = \"Kreis\"\n");
            for c in counties.iter() {
                let intrinsic = &c.id[2..];
                write!(
                    kreis,
                    "\n[[entries]]\nintrinsic_id = \"{intrinsic}\"\nname = \"County {intrinsic}\"\nlat = {}\nlon = {}\npopulation = {}\nparent = \"0\"\n",
                    c.lat, c.lon, c.population
                )
                .unwrap();
            }
            std::fs::write(root.join(format!("dict/{lower}_kreis.toml")), kreis).unwrap();
            std::fs::write(root.join(format!("sources/{lower}.toml")), source_toml(code)).unwrap();
            dicts.push(format!("\"dict/{lower}_staat.toml\""));
            dicts.push(format!("\"dict/{lower}_kreis.toml\""));
            sources.push(format!("\"sources/{lower}.toml\""));
            write!(hierarchy, "\n[[countries]]\ncode = \"{code}\"\nlevels = [\"Staat\", \"Kreis\"]\n").unwrap();
        }
        writeln!(config, "dictionaries = [{}]", dicts.join(", ")).unwrap();
        writeln!(config, "sources = [{}]", sources.join(", ")).unwrap();
        config.push_str(&hierarchy);
        let config_path = root.join("epipipe.toml");
        std::fs::write(&config_path, config).unwrap();
        Self { dir, config_path }
    }

    pub fn root(&self) -> &Path {
        self.dir.path()
    }

    pub fn ctx(&self) -> Context {
        Context::new(PipelineConfig::load(&self.config_path).expect("valid config"), None)
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.root().join("out").join(name)
    }

    /// Writes a payload file and returns its path.
    pub fn payload(&self, name: &str, rows: &[(String, NaiveDate, u64)]) -> PathBuf {
        let mut text = String::from("id,date,cases\n");
        for (id, date, v) in rows {
            writeln!(text, "{id},{date},{v}").unwrap();
        }
        let path = self.root().join(name);
        std::fs::write(&path, text).unwrap();
        path
    }

    /// Ingests daily `values[i]` for `region_id` starting at `start`.
    pub fn ingest_series(
        &self,
        region_id: &str,
        start: NaiveDate,
        values: &[u64],
        version: NaiveDate,
    ) -> Result<IngestReport, CliError> {
        let rows: Vec<(String, NaiveDate, u64)> = values
            .iter()
            .enumerate()
            .map(|(i, v)| (region_id[2..].to_string(), start + Duration::days(i as i64), *v))
            .collect();
        let name = format!("payload_{region_id}_{version}.csv");
        let payload = self.payload(&name, &rows);
        let args = IngestArgs {
            source: source_id(&region_id[..2]),
            payload,
            version,
            rejects: None,
        };
        cmd_ingest(&self.ctx(), &args, &mut Vec::new())
    }
}
