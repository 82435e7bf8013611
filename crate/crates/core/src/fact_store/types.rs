use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use super::StoreError;

/// ISO-3166 alpha-2 country code, always upper case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CountryCode([u8; 2]);

impl CountryCode {
    pub fn new(code: &str) -> Result<Self, StoreError> {
        let bytes = code.trim().as_bytes();
        if bytes.len() != 2 || !bytes.iter().all(|b| b.is_ascii_alphabetic()) {
            return Err(StoreError::InvalidCountry(code.to_string()));
        }
        Ok(Self([
            bytes[0].to_ascii_uppercase(),
            bytes[1].to_ascii_uppercase(),
        ]))
    }

    pub fn as_str(&self) -> &str {
        // Only ASCII letters are ever stored.
        std::str::from_utf8(&self.0).expect("ascii country code")
    }

    /// Country prefix of a region id such as `DE14162`.
    pub fn of_region_id(region_id: &str) -> Option<Self> {
        region_id.get(..2).and_then(|p| Self::new(p).ok())
    }
}

impl fmt::Display for CountryCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CountryCode {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl TryFrom<String> for CountryCode {
    type Error = StoreError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(&value)
    }
}

impl From<CountryCode> for String {
    fn from(code: CountryCode) -> Self {
        code.as_str().to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RegionTypeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MappingTypeId(pub u32);

/// One level of a country's administrative hierarchy (`Kreis`, `Okres`, ...).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionType {
    pub id: RegionTypeId,
    pub name: String,
    pub country: CountryCode,
    /// 0 is the nation; larger values are finer.
    pub level: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Centroid {
    pub lat: f64,
    pub lon: f64,
}

impl Centroid {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    /// Country prefix followed by the government id, e.g. `DE14162`.
    pub region_id: String,
    pub name: String,
    #[serde(default)]
    pub abbreviation: String,
    pub region_type_id: RegionTypeId,
    pub centroid: Centroid,
    pub population: u64,
}

impl Region {
    pub fn country(&self) -> Option<CountryCode> {
        CountryCode::of_region_id(&self.region_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingType {
    pub id: MappingTypeId,
    pub name: String,
    pub child_type: RegionTypeId,
    pub parent_type: RegionTypeId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionMapping {
    pub child_region_id: String,
    pub parent_region_id: String,
    pub mapping_type_id: MappingTypeId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimePeriod {
    Day,
    Week,
}

impl TimePeriod {
    pub const ALL: [TimePeriod; 2] = [TimePeriod::Day, TimePeriod::Week];

    pub fn as_str(&self) -> &'static str {
        match self {
            TimePeriod::Day => "day",
            TimePeriod::Week => "week",
        }
    }

    pub fn step_days(&self) -> i64 {
        match self {
            TimePeriod::Day => 1,
            TimePeriod::Week => 7,
        }
    }
}

impl fmt::Display for TimePeriod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TimePeriod {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "day" | "daily" => Ok(TimePeriod::Day),
            "week" | "weekly" => Ok(TimePeriod::Week),
            _ => Err(StoreError::UnknownName {
                kind: "time period",
                name: s.to_string(),
            }),
        }
    }
}

/// Kind of count held by a [`DataValue`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Infected,
    Dead,
    Recovered,
    Hospitalised,
    Tested,
    Vaccinated,
}

impl Measure {
    pub const ALL: [Measure; 6] = [
        Measure::Infected,
        Measure::Dead,
        Measure::Recovered,
        Measure::Hospitalised,
        Measure::Tested,
        Measure::Vaccinated,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Measure::Infected => "infected",
            Measure::Dead => "dead",
            Measure::Recovered => "recovered",
            Measure::Hospitalised => "hospitalised",
            Measure::Tested => "tested",
            Measure::Vaccinated => "vaccinated",
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Measure {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Measure::ALL
            .into_iter()
            .find(|m| m.as_str() == lower)
            .ok_or_else(|| StoreError::UnknownName {
                kind: "measure",
                name: s.to_string(),
            })
    }
}

/// One observation of a measure, as written by a particular snapshot.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DataValue {
    pub region_id: String,
    pub date: NaiveDate,
    pub period: TimePeriod,
    pub measure: Measure,
    pub value: u64,
    pub version: NaiveDate,
}

/// Outcome counts of an upsert.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeReport {
    pub inserted: usize,
    pub updated: usize,
    pub unchanged: usize,
}

impl MergeReport {
    pub fn new(inserted: usize, updated: usize, unchanged: usize) -> Self {
        Self {
            inserted,
            updated,
            unchanged,
        }
    }

    pub fn total(&self) -> usize {
        self.inserted + self.updated + self.unchanged
    }
}

impl std::ops::AddAssign for MergeReport {
    fn add_assign(&mut self, rhs: Self) {
        self.inserted += rhs.inserted;
        self.updated += rhs.updated;
        self.unchanged += rhs.unchanged;
    }
}

/// Observations of one (region, measure, period) as visible at some snapshot.
/// Dates are ascending; dates without data are absent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observations {
    pub region_id: String,
    pub measure: Measure,
    pub period: TimePeriod,
    pub version: NaiveDate,
    pub points: Vec<(NaiveDate, u64)>,
}

impl Observations {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }
}

/// The Sunday closing the Monday–Sunday week that contains `date`.
pub fn week_ending(date: NaiveDate) -> NaiveDate {
    let offset = 6 - date.weekday().num_days_from_monday() as i64;
    date + chrono::Duration::days(offset)
}

pub fn is_sunday(date: NaiveDate) -> bool {
    date.weekday() == Weekday::Sun
}
