use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{ForecastError, Result};
use crate::fact_store::{Measure, Observations, TimePeriod};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Daily,
    Weekly,
}

impl Frequency {
    pub fn step(&self) -> Duration {
        match self {
            Frequency::Daily => Duration::days(1),
            Frequency::Weekly => Duration::days(7),
        }
    }

    pub fn period(&self) -> TimePeriod {
        match self {
            Frequency::Daily => TimePeriod::Day,
            Frequency::Weekly => TimePeriod::Week,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Frequency::Daily => "daily",
            Frequency::Weekly => "weekly",
        }
    }
}

impl std::str::FromStr for Frequency {
    type Err = ForecastError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "daily" | "day" => Ok(Frequency::Daily),
            "weekly" | "week" => Ok(Frequency::Weekly),
            other => Err(ForecastError::InvalidConfig(format!("unknown frequency {other:?}"))),
        }
    }
}

/// A regularly spaced series: `values[i]` is observed at `start + i * step`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub region_id: String,
    pub measure: Measure,
    pub frequency: Frequency,
    pub start: NaiveDate,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(
        region_id: impl Into<String>,
        measure: Measure,
        frequency: Frequency,
        start: NaiveDate,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.is_empty() {
            return Err(ForecastError::TooShort {
                needed: 1,
                got: 0,
            });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(ForecastError::InvalidData(format!("observation {bad} is not a finite count")));
        }
        Ok(Self {
            region_id: region_id.into(),
            measure,
            frequency,
            start,
            values,
        })
    }

    /// Builds a regular series from store observations; dates between the
    /// first and last observation without a row count as 0.
    pub fn from_observations(obs: &Observations) -> Result<Self> {
        let frequency = match obs.period {
            TimePeriod::Day => Frequency::Daily,
            TimePeriod::Week => Frequency::Weekly,
        };
        let (Some(first), Some(last)) = (obs.points.first(), obs.points.last()) else {
            return Err(ForecastError::TooShort { needed: 1, got: 0 });
        };
        let step = frequency.step().num_days();
        let span = (last.0 - first.0).num_days();
        if span % step != 0 {
            return Err(ForecastError::InvalidData(format!(
                "{} observations are not spaced by {step} days",
                obs.region_id
            )));
        }
        let mut values = vec![0.0; (span / step) as usize + 1];
        for (date, value) in &obs.points {
            let offset = (*date - first.0).num_days();
            if offset % step != 0 {
                return Err(ForecastError::InvalidData(format!(
                    "{} observation on {date} is off the {step}-day grid",
                    obs.region_id
                )));
            }
            values[(offset / step) as usize] = *value as f64;
        }
        Self::new(obs.region_id.clone(), obs.measure, frequency, first.0, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn date_at(&self, index: usize) -> NaiveDate {
        self.start + self.frequency.step() * index as i32
    }

    pub fn end(&self) -> NaiveDate {
        self.date_at(self.values.len() - 1)
    }

    pub fn observations(&self) -> impl Iterator<Item = (NaiveDate, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| (self.date_at(i), *v))
    }

    /// Value at `date`, if the date is on this series' grid and in range.
    pub fn value_on(&self, date: NaiveDate) -> Option<f64> {
        let offset = (date - self.start).num_days();
        let step = self.frequency.step().num_days();
        if offset < 0 || offset % step != 0 {
            return None;
        }
        self.values.get((offset / step) as usize).copied()
    }

    /// Keeps observations dated on or before `date`.
    pub fn truncate_after(&self, date: NaiveDate) -> Option<Self> {
        if date < self.start {
            return None;
        }
        let step = self.frequency.step().num_days();
        let keep = ((date - self.start).num_days() / step) as usize + 1;
        let mut out = self.clone();
        out.values.truncate(keep);
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    #[test]
    fn gaps_are_zero_filled() {
        let obs = Observations {
            region_id: "DE1".into(),
            measure: Measure::Infected,
            period: TimePeriod::Day,
            version: d("2022-01-10"),
            points: vec![(d("2022-01-01"), 3), (d("2022-01-04"), 5)],
        };
        let ts = TimeSeries::from_observations(&obs).unwrap();
        assert_eq!(ts.values, vec![3.0, 0.0, 0.0, 5.0]);
        assert_eq!(ts.end(), d("2022-01-04"));
        assert_eq!(ts.value_on(d("2022-01-04")), Some(5.0));
        assert_eq!(ts.truncate_after(d("2022-01-02")).unwrap().values, vec![3.0, 0.0]);
    }

    #[test]
    fn weekly_grid_is_checked() {
        let obs = Observations {
            region_id: "DE1".into(),
            measure: Measure::Infected,
            period: TimePeriod::Week,
            version: d("2022-01-20"),
            points: vec![(d("2022-01-02"), 3), (d("2022-01-16"), 5)],
        };
        let ts = TimeSeries::from_observations(&obs).unwrap();
        assert_eq!(ts.values, vec![3.0, 0.0, 5.0]);
        assert_eq!(ts.date_at(1), d("2022-01-09"));
    }

    #[test]
    fn empty_and_negative_are_rejected() {
        assert!(TimeSeries::new("x", Measure::Dead, Frequency::Daily, d("2022-01-01"), vec![]).is_err());
        assert!(
            TimeSeries::new("x", Measure::Dead, Frequency::Daily, d("2022-01-01"), vec![1.0, -1.0])
                .is_err()
        );
    }
}
