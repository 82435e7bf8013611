//! Seeded synthetic data sets shared by the integration tests.

#![allow(dead_code)]

use chrono::{Duration, NaiveDate};
use epipipe::{Centroid, CountryCode, DataValue, Measure, Region, RegionTypeId, Store, TimePeriod};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn d(s: &str) -> NaiveDate {
    s.parse().expect("valid date")
}

pub fn region(id: &str, type_id: RegionTypeId, lat: f64, lon: f64, population: u64) -> Region {
    Region {
        region_id: id.to_string(),
        name: format!("Region {id}"),
        abbreviation: String::new(),
        region_type_id: type_id,
        centroid: Centroid::new(lat, lon),
        population,
    }
}

pub fn daily_rows(region_id: &str, start: NaiveDate, values: &[u64], version: NaiveDate) -> Vec<DataValue> {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| DataValue {
            region_id: region_id.to_string(),
            date: start + Duration::days(i as i64),
            period: TimePeriod::Day,
            measure: Measure::Infected,
            value: *v,
            version,
        })
        .collect()
}

/// Share of a day's final count already reported `lag` days later.
fn completeness(lag: i64) -> f64 {
    match lag {
        i64::MIN..=0 => 0.0,
        1 => 0.35,
        2 => 0.65,
        3 => 0.85,
        4 => 0.93,
        5 => 0.97,
        6 => 0.99,
        _ => 1.0,
    }
}

pub struct RevisionFixture {
    pub regions: Vec<String>,
    /// Wednesdays used as forecast origins.
    pub origins: Vec<NaiveDate>,
    /// Weekly snapshot versions written to the store.
    pub snapshots: Vec<NaiveDate>,
}

/// Daily case counts for `n_regions` regions with a weekday pattern, mild
/// trend and slow wave, published in weekly snapshots (every Wednesday)
/// whose most recent days are incomplete and noisy until they settle a week
/// later. Origins run from 2022-01-05 to 2022-05-18; snapshots continue four
/// weeks past the last origin.
pub fn revision_fixture(store: &mut Store, seed: u64, n_regions: usize) -> RevisionFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let de = CountryCode::new("DE").unwrap();
    let kreis = store.register_region_type("Kreis", de, 0).unwrap();
    let start = d("2021-08-30");
    let first_snapshot = d("2022-01-05");
    let last_snapshot = d("2022-06-15");
    let days = (last_snapshot - start).num_days() as usize;
    let base_weekday = [1.15, 1.1, 1.05, 1.0, 0.95, 0.65, 0.5];

    let mut regions = Vec::new();
    let mut truth: Vec<Vec<f64>> = Vec::new();
    for r in 0..n_regions {
        let id = format!("DE{:05}", 1001 + r);
        store
            .register_region(region(&id, kreis, 50.0 + r as f64 * 0.1, 10.0, 200_000))
            .unwrap();
        let level: f64 = rng.gen_range(150.0..1500.0);
        let slope: f64 = rng.gen_range(-0.002..0.004);
        let wave_amp: f64 = rng.gen_range(0.1..0.3);
        let wave_period: f64 = rng.gen_range(120.0..220.0);
        let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let weekday: Vec<f64> = base_weekday
            .iter()
            .map(|w| w * rng.gen_range(0.95..1.05))
            .collect();
        let noise = Normal::new(0.0f64, 0.08).unwrap();
        let series = (0..days)
            .map(|t| {
                let tf = t as f64;
                let mu = level
                    * (slope * tf + wave_amp * (std::f64::consts::TAU * tf / wave_period + phase).sin()).exp()
                    * weekday[t % 7];
                (mu * noise.sample(&mut rng).exp()).round()
            })
            .collect();
        regions.push(id);
        truth.push(series);
    }

    let revision = Normal::new(0.0f64, 0.06).unwrap();
    let mut snapshots = Vec::new();
    let mut version = first_snapshot;
    while version <= last_snapshot {
        for (id, series) in regions.iter().zip(&truth) {
            let reported: Vec<u64> = (0..(version - start).num_days() as usize)
                .map(|t| {
                    let lag = (version - (start + Duration::days(t as i64))).num_days();
                    let c = completeness(lag);
                    if c >= 1.0 {
                        series[t] as u64
                    } else {
                        (series[t] * c * (1.0 + revision.sample(&mut rng))).max(0.0).round() as u64
                    }
                })
                .collect();
            store
                .upsert_values(&daily_rows(id, start, &reported, version), version)
                .unwrap();
            store.aggregate_temporal(id, Measure::Infected, version).unwrap();
        }
        snapshots.push(version);
        version += Duration::days(7);
    }
    let origins = snapshots
        .iter()
        .copied()
        .filter(|v| *v <= d("2022-05-18"))
        .collect();
    RevisionFixture {
        regions,
        origins,
        snapshots,
    }
}
