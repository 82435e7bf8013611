//! Synthetic inputs shared by the benchmarks.

use chrono::{Duration, NaiveDate};
use epipipe::{Centroid, CountryCode, DataValue, Measure, Region, RegionTypeId, Store, TimePeriod};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2021, 1, 4).unwrap()
}

/// Daily counts with a weekday pattern, a slow wave and multiplicative noise.
pub fn daily_counts(seed: u64, days: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weekday = [1.15, 1.1, 1.05, 1.0, 0.95, 0.65, 0.5];
    (0..days)
        .map(|t| {
            let wave = 1.0 + 0.4 * (t as f64 / 30.0).sin();
            (300.0 * wave * weekday[t % 7] * rng.gen_range(0.9..1.1)).round()
        })
        .collect()
}

/// Weekly sums of [`daily_counts`].
pub fn weekly_counts(seed: u64, weeks: usize) -> Vec<f64> {
    daily_counts(seed, weeks * 7).chunks(7).map(|w| w.iter().sum()).collect()
}

pub struct Grid {
    pub store: Store,
    pub nation_type: RegionTypeId,
    pub counties: Vec<String>,
    pub version: NaiveDate,
}

/// One nation over `states` states with `per_state` counties each, all
/// holding `days` of daily counts under a single snapshot.
pub fn grid(states: usize, per_state: usize, days: usize) -> Grid {
    let de = CountryCode::new("DE").unwrap();
    let mut store = Store::in_memory();
    let types: Vec<RegionTypeId> = ["Staat", "Bundesland", "Kreis"]
        .iter()
        .enumerate()
        .map(|(l, n)| store.register_region_type(n, de, l as u8).unwrap())
        .collect();
    let to_state = store.ensure_parent_mapping_type(types[1]).unwrap();
    let to_county = store.ensure_parent_mapping_type(types[2]).unwrap();
    let region = |id: String, t: RegionTypeId, lat: f64, lon: f64| Region {
        name: id.clone(),
        region_id: id,
        abbreviation: String::new(),
        region_type_id: t,
        centroid: Centroid::new(lat, lon),
        population: 100_000,
    };
    store.register_region(region("DE0".into(), types[0], 51.0, 10.0)).unwrap();
    let version = start() + Duration::days(days as i64 + 2);
    let mut counties = Vec::new();
    let mut rows = Vec::new();
    for s in 0..states {
        let state = format!("DE{s:02}");
        store.register_region(region(state.clone(), types[1], 48.0 + s as f64 * 0.4, 10.0)).unwrap();
        store.register_mapping(&state, "DE0", to_state).unwrap();
        for c in 0..per_state {
            let id = format!("{state}{c:03}");
            let (lat, lon) = (48.0 + s as f64 * 0.4, 6.0 + c as f64 * 0.2);
            store.register_region(region(id.clone(), types[2], lat, lon)).unwrap();
            store.register_mapping(&id, &state, to_county).unwrap();
            for (t, v) in daily_counts((s * per_state + c) as u64, days).into_iter().enumerate() {
                rows.push(DataValue {
                    region_id: id.clone(),
                    date: start() + Duration::days(t as i64),
                    period: TimePeriod::Day,
                    measure: Measure::Infected,
                    value: v as u64,
                    version,
                });
            }
            counties.push(id);
        }
    }
    store.upsert_values(&rows, version).unwrap();
    Grid {
        store,
        nation_type: types[0],
        counties,
        version,
    }
}
