mod common;

use chrono::{Duration, NaiveDate};
use common::region;
use epipipe::analytics::{
    correlation_at_lag, detect_outliers, haversine_km, lagged_correlation, neighbors_within, OutlierConfig,
};
use epipipe::forecast::{Frequency, TimeSeries};
use epipipe::{CountryCode, Measure, Region, RegionTypeId, Store};
use proptest::prelude::*;

fn series(id: &str, start_offset: i64, values: Vec<f64>) -> TimeSeries {
    let start = NaiveDate::from_ymd_opt(2021, 3, 1).unwrap() + Duration::days(start_offset);
    TimeSeries::new(id, Measure::Infected, Frequency::Daily, start, values).unwrap()
}

fn values(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..500.0f64, len)
}

/// Regions scattered over central Europe, split between two countries.
fn scattered(points: &[(f64, f64, bool)]) -> Vec<Region> {
    let mut store = Store::in_memory();
    let types: Vec<RegionTypeId> = ["DE", "CZ"]
        .iter()
        .map(|c| store.register_region_type("Kreis", CountryCode::new(c).unwrap(), 0).unwrap())
        .collect();
    points
        .iter()
        .enumerate()
        .map(|(i, (lat, lon, cz))| {
            let (prefix, t) = if *cz { ("CZ", types[1]) } else { ("DE", types[0]) };
            region(&format!("{prefix}{i:03}"), t, *lat, *lon, 1000)
        })
        .collect()
}

proptest! {
    #[test]
    fn swapping_series_negates_the_lag(
        a in values(30..80),
        b in values(30..80),
        offset in -10..10i64,
        lag in -8..=8i64,
    ) {
        let (x, y) = (series("DE1", 0, a), series("DE2", offset, b));
        match (correlation_at_lag(&x, &y, lag), correlation_at_lag(&y, &x, -lag)) {
            (Ok(r), Ok(s)) => {
                prop_assert_eq!(r.to_bits(), s.to_bits());
                prop_assert!((-1.0..=1.0).contains(&r));
            }
            (Err(_), Err(_)) => {}
            (r, s) => prop_assert!(false, "{:?} vs {:?}", r.map_err(|e| e.to_string()), s.map_err(|e| e.to_string())),
        }
    }

    #[test]
    fn best_lag_of_a_series_with_itself(a in values(40..90)) {
        prop_assume!(a.iter().any(|v| *v != a[0]));
        let x = series("DE1", 0, a);
        let best = lagged_correlation(&x, &x, 7).unwrap();
        prop_assert_eq!((best.lag, best.corr), (0, 1.0));
    }

    #[test]
    fn neighbour_query_matches_brute_force(
        points in prop::collection::vec((47.0..55.0f64, 6.0..19.0f64, any::<bool>()), 1..40),
        focal in 0..40usize,
        radius in 0.0..400.0f64,
    ) {
        let regions = scattered(&points);
        let focal = &regions[focal % regions.len()];
        let set = neighbors_within(focal, &regions, radius);
        let mut expected: Vec<(String, bool)> = regions
            .iter()
            .filter(|r| r.region_id != focal.region_id)
            .filter(|r| haversine_km(focal.centroid, r.centroid) <= radius)
            .map(|r| (r.region_id.clone(), r.region_id[..2] == focal.region_id[..2]))
            .collect();
        expected.sort();
        let got: Vec<(String, bool)> = set.neighbors.iter().map(|n| (n.region_id.clone(), n.same_country)).collect();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn outlier_dates_follow_a_shifted_series(
        base in prop::collection::vec(2.0..9.0f64, 90),
        onset in 40..80usize,
        height in 100.0..800.0f64,
        shift in -200..200i64,
    ) {
        let mut v = base;
        for x in &mut v[onset..onset + 3] {
            *x += height;
        }
        let config = OutlierConfig::default();
        let here = detect_outliers(&series("DE1", 0, v.clone()), &config).unwrap();
        let there = detect_outliers(&series("DE1", shift, v), &config).unwrap();
        prop_assert_eq!(here.len(), there.len());
        for (a, b) in here.iter().zip(&there) {
            prop_assert_eq!(a.date + Duration::days(shift), b.date);
            prop_assert_eq!(a.z_score.to_bits(), b.z_score.to_bits());
        }
    }

    #[test]
    fn flat_series_never_flag_events(level in 0.0..1e9f64, len in 56..150usize) {
        let events = detect_outliers(&series("DE1", 0, vec![level; len]), &OutlierConfig::default()).unwrap();
        prop_assert!(events.is_empty());
    }

    #[test]
    fn raising_every_count_keeps_events(
        base in prop::collection::vec(2.0..9.0f64, 90),
        onset in 40..80usize,
        c in 0.0..1e4f64,
    ) {
        let mut v = base;
        for x in &mut v[onset..onset + 3] {
            *x += 500.0;
        }
        let config = OutlierConfig::default();
        let lifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        let a = detect_outliers(&series("DE1", 0, v), &config).unwrap();
        let b = detect_outliers(&series("DE1", 0, lifted), &config).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.date, y.date);
            prop_assert!((x.z_score - y.z_score).abs() <= 1e-6 * x.z_score.abs());
        }
    }
}
