mod common;

use chrono::{Datelike, Duration, NaiveDate};
use common::{county, d, source_id, Workspace};
use epipipe::forecast::{backtest, Variant, BACKTEST_CSV_HEADER};
use epipipe::{Measure, Store};
use epipipe_cli::{
    cmd_backtest, cmd_border, cmd_export, cmd_forecast, cmd_ingest, cmd_outliers, BacktestArgs, BorderArgs,
    ExportArgs, ForecastArgs, IngestArgs, OutlierArgs,
};
use epipipe::forecast::Frequency;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn read(path: &std::path::Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

fn forecast_args(regions: &[&str], frequency: Frequency, version: NaiveDate) -> ForecastArgs {
    ForecastArgs {
        regions: regions.iter().map(|r| r.to_string()).collect(),
        measure: Measure::Infected,
        frequency,
        version: Some(version),
        no_box_cox: false,
        output: None,
    }
}

fn outlier_args(region: &str, from: NaiveDate, to: NaiveDate) -> OutlierArgs {
    OutlierArgs {
        regions: vec![region.into()],
        measure: Measure::Infected,
        from,
        to,
        version: None,
        z_threshold: None,
        baseline_window: None,
        std_window: None,
        output: None,
    }
}

#[test]
fn ingest_prints_report_and_writes_sidecar() {
    let ws = Workspace::new(&[("DE", &[county("DE01001", 54.8, 9.4, 90_000)])]);
    let payload = ws.payload(
        "p.csv",
        &[
            ("01001".into(), d("2022-03-07"), 5),
            ("01001".into(), d("2022-03-08"), 7),
            ("99999".into(), d("2022-03-08"), 1),
        ],
    );
    let args = IngestArgs {
        source: source_id("DE"),
        payload,
        version: d("2022-03-09"),
        rejects: None,
    };
    let mut out = Vec::new();
    let report = cmd_ingest(&ws.ctx(), &args, &mut out).unwrap();
    assert_eq!(report.rows_read, 3);
    assert_eq!(report.rows_merged.inserted, 2);
    assert_eq!(report.rows_rejected.len(), 1);
    let text = String::from_utf8(out).unwrap();
    assert!(text.contains("rows read 3"), "{text}");
    let sidecar = read(&ws.out("rejects/de_daily_2022-03-09.csv"));
    let lines: Vec<&str> = sidecar.lines().collect();
    assert_eq!(lines[0], "row_index,reason,raw_region_key,raw_date");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("2,"));
}

#[test]
fn ingest_error_classes() {
    let ws = Workspace::new(&[("DE", &[county("DE01001", 54.8, 9.4, 90_000)])]);
    let missing = IngestArgs {
        source: source_id("DE"),
        payload: ws.root().join("nope.csv"),
        version: d("2022-03-09"),
        rejects: None,
    };
    assert_eq!(cmd_ingest(&ws.ctx(), &missing, &mut Vec::new()).unwrap_err().exit_code(), 2);

    let unknown_source = IngestArgs {
        source: "xx".into(),
        ..missing.clone()
    };
    assert_eq!(cmd_ingest(&ws.ctx(), &unknown_source, &mut Vec::new()).unwrap_err().exit_code(), 2);

    let bad = ws.root().join("bad.csv");
    std::fs::write(&bad, "region,when,n\n1,2,3\n").unwrap();
    let malformed = IngestArgs {
        payload: bad,
        ..missing
    };
    assert_eq!(cmd_ingest(&ws.ctx(), &malformed, &mut Vec::new()).unwrap_err().exit_code(), 3);
}

#[test]
fn all_rejected_payload_is_not_fatal() {
    let ws = Workspace::new(&[("DE", &[county("DE01001", 54.8, 9.4, 90_000)])]);
    let payload = ws.payload(
        "p.csv",
        &[("77777".into(), d("2022-03-07"), 5), ("88888".into(), d("2022-03-08"), 7)],
    );
    let args = IngestArgs {
        source: source_id("DE"),
        payload,
        version: d("2022-03-09"),
        rejects: Some(ws.root().join("rejects.csv")),
    };
    let report = cmd_ingest(&ws.ctx(), &args, &mut Vec::new()).unwrap();
    assert_eq!(report.rows_rejected.len(), report.rows_read);
    assert_eq!(read(&ws.root().join("rejects.csv")).lines().count(), 3);
}

#[test]
fn constant_series_forecasts_flat_horizons() {
    let ws = Workspace::new(&[("DE", &[county("DE01001", 54.8, 9.4, 90_000)])]);
    ws.ingest_series("DE01001", d("2022-01-03"), &[100; 70], d("2022-03-16")).unwrap();
    let results = cmd_forecast(&ws.ctx(), &forecast_args(&["DE01001"], Frequency::Weekly, d("2022-03-16")), &mut Vec::new())
        .unwrap();
    let points = &results[0].points;
    assert_eq!(points.len(), 4);
    assert!(points.iter().all(|p| (p.point - 700.0).abs() < 1e-6), "{points:?}");
    let csv = read(&ws.out("forecast_weekly_2022-03-16.csv"));
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().nth(1).unwrap().starts_with("DE01001,infected,2022-03-16,1,2022-03-20,700.0000,"));
}

#[test]
fn unknown_region_is_a_store_error() {
    let ws = Workspace::new(&[("DE", &[county("DE01001", 54.8, 9.4, 90_000)])]);
    ws.ingest_series("DE01001", d("2022-01-03"), &[100; 70], d("2022-03-16")).unwrap();
    let err = cmd_forecast(&ws.ctx(), &forecast_args(&["DE09999"], Frequency::Weekly, d("2022-03-16")), &mut Vec::new())
        .unwrap_err();
    assert_eq!(err.exit_code(), 4, "{err}");
}

fn seeded_counts(seed: u64, days: usize, level: f64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weekday = [1.1, 1.05, 1.0, 1.0, 0.95, 0.7, 0.6];
    (0..days)
        .map(|t| {
            let trend = 1.0 + 0.004 * t as f64;
            (level * trend * weekday[t % 7] * rng.gen_range(0.9..1.1)).round() as u64
        })
        .collect()
}

#[test]
fn forecast_output_matches_golden_file() {
    let ws = Workspace::new(&[(
        "DE",
        &[county("DE01001", 54.8, 9.4, 90_000), county("DE01002", 54.3, 10.1, 250_000)],
    )]);
    let start = d("2021-11-01");
    let version = d("2022-03-16");
    ws.ingest_series("DE01001", start, &seeded_counts(1, 135, 40.0), version).unwrap();
    ws.ingest_series("DE01002", start, &seeded_counts(2, 135, 120.0), version).unwrap();
    let mut args = forecast_args(&["DE01001", "DE01002"], Frequency::Weekly, version);
    args.output = Some(ws.root().join("golden.csv"));
    cmd_forecast(&ws.ctx(), &args, &mut Vec::new()).unwrap();
    let got = read(&ws.root().join("golden.csv"));

    let golden = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/forecast_weekly.csv");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&golden, &got).unwrap();
    }
    assert_eq!(got, read(&golden));
}

/// Daily history published at every Wednesday from `first` to `last`;
/// each snapshot holds every day before its version.
fn snapshots(ws: &Workspace, regions: &[(&str, u64)], start: NaiveDate, first: NaiveDate, last: NaiveDate) {
    let mut version = first;
    while version <= last {
        for (id, seed) in regions {
            let days = (version - start).num_days() as usize;
            ws.ingest_series(id, start, &seeded_counts(*seed, days, 60.0), version).unwrap();
        }
        version += Duration::days(7);
    }
}

#[test]
fn backtest_table_matches_library_call() {
    let ws = Workspace::new(&[(
        "DE",
        &[county("DE01001", 54.8, 9.4, 90_000), county("DE01002", 54.3, 10.1, 250_000)],
    )]);
    let regions = [("DE01001", 11), ("DE01002", 12)];
    snapshots(&ws, &regions, d("2021-11-01"), d("2022-01-05"), d("2022-02-16"));
    let args = BacktestArgs {
        regions: vec![],
        measure: Measure::Infected,
        from: d("2022-01-04"),
        to: d("2022-01-19"),
        variants: vec!["weekly".into(), "daily_originT".into(), "daily_originF".into()],
        output: None,
    };
    let outcome = cmd_backtest(&ws.ctx(), &args, &mut Vec::new()).unwrap();
    assert_eq!(outcome.report.schedule, vec![d("2022-01-05"), d("2022-01-12"), d("2022-01-19")]);
    assert!(outcome.report.schedule.iter().all(|o| o.weekday() == chrono::Weekday::Wed));

    let store = Store::open_read_only(ws.root().join("store")).unwrap();
    let ids = vec!["DE01001".to_string(), "DE01002".to_string()];
    let direct = backtest(&store, &ids, Measure::Infected, &outcome.report.schedule, &Variant::standard_set()).unwrap();
    assert_eq!(direct.summary, outcome.report.summary);
    assert_eq!(direct.entries, outcome.report.entries);
    let table = read(&outcome.summary_path);
    assert_eq!(table.lines().next(), Some(BACKTEST_CSV_HEADER));
    assert_eq!(table.lines().count(), 1 + 3 * 4);
}

#[test]
fn backtest_without_wednesdays_is_empty() {
    let ws = Workspace::new(&[("DE", &[county("DE01001", 54.8, 9.4, 90_000)])]);
    ws.ingest_series("DE01001", d("2022-01-03"), &[10; 30], d("2022-02-02")).unwrap();
    let args = BacktestArgs {
        regions: vec!["DE01001".into()],
        measure: Measure::Infected,
        from: d("2022-01-06"),
        to: d("2022-01-11"),
        variants: vec!["weekly".into()],
        output: None,
    };
    let mut out = Vec::new();
    let outcome = cmd_backtest(&ws.ctx(), &args, &mut out).unwrap();
    assert!(outcome.report.schedule.is_empty());
    assert!(String::from_utf8(out).unwrap().contains("warning"));
    let table = read(&outcome.summary_path);
    assert_eq!(table.lines().count(), 1 + 4);
    assert!(table.lines().skip(1).all(|l| l.ends_with(",,0,0")), "{table}");

    let bad = BacktestArgs {
        variants: vec!["hourly".into()],
        ..args
    };
    assert_eq!(cmd_backtest(&ws.ctx(), &bad, &mut Vec::new()).unwrap_err().exit_code(), 2);
}

/// Counties along a meridian, 30 km apart, split between two countries at
/// the middle. Every county follows a common wave plus its own noise; the
/// two counties next to the border share one noise series.
fn border_strip(seed: u64) -> Workspace {
    const KM_PER_DEG: f64 = 111.194_926_645_7;
    let at = |km: f64| 50.0 + km / KM_PER_DEG;
    let de: Vec<common::County> = ["DE01001", "DE01002", "DE01003", "DE01004"]
        .iter()
        .enumerate()
        .map(|(i, id)| county(id, at(-105.0 + 30.0 * i as f64), 14.0, 100_000 + 5_000 * i as u64))
        .collect();
    let cz: Vec<common::County> = ["CZ01001", "CZ01002", "CZ01003", "CZ01004"]
        .iter()
        .enumerate()
        .map(|(i, id)| county(id, at(15.0 + 30.0 * i as f64), 14.0, 120_000 + 5_000 * i as u64))
        .collect();
    let ws = Workspace::new(&[("DE", &de), ("CZ", &cz)]);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let days = 120;
    let common: Vec<f64> = (0..days).map(|t| 200.0 + 80.0 * (t as f64 / 9.0).sin()).collect();
    let mut noise = || -> Vec<f64> { (0..days).map(|_| rng.gen_range(-40.0..40.0)).collect() };
    let shared = noise();
    let start = d("2022-01-01");
    let version = d("2022-05-04");
    for c in de.iter().chain(&cz) {
        let own = if c.id == "DE01004" || c.id == "CZ01001" { shared.clone() } else { noise() };
        let values: Vec<u64> = common.iter().zip(&own).map(|(a, b)| (a + b).round() as u64).collect();
        ws.ingest_series(c.id, start, &values, version).unwrap();
    }
    ws
}

fn border_args() -> BorderArgs {
    BorderArgs {
        countries: vec![],
        measure: Measure::Infected,
        from: d("2022-01-01"),
        to: d("2022-04-30"),
        version: None,
        radius_km: None,
        max_lag: Some(3),
        scale: None,
        output: None,
    }
}

#[test]
fn border_regions_show_positive_difference() {
    let ws = border_strip(5);
    let report = cmd_border(&ws.ctx(), &border_args(), &mut Vec::new()).unwrap();
    for id in ["DE01004", "CZ01001"] {
        let r = report.records.iter().find(|r| r.region_id == id).unwrap();
        assert!(r.difference.unwrap() > 0.0, "{r:?}");
    }
    let csv = read(&ws.out("border.csv"));
    assert_eq!(csv.lines().count(), 1 + report.exportable().count());
}

#[test]
fn border_edge_cases_give_empty_exports() {
    let ws = border_strip(6);
    let mut only_de = border_args();
    only_de.countries = vec!["DE".into()];
    let mut out = Vec::new();
    let report = cmd_border(&ws.ctx(), &only_de, &mut out).unwrap();
    assert_eq!(report.exportable().count(), 0);
    assert!(String::from_utf8(out).unwrap().contains("warning"));
    assert_eq!(read(&ws.out("border.csv")).lines().count(), 1);

    let mut zero = border_args();
    zero.radius_km = Some(0.0);
    let report = cmd_border(&ws.ctx(), &zero, &mut Vec::new()).unwrap();
    assert!(report.records.is_empty());
    assert_eq!(read(&ws.out("border.csv")).lines().count(), 1);
}

fn spike_values(days: usize, onset: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    (0..days)
        .map(|t| {
            let base = rng.gen_range(3..=7);
            if (onset..onset + 3).contains(&t) {
                base + 600
            } else {
                base
            }
        })
        .collect()
}

#[test]
fn outlier_command_cases() {
    let ws = Workspace::new(&[(
        "DE",
        &[county("DE05754", 51.9, 8.4, 365_000), county("DE05755", 51.8, 8.0, 100_000)],
    )]);
    let start = d("2020-04-01");
    ws.ingest_series("DE05754", start, &spike_values(100, 76), d("2020-07-15")).unwrap();
    ws.ingest_series("DE05755", start, &[4; 100], d("2020-07-15")).unwrap();
    let to = start + Duration::days(99);

    let events = cmd_outliers(&ws.ctx(), &outlier_args("DE05754", start, to), &mut Vec::new()).unwrap();
    assert_eq!(events.len(), 1);
    assert_eq!(events[0].date, start + Duration::days(76));
    assert_eq!(read(&ws.out("outliers.csv")).lines().count(), 2);

    let events = cmd_outliers(&ws.ctx(), &outlier_args("DE05755", start, to), &mut Vec::new()).unwrap();
    assert!(events.is_empty());
    assert_eq!(read(&ws.out("outliers.csv")).lines().count(), 1);

    let mut huge = outlier_args("DE05754", start, to);
    huge.z_threshold = Some(1e9);
    assert!(cmd_outliers(&ws.ctx(), &huge, &mut Vec::new()).unwrap().is_empty());

    let mut even = outlier_args("DE05754", start, to);
    even.baseline_window = Some(6);
    assert_eq!(cmd_outliers(&ws.ctx(), &even, &mut Vec::new()).unwrap_err().exit_code(), 2);
}

#[test]
fn export_dumps_all_rows() {
    let ws = Workspace::new(&[("DE", &[county("DE01001", 54.8, 9.4, 90_000)])]);
    ws.ingest_series("DE01001", d("2022-01-03"), &[3; 14], d("2022-01-19")).unwrap();
    let path = cmd_export(&ws.ctx(), &ExportArgs { output: None }, &mut Vec::new()).unwrap();
    let rows = read(&path);
    assert_eq!(rows.lines().next(), Some("region_id,date,timeperiod_type,datavalue_type,value,version"));
    // 14 daily and 2 weekly rows for the county and again for the nation.
    assert_eq!(rows.lines().count(), 1 + 2 * 16);
}
