//! Store-backed weekly and daily forecasts combining two models.

use std::io::Write;

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use super::arima::{ArimaModel, ArimaOrder, SeasonalOrder};
use super::boxcox::{guerrero_lambda, CountTransform};
use super::holt::HoltModel;
use super::holt_winters::HoltWintersModel;
use super::mix::{choose_m_mapped, mix_forecast, MixChoice};
use super::series::{Frequency, TimeSeries};
use super::{Forecast, ForecastError, Result};
use crate::fact_store::{Measure, Store};

pub const FORECAST_CSV_HEADER: &str =
    "region_id,measure,made_on,horizon,target_date,point,lower,upper,model_tag";

/// Box-Cox parameter: a fixed value, or `"auto"` for Guerrero's method.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "NumberOrAuto", into = "NumberOrAuto")]
pub enum LambdaChoice {
    #[default]
    Auto,
    Fixed(f64),
}

/// Mix weight: a fixed m in [0, 1], or `"auto"` for the holdout search.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "NumberOrAuto", into = "NumberOrAuto")]
pub enum MixWeight {
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum NumberOrAuto {
    Number(f64),
    Text(String),
}

fn parse_auto(repr: NumberOrAuto) -> std::result::Result<Option<f64>, String> {
    match repr {
        NumberOrAuto::Number(x) => Ok(Some(x)),
        NumberOrAuto::Text(s) if s.eq_ignore_ascii_case("auto") => Ok(None),
        NumberOrAuto::Text(s) => Err(format!("expected a number or \"auto\", got {s:?}")),
    }
}

impl TryFrom<NumberOrAuto> for LambdaChoice {
    type Error = String;

    fn try_from(repr: NumberOrAuto) -> std::result::Result<Self, String> {
        Ok(parse_auto(repr)?.map_or(LambdaChoice::Auto, LambdaChoice::Fixed))
    }
}

impl From<LambdaChoice> for NumberOrAuto {
    fn from(c: LambdaChoice) -> Self {
        match c {
            LambdaChoice::Auto => NumberOrAuto::Text("auto".into()),
            LambdaChoice::Fixed(x) => NumberOrAuto::Number(x),
        }
    }
}

impl TryFrom<NumberOrAuto> for MixWeight {
    type Error = String;

    fn try_from(repr: NumberOrAuto) -> std::result::Result<Self, String> {
        Ok(parse_auto(repr)?.map_or(MixWeight::Auto, MixWeight::Fixed))
    }
}

impl From<MixWeight> for NumberOrAuto {
    fn from(c: MixWeight) -> Self {
        match c {
            MixWeight::Auto => NumberOrAuto::Text("auto".into()),
            MixWeight::Fixed(x) => NumberOrAuto::Number(x),
        }
    }
}

/// Settings for one forecast run. Weekly runs pair (S)ARIMA with damped
/// Holt; daily runs pair SARIMA with additive Holt-Winters whose season is
/// `seasonal_order.period`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub arima_order: ArimaOrder,
    pub seasonal_order: SeasonalOrder,
    pub use_box_cox: bool,
    pub box_cox_lambda: LambdaChoice,
    /// Window length for Guerrero's method; 4 for weekly and 7 for daily
    /// series when unset.
    pub guerrero_window: Option<usize>,
    pub damped: bool,
    /// Fixed damping parameter; fitted in [0.8, 0.98] when unset.
    pub damping_phi: Option<f64>,
    pub mix_m: MixWeight,
    pub horizons: usize,
    /// Held-out points for choosing the mix weight.
    pub validation_window: usize,
    /// Daily runs drop observations dated after `version - trim_days`.
    pub trim_days: u32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::weekly()
    }
}

impl ModelConfig {
    pub fn weekly() -> Self {
        Self {
            arima_order: ArimaOrder::new(2, 1, 2),
            seasonal_order: SeasonalOrder::none(),
            use_box_cox: true,
            box_cox_lambda: LambdaChoice::Auto,
            guerrero_window: None,
            damped: true,
            damping_phi: None,
            mix_m: MixWeight::Auto,
            horizons: 4,
            validation_window: 4,
            trim_days: 3,
        }
    }

    pub fn daily() -> Self {
        Self {
            arima_order: ArimaOrder::new(1, 1, 1),
            seasonal_order: SeasonalOrder::new(1, 1, 1, 7),
            horizons: 28,
            ..Self::weekly()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(ForecastError::InvalidConfig(msg));
        if self.horizons == 0 {
            return bad("horizons must be at least 1".into());
        }
        if self.validation_window == 0 {
            return bad("validation_window must be at least 1".into());
        }
        if self.seasonal_order.period == 0 {
            return bad("seasonal period must be at least 1".into());
        }
        if let Some(w) = self.guerrero_window {
            if w < 2 {
                return bad(format!("guerrero_window must be at least 2, got {w}"));
            }
        }
        if let Some(phi) = self.damping_phi {
            if !(phi > 0.0 && phi <= 1.0) {
                return bad(format!("damping_phi must be in (0, 1], got {phi}"));
            }
        }
        if let MixWeight::Fixed(m) = self.mix_m {
            if !(0.0..=1.0).contains(&m) {
                return bad(format!("mix_m must be in [0, 1], got {m}"));
            }
        }
        if let LambdaChoice::Fixed(l) = self.box_cox_lambda {
            if !l.is_finite() {
                return bad(format!("box_cox_lambda must be finite, got {l}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForecastPoint {
    pub horizon: usize,
    pub target_date: NaiveDate,
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForecastResult {
    pub region_id: String,
    pub measure: Measure,
    /// Snapshot version the training data were read at.
    pub made_on: NaiveDate,
    pub frequency: Frequency,
    /// Date of the last observation used for fitting.
    pub fit_end: NaiveDate,
    pub points: Vec<ForecastPoint>,
    pub model_tag: String,
    pub lambda: Option<f64>,
    pub mix: MixChoice,
    pub config: ModelConfig,
}

enum Component {
    Arima(ArimaModel),
    Holt(HoltModel),
    HoltWinters(HoltWintersModel),
}

impl Component {
    fn forecast(&self, h: usize) -> Result<Forecast> {
        match self {
            Component::Arima(m) => m.forecast(h),
            Component::Holt(m) => Ok(m.forecast(h)),
            Component::HoltWinters(m) => Ok(m.forecast(h)),
        }
    }

    fn one_step(&self, extended: &[f64]) -> Result<Vec<f64>> {
        match self {
            Component::Arima(m) => m.one_step_predictions(extended),
            Component::Holt(m) => m.one_step_predictions(extended),
            Component::HoltWinters(m) => m.one_step_predictions(extended),
        }
    }
}

fn fit_pair(z: &[f64], frequency: Frequency, config: &ModelConfig) -> Result<(Component, Component)> {
    let arima = ArimaModel::fit(z, config.arima_order, config.seasonal_order)?;
    let smoother = match frequency {
        Frequency::Weekly => Component::Holt(HoltModel::fit(z, config.damped, config.damping_phi)?),
        Frequency::Daily => Component::HoltWinters(HoltWintersModel::fit(
            z,
            config.seasonal_order.period,
            config.damped,
            config.damping_phi,
        )?),
    };
    Ok((Component::Arima(arima), smoother))
}

fn choose_transform(series: &TimeSeries, config: &ModelConfig) -> Result<CountTransform> {
    if !config.use_box_cox {
        return Ok(CountTransform::identity());
    }
    let lambda = match config.box_cox_lambda {
        LambdaChoice::Fixed(l) => l,
        LambdaChoice::Auto => {
            let window = config.guerrero_window.unwrap_or(match series.frequency {
                Frequency::Weekly => 4,
                Frequency::Daily => 7,
            });
            let shifted: Vec<f64> = series.values.iter().map(|v| v + CountTransform::SHIFT).collect();
            guerrero_lambda(&shifted, window)?
        }
    };
    Ok(CountTransform::box_cox(lambda))
}

fn choose_mix(
    series: &TimeSeries,
    z: &[f64],
    transform: &CountTransform,
    config: &ModelConfig,
) -> Result<MixChoice> {
    if let MixWeight::Fixed(m) = config.mix_m {
        return Ok(MixChoice::fixed(m));
    }
    let w = config.validation_window;
    if z.len() <= w {
        return Ok(MixChoice::default_with_warning("series shorter than the validation window"));
    }
    let prefix = &z[..z.len() - w];
    let (a, b) = match fit_pair(prefix, series.frequency, config) {
        Ok(pair) => pair,
        Err(ForecastError::TooShort { .. }) => {
            return Ok(MixChoice::default_with_warning(
                "too little data left after holding out the validation window",
            ))
        }
        Err(e) => return Err(e),
    };
    let pred_a = a.one_step(z)?;
    let pred_b = b.one_step(z)?;
    let actual = &series.values[series.len() - w..];
    choose_m_mapped(actual, &pred_a, &pred_b, |x| transform.inverse(x).max(0.0))
}

/// Fits both models to `series`, mixes their forecasts and maps them back
/// to the count scale.
pub fn forecast_series(
    series: &TimeSeries,
    made_on: NaiveDate,
    config: &ModelConfig,
    model_tag: &str,
) -> Result<ForecastResult> {
    config.validate()?;
    let run = || -> Result<ForecastResult> {
        let transform = choose_transform(series, config)?;
        let z = transform.forward_all(&series.values);
        let mix = choose_mix(series, &z, &transform, config)?;
        let (a, b) = fit_pair(&z, series.frequency, config)?;
        let mixed = mix_forecast(&a.forecast(config.horizons)?, &b.forecast(config.horizons)?, mix.m)?;
        let fit_end = series.end();
        let step = series.frequency.step();
        let points = (0..config.horizons)
            .map(|i| {
                let point = transform.inverse(mixed.point[i]).max(0.0);
                ForecastPoint {
                    horizon: i + 1,
                    target_date: fit_end + step * (i as i32 + 1),
                    point,
                    lower: transform.inverse(mixed.lower[i]).min(point),
                    upper: transform.inverse(mixed.upper[i]).max(point),
                }
            })
            .collect();
        Ok(ForecastResult {
            region_id: series.region_id.clone(),
            measure: series.measure,
            made_on,
            frequency: series.frequency,
            fit_end,
            points,
            model_tag: model_tag.to_string(),
            lambda: transform.lambda(),
            mix,
            config: config.clone(),
        })
    };
    run().map_err(|e| e.for_region(&series.region_id))
}

/// Last Sunday on or before `date`.
pub fn last_sunday(date: NaiveDate) -> NaiveDate {
    date - Duration::days(date.weekday().num_days_from_sunday() as i64)
}

/// Weekly series of `region` as known at `version`, through the last
/// completed week (the last Sunday on or before `version`).
pub fn weekly_training_series(
    store: &Store,
    region_id: &str,
    measure: Measure,
    version: NaiveDate,
) -> Result<TimeSeries> {
    let obs = store.query_series(
        region_id,
        measure,
        Frequency::Weekly.period(),
        NaiveDate::MIN,
        last_sunday(version),
        version,
    )?;
    TimeSeries::from_observations(&obs).map_err(|e| e.for_region(region_id))
}

/// Daily series of `region` as known at `version`, without the last
/// `trim_days` days before `version` (incomplete reporting).
pub fn daily_training_series(
    store: &Store,
    region_id: &str,
    measure: Measure,
    version: NaiveDate,
    trim_days: u32,
) -> Result<TimeSeries> {
    let obs = store.query_series(
        region_id,
        measure,
        Frequency::Daily.period(),
        NaiveDate::MIN,
        version - Duration::days(trim_days as i64),
        version,
    )?;
    TimeSeries::from_observations(&obs).map_err(|e| e.for_region(region_id))
}

/// Sunday-dated forecasts of weekly totals from the series at `version`.
pub fn forecast_weekly(
    store: &Store,
    region_id: &str,
    measure: Measure,
    version: NaiveDate,
    config: &ModelConfig,
) -> Result<ForecastResult> {
    let series = weekly_training_series(store, region_id, measure, version)?;
    forecast_series(&series, version, config, "weekly")
}

/// Daily forecasts from the series at `version`, fitted on data up to
/// `version - trim_days`. Tagged `daily_originT` with the Box-Cox step and
/// `daily_originF` without it.
pub fn forecast_daily(
    store: &Store,
    region_id: &str,
    measure: Measure,
    version: NaiveDate,
    config: &ModelConfig,
) -> Result<ForecastResult> {
    let series = daily_training_series(store, region_id, measure, version, config.trim_days)?;
    let tag = if config.use_box_cox { "daily_originT" } else { "daily_originF" };
    forecast_series(&series, version, config, tag)
}

/// Writes forecast rows (see [`FORECAST_CSV_HEADER`]); values with four
/// decimals.
pub fn write_forecasts_csv<W: Write>(out: W, results: &[ForecastResult]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(FORECAST_CSV_HEADER.split(','))?;
    for r in results {
        for p in &r.points {
            w.write_record([
                r.region_id.clone(),
                r.measure.as_str().to_string(),
                r.made_on.to_string(),
                p.horizon.to_string(),
                p.target_date.to_string(),
                format!("{:.4}", p.point),
                format!("{:.4}", p.lower),
                format!("{:.4}", p.upper),
                r.model_tag.clone(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fact_store::{Centroid, CountryCode, DataValue, Region, TimePeriod};

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn store_with_region() -> Store {
        let mut store = Store::in_memory();
        let de = CountryCode::new("DE").unwrap();
        let t = store.register_region_type("Kreis", de, 0).unwrap();
        store
            .register_region(Region {
                region_id: "DE1".into(),
                name: "One".into(),
                abbreviation: String::new(),
                region_type_id: t,
                centroid: Centroid::new(51.0, 13.0),
                population: 100_000,
            })
            .unwrap();
        store
    }

    fn rows(period: TimePeriod, start: NaiveDate, values: &[u64], version: NaiveDate) -> Vec<DataValue> {
        let step = Duration::days(period.step_days());
        values
            .iter()
            .enumerate()
            .map(|(i, v)| DataValue {
                region_id: "DE1".into(),
                date: start + step * i as i32,
                period,
                measure: Measure::Infected,
                value: *v,
                version,
            })
            .collect()
    }

    #[test]
    fn config_round_trips_through_toml() {
        let mut c = ModelConfig::daily();
        c.mix_m = MixWeight::Fixed(0.25);
        let text = toml::to_string(&c).unwrap();
        assert!(text.contains("box_cox_lambda = \"auto\""));
        let back: ModelConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
        let partial: ModelConfig = toml::from_str("box_cox_lambda = 0.5\nhorizons = 2").unwrap();
        assert_eq!(partial.box_cox_lambda, LambdaChoice::Fixed(0.5));
        assert_eq!(partial.horizons, 2);
        assert!(toml::from_str::<ModelConfig>("mix_m = \"sometimes\"").is_err());
        assert!(toml::from_str::<ModelConfig>("bogus = 1").is_err());
    }

    #[test]
    fn constant_weekly_series_gives_flat_forecasts() {
        let mut store = store_with_region();
        let v = d("2022-05-04");
        store
            .upsert_values(&rows(TimePeriod::Week, d("2022-01-02"), &[100; 17], v), v)
            .unwrap();
        let r = forecast_weekly(&store, "DE1", Measure::Infected, v, &ModelConfig::weekly()).unwrap();
        assert_eq!(r.points.len(), 4);
        assert_eq!(r.fit_end, d("2022-04-24"));
        for (i, p) in r.points.iter().enumerate() {
            assert!((p.point - 100.0).abs() <= 1.0, "{p:?}");
            assert_eq!(p.target_date, d("2022-04-24") + Duration::days(7 * (i as i64 + 1)));
            assert!(p.lower <= p.point && p.point <= p.upper);
        }
    }

    #[test]
    fn weekly_ignores_the_incomplete_week() {
        assert_eq!(last_sunday(d("2022-01-05")), d("2022-01-02"));
        assert_eq!(last_sunday(d("2022-01-09")), d("2022-01-09"));
    }

    #[test]
    fn daily_fit_window_ends_three_days_before_version() {
        let mut store = store_with_region();
        let v = d("2022-03-31");
        let values: Vec<u64> = (0..90).map(|t| (80 + [0, 10, 12, 9, 7, -20, -30][t % 7]) as u64).collect();
        store
            .upsert_values(&rows(TimePeriod::Day, d("2022-01-01"), &values, v), v)
            .unwrap();
        let mut config = ModelConfig::daily();
        config.horizons = 7;
        let r = forecast_daily(&store, "DE1", Measure::Infected, v, &config).unwrap();
        assert_eq!(r.fit_end, d("2022-03-28"));
        assert_eq!(r.model_tag, "daily_originT");
        assert_eq!(r.points[0].target_date, d("2022-03-29"));
    }

    #[test]
    fn errors_name_the_region() {
        let mut store = store_with_region();
        let v = d("2022-01-20");
        store
            .upsert_values(&rows(TimePeriod::Week, d("2022-01-02"), &[5, 6], v), v)
            .unwrap();
        let err = forecast_weekly(&store, "DE1", Measure::Infected, v, &ModelConfig::weekly()).unwrap_err();
        assert!(err.to_string().starts_with("DE1: "), "{err}");
        assert!(matches!(err.root(), ForecastError::TooShort { .. }));
    }

    #[test]
    fn csv_layout() {
        let result = ForecastResult {
            region_id: "DE1".into(),
            measure: Measure::Infected,
            made_on: d("2022-01-05"),
            frequency: Frequency::Weekly,
            fit_end: d("2022-01-02"),
            points: vec![ForecastPoint {
                horizon: 1,
                target_date: d("2022-01-09"),
                point: 12.0,
                lower: 10.5,
                upper: 13.25,
            }],
            model_tag: "weekly".into(),
            lambda: None,
            mix: MixChoice::fixed(0.5),
            config: ModelConfig::weekly(),
        };
        let mut buf = Vec::new();
        write_forecasts_csv(&mut buf, &[result]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            format!("{FORECAST_CSV_HEADER}\nDE1,infected,2022-01-05,1,2022-01-09,12.0000,10.5000,13.2500,weekly\n")
        );
    }
}
