//! One-shot batch commands over an epipipe store: ingest a payload as a new
//! snapshot, forecast, backtest, and run the border and outlier analyses.
//! Every command writes its machine-readable result as CSV and a short human
//! summary to the given writer.

pub mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use epipipe::analytics::{
    border_effects, daily_values, detect_outliers, write_border_csv, write_outliers_csv, AnalyticsError, BorderConfig,
    BorderReport, OutlierEvent, Scale,
};
use epipipe::etl::{register_dictionary, run_job, write_rejects_csv, EtlError, IngestReport};
use epipipe::forecast::{
    backtest, forecast_daily, forecast_weekly, wednesdays, write_backtest_csv, write_backtest_entries_csv,
    write_forecasts_csv, BacktestReport, ForecastError, ForecastResult, Frequency, TimeSeries, Variant,
};
use epipipe::{CountryCode, Measure, Store, StoreError};

pub use config::PipelineConfig;

/// Exit status of a failed command.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("store error: {0}")]
    Store(String),
    #[error("model fit failed: {0}")]
    Fit(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Parse(_) => 3,
            CliError::Store(_) => 4,
            CliError::Fit(_) => 5,
        }
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        CliError::Store(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<EtlError> for CliError {
    fn from(e: EtlError) -> Self {
        let msg = e.to_string();
        match e {
            EtlError::Store(_) | EtlError::Io(_) => CliError::Store(msg),
            EtlError::Config(_) | EtlError::Toml { .. } | EtlError::UnsupportedCountry(_) => CliError::Config(msg),
            EtlError::Decode(_)
            | EtlError::Csv(_)
            | EtlError::Json(_)
            | EtlError::MissingColumns(_)
            | EtlError::EmptyRegionId => CliError::Parse(msg),
        }
    }
}

impl From<ForecastError> for CliError {
    fn from(e: ForecastError) -> Self {
        let msg = e.to_string();
        match e.root() {
            ForecastError::Store(_) => CliError::Store(msg),
            ForecastError::InvalidConfig(_) => CliError::Config(msg),
            ForecastError::Io(_) | ForecastError::Csv(_) => CliError::Io(msg),
            _ => CliError::Fit(msg),
        }
    }
}

impl From<AnalyticsError> for CliError {
    fn from(e: AnalyticsError) -> Self {
        let msg = e.to_string();
        match e {
            AnalyticsError::Store(_) => CliError::Store(msg),
            AnalyticsError::InvalidParameter(_) => CliError::Config(msg),
            AnalyticsError::Io(_) | AnalyticsError::Csv(_) => CliError::Io(msg),
            _ => CliError::Fit(msg),
        }
    }
}

const EXIT_CODES: &str = "Exit codes:
  0  success
  1  I/O failure while writing output
  2  configuration or usage error (including a missing payload file)
  3  payload could not be parsed
  4  store error (unknown region, missing snapshot, locked store)
  5  model fit or analysis failure";

#[derive(Debug, Parser)]
#[command(name = "epipipe", version, about = "Batch jobs over a versioned regional case-count store", after_help = EXIT_CODES)]
pub struct Cli {
    /// Pipeline configuration file.
    #[arg(long, global = true, env = "EPIPIPE_CONFIG", default_value = "epipipe.toml")]
    pub config: PathBuf,
    /// Store directory; overrides the configuration file.
    #[arg(long, global = true, env = "EPIPIPE_STORE")]
    pub store: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load one source payload into the store as a snapshot version.
    Ingest(IngestArgs),
    /// Forecast weekly or daily totals for one or more regions.
    Forecast(ForecastArgs),
    /// Score forecast variants over a Wednesday schedule of snapshots.
    Backtest(BacktestArgs),
    /// Compare correlations with same-country and cross-country neighbours.
    Border(BorderArgs),
    /// Detect z-score outliers in daily counts.
    Outliers(OutlierArgs),
    /// Dump every stored row as CSV.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    /// Source id declared in the configuration.
    #[arg(long)]
    pub source: String,
    /// Payload file to load.
    #[arg(long)]
    pub payload: PathBuf,
    /// Snapshot version (YYYY-MM-DD).
    #[arg(long)]
    pub version: NaiveDate,
    /// Reject file [default: <export_dir>/rejects/<source>_<version>.csv].
    #[arg(long)]
    pub rejects: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ForecastArgs {
    /// Region id; repeat for several regions.
    #[arg(long = "region", required = true)]
    pub regions: Vec<String>,
    #[arg(long, default_value = "infected")]
    pub measure: Measure,
    /// `weekly` or `daily`.
    #[arg(long, default_value = "weekly")]
    pub frequency: Frequency,
    /// Snapshot to forecast from [default: latest].
    #[arg(long)]
    pub version: Option<NaiveDate>,
    /// Skip the Box-Cox step.
    #[arg(long)]
    pub no_box_cox: bool,
    /// Output CSV [default: <export_dir>/forecast_<frequency>_<version>.csv].
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BacktestArgs {
    /// Region id; repeat for several. Defaults to every region on the finest
    /// level of its country.
    #[arg(long = "region")]
    pub regions: Vec<String>,
    #[arg(long, default_value = "infected")]
    pub measure: Measure,
    /// First day of the origin range.
    #[arg(long)]
    pub from: NaiveDate,
    /// Last day of the origin range.
    #[arg(long)]
    pub to: NaiveDate,
    /// Comma-separated variant tags.
    #[arg(long = "variants", value_delimiter = ',', default_value = "weekly,daily_originT,daily_originF")]
    pub variants: Vec<String>,
    /// Summary CSV [default: <export_dir>/backtest.csv]; per-forecast rows go
    /// next to it with an `_entries` suffix.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BorderArgs {
    /// Country codes to include; repeat or separate by commas. Defaults to all.
    #[arg(long = "country", value_delimiter = ',')]
    pub countries: Vec<String>,
    #[arg(long, default_value = "infected")]
    pub measure: Measure,
    /// First day of the correlation window.
    #[arg(long)]
    pub from: NaiveDate,
    /// Last day of the correlation window.
    #[arg(long)]
    pub to: NaiveDate,
    /// Snapshot to read [default: latest].
    #[arg(long)]
    pub version: Option<NaiveDate>,
    /// Neighbour radius in km [default: from configuration].
    #[arg(long)]
    pub radius_km: Option<f64>,
    /// Largest lag in days [default: from configuration].
    #[arg(long)]
    pub max_lag: Option<u32>,
    /// `incidence` or `counts` [default: from configuration].
    #[arg(long)]
    pub scale: Option<String>,
    /// Output CSV [default: <export_dir>/border.csv].
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct OutlierArgs {
    /// Region id; repeat for several regions.
    #[arg(long = "region", required = true)]
    pub regions: Vec<String>,
    #[arg(long, default_value = "infected")]
    pub measure: Measure,
    /// First day scanned.
    #[arg(long)]
    pub from: NaiveDate,
    /// Last day scanned.
    #[arg(long)]
    pub to: NaiveDate,
    /// Snapshot to read [default: latest].
    #[arg(long)]
    pub version: Option<NaiveDate>,
    /// Smallest z-score flagged as an event [default: from configuration].
    #[arg(long)]
    pub z_threshold: Option<f64>,
    /// Width of the centred baseline mean; odd [default: from configuration].
    #[arg(long)]
    pub baseline_window: Option<usize>,
    /// Trailing residuals used for the standard deviation [default: from configuration].
    #[arg(long)]
    pub std_window: Option<usize>,
    /// Output CSV [default: <export_dir>/outliers.csv].
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    /// Output CSV [default: <export_dir>/rows.csv].
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Loaded configuration plus the effective store location.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: PipelineConfig,
    pub store_path: PathBuf,
}

impl Context {
    pub fn new(config: PipelineConfig, store_override: Option<PathBuf>) -> Self {
        let store_path = store_override.unwrap_or_else(|| config.store.clone());
        Self { config, store_path }
    }

    pub fn load(config_path: &Path, store_override: Option<PathBuf>) -> Result<Self, CliError> {
        Ok(Self::new(PipelineConfig::load(config_path)?, store_override))
    }

    fn open_read_only(&self) -> Result<Store, CliError> {
        Ok(Store::open_read_only(&self.store_path)?)
    }

    fn output(&self, given: &Option<PathBuf>, default_name: &str) -> PathBuf {
        given.clone().unwrap_or_else(|| self.config.export_dir.join(default_name))
    }
}

/// Parses the command line and runs the selected command.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let ctx = Context::load(&cli.config, cli.store)?;
    match cli.command {
        Command::Ingest(args) => cmd_ingest(&ctx, &args, out).map(drop),
        Command::Forecast(args) => cmd_forecast(&ctx, &args, out).map(drop),
        Command::Backtest(args) => cmd_backtest(&ctx, &args, out).map(drop),
        Command::Border(args) => cmd_border(&ctx, &args, out).map(drop),
        Command::Outliers(args) => cmd_outliers(&ctx, &args, out).map(drop),
        Command::Export(args) => cmd_export(&ctx, &args, out).map(drop),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn latest_or(store: &Store, version: Option<NaiveDate>) -> Result<NaiveDate, CliError> {
    match version {
        Some(v) => Ok(v),
        None => Ok(store.latest_snapshot().ok_or(StoreError::NoSnapshots)?),
    }
}

fn register_hierarchy(store: &mut Store, config: &PipelineConfig) -> Result<(), StoreError> {
    for country in &config.countries {
        for (level, name) in country.levels.iter().enumerate() {
            store.register_region_type(name, country.code, level as u8)?;
        }
    }
    Ok(())
}

pub fn cmd_ingest(ctx: &Context, args: &IngestArgs, out: &mut dyn Write) -> Result<IngestReport, CliError> {
    let source = ctx
        .config
        .source(&args.source)
        .ok_or_else(|| CliError::Config(format!("unknown source {:?}", args.source)))?;
    let dictionary = ctx
        .config
        .dictionary_for(source)
        .expect("configuration validation pairs every source with a dictionary");
    let payload = std::fs::read(&args.payload)
        .map_err(|e| CliError::Config(format!("cannot read payload {}: {e}", args.payload.display())))?;

    let mut store = Store::open(&ctx.store_path)?;
    let report = store.transaction(|s| -> Result<IngestReport, EtlError> {
        register_hierarchy(s, &ctx.config)?;
        for d in &ctx.config.dictionaries {
            register_dictionary(s, d)?;
        }
        run_job(source, dictionary, &payload, args.version, s)
    })?;

    let rejects_path = ctx.output(
        &args.rejects,
        &format!("rejects/{}_{}.csv", report.source_id, report.version),
    );
    let mut file = create(&rejects_path)?;
    write_rejects_csv(&mut file, &report.rows_rejected)?;
    file.flush()?;

    let m = &report.rows_merged;
    writeln!(out, "source {} version {}", report.source_id, report.version)?;
    writeln!(
        out,
        "rows read {}, merged {} (inserted {}, updated {}, unchanged {}), rejected {}",
        report.rows_read,
        m.total(),
        m.inserted,
        m.updated,
        m.unchanged,
        report.rows_rejected.len()
    )?;
    writeln!(
        out,
        "temporal roll-up {} rows, spatial roll-up {} rows",
        report.temporal.total(),
        report.spatial.total()
    )?;
    for orphan in &report.orphans {
        writeln!(out, "orphan region {orphan}")?;
    }
    for note in &report.notes {
        writeln!(out, "note: {note}")?;
    }
    writeln!(out, "rejects written to {}", rejects_path.display())?;
    Ok(report)
}

pub fn cmd_forecast(ctx: &Context, args: &ForecastArgs, out: &mut dyn Write) -> Result<Vec<ForecastResult>, CliError> {
    let store = ctx.open_read_only()?;
    let version = latest_or(&store, args.version)?;
    let mut config = match args.frequency {
        Frequency::Weekly => ctx.config.weekly.clone(),
        Frequency::Daily => ctx.config.daily.clone(),
    };
    if args.no_box_cox {
        config.use_box_cox = false;
    }
    let mut results = Vec::new();
    for region in &args.regions {
        let result = match args.frequency {
            Frequency::Weekly => forecast_weekly(&store, region, args.measure, version, &config)?,
            Frequency::Daily => forecast_daily(&store, region, args.measure, version, &config)?,
        };
        results.push(result);
    }
    let path = ctx.output(&args.output, &format!("forecast_{}_{version}.csv", args.frequency.as_str()));
    let mut file = create(&path)?;
    write_forecasts_csv(&mut file, &results)?;
    file.flush()?;

    for r in &results {
        let points: Vec<String> = r.points.iter().map(|p| format!("{:.1}", p.point)).collect();
        writeln!(out, "{} {} from {}: {}", r.region_id, r.model_tag, r.fit_end, points.join(" "))?;
    }
    writeln!(out, "forecasts written to {}", path.display())?;
    Ok(results)
}

fn variant(ctx: &Context, tag: &str) -> Result<Variant, CliError> {
    let mut v = match tag {
        "weekly" => Variant::weekly(),
        "daily_originT" => Variant::daily_with_box_cox(),
        "daily_originF" => Variant::daily_without_box_cox(),
        other => {
            return Err(CliError::Config(format!(
                "unknown variant {other:?}; expected weekly, daily_originT or daily_originF"
            )))
        }
    };
    let use_box_cox = v.config.use_box_cox;
    v.config = match v.frequency {
        Frequency::Weekly => ctx.config.weekly.clone(),
        Frequency::Daily => ctx.config.daily.clone(),
    };
    if v.frequency == Frequency::Daily {
        v.config.use_box_cox = use_box_cox;
    }
    Ok(v)
}

/// Regions on the deepest configured level of their country.
fn finest_regions(store: &Store) -> Vec<String> {
    let level = |r: &epipipe::Region| store.region_type(r.region_type_id).map(|t| (t.country, t.level));
    let mut deepest: std::collections::BTreeMap<CountryCode, u8> = Default::default();
    for t in store.region_types() {
        let e = deepest.entry(t.country).or_insert(t.level);
        *e = (*e).max(t.level);
    }
    let mut ids: Vec<String> = store
        .regions()
        .filter(|r| level(r).is_some_and(|(c, l)| deepest.get(&c) == Some(&l)))
        .map(|r| r.region_id.clone())
        .collect();
    ids.sort();
    ids
}

#[derive(Debug, Clone)]
pub struct BacktestOutcome {
    pub report: BacktestReport,
    pub summary_path: PathBuf,
    pub entries_path: PathBuf,
}

pub fn cmd_backtest(ctx: &Context, args: &BacktestArgs, out: &mut dyn Write) -> Result<BacktestOutcome, CliError> {
    if args.from > args.to {
        return Err(CliError::Config(format!("--from {} is after --to {}", args.from, args.to)));
    }
    let variants = args
        .variants
        .iter()
        .map(|t| variant(ctx, t.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    let store = ctx.open_read_only()?;
    let regions = if args.regions.is_empty() {
        finest_regions(&store)
    } else {
        args.regions.clone()
    };
    for r in &regions {
        if store.region(r).is_none() {
            return Err(StoreError::UnknownRegion(r.clone()).into());
        }
    }
    let origins = wednesdays(args.from, args.to);
    if origins.is_empty() {
        log::warn!("no Wednesday between {} and {}; the report is empty", args.from, args.to);
        writeln!(out, "warning: no Wednesday between {} and {}", args.from, args.to)?;
    }
    let report = backtest(&store, &regions, args.measure, &origins, &variants)?;

    let summary_path = ctx.output(&args.output, "backtest.csv");
    let stem = summary_path.file_stem().and_then(|s| s.to_str()).unwrap_or("backtest");
    let entries_path = summary_path.with_file_name(format!("{stem}_entries.csv"));
    let mut file = create(&summary_path)?;
    write_backtest_csv(&mut file, &report)?;
    file.flush()?;
    let mut file = create(&entries_path)?;
    write_backtest_entries_csv(&mut file, &report)?;
    file.flush()?;

    writeln!(out, "{} origins, {} regions, {} skipped", origins.len(), regions.len(), report.skipped.len())?;
    writeln!(out, "{:<14} {:>2} {:>10} {:>12}", "variant", "h", "MAPE %", "median MAPE")?;
    for s in &report.summary {
        let fmt = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
        writeln!(
            out,
            "{:<14} {:>2} {:>10} {:>12}",
            s.model_tag,
            s.horizon,
            fmt(s.mape_percent),
            fmt(report.median_region_mape(&s.model_tag, s.horizon))
        )?;
    }
    writeln!(out, "report written to {} and {}", summary_path.display(), entries_path.display())?;
    Ok(BacktestOutcome {
        report,
        summary_path,
        entries_path,
    })
}

fn parse_scale(text: &str) -> Result<Scale, CliError> {
    match text.trim().to_ascii_lowercase().as_str() {
        "incidence" => Ok(Scale::Incidence),
        "counts" => Ok(Scale::Counts),
        other => Err(CliError::Config(format!("unknown scale {other:?}; expected incidence or counts"))),
    }
}

pub fn cmd_border(ctx: &Context, args: &BorderArgs, out: &mut dyn Write) -> Result<BorderReport, CliError> {
    let countries = args
        .countries
        .iter()
        .map(|c| CountryCode::new(c.trim()).map_err(|e| CliError::Config(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let store = ctx.open_read_only()?;
    let version = latest_or(&store, args.version)?;
    let defaults = &ctx.config.analytics;
    let config = BorderConfig {
        radius_km: args.radius_km.unwrap_or(defaults.radius_km),
        max_lag: args.max_lag.unwrap_or(defaults.max_lag),
        measure: args.measure,
        from: args.from,
        to: args.to,
        version,
        scale: args.scale.as_deref().map(parse_scale).transpose()?.unwrap_or(defaults.scale),
    };
    let report = border_effects(&store, &countries, &config)?;

    let path = ctx.output(&args.output, "border.csv");
    let mut file = create(&path)?;
    write_border_csv(&mut file, &report)?;
    file.flush()?;

    let exported = report.exportable().count();
    if exported == 0 {
        log::warn!("no region has neighbours in another country within {} km", config.radius_km);
        writeln!(out, "warning: no region has cross-country neighbours within {} km", config.radius_km)?;
    }
    writeln!(
        out,
        "{} regions scored, {} with cross-country neighbours, {} skipped",
        report.records.len(),
        exported,
        report.skipped.len()
    )?;
    writeln!(out, "border effects written to {}", path.display())?;
    Ok(report)
}

pub fn cmd_outliers(ctx: &Context, args: &OutlierArgs, out: &mut dyn Write) -> Result<Vec<OutlierEvent>, CliError> {
    if args.from > args.to {
        return Err(CliError::Config(format!("--from {} is after --to {}", args.from, args.to)));
    }
    let mut config = ctx.config.analytics.outliers;
    config.z_threshold = args.z_threshold.unwrap_or(config.z_threshold);
    config.baseline_window = args.baseline_window.unwrap_or(config.baseline_window);
    config.std_window = args.std_window.unwrap_or(config.std_window);
    config.validate()?;

    let store = ctx.open_read_only()?;
    let version = latest_or(&store, args.version)?;
    let mut events = Vec::new();
    for region in &args.regions {
        let values = daily_values(&store, region, args.measure, args.from, args.to, version, Scale::Counts)?;
        let series = TimeSeries::new(region.as_str(), args.measure, Frequency::Daily, args.from, values)?;
        let found = detect_outliers(&series, &config)?;
        writeln!(out, "{region}: {} event(s)", found.len())?;
        events.extend(found);
    }
    let path = ctx.output(&args.output, "outliers.csv");
    let mut file = create(&path)?;
    write_outliers_csv(&mut file, &events)?;
    file.flush()?;
    writeln!(out, "outliers written to {}", path.display())?;
    Ok(events)
}

pub fn cmd_export(ctx: &Context, args: &ExportArgs, out: &mut dyn Write) -> Result<PathBuf, CliError> {
    let store = ctx.open_read_only()?;
    let path = ctx.output(&args.output, "rows.csv");
    let mut file = create(&path)?;
    store.export_csv(&mut file)?;
    file.flush()?;
    writeln!(out, "{} rows written to {}", store.row_count(), path.display())?;
    Ok(path)
}
