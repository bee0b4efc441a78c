//! `nntp`: synthesize or ingest traffic, fit the event-aware model, forecast
//! and compare against baselines.

mod config;

use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use chrono::{Duration, NaiveDate, NaiveDateTime};
use clap::{Args, Parser, Subcommand, ValueEnum};

use nntp_core::baselines::{fit_arma, forecast, seasonal_naive, select_order_bic, ArmaOrder};
use nntp_core::data_io::{
    export_forecast_csv, generate_synthetic, ingest_tsv, read_calendar_csv, read_series_csv, reference_corpus,
    write_calendar_csv, write_series_csv, IngestOptions, ModelDocument, TrafficKind, TIME_FORMAT,
};
use nntp_core::metrics::{time_run, EvaluationReport};
use nntp_core::pipeline::{fit_model, predict, PipelineConfig, StageError};
use nntp_core::predictor::{ForecastMode, ForecastRequest};
use nntp_core::timeseries::{EventCalendar, HourlyTrafficSeries, HOURS_PER_WEEK};

use config::ConfigFile;

#[derive(Parser)]
#[command(name = "nntp", version, about = "Event-aware hourly traffic forecasting")]
struct Cli {
    /// TOML file with fit and predictor overrides.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic three-week corpus: series.csv, calendar.csv and truth.model.
    Synth(SynthArgs),
    /// Fit the weekly profile, event pulses and attendance regression.
    Fit(FitArgs),
    /// Forecast from a fitted model.
    Predict(PredictArgs),
    /// Train on one window, test on the next and report accuracy per model and mode.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    /// Noise standard deviation as a fraction of the routine peak.
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
}

#[derive(Args)]
struct DataArgs {
    /// Hourly series CSV with header `time,traffic`.
    #[arg(long, conflicts_with = "tsv")]
    data: Option<PathBuf>,
    /// Grid traffic TSV file, or a directory of `.txt`/`.tsv` files. Repeatable.
    #[arg(long)]
    tsv: Vec<PathBuf>,
    /// Grid ids to sum over (TSV input only).
    #[arg(long, value_delimiter = ',')]
    grids: Vec<u32>,
    #[arg(long, default_value = "sms_in")]
    kind: String,
    /// Hours added to UTC timestamps before bucketing (TSV input only).
    #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
    tz_offset: i64,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Event calendar CSV; without it the model has no event part.
    #[arg(long)]
    calendar: Option<PathBuf>,
    /// Ignore data from this time on (`YYYY-MM-DD` or `YYYY-MM-DDTHH:MM:SS`).
    #[arg(long, value_parser = parse_time)]
    train_end: Option<NaiveDateTime>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Multi,
    Single,
}

impl From<Mode> for ForecastMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Multi => ForecastMode::MultiStep,
            Mode::Single => ForecastMode::SingleStep,
        }
    }
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    calendar: Option<PathBuf>,
    #[arg(long, value_parser = parse_time)]
    start: NaiveDateTime,
    /// Hours to forecast.
    #[arg(long, default_value_t = 168)]
    horizon: usize,
    #[arg(long, value_enum, default_value = "multi")]
    mode: Mode,
    /// Observed traffic; required for single-step mode.
    #[command(flatten)]
    data: DataArgs,
    /// Forecast CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Baseline {
    Arma,
    Arima,
    Snaive,
}

impl Baseline {
    fn name(self) -> &'static str {
        match self {
            Baseline::Arma => "arma",
            Baseline::Arima => "arima",
            Baseline::Snaive => "snaive",
        }
    }
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    calendar: Option<PathBuf>,
    /// End of the training window, e.g. `2013-12-16`.
    #[arg(long, value_parser = parse_time)]
    train_end: NaiveDateTime,
    /// End of the test window, e.g. `2013-12-23`.
    #[arg(long, value_parser = parse_time)]
    test_end: NaiveDateTime,
    #[arg(long = "baseline", value_enum)]
    baselines: Vec<Baseline>,
    /// Pin a baseline order instead of selecting by BIC, e.g. `arma=1,0,2` or `arima=3,1,1`.
    #[arg(long = "order", value_parser = parse_order)]
    orders: Vec<(Baseline, ArmaOrder)>,
    /// Largest AR and MA orders searched by BIC.
    #[arg(long, default_value_t = 3)]
    max_p: usize,
    #[arg(long, default_value_t = 3)]
    max_q: usize,
    /// Write 0 in the elapsed-time columns so reports are reproducible.
    #[arg(long)]
    no_timing: bool,
    /// Also write the event-model forecasts as `forecast_multi.csv` and `forecast_single.csv` here.
    #[arg(long)]
    forecast_dir: Option<PathBuf>,
    /// Report CSV path.
    #[arg(long)]
    out: PathBuf,
}

fn parse_time(s: &str) -> Result<NaiveDateTime, String> {
    NaiveDateTime::parse_from_str(s, TIME_FORMAT)
        .or_else(|_| NaiveDate::parse_from_str(s, "%Y-%m-%d").map(|d| d.and_hms_opt(0, 0, 0).expect("midnight")))
        .map_err(|_| format!("expected YYYY-MM-DD or YYYY-MM-DDTHH:MM:SS, got `{s}`"))
}

fn parse_order(s: &str) -> Result<(Baseline, ArmaOrder), String> {
    let (name, spec) = s.split_once('=').ok_or("expected MODEL=P,D,Q")?;
    let model = Baseline::from_str(name, true)?;
    let parts: Vec<usize> = spec
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("bad order `{spec}`")))
        .collect::<Result<_, _>>()?;
    let [p, d, q] = parts[..] else {
        return Err(format!("order `{spec}` needs three numbers"));
    };
    let order = ArmaOrder::new(p, d, q).map_err(|e| e.to_string())?;
    let expected_d = match model {
        Baseline::Arma => 0,
        Baseline::Arima => 1,
        Baseline::Snaive => return Err("snaive takes no order".into()),
    };
    if d != expected_d {
        return Err(format!("{} needs d = {expected_d}", model.name()));
    }
    Ok((model, order))
}

/// An error tagged with the stage it came from.
struct Failure {
    stage: &'static str,
    error: anyhow::Error,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {:#}", self.stage, self.error)
    }
}

impl From<StageError> for Failure {
    fn from(e: StageError) -> Self {
        Failure {
            stage: e.stage.as_str(),
            error: e.source.into(),
        }
    }
}

trait Tag<T> {
    fn tag(self, stage: &'static str) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Tag<T> for Result<T, E> {
    fn tag(self, stage: &'static str) -> Result<T, Failure> {
        self.map_err(|e| Failure { stage, error: e.into() })
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn create(path: &Path) -> Outcome<BufWriter<File>> {
    let f = File::create(path)
        .with_context(|| format!("creating {}", path.display()))
        .tag("output")?;
    Ok(BufWriter::new(f))
}

fn tsv_files(paths: &[PathBuf]) -> anyhow::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<io::Result<_>>()?;
            found.retain(|f| f.extension().is_some_and(|x| x == "txt" || x == "tsv"));
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        return Err(anyhow!("no TSV files found"));
    }
    Ok(files)
}

impl DataArgs {
    fn given(&self) -> bool {
        self.data.is_some() || !self.tsv.is_empty()
    }

    fn load(&self) -> Outcome<HourlyTrafficSeries> {
        if let Some(path) = &self.data {
            return read_series_csv(open(path).tag("data")?).tag("data");
        }
        if self.tsv.is_empty() {
            return Err(Failure {
                stage: "data",
                error: anyhow!("one of --data or --tsv is required"),
            });
        }
        if self.grids.is_empty() {
            return Err(Failure {
                stage: "data",
                error: anyhow!("--grids is required with --tsv"),
            });
        }
        let kind: TrafficKind = self.kind.parse().tag("data")?;
        let mut options = IngestOptions::new(kind, self.grids.iter().copied());
        options.tz_offset_hours = self.tz_offset;

        let mut reader: Box<dyn Read> = Box::new(io::empty());
        for f in tsv_files(&self.tsv).tag("data")? {
            let file = File::open(&f)
                .with_context(|| format!("opening {}", f.display()))
                .tag("data")?;
            // The separator keeps a missing final newline from joining two records.
            reader = Box::new(reader.chain(file).chain(&b"\n"[..]));
        }
        let series = ingest_tsv(BufReader::new(reader), &options).tag("data")?;
        let days = series.whole_days().tag("data")?;
        if days.len() != series.len() {
            log::warn!(target: "data", "dropped {} hours outside whole days", series.len() - days.len());
        }
        Ok(days)
    }
}

fn load_calendar(path: Option<&Path>) -> Outcome<EventCalendar> {
    match path {
        Some(p) => read_calendar_csv(open(p).tag("calendar")?).tag("calendar"),
        None => Ok(EventCalendar::default()),
    }
}

fn pipeline_config(cli: &Cli) -> Outcome<PipelineConfig> {
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p).tag("config")?,
        None => ConfigFile::default(),
    };
    file.pipeline(cli.seed).tag("config")
}

fn window(
    series: &HourlyTrafficSeries,
    from: NaiveDateTime,
    to: NaiveDateTime,
    what: &str,
) -> Outcome<HourlyTrafficSeries> {
    series
        .window(from, to)
        .with_context(|| format!("{what} window {from} .. {to}"))
        .tag("split")
}

fn cmd_synth(cli: &Cli, args: &SynthArgs) -> Outcome {
    let data = generate_synthetic(&reference_corpus(cli.seed, args.noise)).tag("synth")?;
    std::fs::create_dir_all(&args.out_dir).tag("output")?;
    let dir = &args.out_dir;
    write_series_csv(&data.series, create(&dir.join("series.csv"))?).tag("output")?;
    write_calendar_csv(&data.calendar, create(&dir.join("calendar.csv"))?).tag("output")?;
    data.truth.write_to(create(&dir.join("truth.model"))?).tag("output")?;
    println!(
        "{} hours from {}, {} events",
        data.series.len(),
        data.series.start(),
        data.calendar.len()
    );
    Ok(())
}

fn cmd_fit(cli: &Cli, args: &FitArgs) -> Outcome {
    let cfg = pipeline_config(cli)?;
    let calendar = load_calendar(args.calendar.as_deref())?;
    let mut series = args.data.load()?;
    if let Some(end) = args.train_end {
        series = window(&series, series.start(), end, "training")?;
    }
    let calendar = calendar.between(series.start(), series.end());
    if calendar.is_empty() {
        log::warn!(target: "calendar", "no events in the data span; fitting the weekly profile only");
    }
    let outcome = fit_model(&series, &calendar, &cfg)?;
    for w in &outcome.warnings {
        log::warn!(target: "fit", "{w}");
    }
    let doc = &outcome.document;
    doc.write_to(create(&args.out)?).tag("output")?;

    let mut out = io::stdout().lock();
    print_fit_summary(&mut out, doc).tag("output")
}

fn print_fit_summary(out: &mut impl Write, doc: &ModelDocument) -> io::Result<()> {
    if let Some(d) = &doc.diagnostics {
        writeln!(
            out,
            "weekly objective {} after {} iterations (converged: {})",
            d.weekly_objective, d.weekly_iterations, d.weekly_converged
        )?;
    }
    for c in doc.weekly.components() {
        writeln!(
            out,
            "  {:<10} R {:>12.4}  t {:>8.4}  sigma {:.4}",
            c.label.to_string(),
            c.peak,
            c.center,
            c.width
        )?;
    }
    for e in &doc.events {
        writeln!(
            out,
            "event {} attendance {} -> R {:.2} t {:.2} sigma {:.3}",
            e.commencement.format(TIME_FORMAT),
            e.attendance,
            e.pulse.volume,
            e.pulse.center,
            e.pulse.width
        )?;
    }
    if let Some(r) = &doc.regression {
        writeln!(
            out,
            "regression R = {} * attendance + {} (r = {:.4})",
            r.slope, r.intercept, r.pearson_r
        )?;
    }
    if let Some(p) = &doc.sigma_prior {
        writeln!(out, "mean sigma {:.4}", p.mean_sigma)?;
    }
    Ok(())
}

fn cmd_predict(cli: &Cli, args: &PredictArgs) -> Outcome {
    let cfg = pipeline_config(cli)?;
    let doc = ModelDocument::read_from(open(&args.model).tag("model")?).tag("model")?;
    let end = args.start + Duration::hours(args.horizon as i64);
    let calendar = load_calendar(args.calendar.as_deref())?.between(args.start, end);
    let observed = if args.data.given() {
        Some(window(&args.data.load()?, args.start, end, "observed")?)
    } else {
        None
    };
    let request = ForecastRequest::new(args.start, args.horizon, calendar, args.mode.into()).tag("predict")?;
    let forecast = predict(&doc, &request, observed.as_ref(), &cfg.predictor)?;
    export_forecast_csv(&forecast, create(&args.out)?).tag("output")
}

struct Row {
    model: String,
    mode: &'static str,
    order: String,
    report: EvaluationReport,
}

fn score(actual: &[f64], predicted: &[f64], train_ms: f64, predict_ms: f64) -> Outcome<EvaluationReport> {
    EvaluationReport::compute(actual, predicted, train_ms, predict_ms).tag("evaluate")
}

fn baseline_rows(
    args: &EvaluateArgs,
    which: Baseline,
    train: &HourlyTrafficSeries,
    test: &HourlyTrafficSeries,
) -> Outcome<Vec<Row>> {
    let actual = test.values();
    let n = test.len();
    let full: Vec<f64> = train.values().iter().chain(actual).copied().collect();
    let row = |order: String, mode, report| Row {
        model: which.name().into(),
        mode,
        order,
        report,
    };

    if which == Baseline::Snaive {
        let period = HOURS_PER_WEEK;
        let (multi, t) = time_run(|| seasonal_naive(train, n, period)).tag("baseline")?;
        let (single, ts) = time_run(|| -> nntp_core::Result<Vec<f64>> {
            if train.len() < period {
                return Err(nntp_core::Error::InsufficientData(format!(
                    "seasonal naive needs {period} training hours"
                )));
            }
            Ok((0..n).map(|i| full[train.len() + i - period]).collect())
        })
        .tag("baseline")?;
        return Ok(vec![
            row("-".into(), "multi", score(actual, multi.values(), 0.0, t.wall_ms)?),
            row("-".into(), "single", score(actual, &single, 0.0, ts.wall_ms)?),
        ]);
    }

    let d = usize::from(which == Baseline::Arima);
    let pinned = args.orders.iter().rev().find(|(b, _)| *b == which).map(|(_, o)| *o);
    let (model, fit_t) = time_run(|| {
        let order = match pinned {
            Some(o) => o,
            None => select_order_bic(train, args.max_p, args.max_q, d)?,
        };
        fit_arma(train, order)
    })
    .tag("baseline")?;
    log::info!(target: "baseline", "{} order {}", which.name(), model.order);
    let (multi, t) = time_run(|| forecast(&model, train, n)).tag("baseline")?;
    let (single, ts) = time_run(|| Ok::<_, nntp_core::Error>(model.one_step_predictions(&full))).tag("baseline")?;
    let order = model.order.to_string();
    Ok(vec![
        row(
            order.clone(),
            "multi",
            score(actual, multi.values(), fit_t.wall_ms, t.wall_ms)?,
        ),
        row(
            order,
            "single",
            score(actual, &single[train.len()..], fit_t.wall_ms, ts.wall_ms)?,
        ),
    ])
}

fn cmd_evaluate(cli: &Cli, args: &EvaluateArgs) -> Outcome {
    let cfg = pipeline_config(cli)?;
    let calendar = load_calendar(args.calendar.as_deref())?;
    let series = args.data.load()?;
    if args.train_end >= args.test_end {
        return Err(Failure {
            stage: "split",
            error: anyhow!("--train-end must precede --test-end"),
        });
    }
    let train = window(&series, series.start(), args.train_end, "training")?;
    let test = window(&series, args.train_end, args.test_end, "test")?;
    let actual = test.values();

    let (outcome, fit_t) = time_run(|| fit_model(&train, &calendar.between(train.start(), train.end()), &cfg))?;
    for w in &outcome.warnings {
        log::warn!(target: "fit", "{w}");
    }
    let doc = outcome.document;
    let test_events = calendar.between(test.start(), test.end());

    let mut rows = Vec::new();
    for mode in [Mode::Multi, Mode::Single] {
        let request =
            ForecastRequest::new(test.start(), test.len(), test_events.clone(), mode.into()).tag("predict")?;
        let (f, t) = time_run(|| predict(&doc, &request, Some(&test), &cfg.predictor))?;
        if let Some(dir) = &args.forecast_dir {
            std::fs::create_dir_all(dir).tag("output")?;
            let name = format!("forecast_{}.csv", mode.name());
            export_forecast_csv(&f, create(&dir.join(name))?).tag("output")?;
        }
        rows.push(Row {
            model: "nntp".into(),
            mode: mode.name(),
            order: "-".into(),
            report: score(actual, &f.predicted(), fit_t.wall_ms, t.wall_ms)?,
        });
    }
    let mut seen = Vec::new();
    for &b in &args.baselines {
        if !seen.contains(&b) {
            seen.push(b);
            rows.extend(baseline_rows(args, b, &train, &test)?);
        }
    }

    let mut out = create(&args.out)?;
    write_report(&mut out, &rows, args.no_timing).tag("output")
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Multi => "multi",
            Mode::Single => "single",
        }
    }
}

fn write_report(out: &mut impl Write, rows: &[Row], no_timing: bool) -> io::Result<()> {
    writeln!(out, "model,mode,order,{}", EvaluationReport::CSV_HEADER)?;
    for r in rows {
        let mut report = r.report;
        if no_timing {
            report.elapsed_train_ms = 0.0;
            report.elapsed_predict_ms = 0.0;
        }
        // Orders print as `(p,d,q)`; quote them so the commas stay in one field.
        let order = if r.order.contains(',') {
            format!("\"{}\"", r.order)
        } else {
            r.order.clone()
        };
        writeln!(out, "{},{},{},{}", r.model, r.mode, order, report.csv_row())?;
    }
    out.flush()
}

fn init_logging(verbose: bool) {
    let level = if verbose {
        log::LevelFilter::Info
    } else {
        log::LevelFilter::Warn
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format(|buf, record| {
            let stage = record.target().rsplit("::").next().unwrap_or("nntp");
            writeln!(
                buf,
                "{} [{}] {}",
                record.level().as_str().to_lowercase(),
                stage,
                record.args()
            )
        })
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(&cli, a),
        Command::Fit(a) => cmd_fit(&cli, a),
        Command::Predict(a) => cmd_predict(&cli, a),
        Command::Evaluate(a) => cmd_evaluate(&cli, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error {f}");
            ExitCode::FAILURE
        }
    }
}
