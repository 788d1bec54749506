//! Command-line front end.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{NaiveDate, Weekday};
use clap::{Args, Parser, Subcommand, ValueEnum};
use guardrail_core::evaluation::{select_focal_items, FocalCriteria, RankJudgment};
use guardrail_core::{Direction, StrategyKind, StrategySpec};

use crate::canonical::to_canonical_json;
use crate::chart::render_svg;
use crate::config::AppConfig;
use crate::dataset::{self, ColumnMapping, TimeSeriesDataset, ValidationPolicy, ValidationReport};
use crate::engine::{self, EngineError, ErrorKind, StrategyRequest};
use crate::precompute::precompute;
use crate::service::{self, AppState};

/// Exit code for a missing input, unknown strategy or unknown item.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "guardrail", version, about = "Context selection for line-chart guardrails")]
pub struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Log filter, e.g. `info` or `guardrail=debug`.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read a CSV, apply transforms and validation, write dataset JSON.
    Ingest(IngestArgs),
    /// Compute guardrail sets for many focal items into flat files.
    Precompute(PrecomputeArgs),
    /// Emit a chart description or SVG for one focal item.
    Chart(ChartArgs),
    /// Pick focal items near a target percentile.
    FocalSelect(FocalSelectArgs),
    /// Serve the read-only HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CsvLayout {
    /// One row per item and date.
    Long,
    /// A date column and one column per item.
    Wide,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Our World in Data COVID-19 export.
    Owid,
    /// `ticker,date,close` price table.
    Prices,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    Higher,
    Lower,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Validation report path; defaults to `<out stem>.report.json`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Defaults to the input file stem.
    #[arg(long)]
    pub dataset_id: Option<String>,
    #[arg(long, value_enum, default_value = "higher")]
    pub direction: DirectionArg,
    #[arg(long, value_enum, default_value = "long")]
    pub layout: CsvLayout,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// ColumnMapping JSON file.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub item_col: Option<String>,
    #[arg(long)]
    pub date_col: Option<String>,
    #[arg(long)]
    pub value_col: Option<String>,
    #[arg(long)]
    pub name_col: Option<String>,
    #[arg(long)]
    pub population_col: Option<String>,
    /// Comma-separated steps: `per_million`, `window:START..END`,
    /// `resample_weekly[:ANCHOR]`, `pct_change`, `validate[:FRACTION]`.
    /// Without an explicit `validate`, validation runs just before
    /// `pct_change`, or last.
    #[arg(long, default_value = "")]
    pub transform: String,
}

#[derive(Debug, Args)]
pub struct StrategyArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct PrecomputeArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Comma-separated strategy kinds; all kinds when omitted.
    #[arg(long)]
    pub strategies: Option<String>,
    /// Comma-separated focal ids.
    #[arg(long, conflicts_with = "all", required_unless_present = "all")]
    pub focal: Option<String>,
    /// Every item in the dataset.
    #[arg(long)]
    pub all: bool,
    #[command(flatten)]
    pub strategy: StrategyArgs,
    /// Defaults to `<data_dir>/precomputed`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ChartFormat {
    Json,
    Svg,
}

#[derive(Debug, Args)]
pub struct ChartArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub focal: String,
    /// Strategy kind, or `none` for the focal-only control chart.
    #[arg(long)]
    pub strategy: String,
    #[command(flatten)]
    pub params: StrategyArgs,
    #[arg(long, value_enum, default_value = "json")]
    pub format: ChartFormat,
    /// Standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FocalSelectArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// FocalCriteria JSON file.
    #[arg(long)]
    pub criteria: PathBuf,
    /// Overrides the criteria's count.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub bind: Option<String>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
}

/// Error carrying a process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        if let Some(engine) = e.downcast_ref::<EngineError>() {
            return engine_error(engine);
        }
        let missing = e
            .chain()
            .any(|c| c.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::NotFound));
        Self { code: if missing { EXIT_USAGE } else { 1 }, message: format!("{e:#}") }
    }
}

fn engine_error(e: &EngineError) -> CliError {
    let mut message = e.message.clone();
    for d in &e.diagnostics {
        message.push_str("\n  ");
        message.push_str(d);
    }
    CliError { code: if e.kind == ErrorKind::NotFound { EXIT_USAGE } else { 1 }, message }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        engine_error(&e)
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage(message: impl Into<String>) -> CliError {
    CliError { code: EXIT_USAGE, message: message.into() }
}

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| usage(format!("cannot open {}: {e}", path.display())))
}

pub fn read_dataset(path: &Path) -> CliResult<TimeSeriesDataset> {
    let file = open(path)?;
    serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| CliError { code: 1, message: format!("{}: {e}", path.display()) })
}

fn write_output(out: Option<&Path>, body: &str) -> CliResult<()> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(anyhow::Error::from)?;
            }
            std::fs::write(path, body).map_err(|e| anyhow::anyhow!("writing {}: {e}", path.display()))?;
        }
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            match writeln!(stdout, "{body}").and_then(|()| stdout.flush()) {
                // A closed pipe (`| head`) is not an error.
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    return Err(anyhow::anyhow!("writing to stdout: {e}").into())
                }
                _ => {}
            }
        }
    }
    Ok(())
}

/// One step of an ingest pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    PerMillion,
    Window(NaiveDate, NaiveDate),
    ResampleWeekly(Weekday),
    PercentChange,
    Validate(f64),
}

fn parse_step(token: &str) -> CliResult<Step> {
    let (name, arg) = match token.split_once(':') {
        Some((n, a)) => (n.trim(), Some(a.trim())),
        None => (token.trim(), None),
    };
    let date = |s: &str| {
        NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|e| usage(format!("bad date `{s}` in `{token}`: {e}")))
    };
    Ok(match (name, arg) {
        ("per_million", None) => Step::PerMillion,
        ("window" | "window_clip", Some(range)) => {
            let (a, b) = range
                .split_once("..")
                .ok_or_else(|| usage(format!("expected window:START..END, got `{token}`")))?;
            Step::Window(date(a)?, date(b)?)
        }
        ("resample_weekly" | "weekly", anchor) => Step::ResampleWeekly(match anchor {
            Some(a) => a.parse().map_err(|_| usage(format!("bad weekday `{a}`")))?,
            None => Weekday::Fri,
        }),
        ("pct_change" | "percent_change_from_start", None) => Step::PercentChange,
        ("validate", fraction) => Step::Validate(match fraction {
            Some(f) => f.parse().map_err(|_| usage(format!("bad fraction `{f}`")))?,
            None => dataset::DEFAULT_MAX_MISSING_FRACTION,
        }),
        _ => return Err(usage(format!(
            "unknown transform `{token}`; valid: per_million, window:START..END, resample_weekly[:ANCHOR], pct_change, validate[:FRACTION]"
        ))),
    })
}

/// Parses a transform list and places the implicit validation step.
pub fn parse_pipeline(spec: &str, default_fraction: f64) -> CliResult<Vec<Step>> {
    let mut steps: Vec<Step> =
        spec.split(',').filter(|t| !t.trim().is_empty()).map(parse_step).collect::<CliResult<_>>()?;
    if !steps.iter().any(|s| matches!(s, Step::Validate(_))) {
        let at = steps.iter().position(|s| *s == Step::PercentChange).unwrap_or(steps.len());
        steps.insert(at, Step::Validate(default_fraction));
    }
    Ok(steps)
}

/// Applies `steps`, collecting validation and clipping outcomes.
pub fn run_pipeline(
    raw: TimeSeriesDataset,
    steps: &[Step],
    policy: &ValidationPolicy,
) -> Result<(TimeSeriesDataset, ValidationReport), dataset::DatasetError> {
    let mut ds = raw;
    let mut report = ValidationReport::default();
    let mut dropped = Vec::new();
    for step in steps {
        ds = match *step {
            Step::PerMillion => dataset::per_million(&ds)?,
            Step::Window(start, end) => {
                let (clipped, gone) = dataset::window_clip(&ds, start, end)?;
                dropped.extend(gone);
                clipped
            }
            Step::ResampleWeekly(anchor) => dataset::resample_weekly(&ds, anchor)?,
            Step::PercentChange => dataset::percent_change_from_start(&ds)?,
            Step::Validate(fraction) => {
                let policy = ValidationPolicy { max_missing_fraction: fraction, ..*policy };
                let (validated, r) = dataset::validate(&ds, &policy)?;
                report.removed.extend(r.removed);
                report.filled.extend(r.filled);
                validated
            }
        };
    }
    report.dropped = dropped;
    Ok((ds, report))
}

fn column_mapping(args: &IngestArgs) -> CliResult<ColumnMapping> {
    let mut mapping = match (&args.schema, args.preset) {
        (Some(path), _) => serde_json::from_reader(open(path)?)
            .map_err(|e| CliError { code: 1, message: format!("{}: {e}", path.display()) })?,
        (None, Some(Preset::Owid)) => ColumnMapping {
            item_id: "iso_code".into(),
            date: "date".into(),
            value: "total_cases".into(),
            display_name: Some("location".into()),
            population: Some("population".into()),
            skip_item_prefix: Some("OWID_".into()),
        },
        (None, Some(Preset::Prices)) => {
            ColumnMapping { item_id: "ticker".into(), date: "date".into(), value: "close".into(), ..Default::default() }
        }
        (None, None) => ColumnMapping::default(),
    };
    if let Some(c) = &args.item_col {
        mapping.item_id = c.clone();
    }
    if let Some(c) = &args.date_col {
        mapping.date = c.clone();
    }
    if let Some(c) = &args.value_col {
        mapping.value = c.clone();
    }
    if args.name_col.is_some() {
        mapping.display_name = args.name_col.clone();
    }
    if args.population_col.is_some() {
        mapping.population = args.population_col.clone();
    }
    Ok(mapping)
}

fn ingest(args: &IngestArgs, config: &AppConfig) -> CliResult<()> {
    let steps = parse_pipeline(&args.transform, config.validation.max_missing_fraction)?;
    let file = open(&args.input)?;
    let dataset_id = args
        .dataset_id
        .clone()
        .unwrap_or_else(|| args.input.file_stem().map_or("dataset".into(), |s| s.to_string_lossy().into_owned()));
    let direction = match args.direction {
        DirectionArg::Higher => Direction::HigherIsBetter,
        DirectionArg::Lower => Direction::LowerIsBetter,
    };
    let reader = std::io::BufReader::new(file);
    let raw = match args.layout {
        CsvLayout::Long => dataset::ingest_long_csv(reader, &column_mapping(args)?, &dataset_id, direction),
        CsvLayout::Wide => {
            let date = args.date_col.as_deref().unwrap_or("date");
            dataset::ingest_wide_csv(reader, date, &dataset_id, direction)
        }
    }
    .map_err(|e| CliError { code: 1, message: format!("{}: {e}", args.input.display()) })?;
    let (ds, report) =
        run_pipeline(raw, &steps, &config.validation).map_err(|e| CliError { code: 1, message: e.to_string() })?;

    write_output(Some(&args.out), &to_canonical_json(&ds).map_err(anyhow::Error::from)?)?;
    let report_path = args.report.clone().unwrap_or_else(|| {
        let stem = args.out.file_stem().map_or("dataset".into(), |s| s.to_string_lossy().into_owned());
        args.out.with_file_name(format!("{stem}.report.json"))
    });
    write_output(Some(&report_path), &to_canonical_json(&report).map_err(anyhow::Error::from)?)?;
    tracing::info!(
        items = ds.items.len(),
        timesteps = ds.timesteps.len(),
        removed = report.removed.len(),
        filled = report.filled.len(),
        "ingested"
    );
    Ok(())
}

fn spec_for(kind: StrategyKind, params: &StrategyArgs) -> CliResult<StrategySpec> {
    let request = StrategyRequest { strategy: kind.as_str().into(), n: params.n, seed: params.seed, k: params.k };
    Ok(request.spec()?.expect("a strategy kind is never the control"))
}

fn run_precompute(args: &PrecomputeArgs, config: &AppConfig) -> CliResult<()> {
    let ds = read_dataset(&args.dataset)?;
    let kinds: Vec<StrategyKind> = match &args.strategies {
        Some(list) => list
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| engine::parse_kind(s.trim()))
            .collect::<Result<_, _>>()?,
        None => StrategyKind::ALL.to_vec(),
    };
    let specs: Vec<StrategySpec> = kinds.iter().map(|&k| spec_for(k, &args.strategy)).collect::<CliResult<_>>()?;
    let focals: Vec<String> = if args.all {
        ds.items.iter().map(|i| i.item_id.clone()).collect()
    } else {
        args.focal.as_deref().unwrap_or("").split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
    };
    let provider = config.provider.build()?;
    let out = args.out.clone().unwrap_or_else(|| config.precomputed_dir());
    let (_, report) = precompute(&ds, &focals, &specs, &*provider, &out)?;
    for (focal, kind, reason) in &report.skipped {
        eprintln!("skipped {focal} / {kind}: {reason}");
    }
    eprintln!(
        "{} written, {} unchanged, {} skipped; index {}",
        report.written,
        report.unchanged,
        report.skipped.len(),
        if report.index_written { "written" } else { "unchanged" }
    );
    Ok(())
}

fn run_chart(args: &ChartArgs, config: &AppConfig) -> CliResult<()> {
    let ds = read_dataset(&args.dataset)?;
    let request =
        StrategyRequest { strategy: args.strategy.clone(), n: args.params.n, seed: args.params.seed, k: args.params.k };
    request.spec()?;
    let provider = config.provider.build()?;
    let chart = engine::chart(&ds, &args.focal, &request, &*provider)?;
    let body = match args.format {
        ChartFormat::Json => to_canonical_json(&chart).map_err(anyhow::Error::from)?,
        ChartFormat::Svg => render_svg(&chart),
    };
    write_output(args.out.as_deref(), body.trim_end())
}

fn run_focal_select(args: &FocalSelectArgs) -> CliResult<()> {
    let ds = read_dataset(&args.dataset)?;
    let mut criteria: FocalCriteria = serde_json::from_reader(open(&args.criteria)?)
        .map_err(|e| CliError { code: 1, message: format!("{}: {e}", args.criteria.display()) })?;
    if let Some(count) = args.count {
        criteria.count = count;
    }
    let panel = ds.panel().map_err(EngineError::from)?;
    let picked = select_focal_items(&panel, &criteria).map_err(EngineError::from)?;
    let report: Vec<RankJudgment> = picked
        .iter()
        .map(|id| RankJudgment::new(&panel, id, None))
        .collect::<Result<_, _>>()
        .map_err(EngineError::from)?;
    write_output(args.out.as_deref(), &to_canonical_json(&report).map_err(anyhow::Error::from)?)
}

fn run_serve(args: &ServeArgs, config: &AppConfig) -> CliResult<()> {
    let data_dir = args.data_dir.clone().unwrap_or_else(|| config.data_dir.clone());
    let bind = args.bind.clone().unwrap_or_else(|| config.bind.clone());
    let provider: Arc<dyn guardrail_core::PeerProvider + Send + Sync> = Arc::from(config.provider.build()?);
    let state = Arc::new(AppState::new(data_dir, provider)?);
    let runtime = tokio::runtime::Runtime::new().map_err(anyhow::Error::from)?;
    runtime.block_on(service::serve(state, &bind))?;
    Ok(())
}

pub fn run(cli: Cli) -> CliResult<()> {
    let config = AppConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Ingest(args) => ingest(args, &config),
        Command::Precompute(args) => run_precompute(args, &config),
        Command::Chart(args) => run_chart(args, &config),
        Command::FocalSelect(args) => run_focal_select(args),
        Command::Serve(args) => run_serve(args, &config),
    }
}
