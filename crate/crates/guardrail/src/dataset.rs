//! Aligned time-series datasets: ingest, transforms and validation.
//!
//! Every operation returns a new dataset and appends a [`TransformDescriptor`]
//! to its log, so [`replay`] can rebuild a transformed dataset from the raw
//! ingest output.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;

use chrono::{Datelike, Days, NaiveDate, Weekday};
use guardrail_core::{Direction, Item, Panel};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_MAX_MISSING_FRACTION: f64 = 0.05;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("csv row {row}: {message}")]
    MalformedRow { row: u64, message: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing column `{0}` in header")]
    MissingColumn(String),

    #[error("duplicate observation for item `{item}` on {date}")]
    DuplicatePair { item: String, date: NaiveDate },

    #[error("input has no data rows")]
    Empty,

    #[error("dataset is already weekly or coarser")]
    AlreadyCoarse,

    #[error("transform `{0}` was already applied")]
    AlreadyApplied(&'static str),

    #[error("item `{0}` has a masked or zero first value")]
    BadBaseline(String),

    #[error("item `{0}` has no population")]
    MissingPopulation(String),

    #[error("invalid window {start}..{end}")]
    InvalidWindow { start: NaiveDate, end: NaiveDate },

    #[error("window {start}..{end} contains no timesteps")]
    EmptyWindow { start: NaiveDate, end: NaiveDate },

    #[error("every item was removed by validation")]
    AllRemoved,

    #[error("item `{item}` is masked at {count} timesteps; validate the dataset first")]
    Masked { item: String, count: usize },

    #[error("transform `{kind}` is missing parameter `{param}`")]
    MissingParam { kind: &'static str, param: &'static str },

    #[error("invalid parameter `{param}`: {message}")]
    BadParam { param: String, message: String },

    #[error(transparent)]
    Core(#[from] guardrail_core::GuardrailError),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "ItemRepr", into = "ItemRepr")]
pub struct ItemSeries {
    pub item_id: String,
    pub display_name: String,
    /// NaN wherever `missing` is set.
    pub values: Vec<f64>,
    pub missing: Vec<bool>,
    pub population: Option<f64>,
}

/// JSON shape of an item: masked cells are `null`.
#[derive(Serialize, Deserialize)]
struct ItemRepr {
    id: String,
    name: String,
    values: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    population: Option<f64>,
}

impl From<ItemRepr> for ItemSeries {
    fn from(r: ItemRepr) -> Self {
        ItemSeries {
            missing: r.values.iter().map(|v| v.is_none_or(|x| !x.is_finite())).collect(),
            values: r.values.iter().map(|v| v.filter(|x| x.is_finite()).unwrap_or(f64::NAN)).collect(),
            item_id: r.id,
            display_name: r.name,
            population: r.population,
        }
    }
}

impl From<ItemSeries> for ItemRepr {
    fn from(s: ItemSeries) -> Self {
        ItemRepr {
            values: s.values.iter().zip(&s.missing).map(|(&v, &m)| (!m).then_some(v)).collect(),
            id: s.item_id,
            name: s.display_name,
            population: s.population,
        }
    }
}

impl ItemSeries {
    pub fn masked_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    fn restrict(&self, keep: &[usize]) -> Self {
        ItemSeries {
            values: keep.iter().map(|&t| self.values[t]).collect(),
            missing: keep.iter().map(|&t| self.missing[t]).collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    ResampleWeekly,
    PercentChangeFromStart,
    PerMillion,
    WindowClip,
    Validate,
}

impl TransformKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TransformKind::ResampleWeekly => "resample_weekly",
            TransformKind::PercentChangeFromStart => "percent_change_from_start",
            TransformKind::PerMillion => "per_million",
            TransformKind::WindowClip => "window_clip",
            TransformKind::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformDescriptor {
    pub kind: TransformKind,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
}

impl TransformDescriptor {
    fn new(kind: TransformKind) -> Self {
        Self { kind, params: BTreeMap::new() }
    }

    fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.into(), value.to_string());
        self
    }

    fn param(&self, key: &'static str) -> Result<&str> {
        self.params
            .get(key)
            .map(String::as_str)
            .ok_or(DatasetError::MissingParam { kind: self.kind.as_str(), param: key })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesDataset {
    pub dataset_id: String,
    pub direction: Direction,
    pub timesteps: Vec<NaiveDate>,
    pub items: Vec<ItemSeries>,
    #[serde(default)]
    pub transform_log: Vec<TransformDescriptor>,
}

impl TimeSeriesDataset {
    pub fn item(&self, id: &str) -> Option<&ItemSeries> {
        self.items.iter().find(|i| i.item_id == id)
    }

    pub fn has_applied(&self, kind: TransformKind) -> bool {
        self.transform_log.iter().any(|t| t.kind == kind)
    }

    pub fn masked_cells(&self) -> usize {
        self.items.iter().map(ItemSeries::masked_count).sum()
    }

    /// First and last timestep.
    pub fn window(&self) -> Option<(NaiveDate, NaiveDate)> {
        Some((*self.timesteps.first()?, *self.timesteps.last()?))
    }

    /// Fully aligned view for the selection strategies. Fails while any cell
    /// is still masked.
    pub fn panel(&self) -> Result<Panel<'_>> {
        if let Some(item) = self.items.iter().find(|i| i.masked_count() > 0) {
            return Err(DatasetError::Masked { item: item.item_id.clone(), count: item.masked_count() });
        }
        let items =
            self.items.iter().map(|i| Item { id: &i.item_id, name: &i.display_name, values: &i.values }).collect();
        Ok(Panel::new(&self.dataset_id, self.direction, items)?)
    }

    fn logged(mut self, descriptor: TransformDescriptor) -> Self {
        self.transform_log.push(descriptor);
        self
    }
}

/// Column names for long-format input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub item_id: String,
    pub date: String,
    pub value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<String>,
    /// Rows whose item id starts with this prefix are skipped (aggregate rows
    /// such as `OWID_WRL`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip_item_prefix: Option<String>,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            item_id: "item_id".into(),
            date: "date".into(),
            value: "value".into(),
            display_name: None,
            population: None,
            skip_item_prefix: None,
        }
    }
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers.iter().position(|h| h.trim() == name).ok_or_else(|| DatasetError::MissingColumn(name.into()))
}

fn parse_date(raw: &str, row: u64) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(raw.trim(), "%Y-%m-%d")
        .map_err(|e| DatasetError::MalformedRow { row, message: format!("bad date `{raw}`: {e}") })
}

fn parse_number(raw: &str, what: &str, row: u64) -> Result<Option<f64>> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(DatasetError::MalformedRow { row, message: format!("bad {what} `{raw}`") }),
    }
}

#[derive(Default)]
struct Observations {
    name: Option<String>,
    population: Option<f64>,
    values: BTreeMap<NaiveDate, Option<f64>>,
}

fn assemble(
    dataset_id: &str,
    direction: Direction,
    observed: BTreeMap<String, Observations>,
) -> Result<TimeSeriesDataset> {
    if observed.is_empty() {
        return Err(DatasetError::Empty);
    }
    let timesteps: Vec<NaiveDate> =
        observed.values().flat_map(|o| o.values.keys().copied()).collect::<BTreeSet<_>>().into_iter().collect();
    let items = observed
        .into_iter()
        .map(|(id, obs)| {
            let cells: Vec<Option<f64>> = timesteps.iter().map(|d| obs.values.get(d).copied().flatten()).collect();
            ItemSeries {
                display_name: obs.name.unwrap_or_else(|| id.clone()),
                item_id: id,
                values: cells.iter().map(|c| c.unwrap_or(f64::NAN)).collect(),
                missing: cells.iter().map(Option::is_none).collect(),
                population: obs.population,
            }
        })
        .collect();
    Ok(TimeSeriesDataset { dataset_id: dataset_id.into(), direction, timesteps, items, transform_log: Vec::new() })
}

/// Long-format CSV (one row per item and date) into a dataset. Cells never
/// observed, or observed with an empty value, are masked.
pub fn ingest_long_csv<R: Read>(
    source: R,
    schema: &ColumnMapping,
    dataset_id: &str,
    direction: Direction,
) -> Result<TimeSeriesDataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let headers = reader.headers()?.clone();
    let id_col = column(&headers, &schema.item_id)?;
    let date_col = column(&headers, &schema.date)?;
    let value_col = column(&headers, &schema.value)?;
    let name_col = schema.display_name.as_deref().map(|c| column(&headers, c)).transpose()?;
    let pop_col = schema.population.as_deref().map(|c| column(&headers, c)).transpose()?;

    let mut observed: BTreeMap<String, Observations> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| DatasetError::MalformedRow {
            row: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let row = record.position().map_or(0, |p| p.line());
        let field = |col: usize| {
            record
                .get(col)
                .ok_or_else(|| DatasetError::MalformedRow { row, message: format!("missing field {}", col + 1) })
        };
        let id = field(id_col)?.trim();
        if id.is_empty() {
            return Err(DatasetError::MalformedRow { row, message: "empty item id".into() });
        }
        if schema.skip_item_prefix.as_deref().is_some_and(|p| id.starts_with(p)) {
            continue;
        }
        let date = parse_date(field(date_col)?, row)?;
        let value = parse_number(field(value_col)?, "value", row)?;
        let entry = observed.entry(id.to_string()).or_default();
        if entry.values.insert(date, value).is_some() {
            return Err(DatasetError::DuplicatePair { item: id.into(), date });
        }
        if let Some(col) = name_col {
            let name = field(col)?.trim();
            if entry.name.is_none() && !name.is_empty() {
                entry.name = Some(name.into());
            }
        }
        if let Some(col) = pop_col {
            if entry.population.is_none() {
                entry.population = parse_number(field(col)?, "population", row)?;
            }
        }
    }
    assemble(dataset_id, direction, observed)
}

/// Wide-format CSV: a date column followed by one column per item.
pub fn ingest_wide_csv<R: Read>(
    source: R,
    date_column: &str,
    dataset_id: &str,
    direction: Direction,
) -> Result<TimeSeriesDataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let headers = reader.headers()?.clone();
    let date_col = column(&headers, date_column)?;
    let mut observed: BTreeMap<String, Observations> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| DatasetError::MalformedRow {
            row: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let row = record.position().map_or(0, |p| p.line());
        let date = parse_date(record.get(date_col).unwrap_or(""), row)?;
        for (col, header) in headers.iter().enumerate() {
            if col == date_col {
                continue;
            }
            let value = parse_number(record.get(col).unwrap_or(""), "value", row)?;
            let entry = observed.entry(header.trim().to_string()).or_default();
            if entry.values.insert(date, value).is_some() {
                return Err(DatasetError::DuplicatePair { item: header.trim().into(), date });
            }
        }
    }
    assemble(dataset_id, direction, observed)
}

/// Date of the `anchor` weekday on or after `date`: the end of its week.
pub fn week_end(date: NaiveDate, anchor: Weekday) -> NaiveDate {
    let ahead = (7 + anchor.num_days_from_monday() - date.weekday().num_days_from_monday()) % 7;
    date + Days::new(u64::from(ahead))
}

/// One timestep per week ending on `anchor`; each value is the item's last
/// unmasked observation within that week.
pub fn resample_weekly(ds: &TimeSeriesDataset, anchor: Weekday) -> Result<TimeSeriesDataset> {
    let finest_gap = ds.timesteps.windows(2).map(|w| (w[1] - w[0]).num_days()).min();
    if ds.has_applied(TransformKind::ResampleWeekly) || finest_gap.is_some_and(|g| g >= 7) {
        return Err(DatasetError::AlreadyCoarse);
    }
    let Some((first, last)) = ds.window() else {
        return Err(DatasetError::Empty);
    };
    let (start, end) = (week_end(first, anchor), week_end(last, anchor));
    let weeks: Vec<NaiveDate> =
        std::iter::successors(Some(start), |d| Some(*d + Days::new(7))).take_while(|d| *d <= end).collect();
    let bucket: Vec<usize> =
        ds.timesteps.iter().map(|&d| ((week_end(d, anchor) - start).num_days() / 7) as usize).collect();

    let items = ds
        .items
        .iter()
        .map(|item| {
            let mut values = vec![f64::NAN; weeks.len()];
            let mut missing = vec![true; weeks.len()];
            for (t, &w) in bucket.iter().enumerate() {
                if !item.missing[t] {
                    values[w] = item.values[t];
                    missing[w] = false;
                }
            }
            ItemSeries { values, missing, ..item.clone() }
        })
        .collect();
    let out = TimeSeriesDataset { timesteps: weeks, items, ..ds.clone() };
    Ok(out.logged(TransformDescriptor::new(TransformKind::ResampleWeekly).with("anchor", anchor)))
}

/// Rebase every item to percent change from its first value, so every
/// series starts at 0.
pub fn percent_change_from_start(ds: &TimeSeriesDataset) -> Result<TimeSeriesDataset> {
    if ds.has_applied(TransformKind::PercentChangeFromStart) {
        return Err(DatasetError::AlreadyApplied("percent_change_from_start"));
    }
    let mut items = Vec::with_capacity(ds.items.len());
    for item in &ds.items {
        let base = match (item.missing.first(), item.values.first()) {
            (Some(false), Some(&v)) if v != 0.0 => v,
            _ => return Err(DatasetError::BadBaseline(item.item_id.clone())),
        };
        let values = item
            .values
            .iter()
            .zip(&item.missing)
            .map(|(&v, &m)| if m { f64::NAN } else { 100.0 * (v - base) / base })
            .collect();
        items.push(ItemSeries { values, ..item.clone() });
    }
    Ok(TimeSeriesDataset { items, ..ds.clone() }
        .logged(TransformDescriptor::new(TransformKind::PercentChangeFromStart)))
}

/// Divide by population and scale to per-million inhabitants.
pub fn per_million(ds: &TimeSeriesDataset) -> Result<TimeSeriesDataset> {
    if ds.has_applied(TransformKind::PerMillion) {
        return Err(DatasetError::AlreadyApplied("per_million"));
    }
    let mut items = Vec::with_capacity(ds.items.len());
    for item in &ds.items {
        let population = item
            .population
            .filter(|p| *p > 0.0)
            .ok_or_else(|| DatasetError::MissingPopulation(item.item_id.clone()))?;
        let values = item.values.iter().map(|&v| v * 1e6 / population).collect();
        items.push(ItemSeries { values, ..item.clone() });
    }
    Ok(TimeSeriesDataset { items, ..ds.clone() }.logged(TransformDescriptor::new(TransformKind::PerMillion)))
}

/// Keep timesteps in `[start, end]`. Items left with no observation are
/// dropped; their ids are returned alongside the dataset.
pub fn window_clip(
    ds: &TimeSeriesDataset,
    start: NaiveDate,
    end: NaiveDate,
) -> Result<(TimeSeriesDataset, Vec<String>)> {
    if start >= end {
        return Err(DatasetError::InvalidWindow { start, end });
    }
    let keep: Vec<usize> =
        ds.timesteps.iter().enumerate().filter(|(_, d)| (start..=end).contains(*d)).map(|(t, _)| t).collect();
    if keep.is_empty() {
        return Err(DatasetError::EmptyWindow { start, end });
    }
    let mut dropped = Vec::new();
    let mut items = Vec::with_capacity(ds.items.len());
    for item in &ds.items {
        let clipped = item.restrict(&keep);
        if clipped.missing.iter().all(|&m| m) {
            dropped.push(item.item_id.clone());
        } else {
            items.push(clipped);
        }
    }
    let out = TimeSeriesDataset { timesteps: keep.iter().map(|&t| ds.timesteps[t]).collect(), items, ..ds.clone() };
    let descriptor = TransformDescriptor::new(TransformKind::WindowClip).with("start", start).with("end", end);
    Ok((out.logged(descriptor), dropped))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Linear between the nearest unmasked neighbours; leading and trailing
    /// gaps copy the nearest observed value.
    #[default]
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationPolicy {
    pub max_missing_fraction: f64,
    #[serde(default)]
    pub interpolation: Interpolation,
}

impl Default for ValidationPolicy {
    fn default() -> Self {
        Self { max_missing_fraction: DEFAULT_MAX_MISSING_FRACTION, interpolation: Interpolation::Linear }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Removal {
    pub item_id: String,
    pub missing_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillMethod {
    Interpolated,
    Extended,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fill {
    pub item_id: String,
    pub date: NaiveDate,
    pub method: FillMethod,
    pub value: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub removed: Vec<Removal>,
    pub filled: Vec<Fill>,
    /// Items dropped earlier in the pipeline (e.g. by a window clip).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped: Vec<String>,
}

/// Drop items over the missing budget and fill the remaining gaps, leaving
/// no masked cells.
pub fn validate(ds: &TimeSeriesDataset, policy: &ValidationPolicy) -> Result<(TimeSeriesDataset, ValidationReport)> {
    let mut report = ValidationReport::default();
    let steps = ds.timesteps.len();
    let mut items = Vec::with_capacity(ds.items.len());
    for item in &ds.items {
        let masked = item.masked_count();
        let fraction = if steps == 0 { 1.0 } else { masked as f64 / steps as f64 };
        if masked == steps || fraction > policy.max_missing_fraction {
            report.removed.push(Removal { item_id: item.item_id.clone(), missing_fraction: fraction });
            continue;
        }
        let observed: Vec<usize> = (0..steps).filter(|&t| !item.missing[t]).collect();
        let mut values = item.values.clone();
        for t in (0..steps).filter(|&t| item.missing[t]) {
            let after = observed.partition_point(|&o| o < t);
            let (value, method) = match (after.checked_sub(1).map(|i| observed[i]), observed.get(after)) {
                (Some(lo), Some(&hi)) => {
                    let w = (t - lo) as f64 / (hi - lo) as f64;
                    let (a, b) = (item.values[lo], item.values[hi]);
                    (a + (b - a) * w, FillMethod::Interpolated)
                }
                (Some(lo), None) => (item.values[lo], FillMethod::Extended),
                (None, Some(&hi)) => (item.values[hi], FillMethod::Extended),
                (None, None) => unreachable!("fully masked items are removed"),
            };
            values[t] = value;
            report.filled.push(Fill { item_id: item.item_id.clone(), date: ds.timesteps[t], method, value });
        }
        items.push(ItemSeries { values, missing: vec![false; steps], ..item.clone() });
    }
    if items.is_empty() {
        return Err(DatasetError::AllRemoved);
    }
    let descriptor = TransformDescriptor::new(TransformKind::Validate)
        .with("max_missing_fraction", policy.max_missing_fraction)
        .with("interpolation", "linear");
    Ok((TimeSeriesDataset { items, ..ds.clone() }.logged(descriptor), report))
}

fn parse_param_date(d: &TransformDescriptor, key: &'static str) -> Result<NaiveDate> {
    let raw = d.param(key)?;
    NaiveDate::parse_from_str(raw, "%Y-%m-%d")
        .map_err(|e| DatasetError::BadParam { param: key.into(), message: e.to_string() })
}

/// Apply one logged transform.
pub fn apply(ds: &TimeSeriesDataset, step: &TransformDescriptor) -> Result<TimeSeriesDataset> {
    match step.kind {
        TransformKind::ResampleWeekly => {
            let anchor: Weekday = step.param("anchor")?.parse().map_err(|_| DatasetError::BadParam {
                param: "anchor".into(),
                message: format!("not a weekday: {}", step.params["anchor"]),
            })?;
            resample_weekly(ds, anchor)
        }
        TransformKind::PercentChangeFromStart => percent_change_from_start(ds),
        TransformKind::PerMillion => per_million(ds),
        TransformKind::WindowClip => {
            let (start, end) = (parse_param_date(step, "start")?, parse_param_date(step, "end")?);
            Ok(window_clip(ds, start, end)?.0)
        }
        TransformKind::Validate => {
            let fraction = step
                .param("max_missing_fraction")?
                .parse::<f64>()
                .map_err(|e| DatasetError::BadParam { param: "max_missing_fraction".into(), message: e.to_string() })?;
            let policy = ValidationPolicy { max_missing_fraction: fraction, interpolation: Interpolation::Linear };
            Ok(validate(ds, &policy)?.0)
        }
    }
}

/// Re-run a transform log on raw ingest output.
pub fn replay(raw: &TimeSeriesDataset, log: &[TransformDescriptor]) -> Result<TimeSeriesDataset> {
    log.iter().try_fold(raw.clone(), |ds, step| apply(&ds, step))
}
