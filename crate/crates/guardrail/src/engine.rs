//! Single entry point shared by the CLI and the HTTP service, so both emit
//! the same canonical bytes for the same request.

use guardrail_core::evaluation::RankJudgment;
use guardrail_core::{compute_guardrails, GuardrailError, GuardrailSet, PeerProvider, StrategyKind, StrategySpec};
use serde::Serialize;
use thiserror::Error;

use crate::canonical::to_canonical_json;
use crate::chart::ChartSpec;
use crate::dataset::{DatasetError, TimeSeriesDataset};

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    NotFound,
    BadRequest,
    Internal,
}

#[derive(Debug, Error)]
#[error("{message}")]
pub struct EngineError {
    pub kind: ErrorKind,
    pub message: String,
    pub diagnostics: Vec<String>,
}

impl EngineError {
    pub fn not_found(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::NotFound, message: message.into(), diagnostics: Vec::new() }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::BadRequest, message: message.into(), diagnostics: Vec::new() }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Internal, message: message.into(), diagnostics: Vec::new() }
    }
}

impl From<GuardrailError> for EngineError {
    fn from(e: GuardrailError) -> Self {
        let kind = match &e {
            GuardrailError::UnknownItem(_) => ErrorKind::NotFound,
            GuardrailError::Provider { .. } => ErrorKind::Internal,
            _ => ErrorKind::BadRequest,
        };
        let diagnostics = match &e {
            GuardrailError::Provider { diagnostics, .. } => diagnostics.clone(),
            _ => Vec::new(),
        };
        Self { kind, message: e.to_string(), diagnostics }
    }
}

impl From<DatasetError> for EngineError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Core(inner) => inner.into(),
            other => Self::bad_request(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for EngineError {
    fn from(e: serde_json::Error) -> Self {
        Self::internal(format!("serialization failed: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, EngineError>;

/// Strategy names accepted on the command line and over HTTP, plus the
/// focal-only control condition.
pub const CONTROL_NAMES: [&str; 2] = ["none", "control"];

pub fn valid_strategy_names() -> String {
    StrategyKind::ALL.iter().map(|k| k.as_str()).chain(CONTROL_NAMES).collect::<Vec<_>>().join(", ")
}

pub fn parse_kind(name: &str) -> Result<StrategyKind> {
    name.parse::<StrategyKind>()
        .map_err(|_| EngineError::not_found(format!("unknown strategy `{name}`; valid: {}", valid_strategy_names())))
}

/// Request-level strategy parameters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StrategyRequest {
    pub strategy: String,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub k: Option<usize>,
}

impl StrategyRequest {
    pub fn new(strategy: impl Into<String>) -> Self {
        Self { strategy: strategy.into(), ..Default::default() }
    }

    /// `None` for the control condition.
    pub fn spec(&self) -> Result<Option<StrategySpec>> {
        if CONTROL_NAMES.contains(&self.strategy.as_str()) {
            return Ok(None);
        }
        let mut spec = StrategySpec::new(parse_kind(&self.strategy)?);
        if let Some(n) = self.n {
            spec = spec.with_n(n);
        }
        if let Some(seed) = self.seed {
            spec = spec.with_seed(seed);
        }
        if let Some(k) = self.k {
            spec = spec.with_k(k);
        }
        spec.validate()?;
        Ok(Some(spec))
    }
}

pub fn guardrails(
    ds: &TimeSeriesDataset,
    focal: &str,
    spec: &StrategySpec,
    provider: &dyn PeerProvider,
) -> Result<GuardrailSet> {
    let panel = ds.panel()?;
    if panel.index_of(focal).is_none() {
        return Err(EngineError::not_found(format!("unknown item `{focal}` in dataset `{}`", ds.dataset_id)));
    }
    Ok(compute_guardrails(&panel, focal, spec, Some(provider))?)
}

pub fn guardrails_json(
    ds: &TimeSeriesDataset,
    focal: &str,
    spec: &StrategySpec,
    provider: &dyn PeerProvider,
) -> Result<String> {
    Ok(to_canonical_json(&guardrails(ds, focal, spec, provider)?)?)
}

pub fn chart(
    ds: &TimeSeriesDataset,
    focal: &str,
    request: &StrategyRequest,
    provider: &dyn PeerProvider,
) -> Result<ChartSpec> {
    let set = match request.spec()? {
        Some(spec) => Some(guardrails(ds, focal, &spec, provider)?),
        None => None,
    };
    ChartSpec::new(ds, focal, set)
}

pub fn chart_json(
    ds: &TimeSeriesDataset,
    focal: &str,
    request: &StrategyRequest,
    provider: &dyn PeerProvider,
) -> Result<String> {
    Ok(to_canonical_json(&chart(ds, focal, request, provider)?)?)
}

pub fn rank(ds: &TimeSeriesDataset, item: &str) -> Result<RankJudgment> {
    let panel = ds.panel()?;
    if panel.index_of(item).is_none() {
        return Err(EngineError::not_found(format!("unknown item `{item}` in dataset `{}`", ds.dataset_id)));
    }
    Ok(RankJudgment::new(&panel, item, None)?)
}
