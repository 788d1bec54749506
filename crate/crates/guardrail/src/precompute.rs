//! Batch computation of guardrail sets into flat files plus a digest index.
//!
//! Layout: `<out>/<dataset_id>/index.json` and
//! `<out>/<dataset_id>/<focal>/<strategy>.json`. Files whose content digest
//! is unchanged are left untouched.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use guardrail_core::strategies::{cluster_config, cluster_representatives_from_fit};
use guardrail_core::{
    compute_guardrails, kmeans_timeseries, GuardrailError, KMeansFit, PeerProvider, StrategyKind, StrategySpec,
};
use serde::{Deserialize, Serialize};

use crate::canonical::{digest, to_canonical_json};
use crate::dataset::TimeSeriesDataset;
use crate::engine::EngineError;

pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    /// SHA-256 of the canonical GuardrailSet JSON.
    pub digest: String,
    /// Path relative to the dataset directory.
    pub key: String,
    pub spec: StrategySpec,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrecomputeIndex {
    pub dataset_id: String,
    pub dataset_digest: String,
    /// focal id → strategy kind → entry
    pub entries: BTreeMap<String, BTreeMap<String, IndexEntry>>,
}

impl PrecomputeIndex {
    pub fn load(dir: &Path) -> anyhow::Result<Option<Self>> {
        let path = dir.join(INDEX_FILE);
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(serde_json::from_str(&fs::read_to_string(&path)?)?))
    }

    pub fn lookup(&self, focal: &str, spec: &StrategySpec) -> Option<&IndexEntry> {
        self.entries.get(focal)?.get(spec.kind.as_str()).filter(|e| &e.spec == spec)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrecomputeReport {
    pub written: usize,
    pub unchanged: usize,
    /// `(focal, strategy, reason)` for pairs the provider could not serve.
    pub skipped: Vec<(String, String, String)>,
    pub index_written: bool,
}

/// Canonical JSON of a dataset and its digest.
pub fn dataset_digest(ds: &TimeSeriesDataset) -> serde_json::Result<String> {
    Ok(digest(to_canonical_json(ds)?.as_bytes()))
}

fn write_if_changed(path: &Path, bytes: &[u8]) -> std::io::Result<bool> {
    if fs::read(path).is_ok_and(|existing| existing == bytes) {
        return Ok(false);
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(tmp, path)?;
    Ok(true)
}

/// Safe single path component for an item id.
fn file_component(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect()
}

pub fn precompute(
    ds: &TimeSeriesDataset,
    focals: &[String],
    specs: &[StrategySpec],
    provider: &dyn PeerProvider,
    out_dir: &Path,
) -> anyhow::Result<(PrecomputeIndex, PrecomputeReport)> {
    let dir: PathBuf = out_dir.join(file_component(&ds.dataset_id));
    let mut index = PrecomputeIndex {
        dataset_id: ds.dataset_id.clone(),
        dataset_digest: dataset_digest(ds)?,
        entries: BTreeMap::new(),
    };
    let mut report = PrecomputeReport::default();
    let panel = ds.panel()?;
    if let Some(unknown) = focals.iter().find(|f| panel.index_of(f).is_none()) {
        anyhow::bail!(EngineError::not_found(format!("unknown item `{unknown}` in dataset `{}`", ds.dataset_id)));
    }
    // With an explicit seed every focal shares one k-means fit per (k, seed).
    let rows: Vec<&[f64]> = panel.items().iter().map(|i| i.values).collect();
    let mut fits: BTreeMap<(usize, u64), KMeansFit> = BTreeMap::new();
    for focal in focals {
        for spec in specs {
            let kind = spec.kind.as_str();
            let result = if spec.kind == StrategyKind::ClusterRepresentatives && spec.seed.is_some() {
                cluster_config(&panel, focal, spec).and_then(|config| {
                    let fit = match fits.entry((config.k, config.seed)) {
                        std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
                        std::collections::btree_map::Entry::Vacant(e) => e.insert(kmeans_timeseries(&rows, config)?),
                    };
                    cluster_representatives_from_fit(&panel, focal, spec, fit)
                })
            } else {
                compute_guardrails(&panel, focal, spec, Some(provider))
            };
            let set = match result {
                Ok(set) => set,
                Err(e @ (GuardrailError::NoConsensusPeers { .. } | GuardrailError::Provider { .. })) => {
                    report.skipped.push((focal.clone(), kind.into(), e.to_string()));
                    continue;
                }
                Err(e) => anyhow::bail!("{focal} / {kind}: {e}"),
            };
            let json = to_canonical_json(&set)?;
            let key = format!("{}/{kind}.json", file_component(focal));
            if write_if_changed(&dir.join(&key), json.as_bytes())? {
                report.written += 1;
            } else {
                report.unchanged += 1;
            }
            index
                .entries
                .entry(focal.clone())
                .or_default()
                .insert(kind.into(), IndexEntry { digest: digest(json.as_bytes()), key, spec: spec.clone() });
        }
    }
    let index_json = to_canonical_json(&index)?;
    report.index_written = write_if_changed(&dir.join(INDEX_FILE), index_json.as_bytes())?;
    Ok((index, report))
}
