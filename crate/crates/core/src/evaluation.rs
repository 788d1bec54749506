//! Performance, rank oracle and focal-item selection.
//!
//! "Performance" is an item's value at the final timestep: period-end
//! cumulative value for case counts, period-end percent change for prices.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{GuardrailError, Result};
use crate::panel::{Direction, Panel};

pub fn performance_score(panel: &Panel<'_>, item_id: &str) -> Result<f64> {
    let item = panel.item(item_id)?;
    item.values.last().copied().ok_or(GuardrailError::SeriesTooShort { needed: 1, got: 0 })
}

/// Direction-aware midrank on a 0..=100 scale.
///
/// `100 * (worse + ties / 2) / (N - 1)` where `worse` counts items with a
/// strictly worse score and `ties` counts other items with an equal score.
pub fn percentile_rank(panel: &Panel<'_>, item_id: &str) -> Result<f64> {
    if panel.item_count() < 2 {
        return Err(GuardrailError::TooFewItems { needed: 2, available: panel.item_count() });
    }
    let own = performance_score(panel, item_id)?;
    let scores = panel.items().iter().filter(|item| item.id != item_id).map(|item| performance_score(panel, item.id));
    let (mut worse, mut ties) = (0usize, 0usize);
    for score in scores {
        let score = score?;
        let is_worse = match panel.direction() {
            Direction::HigherIsBetter => score < own,
            Direction::LowerIsBetter => score > own,
        };
        if is_worse {
            worse += 1;
        } else if score == own {
            ties += 1;
        }
    }
    let others = (panel.item_count() - 1) as f64;
    Ok(100.0 * (worse as f64 + 0.5 * ties as f64) / others)
}

/// Total variation over absolute net change. A monotone series scores 1;
/// a series that ends where it started scores `+inf`.
pub fn smoothness(series: &[f64]) -> Result<f64> {
    if series.len() < 3 {
        return Err(GuardrailError::SeriesTooShort { needed: 3, got: series.len() });
    }
    let total: f64 = series.windows(2).map(|w| libm::fabs(w[1] - w[0])).sum();
    let net = libm::fabs(series[series.len() - 1] - series[0]);
    if net == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(total / net)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FocalCriteria {
    pub target_percentile: f64,
    pub count: usize,
    pub smoothness_max: f64,
    /// Every value of a selected item must be at least this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor_min: Option<f64>,
}

impl FocalCriteria {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(GuardrailError::InvalidCriteria("count must be at least 1".into()));
        }
        if !(self.target_percentile > 0.0 && self.target_percentile < 100.0) {
            return Err(GuardrailError::InvalidCriteria(format!(
                "target percentile {} outside (0, 100)",
                self.target_percentile
            )));
        }
        Ok(())
    }
}

/// Items passing the floor and smoothness filters, ordered by distance of
/// their percentile rank to the target (ties by id), truncated to `count`.
pub fn select_focal_items(panel: &Panel<'_>, criteria: &FocalCriteria) -> Result<Vec<String>> {
    criteria.validate()?;
    let mut floor_rejects = 0usize;
    let mut rough_rejects = 0usize;
    let mut survivors: Vec<(f64, &str)> = Vec::new();
    for item in panel.items() {
        if let Some(floor) = criteria.floor_min {
            if item.values.iter().any(|&v| v < floor) {
                floor_rejects += 1;
                continue;
            }
        }
        if smoothness(item.values)? > criteria.smoothness_max {
            rough_rejects += 1;
            continue;
        }
        let rank = percentile_rank(panel, item.id)?;
        survivors.push((libm::fabs(rank - criteria.target_percentile), item.id));
    }
    if survivors.len() < criteria.count {
        let binding = if floor_rejects >= rough_rejects { "floor_min" } else { "smoothness_max" };
        return Err(GuardrailError::CriteriaUnsatisfiable {
            requested: criteria.count,
            survivors: survivors.len(),
            detail: format!(
                "{floor_rejects} below floor_min, {rough_rejects} above smoothness_max; binding: {binding}"
            ),
        });
    }
    survivors.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    Ok(survivors.into_iter().take(criteria.count).map(|(_, id)| id.to_string()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankJudgment {
    pub item_id: String,
    pub true_rank: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abs_error: Option<f64>,
}

impl RankJudgment {
    /// Judgment against the panel's true rank, with the error filled in when
    /// an estimate is given.
    pub fn new(panel: &Panel<'_>, item_id: &str, estimate: Option<f64>) -> Result<Self> {
        let true_rank = percentile_rank(panel, item_id)?;
        Ok(Self {
            item_id: item_id.into(),
            true_rank,
            estimate,
            abs_error: estimate.map(|e| libm::fabs(e - true_rank)),
        })
    }
}

pub fn rank_error(judgment: &RankJudgment) -> Result<f64> {
    let estimate = judgment.estimate.ok_or_else(|| GuardrailError::MissingEstimate(judgment.item_id.clone()))?;
    Ok(libm::fabs(estimate - judgment.true_rank))
}
