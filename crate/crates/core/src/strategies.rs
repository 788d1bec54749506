//! The five guardrail selection strategies.
//!
//! Every strategy takes a validated [`Panel`], the focal item and a
//! [`StrategySpec`], and returns a [`GuardrailSet`]. The focal item counts
//! toward percentile lines and clustering but is never returned as context.
//! Ties between items always break on ascending item id.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::consensus::{tally, PeerProvider};
use crate::error::{GuardrailError, Result};
use crate::guardrail::{ContextSeries, GuardrailSet, Provenance};
use crate::kmeans::{kmeans_timeseries, squared_distance, KMeansConfig, KMeansFit};
use crate::panel::{Item, Panel};
use crate::percentile::percentile_lines;
use crate::rng::{derived_seed, SeededRng};
use crate::spec::{StrategyKind, StrategySpec};

/// Dispatches on `spec.kind`. `provider` is only consulted for the semantic
/// strategy and must be present for it.
pub fn compute_guardrails(
    panel: &Panel<'_>,
    focal_id: &str,
    spec: &StrategySpec,
    provider: Option<&dyn PeerProvider>,
) -> Result<GuardrailSet> {
    match spec.kind {
        StrategyKind::Random => random_exemplars(panel, focal_id, spec),
        StrategyKind::PercentileMarkers => percentile_markers(panel, focal_id, spec),
        StrategyKind::PercentileExemplars => percentile_exemplars(panel, focal_id, spec),
        StrategyKind::ClusterRepresentatives => cluster_representatives(panel, focal_id, spec),
        StrategyKind::Semantic => match provider {
            Some(provider) => semantic_exemplars(panel, focal_id, spec, provider),
            None => Err(GuardrailError::InvalidSpec("semantic strategy needs a peer provider".into())),
        },
    }
}

fn percentile_label(p: f64) -> String {
    format!("p{p}")
}

fn exemplar(item: &Item<'_>) -> ContextSeries {
    ContextSeries {
        label: item.name.to_string(),
        item_id: Some(item.id.to_string()),
        values: item.values.to_vec(),
        is_synthetic: false,
        percentile_tag: None,
    }
}

/// Non-focal items sorted by id.
fn candidates<'p, 'a>(panel: &'p Panel<'a>, focal_id: &str) -> Result<Vec<&'p Item<'a>>> {
    panel.item(focal_id)?;
    let mut pool: Vec<&Item<'a>> = panel.items().iter().filter(|i| i.id != focal_id).collect();
    pool.sort_by(|a, b| a.id.cmp(b.id));
    Ok(pool)
}

fn require(requested: usize, available: usize) -> Result<()> {
    if requested > available {
        return Err(GuardrailError::NotEnoughCandidates { requested, available });
    }
    Ok(())
}

fn effective_seed(panel: &Panel<'_>, focal_id: &str, spec: &StrategySpec) -> (u64, bool) {
    match spec.seed {
        Some(seed) => (seed, false),
        None => (derived_seed(panel.dataset_id(), focal_id), true),
    }
}

/// `n` items drawn uniformly without replacement from the non-focal items.
pub fn random_exemplars(panel: &Panel<'_>, focal_id: &str, spec: &StrategySpec) -> Result<GuardrailSet> {
    spec.expect_kind(StrategyKind::Random)?;
    let pool = candidates(panel, focal_id)?;
    require(spec.n, pool.len())?;
    let (seed, derived) = effective_seed(panel, focal_id, spec);
    let picks = SeededRng::new(seed).sample_indices(pool.len(), spec.n);
    Ok(GuardrailSet {
        strategy: spec.clone(),
        focal_id: focal_id.into(),
        context: picks.iter().map(|&i| exemplar(pool[i])).collect(),
        provenance: vec![Provenance::RandomDraw { seed, derived_seed: derived, pool_size: pool.len() }],
    })
}

/// One synthetic line per requested percentile, computed over every item
/// (focal included) at each timestep.
pub fn percentile_markers(panel: &Panel<'_>, focal_id: &str, spec: &StrategySpec) -> Result<GuardrailSet> {
    spec.expect_kind(StrategyKind::PercentileMarkers)?;
    panel.item(focal_id)?;
    let lines = percentile_lines(panel, &spec.percentiles)?;
    let context = lines
        .into_iter()
        .zip(&spec.percentiles)
        .map(|(values, &p)| ContextSeries {
            label: percentile_label(p),
            item_id: None,
            values,
            is_synthetic: true,
            percentile_tag: Some(p),
        })
        .collect();
    Ok(GuardrailSet {
        strategy: spec.clone(),
        focal_id: focal_id.into(),
        context,
        provenance: spec.percentiles.iter().map(|&percentile| Provenance::PercentileLine { percentile }).collect(),
    })
}

/// Relative gap below which two distances count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// `a < b` by more than rounding noise.
pub fn clearly_less(a: f64, b: f64) -> bool {
    a < b && (b - a) > TIE_TOLERANCE * libm::fabs(a).max(libm::fabs(b))
}

/// Index and value of the smallest distance; near-ties go to the earlier
/// entry, so callers pass candidates in id order.
fn argmin(candidates: impl Iterator<Item = (usize, f64)>) -> Option<(usize, f64)> {
    candidates.fold(None, |best, (i, d)| match best {
        Some((_, b)) if !clearly_less(d, b) => best,
        _ => Some((i, d)),
    })
}

/// Sum of squared differences across all timesteps.
pub fn sse(values: &[f64], line: &[f64]) -> f64 {
    squared_distance(values, line)
}

/// For each percentile line, the real item that tracks it most closely.
///
/// All (item, line) pairs are visited in ascending SSE order; a pair is taken
/// when neither its item nor its line is used yet, so every line receives
/// exactly one item and no item represents two lines. SSEs within
/// [`TIE_TOLERANCE`] of each other are ties and go to the smaller id, then the
/// lower percentile.
pub fn percentile_exemplars(panel: &Panel<'_>, focal_id: &str, spec: &StrategySpec) -> Result<GuardrailSet> {
    spec.expect_kind(StrategyKind::PercentileExemplars)?;
    let pool = candidates(panel, focal_id)?;
    require(spec.percentiles.len(), pool.len())?;
    let lines = percentile_lines(panel, &spec.percentiles)?;

    let errors: Vec<Vec<f64>> =
        pool.iter().map(|item| lines.iter().map(|line| sse(item.values, line)).collect()).collect();

    let mut item_used = vec![false; pool.len()];
    let mut line_match: Vec<Option<(usize, f64)>> = vec![None; lines.len()];
    for _ in 0..lines.len() {
        // Pool is id-sorted, so the scan order already breaks ties on id.
        let mut best: Option<(usize, usize, f64)> = None;
        for (i, row) in errors.iter().enumerate() {
            if item_used[i] {
                continue;
            }
            for (l, &err) in row.iter().enumerate() {
                if line_match[l].is_some() {
                    continue;
                }
                if best.is_none_or(|(_, _, b)| clearly_less(err, b)) {
                    best = Some((i, l, err));
                }
            }
        }
        let (i, l, err) = best.expect("more candidates than lines");
        item_used[i] = true;
        line_match[l] = Some((i, err));
    }

    let mut context = Vec::with_capacity(lines.len());
    let mut provenance = Vec::with_capacity(lines.len());
    for (slot, &p) in line_match.into_iter().zip(&spec.percentiles) {
        let (i, err) = slot.expect("every line matched");
        let item = pool[i];
        context.push(ContextSeries {
            label: format!("{} ({})", item.name, percentile_label(p)),
            percentile_tag: Some(p),
            ..exemplar(item)
        });
        provenance.push(Provenance::PercentileMatch { percentile: p, item_id: item.id.to_string(), sse: err });
    }
    Ok(GuardrailSet { strategy: spec.clone(), focal_id: focal_id.into(), context, provenance })
}

/// k-means over every item, then the eligible member nearest each centroid.
///
/// A cluster whose only member is the focal item is represented by the
/// nearest eligible item not already chosen for another cluster.
pub fn cluster_representatives(panel: &Panel<'_>, focal_id: &str, spec: &StrategySpec) -> Result<GuardrailSet> {
    let config = cluster_config(panel, focal_id, spec)?;
    let rows: Vec<&[f64]> = panel.items().iter().map(|i| i.values).collect();
    let fit = kmeans_timeseries(&rows, config)?;
    cluster_representatives_from_fit(panel, focal_id, spec, &fit)
}

/// The k-means configuration `cluster_representatives` fits with. Requests
/// sharing a configuration can share one fit.
pub fn cluster_config(panel: &Panel<'_>, focal_id: &str, spec: &StrategySpec) -> Result<KMeansConfig> {
    spec.expect_kind(StrategyKind::ClusterRepresentatives)?;
    let k = spec.cluster_count();
    require(k, candidates(panel, focal_id)?.len())?;
    Ok(KMeansConfig::new(k, effective_seed(panel, focal_id, spec).0))
}

/// Representative selection over an existing fit of every panel row, made
/// with [`cluster_config`].
pub fn cluster_representatives_from_fit(
    panel: &Panel<'_>,
    focal_id: &str,
    spec: &StrategySpec,
    fit: &KMeansFit,
) -> Result<GuardrailSet> {
    let config = cluster_config(panel, focal_id, spec)?;
    let (k, seed) = (config.k, config.seed);
    if fit.centroids.len() != k || fit.assignments.len() != panel.item_count() {
        return Err(GuardrailError::InvalidSpec("k-means fit does not match the panel".into()));
    }

    let mut sizes = vec![0usize; k];
    for &c in &fit.assignments {
        sizes[c] += 1;
    }

    // (cluster, item index in panel, squared distance, substituted)
    let mut chosen: Vec<Option<(usize, f64, bool)>> = vec![None; k];
    let mut by_id: Vec<usize> = (0..panel.item_count()).collect();
    by_id.sort_by(|&a, &b| panel.items()[a].id.cmp(panel.items()[b].id));
    for (c, centroid) in fit.centroids.iter().enumerate() {
        let members = by_id
            .iter()
            .map(|&i| (i, &panel.items()[i]))
            .filter(|(i, item)| fit.assignments[*i] == c && item.id != focal_id)
            .map(|(i, item)| (i, squared_distance(item.values, centroid)));
        chosen[c] = argmin(members).map(|(i, d)| (i, d, false));
    }
    for c in 0..k {
        if chosen[c].is_some() {
            continue;
        }
        let taken: Vec<usize> = chosen.iter().flatten().map(|s| s.0).collect();
        let centroid = &fit.centroids[c];
        let outsiders = by_id
            .iter()
            .map(|&i| (i, &panel.items()[i]))
            .filter(|(i, item)| item.id != focal_id && !taken.contains(i))
            .map(|(i, item)| (i, squared_distance(item.values, centroid)));
        chosen[c] = argmin(outsiders).map(|(i, d)| (i, d, true));
    }

    let mut context = Vec::with_capacity(k);
    let mut provenance = vec![Provenance::ClusterFit { k, seed, restarts: config.restarts, inertia: fit.inertia }];
    for (c, slot) in chosen.into_iter().enumerate() {
        let (i, d2, substituted) = slot.expect("enough eligible items for every cluster");
        let item = &panel.items()[i];
        context.push(exemplar(item));
        provenance.push(Provenance::ClusterRepresentative {
            cluster: c,
            cluster_size: sizes[c],
            item_id: item.id.to_string(),
            distance: libm::sqrt(d2),
            substituted,
        });
    }
    Ok(GuardrailSet { strategy: spec.clone(), focal_id: focal_id.into(), context, provenance })
}

/// Peers that a majority of sampled candidate lists agree on.
///
/// Entities are ranked by votes, then mean position within lists, then id.
/// Only ids present in the panel count. When fewer than `n` entities reach
/// the threshold, the highest-voted entities below it fill the remaining
/// slots and the shortfall is recorded.
pub fn semantic_exemplars<P: PeerProvider + ?Sized>(
    panel: &Panel<'_>,
    focal_id: &str,
    spec: &StrategySpec,
    provider: &P,
) -> Result<GuardrailSet> {
    spec.expect_kind(StrategyKind::Semantic)?;
    candidates(panel, focal_id)?;
    let samples = spec.consensus.samples;
    let lists = provider.candidate_lists(focal_id, samples)?;
    if lists.is_empty() {
        return Err(GuardrailError::Provider {
            message: "provider returned no candidate lists".into(),
            diagnostics: Vec::new(),
        });
    }
    // A partially failed batch keeps the same agreement ratio.
    let threshold = (spec.consensus.threshold * lists.len()).div_ceil(samples).max(1);

    let votes: Vec<_> =
        tally(&lists).into_iter().filter(|v| v.id != focal_id && panel.index_of(&v.id).is_some()).collect();
    let retained = votes.iter().filter(|v| v.votes >= threshold).count();
    if retained == 0 {
        return Err(GuardrailError::NoConsensusPeers { focal: focal_id.into() });
    }

    let picked = &votes[..spec.n.min(votes.len())];
    let mut context = Vec::with_capacity(picked.len());
    let mut provenance = Vec::new();
    for vote in picked {
        context.push(exemplar(panel.item(&vote.id)?));
        provenance.push(Provenance::SemanticPeer {
            item_id: vote.id.clone(),
            votes: vote.votes,
            samples: lists.len(),
            mean_rank: vote.mean_rank(),
            below_threshold: vote.votes < threshold,
        });
    }
    if retained < spec.n {
        provenance.push(Provenance::SemanticShortfall {
            requested: spec.n,
            retained,
            topped_up: picked.len() - retained.min(picked.len()),
        });
    }
    for (request_index, list) in lists.iter().enumerate() {
        provenance.push(Provenance::PeerResponse {
            request_index,
            source: list.source,
            raw_response: list.raw_response.clone(),
            parsed_ids: list.entities.clone(),
        });
    }
    Ok(GuardrailSet { strategy: spec.clone(), focal_id: focal_id.into(), context, provenance })
}
