//! Invariant checkers shared by the property tests and the acceptance suite.
//! Each returns `Err(description)` on the first violation found.
#![allow(dead_code)]

use super::{lines_oracle, rel_close, sse_oracle, Gen, Rows};
use guardrail_core::consensus::{consensus_filter, PeerCandidateList, PeerSource};
use guardrail_core::evaluation::percentile_rank;
use guardrail_core::kmeans::{centroids_of, inertia, kmeans_timeseries, KMeansConfig};
use guardrail_core::strategies::{cluster_representatives, percentile_exemplars, percentile_markers};
use guardrail_core::{Direction, Provenance, StrategyKind, StrategySpec};

pub type Check = Result<(), String>;

pub fn markers_match_oracle(rows: &Rows, focal: &str, percentiles: &[f64], tol: f64) -> Check {
    let panel = rows.panel(Direction::HigherIsBetter);
    let spec = StrategySpec::new(StrategyKind::PercentileMarkers).with_percentiles(percentiles.to_vec());
    let set = percentile_markers(&panel, focal, &spec).map_err(|e| e.to_string())?;
    let oracle = lines_oracle(rows, percentiles);
    if set.context.len() != percentiles.len() {
        return Err(format!("{} lines for {} percentiles", set.context.len(), percentiles.len()));
    }
    for (line, want) in set.context.iter().zip(&oracle) {
        for (t, (a, b)) in line.values.iter().zip(want).enumerate() {
            if !rel_close(*a, *b, tol) {
                return Err(format!("{} at t={t}: engine {a} vs oracle {b}", line.label));
            }
        }
    }
    Ok(())
}

/// Replays the greedy order from the reported SSEs and checks, exhaustively,
/// that no item still free at each step tracks that line strictly better.
pub fn percentile_exemplars_optimal(rows: &Rows, focal: &str, percentiles: &[f64]) -> Check {
    let panel = rows.panel(Direction::HigherIsBetter);
    let spec = StrategySpec::new(StrategyKind::PercentileExemplars).with_percentiles(percentiles.to_vec());
    let set = percentile_exemplars(&panel, focal, &spec).map_err(|e| e.to_string())?;
    let lines = lines_oracle(rows, percentiles);

    let mut picks: Vec<(f64, usize, usize)> = Vec::new();
    for (l, entry) in set.context.iter().enumerate() {
        let id = entry.item_id.as_deref().ok_or("exemplar without item id")?;
        if id == focal {
            return Err("focal selected".into());
        }
        let i = rows.index(id);
        let err = sse_oracle(&rows.values[i], &lines[l]);
        picks.push((err, i, l));
    }
    let mut distinct: Vec<usize> = picks.iter().map(|p| p.1).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() != picks.len() {
        return Err("an item represents two lines".into());
    }
    picks.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut fixed: Vec<usize> = Vec::new();
    for &(err, i, l) in &picks {
        for j in 0..rows.ids.len() {
            if j == i || rows.ids[j] == focal || fixed.contains(&j) {
                continue;
            }
            let other = sse_oracle(&rows.values[j], &lines[l]);
            if other < err && !rel_close(other, err, 1e-12) {
                return Err(format!(
                    "line p{}: {} has SSE {other} < chosen {} with {err}",
                    percentiles[l], rows.ids[j], rows.ids[i]
                ));
            }
        }
        fixed.push(i);
    }
    Ok(())
}

/// Refits k-means with the reported seed and checks every representative is
/// the closest eligible member of its own cluster.
pub fn cluster_representatives_optimal(rows: &Rows, focal: &str, k: usize, seed: u64) -> Check {
    let panel = rows.panel(Direction::HigherIsBetter);
    let spec = StrategySpec::new(StrategyKind::ClusterRepresentatives).with_n(k).with_seed(seed);
    let set = cluster_representatives(&panel, focal, &spec).map_err(|e| e.to_string())?;
    let fit = kmeans_timeseries(&rows.values, KMeansConfig::new(k, seed)).map_err(|e| e.to_string())?;

    let reps: Vec<_> = set
        .provenance
        .iter()
        .filter_map(|p| match p {
            Provenance::ClusterRepresentative { cluster, item_id, distance, substituted, .. } => {
                Some((*cluster, item_id.clone(), *distance, *substituted))
            }
            _ => None,
        })
        .collect();
    if reps.len() != k || set.context.len() != k {
        return Err(format!("{} representatives for k={k}", reps.len()));
    }
    for (cluster, id, distance, substituted) in reps {
        if id == focal {
            return Err("focal chosen as representative".into());
        }
        let centroid = &fit.centroids[cluster];
        let i = rows.index(&id);
        let own = sse_oracle(&rows.values[i], centroid).sqrt();
        if !rel_close(own, distance, 1e-9) {
            return Err(format!("reported distance {distance} but oracle {own}"));
        }
        let members: Vec<usize> =
            (0..rows.ids.len()).filter(|&j| fit.assignments[j] == cluster && rows.ids[j] != focal).collect();
        if substituted {
            if !members.is_empty() {
                return Err(format!("cluster {cluster} substituted despite eligible members"));
            }
            continue;
        }
        if fit.assignments[i] != cluster {
            return Err(format!("{id} is not a member of cluster {cluster}"));
        }
        for j in members {
            let d = sse_oracle(&rows.values[j], centroid).sqrt();
            if d < own && !rel_close(d, own, 1e-12) {
                return Err(format!("cluster {cluster}: {} at {d} beats {id} at {own}", rows.ids[j]));
            }
        }
    }
    Ok(())
}

/// k-means inertia against `trials` random non-degenerate assignments.
pub fn kmeans_beats_random(rows: &Rows, k: usize, seed: u64, trials: usize, g: &mut Gen) -> Check {
    let fit = kmeans_timeseries(&rows.values, KMeansConfig::new(k, seed)).map_err(|e| e.to_string())?;
    let n = rows.values.len();
    for _ in 0..trials {
        let mut assign: Vec<usize> = (0..n).map(|_| g.below(k)).collect();
        // every cluster non-empty
        for (c, slot) in assign.iter_mut().take(k).enumerate() {
            *slot = c;
        }
        let centroids = centroids_of(&rows.values, &assign, k);
        let random = inertia(&rows.values, &assign, &centroids);
        if fit.inertia > random + 1e-9 * random.max(1.0) {
            return Err(format!("k-means inertia {} > random {random}", fit.inertia));
        }
    }
    Ok(())
}

pub fn candidate_lists(focal: &str, lists: &[Vec<String>]) -> Vec<PeerCandidateList> {
    lists.iter().map(|l| PeerCandidateList::new(focal, l.iter().cloned(), PeerSource::External)).collect()
}

/// Raising the threshold never adds entities.
pub fn consensus_antitone(lists: &[PeerCandidateList]) -> Check {
    let mut previous: Option<Vec<String>> = None;
    for threshold in 1..=lists.len() + 1 {
        let kept: Vec<String> = consensus_filter(lists, threshold).into_iter().map(|v| v.id).collect();
        if let Some(prev) = &previous {
            if let Some(extra) = kept.iter().find(|id| !prev.contains(id)) {
                return Err(format!("threshold {threshold} added {extra}"));
            }
        }
        previous = Some(kept);
    }
    Ok(())
}

/// Ranks under a strictly increasing transform of every value.
pub fn rank_monotone_invariant(rows: &Rows, transform: impl Fn(f64) -> f64) -> Check {
    let mapped = Rows {
        ids: rows.ids.clone(),
        values: rows.values.iter().map(|r| r.iter().map(|&v| transform(v)).collect()).collect(),
    };
    for direction in [Direction::HigherIsBetter, Direction::LowerIsBetter] {
        let a = rows.panel(direction);
        let b = mapped.panel(direction);
        for id in &rows.ids {
            let ra = percentile_rank(&a, id).map_err(|e| e.to_string())?;
            let rb = percentile_rank(&b, id).map_err(|e| e.to_string())?;
            if ra != rb {
                return Err(format!("{id}: rank {ra} became {rb}"));
            }
        }
    }
    Ok(())
}

/// Percentile-exemplar and cluster-representative identities under `x -> c * x`.
pub fn scale_argmin_invariant(rows: &Rows, focal: &str, scale: f64, k: usize, seed: u64) -> Check {
    let scaled = Rows {
        ids: rows.ids.clone(),
        values: rows.values.iter().map(|r| r.iter().map(|&v| v * scale).collect()).collect(),
    };
    let (a, b) = (rows.panel(Direction::HigherIsBetter), scaled.panel(Direction::HigherIsBetter));
    let spec = StrategySpec::new(StrategyKind::PercentileExemplars);
    let ids = |set: guardrail_core::GuardrailSet| set.item_ids().map(String::from).collect::<Vec<_>>();
    let pa = percentile_exemplars(&a, focal, &spec).map_err(|e| e.to_string())?;
    let pb = percentile_exemplars(&b, focal, &spec).map_err(|e| e.to_string())?;
    if ids(pa.clone()) != ids(pb.clone()) {
        return Err(format!("percentile exemplars {:?} vs {:?}", ids(pa), ids(pb)));
    }
    let spec = StrategySpec::new(StrategyKind::ClusterRepresentatives).with_n(k).with_seed(seed);
    let ca = cluster_representatives(&a, focal, &spec).map_err(|e| e.to_string())?;
    let cb = cluster_representatives(&b, focal, &spec).map_err(|e| e.to_string())?;
    if ids(ca.clone()) != ids(cb.clone()) {
        return Err(format!("cluster representatives {:?} vs {:?}", ids(ca), ids(cb)));
    }
    Ok(())
}
