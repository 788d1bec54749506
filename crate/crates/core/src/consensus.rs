//! Majority-vote filtering of sampled peer lists.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeerSource {
    Static,
    External,
}

/// One sampled answer to "which items are comparable to the focal item".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerCandidateList {
    pub focal_id: String,
    pub entities: Vec<String>,
    pub source: PeerSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
}

impl PeerCandidateList {
    /// Builds a list, dropping repeats and the focal id itself while keeping
    /// first-seen order.
    pub fn new(focal_id: &str, entities: impl IntoIterator<Item = String>, source: PeerSource) -> Self {
        let mut kept: Vec<String> = Vec::new();
        for entity in entities {
            if entity != focal_id && !kept.contains(&entity) {
                kept.push(entity);
            }
        }
        Self { focal_id: focal_id.into(), entities: kept, source, raw_response: None }
    }

    pub fn with_raw_response(mut self, raw: String) -> Self {
        self.raw_response = Some(raw);
        self
    }
}

/// Source of candidate peer lists for the semantic strategy.
pub trait PeerProvider {
    /// Returns up to `samples` candidate lists for `focal_id`, in request
    /// order.
    fn candidate_lists(&self, focal_id: &str, samples: usize) -> Result<Vec<PeerCandidateList>>;
}

impl<P: PeerProvider + ?Sized> PeerProvider for &P {
    fn candidate_lists(&self, focal_id: &str, samples: usize) -> Result<Vec<PeerCandidateList>> {
        (**self).candidate_lists(focal_id, samples)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub id: String,
    /// Number of lists containing the entity.
    pub votes: usize,
    /// Sum of 1-based positions over the lists containing it.
    pub rank_sum: usize,
}

impl Vote {
    pub fn mean_rank(&self) -> f64 {
        self.rank_sum as f64 / self.votes as f64
    }

    /// Votes descending, then mean within-list rank ascending, then id.
    fn ranking(&self, other: &Self) -> Ordering {
        other
            .votes
            .cmp(&self.votes)
            .then_with(|| (self.rank_sum * other.votes).cmp(&(other.rank_sum * self.votes)))
            .then_with(|| self.id.cmp(&other.id))
    }
}

/// Every entity named in any list, ranked.
pub fn tally(lists: &[PeerCandidateList]) -> Vec<Vote> {
    let mut votes: BTreeMap<&str, Vote> = BTreeMap::new();
    for list in lists {
        let mut counted: Vec<&str> = Vec::with_capacity(list.entities.len());
        for (pos, entity) in list.entities.iter().enumerate() {
            if counted.contains(&entity.as_str()) {
                continue;
            }
            counted.push(entity);
            let vote = votes.entry(entity).or_insert_with(|| Vote { id: entity.clone(), votes: 0, rank_sum: 0 });
            vote.votes += 1;
            vote.rank_sum += pos + 1;
        }
    }
    let mut ranked: Vec<Vote> = votes.into_values().collect();
    ranked.sort_by(Vote::ranking);
    ranked
}

/// Entities appearing in at least `threshold` lists, ranked. An empty result
/// is valid.
pub fn consensus_filter(lists: &[PeerCandidateList], threshold: usize) -> Vec<Vote> {
    tally(lists).into_iter().filter(|v| v.votes >= threshold).collect()
}
