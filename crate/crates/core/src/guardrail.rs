use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::consensus::PeerSource;
use crate::spec::StrategySpec;

/// One line drawn next to the focal series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSeries {
    pub label: String,
    /// Dataset item behind the line; absent for synthetic markers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item_id: Option<String>,
    pub values: Vec<f64>,
    pub is_synthetic: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub percentile_tag: Option<f64>,
}

/// Why an entry was chosen. Serialized with a `kind` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    RandomDraw {
        seed: u64,
        derived_seed: bool,
        pool_size: usize,
    },
    PercentileLine {
        percentile: f64,
    },
    PercentileMatch {
        percentile: f64,
        item_id: String,
        sse: f64,
    },
    ClusterFit {
        k: usize,
        seed: u64,
        restarts: usize,
        inertia: f64,
    },
    ClusterRepresentative {
        cluster: usize,
        cluster_size: usize,
        item_id: String,
        distance: f64,
        /// The cluster held only the focal item; this is the nearest eligible
        /// item from outside it.
        substituted: bool,
    },
    SemanticPeer {
        item_id: String,
        votes: usize,
        samples: usize,
        mean_rank: f64,
        below_threshold: bool,
    },
    SemanticShortfall {
        requested: usize,
        retained: usize,
        topped_up: usize,
    },
    PeerResponse {
        request_index: usize,
        source: PeerSource,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        raw_response: Option<String>,
        parsed_ids: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardrailSet {
    pub strategy: StrategySpec,
    pub focal_id: String,
    pub context: Vec<ContextSeries>,
    pub provenance: Vec<Provenance>,
}

impl GuardrailSet {
    /// Item ids of the real-item entries, in display order.
    pub fn item_ids(&self) -> impl Iterator<Item = &str> {
        self.context.iter().filter_map(|c| c.item_id.as_deref())
    }
}
