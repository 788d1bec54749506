use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GuardrailError, Result};

pub const DEFAULT_N: usize = 5;
pub const DEFAULT_PERCENTILES: [f64; 5] = [5.0, 25.0, 50.0, 75.0, 95.0];
pub const DEFAULT_SAMPLES: usize = 10;
pub const DEFAULT_THRESHOLD: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Random,
    PercentileMarkers,
    PercentileExemplars,
    ClusterRepresentatives,
    Semantic,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::Random,
        StrategyKind::PercentileMarkers,
        StrategyKind::PercentileExemplars,
        StrategyKind::ClusterRepresentatives,
        StrategyKind::Semantic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::PercentileMarkers => "percentile_markers",
            StrategyKind::PercentileExemplars => "percentile_exemplars",
            StrategyKind::ClusterRepresentatives => "cluster_representatives",
            StrategyKind::Semantic => "semantic",
        }
    }

    /// Exemplar strategies show real items; percentile markers are synthetic.
    pub fn is_exemplar(self) -> bool {
        self != StrategyKind::PercentileMarkers
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = GuardrailError;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL.into_iter().find(|kind| kind.as_str() == s).ok_or_else(|| {
            let valid: Vec<&str> = StrategyKind::ALL.iter().map(|k| k.as_str()).collect();
            GuardrailError::InvalidSpec(format!("unknown strategy `{s}`; valid kinds: {}", valid.join(", ")))
        })
    }
}

/// Majority-vote parameters: `samples` candidate lists are drawn and an
/// entity is kept when it shows up in at least `threshold` of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusParams {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_threshold")]
    pub threshold: usize,
}

impl Default for ConsensusParams {
    fn default() -> Self {
        Self { samples: DEFAULT_SAMPLES, threshold: DEFAULT_THRESHOLD }
    }
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES
}

fn default_threshold() -> usize {
    DEFAULT_THRESHOLD
}

fn default_n() -> usize {
    DEFAULT_N
}

fn default_percentiles() -> Vec<f64> {
    DEFAULT_PERCENTILES.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_percentiles")]
    pub percentiles: Vec<f64>,
    /// Cluster count; `None` means `n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// `None` derives a seed from the dataset and focal ids.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub consensus: ConsensusParams,
}

impl StrategySpec {
    pub fn new(kind: StrategyKind) -> Self {
        Self {
            kind,
            n: DEFAULT_N,
            percentiles: vec![5.0, 25.0, 50.0, 75.0, 95.0],
            k: None,
            seed: None,
            consensus: ConsensusParams::default(),
        }
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = Some(k);
        self
    }

    pub fn with_percentiles(mut self, percentiles: Vec<f64>) -> Self {
        self.percentiles = percentiles;
        self
    }

    pub fn with_consensus(mut self, samples: usize, threshold: usize) -> Self {
        self.consensus = ConsensusParams { samples, threshold };
        self
    }

    pub fn cluster_count(&self) -> usize {
        self.k.unwrap_or(self.n)
    }

    /// Checks the dataset-independent invariants.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(GuardrailError::InvalidSpec("n must be at least 1".into()));
        }
        if self.k == Some(0) {
            return Err(GuardrailError::InvalidSpec("k must be at least 1".into()));
        }
        if self.percentiles.is_empty() {
            return Err(GuardrailError::InvalidSpec("percentile list is empty".into()));
        }
        for &p in &self.percentiles {
            if !(p > 0.0 && p < 100.0) {
                return Err(GuardrailError::InvalidSpec(format!("percentile {p} outside (0, 100)")));
            }
        }
        if self.percentiles.windows(2).any(|w| w[0] >= w[1]) {
            return Err(GuardrailError::InvalidSpec("percentiles must be strictly ascending".into()));
        }
        let ConsensusParams { samples, threshold } = self.consensus;
        if samples == 0 || threshold == 0 || threshold > samples {
            return Err(GuardrailError::InvalidSpec(format!(
                "consensus threshold {threshold} must lie in 1..={samples}"
            )));
        }
        Ok(())
    }

    pub(crate) fn expect_kind(&self, kind: StrategyKind) -> Result<()> {
        if self.kind != kind {
            return Err(GuardrailError::WrongStrategy { expected: kind.as_str(), got: self.kind.as_str() });
        }
        self.validate()
    }
}
