//! Guardrail selection for time-series charts.
//!
//! Given a panel of aligned item series and one focal item, this crate picks the
//! context series ("guardrails") that are drawn next to the focal line so the
//! focal item cannot be read in isolation. Five strategies are provided:
//!
//! - random exemplars (seeded, uniform without replacement)
//! - percentile markers (synthetic per-timestep percentile lines)
//! - percentile-based exemplars (real items closest to each percentile line)
//! - cluster representatives (k-means, item nearest each centroid)
//! - semantic exemplars (majority-vote consensus over sampled peer lists)
//!
//! The [`evaluation`] module carries the rank oracle and focal-item selection
//! used to pick study-grade focal items.
//!
//! The crate is `no_std` and only needs `alloc`. Ingest, file formats and
//! delivery live in the `guardrail` companion crate.

#![no_std]
#![deny(rust_2018_idioms)]

extern crate alloc;

#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod consensus;
pub mod error;
pub mod evaluation;
pub mod guardrail;
pub mod kmeans;
pub mod panel;
pub mod percentile;
pub mod rng;
pub mod spec;
pub mod strategies;

pub use consensus::{consensus_filter, tally, PeerCandidateList, PeerProvider, PeerSource, Vote};
pub use error::{GuardrailError, Result};
pub use guardrail::{ContextSeries, GuardrailSet, Provenance};
pub use kmeans::{kmeans_timeseries, KMeansConfig, KMeansFit};
pub use panel::{Direction, Item, Panel};
pub use spec::{ConsensusParams, StrategyKind, StrategySpec};
pub use strategies::compute_guardrails;
