//! Dataset pipeline, peer providers, charts and delivery for guardrail context
//! selection.

pub mod canonical;
pub mod chart;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod demo;
pub mod engine;
pub mod precompute;
pub mod provider;
pub mod service;
