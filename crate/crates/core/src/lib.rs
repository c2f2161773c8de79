//! Detection of bear-raid candidates in daily market data.
//!
//! The pipeline: ingest aligned price/volume and securities-lending
//! series ([`market_data`]), compute per-day anomaly ratios
//! ([`metrics`]), fit long-tailed distributions to their history
//! ([`tail_fit`]), flag and pair extreme days into raid candidates with
//! probabilities and falsification screens ([`detector`]), and validate
//! everything against a seeded generator with planted raids
//! ([`synthetic`]).

pub mod detector;
pub mod market_data;
pub mod metrics;
pub mod report;
pub mod synthetic;
pub mod tail_fit;
