//! Adaptive DNS DDoS mitigation for authoritative servers, replayed
//! offline against query traces.
//!
//! The library models a layered defense: a set of cheap per-query filters
//! (frequent-name, unknown-source, TTL-consistency, rate-deviance) learned
//! from peace-time traffic, an attack detector driven by acceptable-load
//! thresholds, and a selector that deploys whichever filter or filter
//! pipeline controls the attack at the least collateral damage. Everything
//! operates on captured traces and emits firewall rule text; nothing here
//! touches a live network.

pub mod detector;
pub mod engine;
pub mod filters;
pub mod params;
pub mod rules;
pub mod selector;
pub mod store;
pub mod synth;
pub mod trace;
