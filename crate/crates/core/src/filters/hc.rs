//! Hop-count consistency filter.
//!
//! Learns which IP TTL values each source's packets arrive with. A packet
//! claiming a known source but arriving with a TTL that source never
//! produces is almost certainly spoofed, because the forger rarely knows
//! the victim's real hop distance. TTLs are used directly rather than
//! inferred hop counts: the raw byte has a larger value space, so a random
//! forgery has less chance of colliding with the learned value.
//!
//! Sources absent from the table are passed through untouched; judging
//! strangers is the unknown-source filter's job.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::filters::{check_fresh, FilterError, FilterId, Verdict};
use crate::trace::{QueryRecord, QueryView};

/// Observed TTL values per source.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TtlTable {
    pub ttls: BTreeMap<Ipv4Addr, BTreeSet<u8>>,
    pub built_at: f64,
    pub learn_span: f64,
}

/// Record every (source, TTL) pair seen in a learning window.
pub fn hc_build<'a, I>(records: I, built_at: f64, learn_span: f64) -> Result<TtlTable, FilterError>
where
    I: IntoIterator<Item = &'a QueryRecord>,
{
    let mut ttls: BTreeMap<Ipv4Addr, BTreeSet<u8>> = BTreeMap::new();
    for rec in records {
        ttls.entry(rec.src).or_default().insert(rec.ttl);
    }
    if ttls.is_empty() {
        return Err(FilterError::EmptyWindow);
    }
    Ok(TtlTable {
        ttls,
        built_at,
        learn_span,
    })
}

/// Judge one query: drop only a known source arriving with a TTL it has
/// never been seen to use.
pub fn hc_verdict(
    table: &TtlTable,
    view: &QueryView<'_>,
    use_span: f64,
    now: f64,
) -> Result<Verdict, FilterError> {
    check_fresh(FilterId::Hc, table.built_at, use_span, now)?;
    match table.ttls.get(&view.src) {
        Some(seen) if !seen.contains(&view.ttl) => Ok(Verdict::Drop(FilterId::Hc)),
        _ => Ok(Verdict::Pass),
    }
}
