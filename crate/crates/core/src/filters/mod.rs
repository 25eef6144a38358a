//! Filter library: per-filter learned state, verdicts, and effect estimation.
//!
//! Each filter learns from peace-time traffic and then judges individual
//! queries. Verdicts are pure functions of (learned state, query view); the
//! ground-truth label is structurally invisible to them. Learned tables
//! carry their build time and are refused once older than their use period,
//! which forces refresh scheduling bugs into the open instead of letting
//! stale state silently pass traffic.

pub mod ar;
pub mod fq;
pub mod hc;
pub mod ur;
pub mod wr;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::trace::QueryView;

/// Identity of a filter, used for drop attribution and pipeline ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterId {
    /// Frequent-name match installed as name rules on the gateway.
    FqT,
    /// Frequent-name match converted to a source block set.
    FqS,
    /// Unknown-source drop against a learned allow-list.
    Ur,
    /// Hop-count (TTL) consistency check per source.
    Hc,
    /// Wild-source drop from per-source rate deviance.
    Wr,
    /// Aggressive-source cap, greedy top-rate blocking (comparison only).
    Ar,
}

impl FilterId {
    /// Short stable token used in timelines, reports, and rule text.
    pub fn token(self) -> &'static str {
        match self {
            FilterId::FqT => "fq_t",
            FilterId::FqS => "fq_s",
            FilterId::Ur => "ur",
            FilterId::Hc => "hc",
            FilterId::Wr => "wr",
            FilterId::Ar => "ar",
        }
    }

    /// All ids in canonical order.
    pub const ALL: [FilterId; 6] = [
        FilterId::FqT,
        FilterId::FqS,
        FilterId::Ur,
        FilterId::Hc,
        FilterId::Wr,
        FilterId::Ar,
    ];
}

impl fmt::Display for FilterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Outcome of judging one query. Drops carry the filter that decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Drop(FilterId),
}

impl Verdict {
    pub fn is_drop(self) -> bool {
        matches!(self, Verdict::Drop(_))
    }
}

/// Errors surfaced by filter operations.
#[derive(Debug, thiserror::Error)]
pub enum FilterError {
    #[error("{filter} state built at {built_at:.3} expired at {now:.3} (use period {use_span:.0}s)")]
    ExpiredState {
        filter: FilterId,
        built_at: f64,
        now: f64,
        use_span: f64,
    },
    #[error("learning window contains no records")]
    EmptyWindow,
    #[error("frequency sample contains no records")]
    EmptySample,
    #[error("{0} name rules exceed the gateway rule cap of {1}")]
    RuleCapExceeded(usize, usize),
    #[error("source {0} has no learned rate model")]
    UnknownSource(std::net::Ipv4Addr),
}

/// Freshness guard shared by all learned tables.
pub(crate) fn check_fresh(
    filter: FilterId,
    built_at: f64,
    use_span: f64,
    now: f64,
) -> Result<(), FilterError> {
    if now - built_at > use_span {
        Err(FilterError::ExpiredState {
            filter,
            built_at,
            now,
            use_span,
        })
    } else {
        Ok(())
    }
}

/// Projected effect of one filter (or pipeline), measured by emulation on
/// captured samples rather than predicted from first principles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    /// Fraction of the attack-period sample the filter would drop.
    pub drop_frac: f64,
    /// Fraction of the peace-period sample the filter would drop, i.e. the
    /// collateral damage it would inflict on traffic known to be fine.
    pub cd_frac: f64,
}

/// Emulate a drop predicate over an attack-period sample and a peace-period
/// sample. Samples may be empty; empty samples estimate zero effect.
pub fn estimate<'a, F>(
    mut drops: F,
    attack_sample: &'a [crate::trace::QueryRecord],
    peace_sample: &'a [crate::trace::QueryRecord],
) -> Estimate
where
    F: FnMut(&QueryView<'a>) -> bool,
{
    let frac = |sample: &'a [crate::trace::QueryRecord], drops: &mut F| -> f64 {
        if sample.is_empty() {
            return 0.0;
        }
        let hit = sample.iter().filter(|r| drops(&r.view())).count();
        hit as f64 / sample.len() as f64
    };
    let drop_frac = frac(attack_sample, &mut drops);
    let cd_frac = frac(peace_sample, &mut drops);
    Estimate { drop_frac, cd_frac }
}
