//! Aggressive-source filter (comparison baseline).
//!
//! The bluntest instrument in the library: rank current senders by query
//! rate and block from the top down until the projected load fits under the
//! acceptable level. No learned state, no notion of normal behavior — a
//! legitimate heavy hitter is blocked just as readily as a flooder. Kept
//! out of automatic selection; it exists so replays can compare the
//! adaptive pipeline against naive rate policing.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use crate::filters::{FilterId, Verdict};
use crate::trace::QueryView;

/// Pick the smallest top-rate prefix whose removal brings projected load
/// under `al`. Ties in rate break toward the lower address so the choice
/// is deterministic. If even blocking everyone cannot reach `al`, everyone
/// is blocked.
pub fn ar_select(rates: &BTreeMap<Ipv4Addr, f64>, cl: f64, al: f64) -> Vec<Ipv4Addr> {
    if cl <= al {
        return Vec::new();
    }
    let mut ranked: Vec<(Ipv4Addr, f64)> = rates.iter().map(|(&s, &r)| (s, r)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let mut blocked = Vec::new();
    let mut projected = cl;
    for (src, rate) in ranked {
        if projected <= al {
            break;
        }
        projected -= rate;
        blocked.push(src);
    }
    blocked
}

/// Judge one query against the current block list.
pub fn ar_verdict(blocked: &BTreeSet<Ipv4Addr>, view: &QueryView<'_>) -> Verdict {
    if blocked.contains(&view.src) {
        Verdict::Drop(FilterId::Ar)
    } else {
        Verdict::Pass
    }
}
