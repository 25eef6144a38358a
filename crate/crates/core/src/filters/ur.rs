//! Unknown-source filter.
//!
//! Builds an allow-list of every source seen during a peace-time learning
//! window and, when deployed, drops queries from any source not on it.
//! Brutally effective against randomly spoofed floods, useless against
//! attacks that ride on addresses the server already knows.

use std::collections::BTreeSet;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::filters::{check_fresh, FilterError, FilterId, Verdict};
use crate::trace::{QueryRecord, QueryView};

/// Sources observed during the learning window.
///
/// The ordered set keeps serialized allow-lists byte-stable across runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AllowList {
    pub sources: BTreeSet<Ipv4Addr>,
    /// When learning finished; freshness is measured from here.
    pub built_at: f64,
    /// Length of the learning window, seconds.
    pub learn_span: f64,
}

impl AllowList {
    pub fn contains(&self, src: Ipv4Addr) -> bool {
        self.sources.contains(&src)
    }
}

/// Collect the distinct sources in a learning window.
pub fn ur_build<'a, I>(records: I, built_at: f64, learn_span: f64) -> Result<AllowList, FilterError>
where
    I: IntoIterator<Item = &'a QueryRecord>,
{
    let sources: BTreeSet<Ipv4Addr> = records.into_iter().map(|r| r.src).collect();
    if sources.is_empty() {
        return Err(FilterError::EmptyWindow);
    }
    Ok(AllowList {
        sources,
        built_at,
        learn_span,
    })
}

/// Judge one query: pass listed sources, drop everything else.
pub fn ur_verdict(
    list: &AllowList,
    view: &QueryView<'_>,
    use_span: f64,
    now: f64,
) -> Result<Verdict, FilterError> {
    check_fresh(FilterId::Ur, list.built_at, use_span, now)?;
    if list.contains(view.src) {
        Ok(Verdict::Pass)
    } else {
        Ok(Verdict::Drop(FilterId::Ur))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::estimate;
    use crate::trace::Proto;

    fn rec(last_octet: u8) -> QueryRecord {
        QueryRecord::new(
            1.0,
            Ipv4Addr::new(10, 0, 0, last_octet),
            60,
            Proto::Udp,
            "a.org",
            "A",
            64,
            None,
        )
        .unwrap()
    }

    #[test]
    fn build_collects_distinct_sources() {
        let records = vec![rec(1), rec(2), rec(1), rec(3)];
        let list = ur_build(&records, 7200.0, 7200.0).unwrap();
        assert_eq!(list.sources.len(), 3);
        assert!(list.contains(Ipv4Addr::new(10, 0, 0, 2)));
        assert_eq!(list.built_at, 7200.0);
        assert_eq!(list.learn_span, 7200.0);
    }

    #[test]
    fn build_rejects_empty_window() {
        match ur_build(&[], 0.0, 7200.0) {
            Err(FilterError::EmptyWindow) => {}
            other => panic!("expected EmptyWindow, got {other:?}"),
        }
    }

    #[test]
    fn verdict_partitions_on_list_membership() {
        let list = ur_build(&[rec(1)], 0.0, 7200.0).unwrap();
        let known = rec(1);
        let unknown = rec(2);
        assert_eq!(ur_verdict(&list, &known.view(), 7200.0, 10.0).unwrap(), Verdict::Pass);
        assert_eq!(
            ur_verdict(&list, &unknown.view(), 7200.0, 10.0).unwrap(),
            Verdict::Drop(FilterId::Ur)
        );
    }

    #[test]
    fn verdict_rejects_expired_list() {
        let list = ur_build(&[rec(1)], 100.0, 7200.0).unwrap();
        assert!(ur_verdict(&list, &rec(1).view(), 50.0, 150.0).is_ok());
        match ur_verdict(&list, &rec(1).view(), 50.0, 150.1) {
            Err(FilterError::ExpiredState {
                filter: FilterId::Ur,
                ..
            }) => {}
            other => panic!("expected ExpiredState, got {other:?}"),
        }
    }

    #[test]
    fn zero_collateral_on_its_own_learning_sample() {
        let sample: Vec<QueryRecord> = (1..=50).map(rec).collect();
        let list = ur_build(&sample, 0.0, 7200.0).unwrap();
        let e = estimate(
            |v| ur_verdict(&list, v, 7200.0, 1.0).unwrap().is_drop(),
            &[],
            &sample,
        );
        assert_eq!(e.cd_frac, 0.0);
    }
}
