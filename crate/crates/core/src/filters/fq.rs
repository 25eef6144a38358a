//! Frequent-query-name filter.
//!
//! Learns how often each name segment (TLD, last-two-labels, full name)
//! appears in a trailing sample of queries. Under overload, segments whose
//! share of traffic rose sharply against the peace-time baseline become
//! block rules. Rules can be enforced two ways: matching the query name
//! itself (`fq_t`, cheap but capped by the gateway's rule budget) or
//! blocking the sources that send the flagged names (`fq_s`, unbounded set
//! capacity but it needs believable source addresses).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::filters::{FilterError, FilterId, Verdict};
use crate::trace::{segments_of, QueryRecord, QueryView};

/// Which name level a frequency entry or rule refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Full,
    Subdomain,
    Tld,
}

impl SegmentKind {
    fn specificity(self) -> u8 {
        match self {
            SegmentKind::Full => 2,
            SegmentKind::Subdomain => 1,
            SegmentKind::Tld => 0,
        }
    }
}

/// Share of a trailing query sample per name segment, per level.
///
/// Ordered maps keep serialized baselines byte-stable across runs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct QnameFreqTable {
    pub tld: BTreeMap<String, f64>,
    pub subdomain: BTreeMap<String, f64>,
    pub full: BTreeMap<String, f64>,
    /// Number of queries summarized. Root queries count toward the sample
    /// but contribute no segments.
    pub sample_size: usize,
}

impl QnameFreqTable {
    fn share(&self, kind: SegmentKind, value: &str) -> f64 {
        let map = match kind {
            SegmentKind::Tld => &self.tld,
            SegmentKind::Subdomain => &self.subdomain,
            SegmentKind::Full => &self.full,
        };
        map.get(value).copied().unwrap_or(0.0)
    }
}

/// One flagged segment, ready to deploy as a name rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FqRule {
    pub kind: SegmentKind,
    pub value: String,
    /// Share increase over baseline that triggered the rule.
    pub freq_increase: f64,
    /// Baseline share of the segment: the fraction of peace traffic a name
    /// match would take down with it.
    pub cd_estimate: f64,
}

impl FqRule {
    /// Whether a query name (already segmented) matches this rule. Matches
    /// are whole-segment, so label boundaries are respected: a `tld: evil`
    /// rule hits `x.evil` but not `xevil`.
    pub fn matches(&self, tld: &str, subdomain: &str, full: &str) -> bool {
        match self.kind {
            SegmentKind::Tld => tld == self.value,
            SegmentKind::Subdomain => subdomain == self.value,
            SegmentKind::Full => full == self.value,
        }
    }
}

/// Summarize a sample of queries into per-level segment shares.
pub fn fq_learn(sample: &[QueryRecord]) -> Result<QnameFreqTable, FilterError> {
    if sample.is_empty() {
        return Err(FilterError::EmptySample);
    }
    let mut table = QnameFreqTable {
        sample_size: sample.len(),
        ..Default::default()
    };
    let mut tld: HashMap<String, usize> = HashMap::new();
    let mut sub: HashMap<String, usize> = HashMap::new();
    let mut full: HashMap<String, usize> = HashMap::new();
    for rec in sample {
        if let Some((t, s, f)) = segments_of(&rec.qname) {
            *tld.entry(t.to_string()).or_default() += 1;
            *sub.entry(s.to_string()).or_default() += 1;
            *full.entry(f.to_string()).or_default() += 1;
        }
    }
    let n = sample.len() as f64;
    table.tld = tld.into_iter().map(|(k, v)| (k, v as f64 / n)).collect();
    table.subdomain = sub.into_iter().map(|(k, v)| (k, v as f64 / n)).collect();
    table.full = full.into_iter().map(|(k, v)| (k, v as f64 / n)).collect();
    Ok(table)
}

/// Compare current shares against the baseline and emit rules for segments
/// whose share rose by more than `f_fq`.
///
/// When both a segment and one of its ancestors are flagged and the
/// ancestor's rise is explained by the descendant (difference within
/// `f_fq`), only the more specific rule is kept; blocking the ancestor
/// would widen collateral damage for no extra coverage.
pub fn fq_detect(baseline: &QnameFreqTable, current: &QnameFreqTable, f_fq: f64) -> Vec<FqRule> {
    let mut flagged: Vec<FqRule> = Vec::new();
    for (kind, map) in [
        (SegmentKind::Tld, &current.tld),
        (SegmentKind::Subdomain, &current.subdomain),
        (SegmentKind::Full, &current.full),
    ] {
        for (value, &share) in map {
            let base = baseline.share(kind, value);
            let increase = share - base;
            if increase > f_fq {
                flagged.push(FqRule {
                    kind,
                    value: value.clone(),
                    freq_increase: increase,
                    cd_estimate: base,
                });
            }
        }
    }

    let is_descendant = |anc: &FqRule, desc: &FqRule| -> bool {
        desc.kind.specificity() > anc.kind.specificity()
            && (desc.value == anc.value || desc.value.ends_with(&format!(".{}", anc.value)))
    };
    let mut kept: Vec<FqRule> = flagged
        .iter()
        .filter(|anc| {
            !flagged.iter().any(|desc| {
                is_descendant(anc, desc) && anc.freq_increase - desc.freq_increase <= f_fq
            })
        })
        .cloned()
        .collect();

    kept.sort_by(|a, b| {
        b.freq_increase
            .total_cmp(&a.freq_increase)
            .then(b.kind.specificity().cmp(&a.kind.specificity()))
            .then(a.value.cmp(&b.value))
    });
    kept
}

/// Judge one query against deployed name rules.
///
/// Errors if more rules are supplied than the gateway could install; the
/// caller should have switched to source blocking before this point.
pub fn fq_verdict_t(
    rules: &[FqRule],
    view: &QueryView<'_>,
    rule_cap: usize,
) -> Result<Verdict, FilterError> {
    if rules.len() > rule_cap {
        return Err(FilterError::RuleCapExceeded(rules.len(), rule_cap));
    }
    let Some((tld, sub, full)) = segments_of(view.qname) else {
        return Ok(Verdict::Pass); // root query carries no matchable segment
    };
    for rule in rules {
        if rule.matches(tld, sub, full) {
            return Ok(Verdict::Drop(FilterId::FqT));
        }
    }
    Ok(Verdict::Pass)
}

/// Identify sources whose sampled traffic is dominated by flagged names.
///
/// A source is included when at least one of its queries matches a rule and
/// the matching fraction reaches `match_fraction`. The resulting set backs
/// the `fq_s` source-block variant.
pub fn fq_identify_sources(
    rules: &[FqRule],
    sample: &[QueryRecord],
    match_fraction: f64,
) -> HashSet<Ipv4Addr> {
    let mut totals: HashMap<Ipv4Addr, (u64, u64)> = HashMap::new();
    for rec in sample {
        let entry = totals.entry(rec.src).or_default();
        entry.0 += 1;
        if let Some((t, s, f)) = segments_of(&rec.qname) {
            if rules.iter().any(|r| r.matches(t, s, f)) {
                entry.1 += 1;
            }
        }
    }
    totals
        .into_iter()
        .filter(|(_, (total, matched))| {
            *matched >= 1 && *matched as f64 / *total as f64 >= match_fraction
        })
        .map(|(src, _)| src)
        .collect()
}

/// Judge one query against an identified source block set.
pub fn fq_verdict_s(blocked: &HashSet<Ipv4Addr>, view: &QueryView<'_>) -> Verdict {
    if blocked.contains(&view.src) {
        Verdict::Drop(FilterId::FqS)
    } else {
        Verdict::Pass
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::Proto;

    fn rec(src: Ipv4Addr, qname: &str) -> QueryRecord {
        QueryRecord::new(1.0, src, 60, Proto::Udp, qname, "A", 64, None).unwrap()
    }

    fn view_of(rec: &QueryRecord) -> QueryView<'_> {
        rec.view()
    }

    fn table_with(entries: &[(SegmentKind, &str, f64)]) -> QnameFreqTable {
        let mut t = QnameFreqTable {
            sample_size: 10_000,
            ..Default::default()
        };
        for (kind, value, share) in entries {
            let map = match kind {
                SegmentKind::Tld => &mut t.tld,
                SegmentKind::Subdomain => &mut t.subdomain,
                SegmentKind::Full => &mut t.full,
            };
            map.insert(value.to_string(), *share);
        }
        t
    }

    #[test]
    fn learn_counts_segment_shares() {
        let src = Ipv4Addr::new(10, 0, 0, 1);
        let mut sample = vec![rec(src, "a.evil"); 40];
        sample.extend(vec![rec(src, "x.org"); 59]);
        sample.push(rec(src, "")); // root query: counted, unsegmented
        let t = fq_learn(&sample).unwrap();
        assert_eq!(t.sample_size, 100);
        assert!((t.tld["evil"] - 0.40).abs() < 1e-12);
        assert!((t.full["a.evil"] - 0.40).abs() < 1e-12);
        assert!((t.tld["org"] - 0.59).abs() < 1e-12);
        assert!(!t.tld.contains_key(""));
    }

    #[test]
    fn learn_rejects_empty_sample() {
        match fq_learn(&[]) {
            Err(FilterError::EmptySample) => {}
            other => panic!("expected EmptySample, got {other:?}"),
        }
    }

    #[test]
    fn detect_flags_risen_segment_with_baseline_as_cd() {
        let baseline = table_with(&[(SegmentKind::Tld, "evil", 0.01)]);
        let current = table_with(&[(SegmentKind::Tld, "evil", 0.40)]);
        let rules = fq_detect(&baseline, &current, 0.3);
        assert_eq!(rules.len(), 1);
        assert_eq!(rules[0].kind, SegmentKind::Tld);
        assert_eq!(rules[0].value, "evil");
        assert!((rules[0].freq_increase - 0.39).abs() < 1e-12);
        assert!((rules[0].cd_estimate - 0.01).abs() < 1e-12);
    }

    #[test]
    fn detect_keeps_most_specific_when_ancestor_rise_is_attributable() {
        // Full name up 0.38, its TLD up 0.39: the extra 0.01 is within the
        // threshold, so the TLD rule is redundant.
        let baseline = table_with(&[
            (SegmentKind::Full, "a.evil", 0.01),
            (SegmentKind::Subdomain, "a.evil", 0.01),
            (SegmentKind::Tld, "evil", 0.02),
        ]);
        let current = table_with(&[
            (SegmentKind::Full, "a.evil", 0.39),
            (SegmentKind::Subdomain, "a.evil", 0.39),
            (SegmentKind::Tld, "evil", 0.41),
        ]);
        let rules = fq_detect(&baseline, &current, 0.3);
        assert_eq!(rules.len(), 1);
        assert_eq!(rules[0].kind, SegmentKind::Full);
        assert_eq!(rules[0].value, "a.evil");
    }

    #[test]
    fn detect_keeps_ancestor_when_rise_is_not_attributable() {
        // The TLD rose 0.80 but the only flagged descendant explains 0.35
        // of it; the remaining 0.45 exceeds the threshold, so both stay.
        let baseline = QnameFreqTable {
            sample_size: 10_000,
            ..Default::default()
        };
        let current = table_with(&[
            (SegmentKind::Tld, "evil", 0.80),
            (SegmentKind::Full, "a.evil", 0.35),
        ]);
        let rules = fq_detect(&baseline, &current, 0.3);
        let kinds: Vec<SegmentKind> = rules.iter().map(|r| r.kind).collect();
        assert!(kinds.contains(&SegmentKind::Tld));
        assert!(kinds.contains(&SegmentKind::Full));
    }

    #[test]
    fn detect_is_monotone_in_current_share() {
        let baseline = table_with(&[(SegmentKind::Tld, "evil", 0.05)]);
        for share in [36, 40, 60, 100] {
            let current = table_with(&[(SegmentKind::Tld, "evil", share as f64 / 100.0)]);
            let rules = fq_detect(&baseline, &current, 0.3);
            assert_eq!(rules.len(), 1, "share {share} should stay flagged");
        }
    }

    #[test]
    fn verdict_t_matches_on_label_boundaries() {
        let rules = vec![FqRule {
            kind: SegmentKind::Tld,
            value: "evil".into(),
            freq_increase: 0.5,
            cd_estimate: 0.0,
        }];
        let hit = rec(Ipv4Addr::new(10, 0, 0, 1), "x.evil");
        let miss = rec(Ipv4Addr::new(10, 0, 0, 1), "xevil");
        assert_eq!(
            fq_verdict_t(&rules, &view_of(&hit), 5).unwrap(),
            Verdict::Drop(FilterId::FqT)
        );
        assert_eq!(fq_verdict_t(&rules, &view_of(&miss), 5).unwrap(), Verdict::Pass);
    }

    #[test]
    fn verdict_t_passes_root_queries() {
        let rules = vec![FqRule {
            kind: SegmentKind::Full,
            value: "a.evil".into(),
            freq_increase: 0.5,
            cd_estimate: 0.0,
        }];
        let root = rec(Ipv4Addr::new(10, 0, 0, 1), "");
        assert_eq!(fq_verdict_t(&rules, &view_of(&root), 5).unwrap(), Verdict::Pass);
    }

    #[test]
    fn verdict_t_enforces_rule_cap() {
        let rules: Vec<FqRule> = (0..6)
            .map(|i| FqRule {
                kind: SegmentKind::Full,
                value: format!("n{i}.evil"),
                freq_increase: 0.4,
                cd_estimate: 0.0,
            })
            .collect();
        let q = rec(Ipv4Addr::new(10, 0, 0, 1), "n0.evil");
        match fq_verdict_t(&rules, &view_of(&q), 5) {
            Err(FilterError::RuleCapExceeded(6, 5)) => {}
            other => panic!("expected RuleCapExceeded, got {other:?}"),
        }
    }

    #[test]
    fn identify_sources_uses_match_fraction_inclusively() {
        let rules = vec![FqRule {
            kind: SegmentKind::Full,
            value: "a.evil".into(),
            freq_increase: 0.5,
            cd_estimate: 0.0,
        }];
        let all_match = Ipv4Addr::new(10, 0, 0, 1);
        let half_match = Ipv4Addr::new(10, 0, 0, 2);
        let no_match = Ipv4Addr::new(10, 0, 0, 3);
        let mut sample = vec![rec(all_match, "a.evil"); 10];
        sample.extend((0..10).map(|i| rec(half_match, if i < 5 { "a.evil" } else { "fine.org" })));
        sample.extend(vec![rec(no_match, "fine.org"); 10]);
        let blocked = fq_identify_sources(&rules, &sample, 0.5);
        assert!(blocked.contains(&all_match));
        assert!(blocked.contains(&half_match), "5/10 is on the boundary and included");
        assert!(!blocked.contains(&no_match));
        // A stricter fraction excludes the mixed sender.
        let blocked = fq_identify_sources(&rules, &sample, 0.51);
        assert!(!blocked.contains(&half_match));
    }

    #[test]
    fn verdict_s_blocks_identified_sources() {
        let mut blocked = HashSet::new();
        blocked.insert(Ipv4Addr::new(10, 0, 0, 1));
        let hit = rec(Ipv4Addr::new(10, 0, 0, 1), "anything.org");
        let miss = rec(Ipv4Addr::new(10, 0, 0, 2), "anything.org");
        assert_eq!(fq_verdict_s(&blocked, &view_of(&hit)), Verdict::Drop(FilterId::FqS));
        assert_eq!(fq_verdict_s(&blocked, &view_of(&miss)), Verdict::Pass);
    }
}
