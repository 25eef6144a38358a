//! Firewall rule rendering for a deployed filter pipeline.
//!
//! A deployment snapshot renders to three formats:
//! * **neutral** — a plain line-oriented format (`BLOCK_SRC`,
//!   `BLOCK_QNAME_EXACT`, ...) that parses back losslessly and can be
//!   evaluated directly through [`RuleOracle`];
//! * **ipset** — `ipset create`/`ipset add` commands building the source
//!   sets the iptables rules reference;
//! * **iptables** — chain setup, query-name string-match drops, and
//!   set-match drops.
//!
//! Rendering is deterministic (sets are ordered, one rule per line) and pure:
//! nothing here installs anything. The unknown-source filter renders as an
//! allow set with a default drop, never as per-source blocks. TTL-consistency
//! matching has no stock ipset/iptables equivalent, so its live-format rules
//! are emitted as annotated pseudo-commands.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::net::Ipv4Addr;

use crate::filters::fq::{FqRule, SegmentKind};
use crate::filters::{FilterError, FilterId, Verdict};
use crate::trace::QueryView;

/// A query-name block rule reduced to what enforcement needs.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct NameRule {
    pub kind: SegmentKind,
    pub value: String,
}

impl From<&FqRule> for NameRule {
    fn from(rule: &FqRule) -> Self {
        NameRule {
            kind: rule.kind,
            value: rule.value.clone(),
        }
    }
}

impl NameRule {
    /// Whole-segment match: exact rules compare the full name; suffix rules
    /// match whole trailing labels (`evil` matches `a.evil` but not
    /// `xevil`).
    fn matches(&self, qname: &str) -> bool {
        match self.kind {
            SegmentKind::Full => qname == self.value,
            SegmentKind::Subdomain | SegmentKind::Tld => {
                qname == self.value
                    || (qname.len() > self.value.len()
                        && qname.ends_with(&self.value)
                        && qname.as_bytes()[qname.len() - self.value.len() - 1] == b'.')
            }
        }
    }
}

/// Everything a deployed pipeline blocks, in pipeline order.
///
/// Only fields for deployed members are populated; the rest stay empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DeploymentRules {
    /// Deployed filters in evaluation order.
    pub pipeline: Vec<FilterId>,
    /// Query-name rules enforced by name matching.
    pub fq_t: Vec<NameRule>,
    /// Sources blocked for sending flagged names.
    pub fq_s: BTreeSet<Ipv4Addr>,
    /// The allow-list: sources NOT in this set are dropped.
    pub ur_allow: Option<BTreeSet<Ipv4Addr>>,
    /// Accepted TTL values per known source; a known source using another
    /// TTL is dropped.
    pub hc_ttls: Option<BTreeMap<Ipv4Addr, BTreeSet<u8>>>,
    /// Sources currently rated wild by rate deviance.
    pub wr_wild: BTreeSet<Ipv4Addr>,
    /// Sources blocked by the aggressive-rate comparison filter.
    pub ar_blocked: BTreeSet<Ipv4Addr>,
}

/// Errors from parsing neutral rule text.
#[derive(Debug, thiserror::Error)]
pub enum RulesError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
}

fn filter_from_token(token: &str) -> Option<FilterId> {
    FilterId::ALL.iter().copied().find(|f| f.token() == token)
}

impl DeploymentRules {
    fn check_cap(&self, fq_rule_cap: usize) -> Result<(), FilterError> {
        if self.fq_t.len() > fq_rule_cap {
            return Err(FilterError::RuleCapExceeded(self.fq_t.len(), fq_rule_cap));
        }
        Ok(())
    }

    fn sorted_fq_t(&self) -> Vec<&NameRule> {
        let mut rules: Vec<&NameRule> = self.fq_t.iter().collect();
        rules.sort();
        rules.dedup();
        rules
    }

    /// Render the neutral line format. An empty deployment renders as an
    /// empty string. Output is sorted and stable: rendering the same
    /// snapshot twice yields identical bytes.
    pub fn render_neutral(&self) -> String {
        if self.pipeline.is_empty() {
            return String::new();
        }
        let mut out = String::new();
        let tokens: Vec<&str> = self.pipeline.iter().map(|f| f.token()).collect();
        let _ = writeln!(out, "PIPELINE {}", tokens.join("+"));
        for filter in &self.pipeline {
            match filter {
                FilterId::FqT => {
                    for rule in self.sorted_fq_t() {
                        match rule.kind {
                            SegmentKind::Full => {
                                let _ = writeln!(out, "BLOCK_QNAME_EXACT {}", rule.value);
                            }
                            SegmentKind::Subdomain | SegmentKind::Tld => {
                                let _ = writeln!(out, "BLOCK_QNAME_SUFFIX {}", rule.value);
                            }
                        }
                    }
                }
                FilterId::FqS => {
                    for addr in &self.fq_s {
                        let _ = writeln!(out, "BLOCK_SRC fq_s {addr}");
                    }
                }
                FilterId::Ur => {
                    if let Some(allow) = &self.ur_allow {
                        let _ = writeln!(out, "ALLOW_SET ur");
                        for addr in allow {
                            let _ = writeln!(out, "ADD ur {addr}");
                        }
                        let _ = writeln!(out, "DEFAULT_DROP ur");
                    }
                }
                FilterId::Hc => {
                    if let Some(ttls) = &self.hc_ttls {
                        for (addr, set) in ttls {
                            let list: Vec<String> =
                                set.iter().map(|t| t.to_string()).collect();
                            let _ = writeln!(
                                out,
                                "BLOCK_SRC_TTL_MISMATCH {addr} {}",
                                list.join(",")
                            );
                        }
                    }
                }
                FilterId::Wr => {
                    for addr in &self.wr_wild {
                        let _ = writeln!(out, "BLOCK_SRC wr {addr}");
                    }
                }
                FilterId::Ar => {
                    for addr in &self.ar_blocked {
                        let _ = writeln!(out, "BLOCK_SRC ar {addr}");
                    }
                }
            }
        }
        out
    }

    /// Parse neutral rule text back into a snapshot. Inverse of
    /// [`DeploymentRules::render_neutral`].
    pub fn parse_neutral(text: &str) -> Result<DeploymentRules, RulesError> {
        let mut rules = DeploymentRules::default();
        let mut saw_allow_set = false;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let bad = |msg: &str| RulesError::Malformed {
                line,
                msg: msg.to_string(),
            };
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut parts = trimmed.split_whitespace();
            let directive = parts.next().unwrap();
            let args: Vec<&str> = parts.collect();
            match directive {
                "PIPELINE" => {
                    if args.len() != 1 {
                        return Err(bad("PIPELINE takes one +-joined token list"));
                    }
                    for token in args[0].split('+') {
                        let f = filter_from_token(token)
                            .ok_or_else(|| bad(&format!("unknown filter token {token:?}")))?;
                        rules.pipeline.push(f);
                    }
                }
                "BLOCK_QNAME_EXACT" => {
                    if args.len() != 1 {
                        return Err(bad("BLOCK_QNAME_EXACT takes one name"));
                    }
                    rules.fq_t.push(NameRule {
                        kind: SegmentKind::Full,
                        value: args[0].to_string(),
                    });
                }
                "BLOCK_QNAME_SUFFIX" => {
                    if args.len() != 1 {
                        return Err(bad("BLOCK_QNAME_SUFFIX takes one segment"));
                    }
                    let kind = if args[0].contains('.') {
                        SegmentKind::Subdomain
                    } else {
                        SegmentKind::Tld
                    };
                    rules.fq_t.push(NameRule {
                        kind,
                        value: args[0].to_string(),
                    });
                }
                "ALLOW_SET" => {
                    if args != ["ur"] {
                        return Err(bad("only the ur allow set is defined"));
                    }
                    saw_allow_set = true;
                    rules.ur_allow.get_or_insert_with(BTreeSet::new);
                }
                "ADD" => {
                    if args.len() != 2 || args[0] != "ur" {
                        return Err(bad("ADD takes: ur <addr>"));
                    }
                    let addr: Ipv4Addr =
                        args[1].parse().map_err(|_| bad("bad address"))?;
                    rules
                        .ur_allow
                        .get_or_insert_with(BTreeSet::new)
                        .insert(addr);
                }
                "DEFAULT_DROP" => {
                    if args != ["ur"] || !saw_allow_set {
                        return Err(bad("DEFAULT_DROP must follow ALLOW_SET ur"));
                    }
                }
                "BLOCK_SRC" => {
                    if args.len() != 2 {
                        return Err(bad("BLOCK_SRC takes: <set> <addr>"));
                    }
                    let addr: Ipv4Addr =
                        args[1].parse().map_err(|_| bad("bad address"))?;
                    match args[0] {
                        "fq_s" => rules.fq_s.insert(addr),
                        "wr" => rules.wr_wild.insert(addr),
                        "ar" => rules.ar_blocked.insert(addr),
                        other => {
                            return Err(bad(&format!("unknown block set {other:?}")))
                        }
                    };
                }
                "BLOCK_SRC_TTL_MISMATCH" => {
                    if args.len() != 2 {
                        return Err(bad("BLOCK_SRC_TTL_MISMATCH takes: <addr> <ttl,ttl,...>"));
                    }
                    let addr: Ipv4Addr =
                        args[0].parse().map_err(|_| bad("bad address"))?;
                    let mut set = BTreeSet::new();
                    for t in args[1].split(',') {
                        set.insert(t.parse::<u8>().map_err(|_| bad("bad ttl"))?);
                    }
                    rules
                        .hc_ttls
                        .get_or_insert_with(BTreeMap::new)
                        .insert(addr, set);
                }
                other => return Err(bad(&format!("unknown directive {other:?}"))),
            }
        }
        Ok(rules)
    }

    /// Render `ipset` commands creating and filling the source sets that
    /// the iptables rules reference.
    pub fn render_ipset(&self, fq_rule_cap: usize) -> Result<String, FilterError> {
        self.check_cap(fq_rule_cap)?;
        let mut out = String::new();
        for filter in &self.pipeline {
            match filter {
                FilterId::FqT => {} // name rules live in iptables, not sets
                FilterId::FqS => {
                    let _ = writeln!(out, "ipset create ddidd-fqs hash:ip");
                    for addr in &self.fq_s {
                        let _ = writeln!(out, "ipset add ddidd-fqs {addr}");
                    }
                }
                FilterId::Ur => {
                    if let Some(allow) = &self.ur_allow {
                        let _ = writeln!(out, "ipset create ddidd-ur-allow hash:ip");
                        for addr in allow {
                            let _ = writeln!(out, "ipset add ddidd-ur-allow {addr}");
                        }
                    }
                }
                FilterId::Hc => {
                    if let Some(ttls) = &self.hc_ttls {
                        let _ = writeln!(
                            out,
                            "# TTL-consistency pairs need an ip,ttl set type that stock ipset"
                        );
                        let _ = writeln!(
                            out,
                            "# lacks; the commands below are annotated pseudo-commands."
                        );
                        let _ = writeln!(out, "#ipset create ddidd-hc hash:ip,ttl");
                        for (addr, set) in ttls {
                            for ttl in set {
                                let _ = writeln!(out, "#ipset add ddidd-hc {addr},ttl:{ttl}");
                            }
                        }
                        let _ = writeln!(out, "ipset create ddidd-hc-known hash:ip");
                        for addr in ttls.keys() {
                            let _ = writeln!(out, "ipset add ddidd-hc-known {addr}");
                        }
                    }
                }
                FilterId::Wr => {
                    let _ = writeln!(out, "ipset create ddidd-wr hash:ip");
                    for addr in &self.wr_wild {
                        let _ = writeln!(out, "ipset add ddidd-wr {addr}");
                    }
                }
                FilterId::Ar => {
                    let _ = writeln!(out, "ipset create ddidd-ar hash:ip");
                    for addr in &self.ar_blocked {
                        let _ = writeln!(out, "ipset add ddidd-ar {addr}");
                    }
                }
            }
        }
        Ok(out)
    }

    /// Render iptables commands: chain setup, query-name string matches,
    /// and drops against the sets from [`DeploymentRules::render_ipset`].
    pub fn render_iptables(&self, fq_rule_cap: usize) -> Result<String, FilterError> {
        self.check_cap(fq_rule_cap)?;
        if self.pipeline.is_empty() {
            return Ok(String::new());
        }
        let mut out = String::new();
        let _ = writeln!(out, "iptables -N DDIDD");
        let _ = writeln!(out, "iptables -A INPUT -p udp --dport 53 -j DDIDD");
        for filter in &self.pipeline {
            match filter {
                FilterId::FqT => {
                    if !self.fq_t.is_empty() {
                        let _ = writeln!(
                            out,
                            "# qname matching approximated with payload string match; DNS wire"
                        );
                        let _ = writeln!(
                            out,
                            "# format encodes label lengths instead of dots."
                        );
                    }
                    for rule in self.sorted_fq_t() {
                        let _ = writeln!(
                            out,
                            "iptables -A DDIDD -m string --algo bm --string \"{}\" -j DROP",
                            rule.value
                        );
                    }
                }
                FilterId::FqS => {
                    let _ = writeln!(
                        out,
                        "iptables -A DDIDD -m set --match-set ddidd-fqs src -j DROP"
                    );
                }
                FilterId::Ur => {
                    if self.ur_allow.is_some() {
                        let _ = writeln!(
                            out,
                            "iptables -A DDIDD -m set ! --match-set ddidd-ur-allow src -j DROP"
                        );
                    }
                }
                FilterId::Hc => {
                    if self.hc_ttls.is_some() {
                        let _ = writeln!(
                            out,
                            "# TTL-mismatch drop needs the pseudo ip,ttl set; annotated:"
                        );
                        let _ = writeln!(
                            out,
                            "#iptables -A DDIDD -m set --match-set ddidd-hc-known src \
                             -m set ! --match-set ddidd-hc src,ttl -j DROP"
                        );
                    }
                }
                FilterId::Wr => {
                    let _ = writeln!(
                        out,
                        "iptables -A DDIDD -m set --match-set ddidd-wr src -j DROP"
                    );
                }
                FilterId::Ar => {
                    let _ = writeln!(
                        out,
                        "iptables -A DDIDD -m set --match-set ddidd-ar src -j DROP"
                    );
                }
            }
        }
        Ok(out)
    }
}

/// Indexed evaluator over a rule snapshot: answers per-query verdicts with
/// hashed membership tests, never by scanning rule lists, so million-entry
/// blocklists stay O(1) per lookup.
pub struct RuleOracle {
    steps: Vec<OracleStep>,
}

enum OracleStep {
    FqT {
        exact: HashSet<String>,
        suffixes: Vec<String>,
    },
    FqS(HashSet<Ipv4Addr>),
    Ur(HashSet<Ipv4Addr>),
    Hc(HashMap<Ipv4Addr, Vec<u8>>),
    Wr(HashSet<Ipv4Addr>),
    Ar(HashSet<Ipv4Addr>),
}

impl RuleOracle {
    pub fn new(rules: &DeploymentRules) -> RuleOracle {
        let steps = rules
            .pipeline
            .iter()
            .map(|filter| match filter {
                FilterId::FqT => {
                    let mut exact = HashSet::new();
                    let mut suffixes = Vec::new();
                    for rule in &rules.fq_t {
                        match rule.kind {
                            SegmentKind::Full => {
                                exact.insert(rule.value.clone());
                            }
                            SegmentKind::Subdomain | SegmentKind::Tld => {
                                suffixes.push(rule.value.clone());
                            }
                        }
                    }
                    OracleStep::FqT { exact, suffixes }
                }
                FilterId::FqS => OracleStep::FqS(rules.fq_s.iter().copied().collect()),
                FilterId::Ur => OracleStep::Ur(
                    rules
                        .ur_allow
                        .as_ref()
                        .map(|s| s.iter().copied().collect())
                        .unwrap_or_default(),
                ),
                FilterId::Hc => OracleStep::Hc(
                    rules
                        .hc_ttls
                        .as_ref()
                        .map(|m| {
                            m.iter()
                                .map(|(a, s)| (*a, s.iter().copied().collect()))
                                .collect()
                        })
                        .unwrap_or_default(),
                ),
                FilterId::Wr => OracleStep::Wr(rules.wr_wild.iter().copied().collect()),
                FilterId::Ar => OracleStep::Ar(rules.ar_blocked.iter().copied().collect()),
            })
            .collect();
        RuleOracle { steps }
    }

    /// First-drop-wins evaluation in pipeline order.
    pub fn verdict(&self, view: &QueryView<'_>) -> Verdict {
        for step in &self.steps {
            match step {
                OracleStep::FqT { exact, suffixes } => {
                    let name_rule_hit = exact.contains(view.qname)
                        || suffixes.iter().any(|s| {
                            NameRule {
                                kind: SegmentKind::Tld,
                                value: s.clone(),
                            }
                            .matches(view.qname)
                        });
                    if name_rule_hit {
                        return Verdict::Drop(FilterId::FqT);
                    }
                }
                OracleStep::FqS(set) => {
                    if set.contains(&view.src) {
                        return Verdict::Drop(FilterId::FqS);
                    }
                }
                OracleStep::Ur(allow) => {
                    if !allow.contains(&view.src) {
                        return Verdict::Drop(FilterId::Ur);
                    }
                }
                OracleStep::Hc(ttls) => {
                    if let Some(set) = ttls.get(&view.src) {
                        if !set.contains(&view.ttl) {
                            return Verdict::Drop(FilterId::Hc);
                        }
                    }
                }
                OracleStep::Wr(wild) => {
                    if wild.contains(&view.src) {
                        return Verdict::Drop(FilterId::Wr);
                    }
                }
                OracleStep::Ar(blocked) => {
                    if blocked.contains(&view.src) {
                        return Verdict::Drop(FilterId::Ar);
                    }
                }
            }
        }
        Verdict::Pass
    }
}
