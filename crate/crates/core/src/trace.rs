//! Query trace model: records, name segmentation, and JSON-lines I/O.
//!
//! A trace is a UTF-8 text file with one JSON object per line, ordered by
//! non-decreasing timestamp. Records carry the fields a resolver-facing
//! packet capture would: arrival time, source address, IP TTL, transport,
//! query name/type, and wire size. An optional `label` marks ground truth
//! for metrics; filters never see it (see [`QueryView`]).

use std::collections::VecDeque;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::Ipv4Addr;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Transport protocol of a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Proto {
    Udp,
    Tcp,
}

impl fmt::Display for Proto {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Proto::Udp => write!(f, "udp"),
            Proto::Tcp => write!(f, "tcp"),
        }
    }
}

/// Ground-truth label carried by synthetic traces.
///
/// Labels feed metrics (collateral damage, drop attribution) only. Verdict
/// code receives a [`QueryView`], which does not expose the label at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Legit,
    Attack,
}

/// One query observed at the server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    /// Arrival time in seconds (decimal, non-negative, trace-monotone).
    pub ts: f64,
    /// Source IPv4 address.
    pub src: Ipv4Addr,
    /// IP TTL as observed on the wire.
    pub ttl: u8,
    /// Transport protocol.
    pub proto: Proto,
    /// Query name, normalized: lowercase, no trailing dot. Empty string is
    /// the root query.
    pub qname: String,
    /// Query type mnemonic (`A`, `AAAA`, `NS`, `NONE`, ...), free-form.
    pub qtype: String,
    /// Wire size in bytes, at least 1.
    pub size: u32,
    /// Ground-truth label; absent on real captures.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

/// Label-blind view of a record, the only shape filter verdicts accept.
///
/// Keeping `label` structurally out of reach here is what guarantees the
/// mitigation path cannot peek at ground truth.
#[derive(Debug, Clone, Copy)]
pub struct QueryView<'a> {
    pub ts: f64,
    pub src: Ipv4Addr,
    pub ttl: u8,
    pub proto: Proto,
    pub qname: &'a str,
    pub qtype: &'a str,
    pub size: u32,
}

impl QueryRecord {
    /// Validating constructor. Normalizes `qname` (lowercase, trailing dots
    /// stripped) and enforces the field ranges the parser enforces.
    pub fn new(
        ts: f64,
        src: Ipv4Addr,
        ttl: u8,
        proto: Proto,
        qname: &str,
        qtype: &str,
        size: u32,
        label: Option<Label>,
    ) -> Result<Self, TraceError> {
        if !ts.is_finite() || ts < 0.0 {
            return Err(TraceError::OutOfRange { line: 0, field: "ts" });
        }
        if size < 1 {
            return Err(TraceError::OutOfRange { line: 0, field: "size" });
        }
        Ok(QueryRecord {
            ts,
            src,
            ttl,
            proto,
            qname: normalize_qname(qname),
            qtype: qtype.to_string(),
            size,
            label,
        })
    }

    /// The label-blind view handed to filters.
    pub fn view(&self) -> QueryView<'_> {
        QueryView {
            ts: self.ts,
            src: self.src,
            ttl: self.ttl,
            proto: self.proto,
            qname: &self.qname,
            qtype: &self.qtype,
            size: self.size,
        }
    }
}

/// Lowercase and strip trailing dots. `"."` (the root) becomes `""`.
pub fn normalize_qname(qname: &str) -> String {
    qname.trim_end_matches('.').to_ascii_lowercase()
}

/// The three name levels a frequency filter can match on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QnameSegments {
    /// Last label (`com` for `www.example.com`).
    pub tld: String,
    /// Last two labels, or the whole name if it has fewer.
    pub subdomain: String,
    /// The full normalized name.
    pub full: String,
}

/// Errors raised by trace parsing and I/O.
#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedLine { line: u64, reason: String },
    #[error("line {line}: field `{field}` out of range")]
    OutOfRange { line: u64, field: &'static str },
    #[error("line {line}: bad IPv4 address")]
    BadAddress { line: u64 },
    #[error("line {line}: timestamp {ts} precedes previous {prev} (trace must be time-ordered)")]
    MonotonicityViolation { line: u64, prev: f64, ts: f64 },
    #[error("cannot segment an empty name")]
    EmptyName,
    #[error("trace I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// Raw wire shape of a trace line. Separate from [`QueryRecord`] so range
/// violations (e.g. `ttl: 300`) surface as `OutOfRange` rather than a serde
/// type error.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    ts: f64,
    src: String,
    ttl: i64,
    proto: String,
    qname: String,
    qtype: String,
    size: i64,
    #[serde(default)]
    label: Option<String>,
}

/// Parse one JSON-lines record. `line` is used only for error reporting;
/// pass 0 when parsing outside a file context.
pub fn parse_trace_line(text: &str, line: u64) -> Result<QueryRecord, TraceError> {
    let raw: RawRecord =
        serde_json::from_str(text).map_err(|e| TraceError::MalformedLine {
            line,
            reason: e.to_string(),
        })?;
    if !raw.ts.is_finite() || raw.ts < 0.0 {
        return Err(TraceError::OutOfRange { line, field: "ts" });
    }
    if !(0..=255).contains(&raw.ttl) {
        return Err(TraceError::OutOfRange { line, field: "ttl" });
    }
    if raw.size < 1 || raw.size > i64::from(u32::MAX) {
        return Err(TraceError::OutOfRange { line, field: "size" });
    }
    let src: Ipv4Addr = raw
        .src
        .parse()
        .map_err(|_| TraceError::BadAddress { line })?;
    let proto = match raw.proto.as_str() {
        "udp" => Proto::Udp,
        "tcp" => Proto::Tcp,
        other => {
            return Err(TraceError::MalformedLine {
                line,
                reason: format!("unknown proto `{other}`"),
            })
        }
    };
    let label = match raw.label.as_deref() {
        None => None,
        Some("legit") => Some(Label::Legit),
        Some("attack") => Some(Label::Attack),
        Some(other) => {
            return Err(TraceError::MalformedLine {
                line,
                reason: format!("unknown label `{other}`"),
            })
        }
    };
    Ok(QueryRecord {
        ts: raw.ts,
        src,
        ttl: raw.ttl as u8,
        proto,
        qname: normalize_qname(&raw.qname),
        qtype: raw.qtype,
        size: raw.size as u32,
        label,
    })
}

/// Split a normalized name into its match levels.
///
/// Errors with [`TraceError::EmptyName`] on the root query, which has no
/// labels to match.
pub fn segment_qname(qname: &str) -> Result<QnameSegments, TraceError> {
    if qname.is_empty() {
        return Err(TraceError::EmptyName);
    }
    let labels: Vec<&str> = qname.split('.').collect();
    let tld = labels[labels.len() - 1].to_string();
    let subdomain = if labels.len() >= 2 {
        labels[labels.len() - 2..].join(".")
    } else {
        qname.to_string()
    };
    Ok(QnameSegments {
        tld,
        subdomain,
        full: qname.to_string(),
    })
}

/// Borrowing variant of [`segment_qname`] for hot paths; returns
/// `(tld, subdomain, full)` without allocation, or `None` for the root.
pub fn segments_of(qname: &str) -> Option<(&str, &str, &str)> {
    if qname.is_empty() {
        return None;
    }
    let tld = match qname.rfind('.') {
        Some(i) => &qname[i + 1..],
        None => qname,
    };
    let subdomain = match qname.rfind('.') {
        Some(i) => match qname[..i].rfind('.') {
            Some(j) => &qname[j + 1..],
            None => qname,
        },
        None => qname,
    };
    Some((tld, subdomain, qname))
}

/// Streaming trace reader. Yields records in file order and enforces
/// timestamp monotonicity with 1-based line numbers in errors.
pub struct TraceReader<R: BufRead> {
    inner: R,
    line: u64,
    prev_ts: Option<f64>,
    buf: String,
}

impl TraceReader<BufReader<File>> {
    /// Open a JSON-lines trace file for streaming reads.
    pub fn open(path: &Path) -> Result<Self, TraceError> {
        let file = File::open(path)?;
        Ok(TraceReader::new(BufReader::new(file)))
    }
}

impl<R: BufRead> TraceReader<R> {
    pub fn new(inner: R) -> Self {
        TraceReader {
            inner,
            line: 0,
            prev_ts: None,
            buf: String::new(),
        }
    }
}

impl<R: BufRead> Iterator for TraceReader<R> {
    type Item = Result<QueryRecord, TraceError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.inner.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(TraceError::Io(e))),
            }
            self.line += 1;
            let text = self.buf.trim_end_matches(['\n', '\r']);
            if text.is_empty() {
                continue; // tolerate blank lines, common at EOF
            }
            let rec = match parse_trace_line(text, self.line) {
                Ok(r) => r,
                Err(e) => return Some(Err(e)),
            };
            if let Some(prev) = self.prev_ts {
                if rec.ts < prev {
                    return Some(Err(TraceError::MonotonicityViolation {
                        line: self.line,
                        prev,
                        ts: rec.ts,
                    }));
                }
            }
            self.prev_ts = Some(rec.ts);
            return Some(Ok(rec));
        }
    }
}

/// Read a whole trace into memory. Prefer [`TraceReader`] for large files.
pub fn read_trace(path: &Path) -> Result<Vec<QueryRecord>, TraceError> {
    TraceReader::open(path)?.collect()
}

/// Write records as JSON lines, enforcing the same monotonicity the reader
/// checks. Serialization is canonical, so read-write round-trips are
/// byte-identical.
pub fn write_trace<'a, I>(records: I, path: &Path) -> Result<(), TraceError>
where
    I: IntoIterator<Item = &'a QueryRecord>,
{
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    let mut prev: Option<f64> = None;
    let mut line: u64 = 0;
    for rec in records {
        line += 1;
        if let Some(p) = prev {
            if rec.ts < p {
                return Err(TraceError::MonotonicityViolation {
                    line,
                    prev: p,
                    ts: rec.ts,
                });
            }
        }
        prev = Some(rec.ts);
        serde_json::to_writer(&mut w, rec).map_err(|e| TraceError::MalformedLine {
            line,
            reason: e.to_string(),
        })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Fixed-capacity sliding window of recent records, used by learners and
/// the selection sampler.
#[derive(Debug, Clone, Default)]
pub struct RecentWindow {
    cap: usize,
    items: VecDeque<QueryRecord>,
}

impl RecentWindow {
    pub fn new(cap: usize) -> Self {
        RecentWindow {
            cap,
            items: VecDeque::with_capacity(cap.min(1 << 16)),
        }
    }

    pub fn push(&mut self, rec: QueryRecord) {
        if self.items.len() == self.cap {
            self.items.pop_front();
        }
        self.items.push_back(rec);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &QueryRecord> {
        self.items.iter()
    }

    /// Snapshot the window contents oldest-first.
    pub fn to_vec(&self) -> Vec<QueryRecord> {
        self.items.iter().cloned().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(ts: f64) -> QueryRecord {
        QueryRecord::new(
            ts,
            Ipv4Addr::new(192, 0, 2, 1),
            57,
            Proto::Udp,
            "example.com",
            "A",
            64,
            None,
        )
        .unwrap()
    }

    #[test]
    fn parses_canonical_line() {
        let line = r#"{"ts":100.0,"src":"192.0.2.1","ttl":57,"proto":"udp","qname":"example.com","qtype":"A","size":64}"#;
        let r = parse_trace_line(line, 1).unwrap();
        assert_eq!(r.ts, 100.0);
        assert_eq!(r.src, Ipv4Addr::new(192, 0, 2, 1));
        assert_eq!(r.ttl, 57);
        assert_eq!(r.proto, Proto::Udp);
        assert_eq!(r.qname, "example.com");
        assert_eq!(r.qtype, "A");
        assert_eq!(r.size, 64);
        assert_eq!(r.label, None);
    }

    #[test]
    fn normalizes_case_and_trailing_dot() {
        let line = r#"{"ts":1.0,"src":"10.0.0.1","ttl":60,"proto":"udp","qname":"WWW.Example.COM.","qtype":"A","size":64}"#;
        let r = parse_trace_line(line, 1).unwrap();
        assert_eq!(r.qname, "www.example.com");
    }

    #[test]
    fn rejects_ttl_out_of_range() {
        let line = r#"{"ts":1.0,"src":"10.0.0.1","ttl":300,"proto":"udp","qname":"a.com","qtype":"A","size":64}"#;
        match parse_trace_line(line, 7) {
            Err(TraceError::OutOfRange { line: 7, field: "ttl" }) => {}
            other => panic!("expected ttl OutOfRange, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_keys() {
        let line = r#"{"ts":1.0,"src":"10.0.0.1","ttl":60,"proto":"udp","qname":"a.com","qtype":"A","size":64,"extra":1}"#;
        assert!(matches!(
            parse_trace_line(line, 1),
            Err(TraceError::MalformedLine { .. })
        ));
    }

    #[test]
    fn rejects_bad_address_and_bad_proto_and_size() {
        let bad_addr = r#"{"ts":1.0,"src":"not-an-ip","ttl":60,"proto":"udp","qname":"a.com","qtype":"A","size":64}"#;
        assert!(matches!(
            parse_trace_line(bad_addr, 3),
            Err(TraceError::BadAddress { line: 3 })
        ));
        let v6 = r#"{"ts":1.0,"src":"2001:db8::1","ttl":60,"proto":"udp","qname":"a.com","qtype":"A","size":64}"#;
        assert!(matches!(
            parse_trace_line(v6, 1),
            Err(TraceError::BadAddress { .. })
        ));
        let bad_proto = r#"{"ts":1.0,"src":"10.0.0.1","ttl":60,"proto":"icmp","qname":"a.com","qtype":"A","size":64}"#;
        assert!(matches!(
            parse_trace_line(bad_proto, 1),
            Err(TraceError::MalformedLine { .. })
        ));
        let zero_size = r#"{"ts":1.0,"src":"10.0.0.1","ttl":60,"proto":"udp","qname":"a.com","qtype":"A","size":0}"#;
        assert!(matches!(
            parse_trace_line(zero_size, 1),
            Err(TraceError::OutOfRange { field: "size", .. })
        ));
    }

    #[test]
    fn accepts_malformed_udp_marker_records() {
        let line = r#"{"ts":1.0,"src":"10.0.0.1","ttl":60,"proto":"udp","qname":"_malformed","qtype":"NONE","size":28}"#;
        let r = parse_trace_line(line, 1).unwrap();
        assert_eq!(r.qname, "_malformed");
        assert_eq!(r.qtype, "NONE");
    }

    #[test]
    fn segments_multi_label_names() {
        let s = segment_qname("www.example.com").unwrap();
        assert_eq!(
            (s.tld.as_str(), s.subdomain.as_str(), s.full.as_str()),
            ("com", "example.com", "www.example.com")
        );
        let s = segment_qname("com").unwrap();
        assert_eq!(
            (s.tld.as_str(), s.subdomain.as_str(), s.full.as_str()),
            ("com", "com", "com")
        );
        let s = segment_qname("a.b.c.d.example.xyz").unwrap();
        assert_eq!(
            (s.tld.as_str(), s.subdomain.as_str(), s.full.as_str()),
            ("xyz", "example.xyz", "a.b.c.d.example.xyz")
        );
    }

    #[test]
    fn root_query_is_unsegmentable() {
        assert!(matches!(segment_qname(""), Err(TraceError::EmptyName)));
        assert!(segments_of("").is_none());
    }

    #[test]
    fn borrowing_segments_agree_with_owned() {
        for name in ["www.example.com", "com", "a.b.c.d.example.xyz", "x.y"] {
            let owned = segment_qname(name).unwrap();
            let (tld, sub, full) = segments_of(name).unwrap();
            assert_eq!(owned.tld, tld);
            assert_eq!(owned.subdomain, sub);
            assert_eq!(owned.full, full);
        }
    }

    #[test]
    fn reader_reports_monotonicity_violation_with_line() {
        let data = concat!(
            r#"{"ts":5.0,"src":"10.0.0.1","ttl":60,"proto":"udp","qname":"a.com","qtype":"A","size":64}"#,
            "\n",
            r#"{"ts":4.9,"src":"10.0.0.1","ttl":60,"proto":"udp","qname":"a.com","qtype":"A","size":64}"#,
            "\n"
        );
        let mut reader = TraceReader::new(data.as_bytes());
        assert!(reader.next().unwrap().is_ok());
        match reader.next().unwrap() {
            Err(TraceError::MonotonicityViolation { line: 2, .. }) => {}
            other => panic!("expected violation at line 2, got {other:?}"),
        }
    }

    #[test]
    fn empty_input_yields_empty_stream() {
        let mut reader = TraceReader::new("".as_bytes());
        assert!(reader.next().is_none());
    }

    #[test]
    fn write_read_round_trip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let mut records = vec![rec(1.0), rec(1.25), rec(2.0)];
        records[1].label = Some(Label::Attack);
        records[2].qname = String::new(); // root query survives round trip
        write_trace(&records, &path).unwrap();
        let back = read_trace(&path).unwrap();
        assert_eq!(back, records);
        // And the bytes themselves are stable across a second write.
        let text1 = std::fs::read(&path).unwrap();
        write_trace(&back, &path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), text1);
    }

    #[test]
    fn writer_rejects_out_of_order_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let records = vec![rec(2.0), rec(1.0)];
        assert!(matches!(
            write_trace(&records, &path),
            Err(TraceError::MonotonicityViolation { line: 2, .. })
        ));
    }

    #[test]
    fn recent_window_evicts_oldest() {
        let mut w = RecentWindow::new(2);
        w.push(rec(1.0));
        w.push(rec(2.0));
        w.push(rec(3.0));
        let ts: Vec<f64> = w.iter().map(|r| r.ts).collect();
        assert_eq!(ts, vec![2.0, 3.0]);
    }
}
