//! Synthetic trace generation: legitimate resolver traffic, five attack
//! strategies, polymorphic multi-phase attacks, and flash crowds.
//!
//! All generation is deterministic under a seed: the same profile and specs
//! produce byte-identical traces. Per-source arrival streams are Poisson
//! processes; attack streams are aggregate Poisson processes at a multiple
//! of the legitimate load.
//!
//! Attack strategies:
//! * `p1` — random-spoofed sources (never in the legitimate population), one
//!   fixed query name.
//! * `p2` — as `p1`, but every query carries a fresh random name.
//! * `p3` — sources spoofed from a known low-rate pool, random IP TTL on
//!   every packet.
//! * `p4` — sources spoofed from a known pool with each source's true TTL.
//! * `p5` — half random-spoofed sources, half known-pool sources with true
//!   TTLs; both halves mix 90% random names with 10% the fixed name.

use std::collections::HashSet;
use std::net::Ipv4Addr;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::trace::{Label, Proto, QueryRecord, TraceError};

/// TLDs used for the valid portion of the legitimate name pool.
const VALID_TLDS: [&str; 10] = [
    "com", "net", "org", "io", "dev", "app", "info", "biz", "co", "edu",
];

/// Size of the valid legitimate name pool.
const VALID_NAME_POOL: usize = 1000;

const JUNK_ALPHABET: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";

// Stream tags for deriving independent sub-RNGs from one seed.
const TAG_ADDR: u64 = 1;
const TAG_RATE: u64 = 2;
const TAG_TTL: u64 = 3;
const TAG_ARRIVALS: u64 = 4;
const TAG_ATTACK: u64 = 5;
const TAG_FLASH: u64 = 6;

/// Errors from trace generation.
#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("profile needs at least {needed} sources for attack pools, has {have}")]
    TooFewSources { needed: usize, have: usize },
    #[error("invalid generation spec: {0}")]
    BadSpec(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

/// Shape of the legitimate client population.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LegitProfile {
    /// Number of distinct client sources.
    pub n_sources: usize,
    /// Lower bound of the per-source query rate (qps); rates are drawn
    /// log-uniformly between the bounds.
    pub rate_min_qps: f64,
    /// Upper bound of the per-source query rate (qps).
    pub rate_max_qps: f64,
    /// Smallest per-source IP TTL; each source gets one fixed TTL drawn
    /// uniformly from `[ttl_min, ttl_max]`.
    pub ttl_min: u8,
    /// Largest per-source IP TTL.
    pub ttl_max: u8,
    /// Fraction of queries drawn from the valid name pool; the rest are
    /// random junk labels.
    pub valid_name_frac: f64,
    /// Trace length in seconds.
    pub duration_s: f64,
    /// Master seed for the population and all arrival streams.
    pub seed: u64,
}

impl Default for LegitProfile {
    fn default() -> Self {
        LegitProfile {
            n_sources: 1000,
            rate_min_qps: 1e-3,
            rate_max_qps: 1e2,
            ttl_min: 32,
            ttl_max: 250,
            valid_name_frac: 0.4,
            duration_s: 600.0,
            seed: 0,
        }
    }
}

impl LegitProfile {
    fn validate(&self) -> Result<(), SynthError> {
        if self.n_sources == 0 {
            return Err(SynthError::BadSpec("n_sources must be positive".into()));
        }
        if !(self.rate_min_qps > 0.0 && self.rate_max_qps >= self.rate_min_qps) {
            return Err(SynthError::BadSpec(
                "rate bounds must satisfy 0 < rate_min_qps <= rate_max_qps".into(),
            ));
        }
        if self.ttl_min > self.ttl_max {
            return Err(SynthError::BadSpec("ttl_min must not exceed ttl_max".into()));
        }
        if !(0.0..=1.0).contains(&self.valid_name_frac) {
            return Err(SynthError::BadSpec("valid_name_frac must be in [0, 1]".into()));
        }
        if !(self.duration_s > 0.0) {
            return Err(SynthError::BadSpec("duration_s must be positive".into()));
        }
        Ok(())
    }
}

/// One legitimate client.
#[derive(Debug, Clone, PartialEq)]
pub struct LegitSource {
    pub addr: Ipv4Addr,
    pub rate_qps: f64,
    /// The source's true IP TTL as seen at the server; fixed per source.
    pub ttl: u8,
}

/// The realized client population, shared by legitimate and attack
/// generation (attacks spoof sources relative to this population).
#[derive(Debug, Clone)]
pub struct LegitModel {
    /// Sources sorted by rate, ascending.
    pub sources: Vec<LegitSource>,
    /// Pool of plausibly-valid query names.
    pub valid_names: Vec<String>,
    /// Sum of per-source rates (qps).
    pub aggregate_qps: f64,
    known: HashSet<Ipv4Addr>,
}

impl LegitModel {
    /// Whether `addr` belongs to the legitimate population.
    pub fn is_known(&self, addr: Ipv4Addr) -> bool {
        self.known.contains(&addr)
    }

    /// Disjoint pools of known sources used by the spoofed-known attack
    /// strategies (`p3`, `p4`, `p5`). Pools are drawn from just above the
    /// middle of the rate distribution: busy enough to be reliably observed
    /// (and therefore modeled) during a peace capture, but low-rate enough
    /// that blocking them wholesale costs little legitimate traffic.
    pub fn pools(&self) -> Result<AttackPools, SynthError> {
        let n = self.sources.len();
        let ps = (n / 10).clamp(5, 50);
        let start = n * 11 / 20;
        if start + 3 * ps > n || n < 50 {
            return Err(SynthError::TooFewSources { needed: 50, have: n });
        }
        Ok(AttackPools {
            p4: (start..start + ps).collect(),
            p5b: (start + ps..start + 2 * ps).collect(),
            p3: (start + 2 * ps..start + 3 * ps).collect(),
        })
    }
}

/// Indices into [`LegitModel::sources`] for each spoofed-known strategy.
#[derive(Debug, Clone)]
pub struct AttackPools {
    pub p3: Vec<usize>,
    pub p4: Vec<usize>,
    pub p5b: Vec<usize>,
}

/// An attack phase.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Attack load as a multiple of the aggregate legitimate load.
    #[serde(default = "default_multiplier")]
    pub multiplier: f64,
    pub start_s: f64,
    pub end_s: f64,
    /// The fixed query name used by `p1` and (10% of the time) `p5`.
    #[serde(default = "default_qname")]
    pub qname: String,
    #[serde(default)]
    pub seed: u64,
}

fn default_multiplier() -> f64 {
    10.0
}

fn default_qname() -> String {
    "a.attack".to_string()
}

/// The five attack strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    P1,
    P2,
    P3,
    P4,
    P5,
}

impl FromStr for AttackKind {
    type Err = SynthError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "p1" => Ok(AttackKind::P1),
            "p2" => Ok(AttackKind::P2),
            "p3" => Ok(AttackKind::P3),
            "p4" => Ok(AttackKind::P4),
            "p5" => Ok(AttackKind::P5),
            other => Err(SynthError::BadSpec(format!(
                "unknown attack kind {other:?} (expected p1..p5)"
            ))),
        }
    }
}

/// A legitimate surge: a subset of known sources raising their rate, with
/// traffic that is by definition *not* an attack.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlashSpec {
    /// How many sources surge (the highest-rate sources are picked).
    pub n_surge: usize,
    /// Extra load per surging source (qps) on top of its base rate.
    pub extra_qps: f64,
    pub start_s: f64,
    pub end_s: f64,
    #[serde(default)]
    pub seed: u64,
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn sub_rng(seed: u64, tag: u64, idx: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(splitmix64(seed ^ tag.wrapping_mul(0x9E37_79B9)) ^ idx))
}

fn exp_gap(rng: &mut ChaCha8Rng, rate_qps: f64) -> f64 {
    // U in [0, 1) makes 1-U in (0, 1], so the log never sees zero.
    let u: f64 = rng.gen();
    -(1.0 - u).ln() / rate_qps
}

fn junk_name(rng: &mut ChaCha8Rng) -> String {
    let len = rng.gen_range(7..=12);
    (0..len)
        .map(|_| JUNK_ALPHABET[rng.gen_range(0..JUNK_ALPHABET.len())] as char)
        .collect()
}

fn pick_name(rng: &mut ChaCha8Rng, model: &LegitModel, valid_frac: f64) -> String {
    if rng.gen::<f64>() < valid_frac {
        model.valid_names[rng.gen_range(0..model.valid_names.len())].clone()
    } else {
        junk_name(rng)
    }
}

fn pick_qtype(rng: &mut ChaCha8Rng) -> &'static str {
    let r: f64 = rng.gen();
    if r < 0.85 {
        "A"
    } else if r < 0.95 {
        "AAAA"
    } else {
        "NS"
    }
}

fn query_size(qname: &str) -> u32 {
    40 + qname.len() as u32
}

fn random_unknown(rng: &mut ChaCha8Rng, model: &LegitModel) -> Ipv4Addr {
    loop {
        let addr = Ipv4Addr::from(rng.gen::<u32>());
        if !model.is_known(addr) {
            return addr;
        }
    }
}

/// Realize the client population described by `profile`.
pub fn build_model(profile: &LegitProfile) -> Result<LegitModel, SynthError> {
    profile.validate()?;
    let n = profile.n_sources;

    let mut rng_addr = sub_rng(profile.seed, TAG_ADDR, 0);
    let mut known = HashSet::with_capacity(n);
    let mut addrs = Vec::with_capacity(n);
    while addrs.len() < n {
        let addr = Ipv4Addr::from(rng_addr.gen::<u32>());
        if known.insert(addr) {
            addrs.push(addr);
        }
    }

    let mut rng_rate = sub_rng(profile.seed, TAG_RATE, 0);
    let ln_min = profile.rate_min_qps.ln();
    let ln_max = profile.rate_max_qps.ln();
    let mut rng_ttl = sub_rng(profile.seed, TAG_TTL, 0);

    let mut sources: Vec<LegitSource> = addrs
        .into_iter()
        .map(|addr| {
            let rate_qps = (ln_min + rng_rate.gen::<f64>() * (ln_max - ln_min)).exp();
            let ttl = rng_ttl.gen_range(profile.ttl_min..=profile.ttl_max);
            LegitSource { addr, rate_qps, ttl }
        })
        .collect();
    sources.sort_by(|a, b| a.rate_qps.total_cmp(&b.rate_qps).then(a.addr.cmp(&b.addr)));

    let valid_names = (0..VALID_NAME_POOL)
        .map(|j| format!("host{j}.{}", VALID_TLDS[j % VALID_TLDS.len()]))
        .collect();
    let aggregate_qps = sources.iter().map(|s| s.rate_qps).sum();

    Ok(LegitModel {
        sources,
        valid_names,
        aggregate_qps,
        known,
    })
}

/// Generate legitimate traffic over `[t0, t1)`. `stream` distinguishes
/// independent arrival draws for the same population (e.g. a peace capture
/// vs. the background of an attack trace).
pub fn gen_legit_span(
    model: &LegitModel,
    profile: &LegitProfile,
    t0: f64,
    t1: f64,
    stream: u64,
) -> Result<Vec<QueryRecord>, SynthError> {
    if !(t1 >= t0) {
        return Err(SynthError::BadSpec("span end before start".into()));
    }
    let expect = (model.aggregate_qps * (t1 - t0) * 1.05) as usize + 16;
    let mut records = Vec::with_capacity(expect);
    for (idx, src) in model.sources.iter().enumerate() {
        let mut rng = sub_rng(profile.seed, TAG_ARRIVALS ^ splitmix64(stream), idx as u64);
        let mut t = t0 + exp_gap(&mut rng, src.rate_qps);
        while t < t1 {
            let qname = pick_name(&mut rng, model, profile.valid_name_frac);
            let qtype = pick_qtype(&mut rng);
            let size = query_size(&qname);
            records.push(QueryRecord::new(
                t,
                src.addr,
                src.ttl,
                Proto::Udp,
                &qname,
                qtype,
                size,
                Some(Label::Legit),
            )?);
            t += exp_gap(&mut rng, src.rate_qps);
        }
    }
    records.sort_by(|a, b| a.ts.total_cmp(&b.ts));
    Ok(records)
}

/// Generate a pure legitimate trace over `[0, profile.duration_s)`.
pub fn gen_legit(profile: &LegitProfile) -> Result<(LegitModel, Vec<QueryRecord>), SynthError> {
    let model = build_model(profile)?;
    let records = gen_legit_span(&model, profile, 0.0, profile.duration_s, 0)?;
    Ok((model, records))
}

/// Generate one attack phase against the population in `model`.
pub fn gen_attack(spec: &AttackSpec, model: &LegitModel) -> Result<Vec<QueryRecord>, SynthError> {
    if !(spec.end_s > spec.start_s) {
        return Err(SynthError::BadSpec("attack end must be after start".into()));
    }
    if !(spec.multiplier > 0.0) {
        return Err(SynthError::BadSpec("attack multiplier must be positive".into()));
    }
    if spec.qname.is_empty() {
        return Err(SynthError::BadSpec("attack qname must be non-empty".into()));
    }
    let pools = match spec.kind {
        AttackKind::P3 | AttackKind::P4 | AttackKind::P5 => Some(model.pools()?),
        _ => None,
    };

    let rate = spec.multiplier * model.aggregate_qps;
    let mut rng = sub_rng(spec.seed, TAG_ATTACK, spec.kind as u64);
    let mut records = Vec::with_capacity((rate * (spec.end_s - spec.start_s) * 1.05) as usize + 16);
    let mut t = spec.start_s + exp_gap(&mut rng, rate);
    while t < spec.end_s {
        let (src, ttl, qname) = match spec.kind {
            AttackKind::P1 => {
                let src = random_unknown(&mut rng, model);
                (src, rng.gen::<u8>(), spec.qname.clone())
            }
            AttackKind::P2 => {
                let src = random_unknown(&mut rng, model);
                (src, rng.gen::<u8>(), junk_name(&mut rng))
            }
            AttackKind::P3 => {
                let pool = &pools.as_ref().unwrap().p3;
                let s = &model.sources[pool[rng.gen_range(0..pool.len())]];
                (s.addr, rng.gen::<u8>(), junk_name(&mut rng))
            }
            AttackKind::P4 => {
                let pool = &pools.as_ref().unwrap().p4;
                let s = &model.sources[pool[rng.gen_range(0..pool.len())]];
                (s.addr, s.ttl, junk_name(&mut rng))
            }
            AttackKind::P5 => {
                let (src, ttl) = if rng.gen_bool(0.5) {
                    let src = random_unknown(&mut rng, model);
                    (src, rng.gen::<u8>())
                } else {
                    let pool = &pools.as_ref().unwrap().p5b;
                    let s = &model.sources[pool[rng.gen_range(0..pool.len())]];
                    (s.addr, s.ttl)
                };
                let qname = if rng.gen_bool(0.1) {
                    spec.qname.clone()
                } else {
                    junk_name(&mut rng)
                };
                (src, ttl, qname)
            }
        };
        let qtype = pick_qtype(&mut rng);
        let size = query_size(&qname);
        records.push(QueryRecord::new(
            t,
            src,
            ttl,
            Proto::Udp,
            &qname,
            qtype,
            size,
            Some(Label::Attack),
        )?);
        t += exp_gap(&mut rng, rate);
    }
    Ok(records)
}

/// Generate a full trace: continuous legitimate background over
/// `[0, profile.duration_s)` with the given attack phases merged in.
pub fn gen_polymorphic(
    profile: &LegitProfile,
    specs: &[AttackSpec],
) -> Result<(LegitModel, Vec<QueryRecord>), SynthError> {
    let model = build_model(profile)?;
    let mut records = gen_legit_span(&model, profile, 0.0, profile.duration_s, 0)?;
    for spec in specs {
        if spec.start_s < 0.0 || spec.end_s > profile.duration_s {
            return Err(SynthError::BadSpec(format!(
                "attack phase [{}, {}) outside trace span [0, {})",
                spec.start_s, spec.end_s, profile.duration_s
            )));
        }
        records.extend(gen_attack(spec, &model)?);
    }
    records.sort_by(|a, b| a.ts.total_cmp(&b.ts));
    Ok((model, records))
}

/// Generate a flash crowd: the trace is all legitimate traffic, but the
/// `n_surge` busiest sources add `extra_qps` each over the surge window.
/// Returns the surging sources alongside the trace.
pub fn gen_flash_crowd(
    profile: &LegitProfile,
    flash: &FlashSpec,
) -> Result<(LegitModel, Vec<QueryRecord>, std::collections::BTreeSet<Ipv4Addr>), SynthError> {
    let model = build_model(profile)?;
    if flash.n_surge == 0 || flash.n_surge > model.sources.len() {
        return Err(SynthError::BadSpec(format!(
            "n_surge must be in 1..={}, got {}",
            model.sources.len(),
            flash.n_surge
        )));
    }
    if flash.start_s < 0.0 || !(flash.end_s > flash.start_s) || flash.end_s > profile.duration_s {
        return Err(SynthError::BadSpec("surge window outside trace span".into()));
    }
    if !(flash.extra_qps > 0.0) {
        return Err(SynthError::BadSpec("extra_qps must be positive".into()));
    }

    let mut records = gen_legit_span(&model, profile, 0.0, profile.duration_s, 0)?;
    let first_surge = model.sources.len() - flash.n_surge;
    let mut surge_set = std::collections::BTreeSet::new();
    for (k, idx) in (first_surge..model.sources.len()).enumerate() {
        let src = &model.sources[idx];
        surge_set.insert(src.addr);
        let mut rng = sub_rng(flash.seed, TAG_FLASH, k as u64);
        let mut t = flash.start_s + exp_gap(&mut rng, flash.extra_qps);
        while t < flash.end_s {
            let qname = pick_name(&mut rng, &model, profile.valid_name_frac);
            let qtype = pick_qtype(&mut rng);
            let size = query_size(&qname);
            records.push(QueryRecord::new(
                t,
                src.addr,
                src.ttl,
                Proto::Udp,
                &qname,
                qtype,
                size,
                Some(Label::Legit),
            )?);
            t += exp_gap(&mut rng, flash.extra_qps);
        }
    }
    records.sort_by(|a, b| a.ts.total_cmp(&b.ts));
    Ok((model, records, surge_set))
}
