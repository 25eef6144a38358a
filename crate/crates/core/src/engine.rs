//! Offline replay: learn from a peace trace, then drive the detector,
//! per-filter effect estimates, and the selector over an attack trace in
//! one-second ticks.
//!
//! Replay is deterministic and label-blind: ground-truth labels never reach
//! detection, estimation, or selection — they are only read afterwards to
//! score the run. Records inside one tick are judged against the pipeline
//! snapshot from the end of the previous tick, so a deployment decided at
//! the end of tick T takes effect at tick T+1, exactly as a pushed firewall
//! rule would.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detector::{Detector, DetectorConfig, DetectorError, DetectorEvent, LoadSample};
use crate::filters::ar::{ar_select, ar_verdict};
use crate::filters::fq::{
    fq_detect, fq_identify_sources, fq_learn, fq_verdict_s, fq_verdict_t, FqRule, QnameFreqTable,
};
use crate::filters::hc::{hc_build, hc_verdict, TtlTable};
use crate::filters::ur::{ur_build, ur_verdict, AllowList};
use crate::filters::wr::{wr_learn, wr_score, wr_verdict, wr_wild_set, RateTable, TrailingCounts};
use crate::filters::{FilterError, FilterId, Verdict};
use crate::params::{FilterParams, ParamError};
use crate::rules::{DeploymentRules, NameRule};
use crate::selector::{
    select, CandidateEvaluation, DeploymentTracker, PipelineEval, Reassessment, SelectorConfig,
};
use crate::trace::{segments_of, Label, QueryRecord, QueryView, RecentWindow};

/// Which filters the replay may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// The full layered defense: FQ (both variants), UR, HC, WR.
    #[default]
    Ddidd,
    /// The defense without the FQ filter.
    Partial,
    /// FQ alone (name rules plus source blocking).
    Fq,
    /// Unknown-source filter alone.
    Ur,
    /// TTL-consistency filter alone.
    Hc,
    /// Rate-deviance filter alone.
    Wr,
    /// Aggressive-rate comparison baseline: block top talkers until the
    /// remainder fits under the acceptable load.
    Ar,
}

impl Mode {
    /// Filters available for selection in this mode.
    pub fn available(self) -> &'static [FilterId] {
        match self {
            Mode::Ddidd => &[
                FilterId::FqT,
                FilterId::FqS,
                FilterId::Ur,
                FilterId::Hc,
                FilterId::Wr,
            ],
            Mode::Partial => &[FilterId::Ur, FilterId::Hc, FilterId::Wr],
            Mode::Fq => &[FilterId::FqT, FilterId::FqS],
            Mode::Ur => &[FilterId::Ur],
            Mode::Hc => &[FilterId::Hc],
            Mode::Wr => &[FilterId::Wr],
            Mode::Ar => &[],
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Mode::Ddidd => "ddidd",
            Mode::Partial => "partial",
            Mode::Fq => "fq",
            Mode::Ur => "ur",
            Mode::Hc => "hc",
            Mode::Wr => "wr",
            Mode::Ar => "ar",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Mode {
    type Err = EngineError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ddidd" => Ok(Mode::Ddidd),
            "partial" => Ok(Mode::Partial),
            "fq" => Ok(Mode::Fq),
            "ur" => Ok(Mode::Ur),
            "hc" => Ok(Mode::Hc),
            "wr" => Ok(Mode::Wr),
            "ar" => Ok(Mode::Ar),
            other => Err(EngineError::Config(format!(
                "unknown mode {other:?} (expected ddidd|partial|fq|ur|hc|wr|ar)"
            ))),
        }
    }
}

/// Full configuration of one replay run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplayConfig {
    pub params: FilterParams,
    pub detector: DetectorConfig,
    pub selector: SelectorConfig,
    pub mode: Mode,
    /// Seed for the randomized parts of scoring a run (the no-defense
    /// baseline); replay itself is deterministic.
    pub seed: u64,
}

/// Errors from replay.
#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("invalid parameters: {0}")]
    Params(#[from] ParamError),
    #[error("filter failure during replay: {0}")]
    Filter(#[from] FilterError),
    #[error("detector failure during replay: {0}")]
    Detector(#[from] DetectorError),
    #[error("invalid replay configuration: {0}")]
    Config(String),
}

/// One tick of the replay timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct TimelineRow {
    pub ts: u64,
    pub incoming_qps: u64,
    pub passed_qps: u64,
    pub blocked_qps: u64,
    pub al: f64,
    /// Attack state as of the end of the tick.
    pub attack_flag: bool,
    /// Pipeline that judged this tick's records.
    pub pipeline: Vec<FilterId>,
    /// Events raised at the end of the tick.
    pub events: Vec<String>,
}

pub const TIMELINE_HEADER: &str =
    "ts,incoming_qps,passed_qps,blocked_qps,al,attack_flag,pipeline,events";

fn pipeline_tokens(pipeline: &[FilterId]) -> String {
    if pipeline.is_empty() {
        "-".to_string()
    } else {
        pipeline
            .iter()
            .map(|f| f.token())
            .collect::<Vec<_>>()
            .join("+")
    }
}

/// Render timeline rows as CSV, header included. Byte-stable.
pub fn timeline_csv(rows: &[TimelineRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(TIMELINE_HEADER);
    out.push('\n');
    for r in rows {
        let events = if r.events.is_empty() {
            "-".to_string()
        } else {
            r.events.join(";")
        };
        out.push_str(&format!(
            "{},{},{},{},{:.3},{},{},{}\n",
            r.ts,
            r.incoming_qps,
            r.passed_qps,
            r.blocked_qps,
            r.al,
            u8::from(r.attack_flag),
            pipeline_tokens(&r.pipeline),
            events,
        ));
    }
    out
}

/// Record totals for one run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReportTotals {
    pub offered: u64,
    pub passed: u64,
    pub blocked: u64,
    /// Attack-labeled records in the whole trace.
    pub attack_records: u64,
    /// Legit-labeled records within the attack span.
    pub legit_in_span: u64,
    /// Legit-labeled records blocked anywhere in the run.
    pub legit_blocked: u64,
}

/// Per-tick ground-truth label counts, kept for scoring.
#[derive(Debug, Clone, Copy, Default)]
pub struct TickLabelCounts {
    pub ts: u64,
    pub attack: u64,
    pub legit: u64,
}

/// Everything a replay run measures.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: Mode,
    pub seed: u64,
    /// Acceptable load (qps) derived from the peace trace.
    pub al: f64,
    /// Tick at which the detector declared the attack, if it did.
    pub attack_detected_at: Option<u64>,
    /// Tick at which the detector declared the attack over, if it did.
    pub attack_ended_at: Option<u64>,
    /// Attack span used for scoring: ground-truth labels when present,
    /// otherwise the detector's window.
    pub span_start: Option<u64>,
    pub span_end: Option<u64>,
    /// Percentage of span ticks with passed load at or under AL.
    pub controlled_load_pct: f64,
    /// Blocked legit records as a percentage of legit records in the span.
    pub collateral_damage_pct: f64,
    /// Ticks from span start until the first controlled tick.
    pub selection_delay_s: Option<u64>,
    /// Blocked records per filter, whole run.
    pub drops_by_filter: BTreeMap<String, u64>,
    /// Attack-labeled blocked records per filter.
    pub attack_drops_by_filter: BTreeMap<String, u64>,
    /// No-defense baseline: percentage of span legit queries a server
    /// capped at AL would fail to answer, dropping uniformly at random.
    pub unanswered_legit_baseline_pct: f64,
    pub totals: ReportTotals,
    /// Timeline rows (written separately as CSV, not into report JSON).
    #[serde(skip)]
    pub timeline: Vec<TimelineRow>,
    /// Every deployment the selector installed: (tick, pipeline).
    #[serde(skip)]
    pub deployments: Vec<(u64, Vec<FilterId>)>,
    /// Neutral-format rules of each deployment, concatenated.
    #[serde(skip)]
    pub rules_log: String,
    /// Blocked record count per source, whole run.
    #[serde(skip)]
    pub drops_by_source: BTreeMap<Ipv4Addr, u64>,
    /// Ground-truth label counts per tick (scoring aid).
    #[serde(skip)]
    pub tick_label_counts: Vec<TickLabelCounts>,
}

/// Tables and samples learned from the peace trace.
struct Learned {
    allow: Option<AllowList>,
    ttls: Option<TtlTable>,
    rates: Option<RateTable>,
    fq_baseline: Option<QnameFreqTable>,
    peace_sample: Vec<QueryRecord>,
}

fn learn(
    peace: &[QueryRecord],
    params: &FilterParams,
    built_at: f64,
    avail: &[FilterId],
) -> Result<Learned, EngineError> {
    let peace_end = peace.last().map(|r| r.ts).unwrap_or(0.0);
    let peace_start = peace.first().map(|r| r.ts).unwrap_or(0.0);
    let tail = |span: f64| -> &[QueryRecord] {
        let lo = (peace_end - span).max(peace_start);
        let i = peace.partition_point(|r| r.ts < lo);
        &peace[i..]
    };

    let allow = if avail.contains(&FilterId::Ur) {
        Some(
            ur_build(tail(params.l_ur).iter(), built_at, params.l_ur)
                .map_err(EngineError::Filter)?,
        )
    } else {
        None
    };
    let ttls = if avail.contains(&FilterId::Hc) {
        Some(
            hc_build(tail(params.l_hc).iter(), built_at, params.l_hc)
                .map_err(EngineError::Filter)?,
        )
    } else {
        None
    };
    let rates = if avail.contains(&FilterId::Wr) {
        let span_start = (peace_end - params.l_wr).max(peace_start);
        Some(
            wr_learn(
                tail(params.l_wr),
                &params.windows,
                span_start,
                peace_end,
                built_at,
            )
            .map_err(EngineError::Filter)?,
        )
    } else {
        None
    };
    let fq_needed =
        avail.contains(&FilterId::FqT) || avail.contains(&FilterId::FqS);
    let sample_lo = peace.len().saturating_sub(params.l_fq);
    let peace_sample: Vec<QueryRecord> = peace[sample_lo..].to_vec();
    let fq_baseline = if fq_needed {
        Some(fq_learn(&peace_sample).map_err(EngineError::Filter)?)
    } else {
        None
    };
    Ok(Learned {
        allow,
        ttls,
        rates,
        fq_baseline,
        peace_sample,
    })
}

/// Per-second arrival counts over the full span of a trace, silent seconds
/// included.
fn per_second_qps(records: &[QueryRecord]) -> Vec<f64> {
    if records.is_empty() {
        return Vec::new();
    }
    let lo = records[0].ts.floor() as u64;
    let hi = records[records.len() - 1].ts.floor() as u64;
    let mut bins = vec![0.0; (hi - lo + 1) as usize];
    for r in records {
        bins[(r.ts.floor() as u64 - lo) as usize] += 1.0;
    }
    bins
}

/// Estimate-time drop predicate: what would filter `f` drop right now,
/// given the current rules, identification candidates, wild set, and
/// learned tables.
#[allow(clippy::too_many_arguments)]
fn would_drop(
    f: FilterId,
    view: &QueryView<'_>,
    cur_rules: &[FqRule],
    fqs_set: &HashSet<Ipv4Addr>,
    learned: &Learned,
    wild: &BTreeSet<Ipv4Addr>,
    ar_blocked: &BTreeSet<Ipv4Addr>,
) -> bool {
    match f {
        FilterId::FqT => {
            if cur_rules.is_empty() {
                return false;
            }
            match segments_of(view.qname) {
                Some((t, s, full)) => cur_rules.iter().any(|r| r.matches(t, s, full)),
                None => false,
            }
        }
        FilterId::FqS => fqs_set.contains(&view.src),
        FilterId::Ur => learned
            .allow
            .as_ref()
            .is_some_and(|a| !a.contains(view.src)),
        FilterId::Hc => learned
            .ttls
            .as_ref()
            .and_then(|t| t.ttls.get(&view.src))
            .is_some_and(|set| !set.contains(&view.ttl)),
        FilterId::Wr => wild.contains(&view.src),
        FilterId::Ar => ar_blocked.contains(&view.src),
    }
}

/// Replay a peace trace (learning) followed by an attack trace (defense),
/// producing the full metrics report.
///
/// Tables are stamped as built at the attack trace's first timestamp: the
/// two traces carry independent clocks, and learning is modeled as having
/// finished the instant the monitored window starts.
pub fn replay(
    peace: &[QueryRecord],
    attack: &[QueryRecord],
    config: &ReplayConfig,
) -> Result<MetricsReport, EngineError> {
    config.params.validate()?;
    if peace.is_empty() {
        return Err(EngineError::Config("peace trace has no records".into()));
    }
    if attack.is_empty() {
        return Err(EngineError::Config(
            "attack trace has no records (nothing to replay)".into(),
        ));
    }
    let params = &config.params;
    let avail = config.mode.available();
    let t0 = attack[0].ts.floor() as u64;
    let t_last = attack[attack.len() - 1].ts.floor() as u64;

    let learned = learn(peace, params, t0 as f64, avail)?;
    let mut detector = Detector::new(config.detector.clone());
    let al = detector.prime(&per_second_qps(peace), params.f_acc)?;

    let fq_avail = learned.fq_baseline.is_some();
    let wr_avail = learned.rates.is_some();
    let mut rates = learned.rates.clone();

    // Live state.
    let mut tracker = DeploymentTracker::new();
    let mut pipe_fq_rules: Vec<FqRule> = Vec::new(); // frozen at deploy
    let mut fq_s_blocked: HashSet<Ipv4Addr> = HashSet::new();
    let mut wild: BTreeSet<Ipv4Addr> = BTreeSet::new();
    let mut ar_blocked: BTreeSet<Ipv4Addr> = BTreeSet::new();
    let mut cur_rules: Vec<FqRule> = Vec::new();
    let mut trailing = RecentWindow::new(params.l_fq);
    let max_window = params.windows.iter().copied().max().unwrap_or(1);
    let mut wr_counts = TrailingCounts::new(max_window);

    // Measurement state.
    let mut timeline: Vec<TimelineRow> = Vec::with_capacity((t_last - t0 + 1) as usize);
    let mut tick_label_counts: Vec<TickLabelCounts> = Vec::with_capacity(timeline.capacity());
    let mut totals = ReportTotals::default();
    let mut drops_by_filter: BTreeMap<String, u64> = BTreeMap::new();
    let mut attack_drops_by_filter: BTreeMap<String, u64> = BTreeMap::new();
    let mut drops_by_source: BTreeMap<Ipv4Addr, u64> = BTreeMap::new();
    let mut deployments: Vec<(u64, Vec<FilterId>)> = Vec::new();
    let mut rules_log = String::new();
    let mut label_span: Option<(u64, u64)> = None;

    let snapshot_rules = |pipeline: &[FilterId],
                          pipe_fq_rules: &[FqRule],
                          fq_s_blocked: &HashSet<Ipv4Addr>,
                          wild: &BTreeSet<Ipv4Addr>,
                          ar_blocked: &BTreeSet<Ipv4Addr>,
                          learned: &Learned| {
        DeploymentRules {
            pipeline: pipeline.to_vec(),
            fq_t: pipe_fq_rules.iter().map(NameRule::from).collect(),
            fq_s: fq_s_blocked.iter().copied().collect(),
            ur_allow: if pipeline.contains(&FilterId::Ur) {
                learned.allow.as_ref().map(|a| a.sources.clone())
            } else {
                None
            },
            hc_ttls: if pipeline.contains(&FilterId::Hc) {
                learned.ttls.as_ref().map(|t| t.ttls.clone())
            } else {
                None
            },
            wr_wild: wild.clone(),
            ar_blocked: ar_blocked.clone(),
        }
    };

    let mut idx = 0usize;
    for tick in t0..=t_last {
        // ---- process this tick's records against the live snapshot ----
        let start = idx;
        while idx < attack.len() && (attack[idx].ts.floor() as u64) == tick {
            idx += 1;
        }
        let tick_records = &attack[start..idx];
        let pipeline_during_tick = tracker.pipeline().to_vec();

        let mut incoming = 0u64;
        let mut passed = 0u64;
        let mut blocked = 0u64;
        let mut bps = 0.0f64;
        let mut labels = TickLabelCounts {
            ts: tick,
            ..TickLabelCounts::default()
        };
        let mut tick_drops: BTreeMap<FilterId, f64> = BTreeMap::new();
        let mut wr_active: HashSet<Ipv4Addr> = HashSet::new();

        for rec in tick_records {
            let view = rec.view();
            let now = rec.ts;
            let mut verdict = Verdict::Pass;
            for &f in &pipeline_during_tick {
                let v = match f {
                    FilterId::FqT => fq_verdict_t(&pipe_fq_rules, &view, params.fq_rule_cap)?,
                    FilterId::FqS => fq_verdict_s(&fq_s_blocked, &view),
                    FilterId::Ur => {
                        ur_verdict(learned.allow.as_ref().unwrap(), &view, params.u_ur, now)?
                    }
                    FilterId::Hc => {
                        hc_verdict(learned.ttls.as_ref().unwrap(), &view, params.u_hc, now)?
                    }
                    FilterId::Wr => wr_verdict(
                        rates.as_ref().unwrap(),
                        &wild,
                        &view,
                        params.u_wr,
                        now,
                    )?,
                    FilterId::Ar => ar_verdict(&ar_blocked, &view),
                };
                if v.is_drop() {
                    verdict = v;
                    break;
                }
            }

            incoming += 1;
            bps += rec.size as f64;
            match rec.label {
                Some(Label::Attack) => {
                    labels.attack += 1;
                    label_span = Some(match label_span {
                        None => (tick, tick),
                        Some((lo, _)) => (lo, tick),
                    });
                }
                Some(Label::Legit) => labels.legit += 1,
                None => {}
            }
            match verdict {
                Verdict::Pass => passed += 1,
                Verdict::Drop(f) => {
                    blocked += 1;
                    *drops_by_filter.entry(f.token().to_string()).or_default() += 1;
                    *tick_drops.entry(f).or_default() += 1.0;
                    *drops_by_source.entry(rec.src).or_default() += 1;
                    match rec.label {
                        Some(Label::Attack) => {
                            *attack_drops_by_filter
                                .entry(f.token().to_string())
                                .or_default() += 1;
                        }
                        Some(Label::Legit) => totals.legit_blocked += 1,
                        None => {}
                    }
                }
            }

            trailing.push(rec.clone());
            if wr_avail && rates.as_ref().unwrap().is_modeled(rec.src) {
                wr_counts.observe(rec.src, tick);
                wr_active.insert(rec.src);
            }
        }

        totals.offered += incoming;
        totals.passed += passed;
        totals.blocked += blocked;
        totals.attack_records += labels.attack;
        debug_assert_eq!(passed + blocked, incoming, "tick conservation");

        // ---- end-of-tick bookkeeping ----
        let mut events: Vec<String> = Vec::new();

        // Rate-deviance scoring over sources active now or carrying state.
        if wr_avail {
            let table = rates.as_mut().unwrap();
            let mut to_score: Vec<Ipv4Addr> = wr_active.iter().copied().collect();
            to_score.extend(table.deviance.keys().copied());
            to_score.sort_unstable();
            to_score.dedup();
            for src in to_score {
                let counts = wr_counts.counts(src, &table.windows, tick);
                wr_score(table, src, &counts, tick as f64)?;
            }
            let stale: Vec<Ipv4Addr> = table
                .deviance
                .iter()
                .filter(|(src, st)| st.d <= 0.0 && !wr_active.contains(src))
                .map(|(src, _)| *src)
                .collect();
            for src in stale {
                table.deviance.remove(&src);
            }
            wild = wr_wild_set(table, params.t_wr);
            wr_counts.prune(tick);
        }

        // Query-name rule detection against the frozen peace baseline.
        let mut cur_sample: Vec<QueryRecord> = Vec::new();
        if fq_avail {
            cur_sample = trailing.iter().cloned().collect();
            cur_rules = if cur_sample.is_empty() {
                Vec::new()
            } else {
                fq_detect(
                    learned.fq_baseline.as_ref().unwrap(),
                    &fq_learn(&cur_sample)?,
                    params.f_fq,
                )
            };
            // While source blocking is deployed, keep folding newly
            // identified senders of flagged names into the block set.
            if tracker.pipeline().contains(&FilterId::FqS) && !cur_rules.is_empty() {
                fq_s_blocked.extend(fq_identify_sources(
                    &cur_rules,
                    &cur_sample,
                    params.fq_s_match_fraction,
                ));
            }
        }

        let sample = LoadSample {
            ts: tick,
            incoming_qps: incoming as f64,
            passed_qps: passed as f64,
            blocked_qps: blocked as f64,
            incoming_bps: bps,
        };
        match detector.step(&sample)? {
            Some(DetectorEvent::AttackStart) => events.push("attack_start".to_string()),
            Some(DetectorEvent::AttackEnd) => {
                events.push("attack_end".to_string());
                tracker.clear();
                pipe_fq_rules.clear();
                fq_s_blocked.clear();
                ar_blocked.clear();
            }
            None => {}
        }

        // ---- selection ----
        if detector.is_attack() {
            let cl = incoming as f64;
            if config.mode == Mode::Ar {
                let mut src_rates: BTreeMap<Ipv4Addr, f64> = BTreeMap::new();
                for rec in tick_records {
                    *src_rates.entry(rec.src).or_default() += 1.0;
                }
                ar_blocked = ar_select(&src_rates, cl, al).into_iter().collect();
                if !tracker.is_deployed() {
                    tracker.set_pipeline(vec![FilterId::Ar], tick);
                    events.push("deploy:ar".to_string());
                    deployments.push((tick, vec![FilterId::Ar]));
                }
            } else {
                let mut do_select = !tracker.is_deployed();
                if tracker.is_deployed() {
                    match tracker.reevaluate(
                        passed as f64,
                        cl,
                        al,
                        &tick_drops,
                        &config.selector,
                    ) {
                        Reassessment::Keep => {}
                        Reassessment::Reselect => do_select = true,
                        Reassessment::Retire(retirees) => {
                            let new_pipe: Vec<FilterId> = tracker
                                .pipeline()
                                .iter()
                                .copied()
                                .filter(|f| !retirees.contains(f))
                                .collect();
                            for f in &retirees {
                                events.push(format!("retire:{}", f.token()));
                                match f {
                                    FilterId::FqT => pipe_fq_rules.clear(),
                                    FilterId::FqS => fq_s_blocked.clear(),
                                    _ => {}
                                }
                            }
                            tracker.set_pipeline(new_pipe, tick);
                        }
                    }
                }
                if do_select {
                    let fqs_cand: HashSet<Ipv4Addr> = if fq_avail && !cur_rules.is_empty() {
                        let mut set = fq_identify_sources(
                            &cur_rules,
                            &cur_sample,
                            params.fq_s_match_fraction,
                        );
                        set.extend(fq_s_blocked.iter().copied());
                        set
                    } else {
                        fq_s_blocked.clone()
                    };

                    let evals: Vec<CandidateEvaluation> = avail
                        .iter()
                        .map(|&f| {
                            let est = crate::filters::estimate(
                                |view| {
                                    would_drop(
                                        f, view, &cur_rules, &fqs_cand, &learned, &wild,
                                        &ar_blocked,
                                    )
                                },
                                tick_records,
                                &learned.peace_sample,
                            );
                            let deployable = match f {
                                FilterId::FqT => {
                                    !cur_rules.is_empty()
                                        && cur_rules.len() <= params.fq_rule_cap
                                }
                                FilterId::FqS => !fqs_cand.is_empty(),
                                _ => true,
                            };
                            CandidateEvaluation {
                                filter: f,
                                drop_frac: est.drop_frac,
                                drop_qps: est.drop_frac * cl,
                                cd_frac: est.cd_frac,
                                deployable,
                            }
                        })
                        .collect();

                    let eval_combo = |pipe: &[FilterId]| -> PipelineEval {
                        let mut member_drops = vec![0u64; pipe.len()];
                        for rec in tick_records {
                            let view = rec.view();
                            for (i, &f) in pipe.iter().enumerate() {
                                if would_drop(
                                    f, &view, &cur_rules, &fqs_cand, &learned, &wild,
                                    &ar_blocked,
                                ) {
                                    member_drops[i] += 1;
                                    break;
                                }
                            }
                        }
                        let cd_hits = learned
                            .peace_sample
                            .iter()
                            .filter(|rec| {
                                let view = rec.view();
                                pipe.iter().any(|&f| {
                                    would_drop(
                                        f, &view, &cur_rules, &fqs_cand, &learned, &wild,
                                        &ar_blocked,
                                    )
                                })
                            })
                            .count();
                        let att_n = tick_records.len().max(1) as f64;
                        let member_drop_qps: Vec<f64> = member_drops
                            .iter()
                            .map(|&c| c as f64 / att_n * cl)
                            .collect();
                        let total = member_drop_qps.iter().sum();
                        PipelineEval {
                            pipeline: pipe.to_vec(),
                            member_drop_qps,
                            total_drop_qps: total,
                            total_cd_frac: cd_hits as f64
                                / learned.peace_sample.len().max(1) as f64,
                        }
                    };

                    if let Some(sel) = select(&evals, eval_combo, cl, al, &config.selector) {
                        if sel.pipeline != tracker.pipeline() {
                            if sel.pipeline.contains(&FilterId::FqT) {
                                pipe_fq_rules = cur_rules.clone();
                            } else {
                                pipe_fq_rules.clear();
                            }
                            if sel.pipeline.contains(&FilterId::FqS) {
                                fq_s_blocked = fqs_cand;
                            } else {
                                fq_s_blocked.clear();
                            }
                            tracker.set_pipeline(sel.pipeline.clone(), tick);
                            events.push(format!(
                                "deploy:{}",
                                pipeline_tokens(&sel.pipeline)
                            ));
                            deployments.push((tick, sel.pipeline.clone()));
                            let snap = snapshot_rules(
                                &sel.pipeline,
                                &pipe_fq_rules,
                                &fq_s_blocked,
                                &wild,
                                &ar_blocked,
                                &learned,
                            );
                            rules_log.push_str(&format!("# ts={tick}\n"));
                            rules_log.push_str(&snap.render_neutral());
                        }
                    }
                }
            }
        }

        timeline.push(TimelineRow {
            ts: tick,
            incoming_qps: incoming,
            passed_qps: passed,
            blocked_qps: blocked,
            al,
            attack_flag: detector.is_attack(),
            pipeline: pipeline_during_tick,
            events,
        });
        tick_label_counts.push(labels);
    }

    // ---- scoring ----
    let span = label_span.or_else(|| {
        detector
            .attack_started_at()
            .map(|s| (s, detector.attack_ended_at().unwrap_or(t_last)))
    });

    let mut controlled_ticks = 0u64;
    let mut span_ticks = 0u64;
    let mut selection_delay = None;
    if let Some((lo, hi)) = span {
        for row in &timeline {
            if row.ts >= lo && row.ts <= hi {
                span_ticks += 1;
                if (row.passed_qps as f64) <= al {
                    controlled_ticks += 1;
                    if selection_delay.is_none() {
                        selection_delay = Some(row.ts - lo);
                    }
                }
            }
        }
        for lc in &tick_label_counts {
            if lc.ts >= lo && lc.ts <= hi {
                totals.legit_in_span += lc.legit;
            }
        }
    }
    let controlled_load_pct = if span_ticks > 0 {
        100.0 * controlled_ticks as f64 / span_ticks as f64
    } else {
        100.0
    };
    let collateral_damage_pct = if totals.legit_in_span > 0 {
        100.0 * totals.legit_blocked as f64 / totals.legit_in_span as f64
    } else {
        0.0
    };

    // No-defense baseline: a server truncated at AL answers a uniformly
    // random AL-sized subset of each overloaded second.
    let mut ulq_dropped = 0u64;
    if let Some((lo, hi)) = span {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x0ddb_a11a_5ce0_7e11);
        for (row, lc) in timeline.iter().zip(&tick_label_counts) {
            if row.ts < lo || row.ts > hi {
                continue;
            }
            let offered = row.incoming_qps as f64;
            if offered > al {
                let p_drop = 1.0 - al / offered;
                for _ in 0..lc.legit {
                    if rng.gen::<f64>() < p_drop {
                        ulq_dropped += 1;
                    }
                }
            }
        }
    }
    let unanswered_legit_baseline_pct = if totals.legit_in_span > 0 {
        100.0 * ulq_dropped as f64 / totals.legit_in_span as f64
    } else {
        0.0
    };

    Ok(MetricsReport {
        mode: config.mode,
        seed: config.seed,
        al,
        attack_detected_at: detector.attack_started_at(),
        attack_ended_at: detector.attack_ended_at(),
        span_start: span.map(|(lo, _)| lo),
        span_end: span.map(|(_, hi)| hi),
        controlled_load_pct,
        collateral_damage_pct,
        selection_delay_s: selection_delay,
        drops_by_filter,
        attack_drops_by_filter,
        unanswered_legit_baseline_pct,
        totals,
        timeline,
        deployments,
        rules_log,
        drops_by_source,
        tick_label_counts,
    })
}
