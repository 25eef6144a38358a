//! Wild-source rate filter.
//!
//! Learns each source's normal query rate over several window sizes
//! (per-second up to multi-minute), then scores live behavior against the
//! model with a smoothed deviance. Sources scoring above threshold are
//! "wild" and dropped; sources the model has never seen are passed through.
//!
//! Learning is poisoning-resistant: it runs in two passes, first flagging
//! seconds whose total load is extreme against a robust (median/MAD,
//! Poisson-floored) model of the trace's own noise, then excluding every
//! learning window in which flagged seconds exceed a tenth of the window.
//! An attacker who inflates a victim's learned baseline must do so without
//! ever raising server load meaningfully above normal.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};

use crate::filters::{check_fresh, FilterError, FilterId, Verdict};
use crate::trace::{QueryRecord, QueryView};

/// Deviance is clamped into this range so the 0.5-smoothed recursion stays
/// numerically bounded: one quiet period must be able to walk any score
/// back below threshold in a handful of ticks.
pub const WR_DEVIANCE_MIN: f64 = -10.0;
pub const WR_DEVIANCE_MAX: f64 = 1e6;

/// A learning window is excluded once flagged (outlier-load) seconds exceed
/// this fraction of it.
pub const POISON_EXCLUDE_FRAC: f64 = 0.1;

/// Query-count statistics for one source over one window size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowModel {
    pub mean: f64,
    /// Standard deviation of the window count. Learning floors it at √mean
    /// (the Poisson scale); scoring additionally floors the divisor at 1.0.
    pub std: f64,
}

/// Smoothed deviance state for one source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DevianceState {
    pub d: f64,
    pub updated_at: f64,
}

/// Per-source rate model plus live deviance state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateTable {
    /// Window sizes in seconds, strictly increasing.
    pub windows: Vec<u32>,
    /// One (mean, std) per window size for every modeled source.
    pub stats: BTreeMap<Ipv4Addr, Vec<WindowModel>>,
    /// Smoothed deviance per scored source; absent means 0 so far.
    pub deviance: BTreeMap<Ipv4Addr, DevianceState>,
    pub built_at: f64,
    pub learn_span: f64,
}

impl RateTable {
    pub fn is_modeled(&self, src: Ipv4Addr) -> bool {
        self.stats.contains_key(&src)
    }

    pub fn deviance_of(&self, src: Ipv4Addr) -> f64 {
        self.deviance.get(&src).map(|s| s.d).unwrap_or(0.0)
    }
}

/// Learn per-source rate models from a peace-time span.
///
/// Only windows fully contained in `[span_start, span_end)` count, and of
/// those, only windows free of load-outlier seconds. Sources whose entire
/// activity fell inside excluded windows are left out of the table: traffic
/// observed under abnormal load teaches us nothing trustworthy.
pub fn wr_learn(
    records: &[QueryRecord],
    windows: &[u32],
    span_start: f64,
    span_end: f64,
    built_at: f64,
) -> Result<RateTable, FilterError> {
    if windows.is_empty() || span_end <= span_start {
        return Err(FilterError::EmptyWindow);
    }
    let lo = span_start.floor() as u64;
    let hi = span_end.ceil() as u64;
    if hi <= lo {
        return Err(FilterError::EmptyWindow);
    }

    // Pass 1: per-second load over the whole span, outlier seconds flagged.
    let n_secs = (hi - lo) as usize;
    let mut loads = vec![0u64; n_secs];
    let mut total = 0u64;
    for rec in records {
        if rec.ts < span_start || rec.ts >= span_end {
            continue;
        }
        let sec = rec.ts.floor() as u64;
        if sec >= lo && sec < hi {
            loads[(sec - lo) as usize] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(FilterError::EmptyWindow);
    }
    // Flag genuinely extreme seconds against a robust noise model of the
    // trace itself. The spread gets a Poisson floor — per-second counts
    // fluctuate by at least √rate even when perfectly behaved — so routine
    // jitter is never flagged, while flood seconds (many times the median)
    // always are. Median/MAD keep the gate itself immune to the very
    // contamination it is meant to find.
    let median = {
        let mut sorted = loads.clone();
        sorted.sort_unstable();
        sorted[n_secs / 2] as f64
    };
    let mad = {
        let mut dev: Vec<f64> = loads.iter().map(|&l| (l as f64 - median).abs()).collect();
        dev.sort_by(f64::total_cmp);
        dev[n_secs / 2]
    };
    let spread = (1.4826 * mad).max(median.sqrt()).max(1.0);
    let gate = median + 3.0 * spread;
    let flagged: Vec<bool> = loads.iter().map(|&l| l as f64 > gate).collect();

    // Pass 2: per-source counts over the surviving windows of each size.
    let mut members: BTreeSet<Ipv4Addr> = BTreeSet::new();
    let mut sums: Vec<HashMap<Ipv4Addr, (f64, f64)>> = vec![HashMap::new(); windows.len()];
    let mut n_windows: Vec<f64> = Vec::with_capacity(windows.len());
    for (wi, &w) in windows.iter().enumerate() {
        let w64 = w as u64;
        let k_lo = lo.div_ceil(w64);
        let k_hi = hi / w64; // exclusive: window k is full iff (k+1)*w <= hi
        if k_hi <= k_lo {
            return Err(FilterError::EmptyWindow);
        }
        // A window is dropped only when flagged seconds make up a real
        // share of it: a lone freak second must not void a 256 s window,
        // but an attack phase overlapping it (tens of seconds at least)
        // reliably does.
        let poisoned_windows: BTreeSet<u64> = (k_lo..k_hi)
            .filter(|&k| {
                let bad = (k * w64..(k + 1) * w64)
                    .filter(|&s| flagged[(s - lo) as usize])
                    .count();
                bad as f64 > POISON_EXCLUDE_FRAC * w64 as f64
            })
            .collect();
        let usable = (k_hi - k_lo) as f64 - poisoned_windows.len() as f64;
        if usable <= 0.0 {
            return Err(FilterError::EmptyWindow);
        }
        n_windows.push(usable);

        let mut per_window: HashMap<(Ipv4Addr, u64), u64> = HashMap::new();
        for rec in records {
            if rec.ts < span_start || rec.ts >= span_end {
                continue;
            }
            let sec = rec.ts.floor() as u64;
            let k = sec / w64;
            if k < k_lo || k >= k_hi || poisoned_windows.contains(&k) {
                continue;
            }
            *per_window.entry((rec.src, k)).or_default() += 1;
            if wi == 0 {
                members.insert(rec.src);
            }
        }
        for ((src, _), c) in per_window {
            let entry = sums[wi].entry(src).or_default();
            entry.0 += c as f64;
            entry.1 += (c * c) as f64;
        }
    }

    let stats: BTreeMap<Ipv4Addr, Vec<WindowModel>> = members
        .into_iter()
        .map(|src| {
            let models = windows
                .iter()
                .enumerate()
                .map(|(wi, _)| {
                    let (sum, sumsq) = sums[wi].get(&src).copied().unwrap_or((0.0, 0.0));
                    let mean = sum / n_windows[wi];
                    let var = (sumsq / n_windows[wi] - mean * mean).max(0.0);
                    // Floor the stored spread at the Poisson scale: counts
                    // fluctuate by at least √mean even for a perfectly steady
                    // source, and long windows yield only a handful of
                    // samples (a 10-minute trace holds two complete 256 s
                    // windows), so the raw sample std routinely collapses to
                    // near zero and would flag ordinary jitter as deviant.
                    WindowModel {
                        mean,
                        std: var.sqrt().max(mean.sqrt()),
                    }
                })
                .collect();
            (src, models)
        })
        .collect();

    Ok(RateTable {
        windows: windows.to_vec(),
        stats,
        deviance: BTreeMap::new(),
        built_at,
        learn_span: span_end - span_start,
    })
}

/// Fold one tick's trailing-window counts into a source's smoothed deviance.
///
/// `trailing_counts[i]` is the source's query count over the last
/// `windows[i]` seconds, right-aligned at the current tick. Returns the new
/// deviance; the source is "wild" when it exceeds the configured threshold.
///
/// The std floor applies to both the tolerance band and the divisor:
/// per-window counts are integers, so a source must exceed its mean by more
/// than three whole queries before a window reads as deviant. Flooring only
/// the divisor would let a single query from a near-silent source (mean ≈
/// 0, std ≈ 0 in every window) score as wildly anomalous.
pub fn wr_score(
    table: &mut RateTable,
    src: Ipv4Addr,
    trailing_counts: &[u64],
    now: f64,
) -> Result<f64, FilterError> {
    let stats = table
        .stats
        .get(&src)
        .ok_or(FilterError::UnknownSource(src))?;
    debug_assert_eq!(trailing_counts.len(), stats.len());
    let sum: f64 = stats
        .iter()
        .zip(trailing_counts)
        .map(|(m, &r)| {
            let std = m.std.max(1.0);
            (r as f64 - m.mean - 3.0 * std) / std
        })
        .sum();
    let d_prev = table.deviance_of(src);
    let d = (0.5 * d_prev + 0.5 * sum).clamp(WR_DEVIANCE_MIN, WR_DEVIANCE_MAX);
    table.deviance.insert(
        src,
        DevianceState {
            d,
            updated_at: now,
        },
    );
    Ok(d)
}

/// Sources currently scoring above the wildness threshold.
pub fn wr_wild_set(table: &RateTable, t_wr: f64) -> BTreeSet<Ipv4Addr> {
    table
        .deviance
        .iter()
        .filter(|(_, s)| s.d > t_wr)
        .map(|(&src, _)| src)
        .collect()
}

/// Judge one query: drop wild sources, pass everyone else (including
/// sources the model has never seen).
pub fn wr_verdict(
    table: &RateTable,
    wild: &BTreeSet<Ipv4Addr>,
    view: &QueryView<'_>,
    use_span: f64,
    now: f64,
) -> Result<Verdict, FilterError> {
    check_fresh(FilterId::Wr, table.built_at, use_span, now)?;
    if wild.contains(&view.src) {
        Ok(Verdict::Drop(FilterId::Wr))
    } else {
        Ok(Verdict::Pass)
    }
}

/// Per-source query counts over the trailing seconds, bounded by the
/// largest configured window. Feeds `wr_score` during replay.
#[derive(Debug, Clone, Default)]
pub struct TrailingCounts {
    per_src: HashMap<Ipv4Addr, VecDeque<(u64, u32)>>,
    max_window: u64,
}

impl TrailingCounts {
    pub fn new(max_window: u32) -> Self {
        TrailingCounts {
            per_src: HashMap::new(),
            max_window: max_window as u64,
        }
    }

    /// Count one query from `src` in second `sec`. Seconds must not
    /// decrease across calls for the same source.
    pub fn observe(&mut self, src: Ipv4Addr, sec: u64) {
        let buckets = self.per_src.entry(src).or_default();
        match buckets.back_mut() {
            Some((s, c)) if *s == sec => *c += 1,
            _ => buckets.push_back((sec, 1)),
        }
    }

    /// Trailing counts for each window size, right-aligned at `now_sec`
    /// (the window of size w covers seconds `now_sec − w + 1 ..= now_sec`).
    pub fn counts(&self, src: Ipv4Addr, windows: &[u32], now_sec: u64) -> Vec<u64> {
        let mut out = vec![0u64; windows.len()];
        if let Some(buckets) = self.per_src.get(&src) {
            for &(sec, c) in buckets {
                if sec > now_sec {
                    continue;
                }
                let age = now_sec - sec; // 0 = current second
                for (i, &w) in windows.iter().enumerate() {
                    if age < w as u64 {
                        out[i] += c as u64;
                    }
                }
            }
        }
        out
    }

    /// Drop buckets that no window can reach any more, and sources with
    /// nothing left.
    pub fn prune(&mut self, now_sec: u64) {
        let horizon = now_sec.saturating_sub(self.max_window);
        self.per_src.retain(|_, buckets| {
            while matches!(buckets.front(), Some(&(s, _)) if s < horizon) {
                buckets.pop_front();
            }
            !buckets.is_empty()
        });
    }
}
