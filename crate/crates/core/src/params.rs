//! Tunable parameters shared by learners, filters, and the selector.
//!
//! Defaults correspond to a large authoritative server observing tens of
//! thousands of queries per second with two-hour learning horizons. Smaller
//! deployments (and the test suites here) scale the horizons down; every
//! value is an explicit knob.

use serde::{Deserialize, Serialize};

fn default_windows() -> Vec<u32> {
    vec![1, 2, 4, 8, 16, 32, 64, 128, 256]
}

/// All filter and learner tunables. See field docs for units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterParams {
    /// Frequent-name learning sample: number of most recent queries
    /// summarized into a frequency table.
    pub l_fq: usize,
    /// Minimum absolute frequency increase (current − baseline share) for a
    /// name segment to be flagged.
    pub f_fq: f64,
    /// Fraction of a source's sampled queries that must match a flagged
    /// segment before the source itself is blocked (source-block variant).
    pub fq_s_match_fraction: f64,
    /// Most name-match rules the gateway can afford to install.
    pub fq_rule_cap: usize,
    /// Allow-list learning period, seconds.
    pub l_ur: f64,
    /// Allow-list use period, seconds; older tables are rejected.
    pub u_ur: f64,
    /// TTL-table learning period, seconds.
    pub l_hc: f64,
    /// TTL-table use period, seconds.
    pub u_hc: f64,
    /// Rate-model learning period, seconds.
    pub l_wr: f64,
    /// Rate-model use period, seconds.
    pub u_wr: f64,
    /// How often rate models are refreshed, seconds.
    pub wr_refresh: f64,
    /// Trailing window lengths (seconds) used by the per-source rate model.
    /// Must be strictly increasing.
    #[serde(default = "default_windows")]
    pub windows: Vec<u32>,
    /// Deviance threshold above which a source is considered wild.
    pub t_wr: f64,
    /// Acceptable-load factor: AL = peace-time mean qps × `f_acc`.
    pub f_acc: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams {
            l_fq: 10_000,
            f_fq: 0.3,
            fq_s_match_fraction: 0.5,
            fq_rule_cap: 5,
            l_ur: 7_200.0,
            u_ur: 7_200.0,
            l_hc: 7_200.0,
            u_hc: 7_200.0,
            l_wr: 7_200.0,
            u_wr: 7_200.0,
            wr_refresh: 1_200.0,
            windows: default_windows(),
            t_wr: 0.5,
            f_acc: 2.5,
        }
    }
}

/// Parameter validation failure.
#[derive(Debug, thiserror::Error)]
#[error("invalid parameter: {0}")]
pub struct ParamError(pub String);

impl FilterParams {
    /// Check every invariant the engine relies on.
    pub fn validate(&self) -> Result<(), ParamError> {
        if self.l_fq == 0 {
            return Err(ParamError("l_fq must be positive".into()));
        }
        if self.f_fq <= 0.0 {
            return Err(ParamError("f_fq must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.fq_s_match_fraction) || self.fq_s_match_fraction <= 0.0 {
            return Err(ParamError("fq_s_match_fraction must be in (0, 1]".into()));
        }
        if self.fq_rule_cap < 1 {
            return Err(ParamError("fq_rule_cap must be at least 1".into()));
        }
        for (name, v) in [
            ("l_ur", self.l_ur),
            ("u_ur", self.u_ur),
            ("l_hc", self.l_hc),
            ("u_hc", self.u_hc),
            ("l_wr", self.l_wr),
            ("u_wr", self.u_wr),
            ("wr_refresh", self.wr_refresh),
        ] {
            if !(v > 0.0) {
                return Err(ParamError(format!("{name} must be positive")));
            }
        }
        if self.windows.is_empty() {
            return Err(ParamError("windows must be non-empty".into()));
        }
        if self.windows.windows(2).any(|p| p[0] >= p[1]) {
            return Err(ParamError("windows must be strictly increasing".into()));
        }
        if self.windows[0] == 0 {
            return Err(ParamError("windows must be positive".into()));
        }
        if !(self.t_wr > 0.0) {
            return Err(ParamError("t_wr must be positive".into()));
        }
        if !(self.f_acc > 1.0) {
            return Err(ParamError("f_acc must exceed 1".into()));
        }
        Ok(())
    }
}
