//! Attack detection from the per-second load signal.
//!
//! The detector owns the acceptable-load threshold AL, primed as the
//! peace-time average query rate times a safety factor. An attack starts
//! once offered load stays above AL for a short streak, and ends once the
//! filters are dropping almost nothing while the passed load sits under AL
//! for a long streak — brief lulls inside an attack must not end it.

use serde::{Deserialize, Serialize};

/// One second of aggregated load, as seen by the replay engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadSample {
    /// Second index within the replay.
    pub ts: u64,
    /// Queries per second offered to the server.
    pub incoming_qps: f64,
    /// Queries per second surviving the filter pipeline.
    pub passed_qps: f64,
    /// Queries per second dropped by the filter pipeline.
    pub blocked_qps: f64,
    /// Bytes per second offered (reported, not thresholded).
    pub incoming_bps: f64,
}

/// Detection event emitted by [`Detector::step`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorEvent {
    AttackStart,
    AttackEnd,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum DetectorError {
    #[error("cannot prime acceptable load from an empty peace trace")]
    NoBaseline,
    #[error("detector stepped before acceptable load was primed")]
    NotPrimed,
}

/// Streak lengths and the end-of-attack blocked-rate fraction.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Consecutive seconds of incoming > AL before declaring an attack.
    pub start_streak: u32,
    /// Consecutive calm seconds before declaring the attack over.
    pub end_streak: u32,
    /// "Almost nothing blocked": blocked < this fraction of AL.
    pub end_blocked_frac: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            start_streak: 2,
            end_streak: 60,
            end_blocked_frac: 0.05,
        }
    }
}

/// Attack state machine. Feed it one [`LoadSample`] per second.
#[derive(Debug, Clone)]
pub struct Detector {
    config: DetectorConfig,
    al: Option<f64>,
    start_run: u32,
    end_run: u32,
    attack: bool,
    attack_started_at: Option<u64>,
    attack_ended_at: Option<u64>,
}

impl Detector {
    pub fn new(config: DetectorConfig) -> Self {
        Detector {
            config,
            al: None,
            start_run: 0,
            end_run: 0,
            attack: false,
            attack_started_at: None,
            attack_ended_at: None,
        }
    }

    /// Set AL from per-second peace-time query rates: mean × `f_acc`.
    pub fn prime(&mut self, peace_qps: &[f64], f_acc: f64) -> Result<f64, DetectorError> {
        if peace_qps.is_empty() {
            return Err(DetectorError::NoBaseline);
        }
        let mean = peace_qps.iter().sum::<f64>() / peace_qps.len() as f64;
        let al = mean * f_acc;
        self.al = Some(al);
        Ok(al)
    }

    /// Acceptable load, if primed.
    pub fn al(&self) -> Option<f64> {
        self.al
    }

    pub fn is_attack(&self) -> bool {
        self.attack
    }

    pub fn attack_started_at(&self) -> Option<u64> {
        self.attack_started_at
    }

    pub fn attack_ended_at(&self) -> Option<u64> {
        self.attack_ended_at
    }

    /// Advance one second. At most one event per call; start/end alternate.
    pub fn step(&mut self, sample: &LoadSample) -> Result<Option<DetectorEvent>, DetectorError> {
        let al = self.al.ok_or(DetectorError::NotPrimed)?;
        if !self.attack {
            if sample.incoming_qps > al {
                self.start_run += 1;
            } else {
                self.start_run = 0;
            }
            if self.start_run >= self.config.start_streak {
                self.attack = true;
                self.attack_started_at = Some(sample.ts);
                self.start_run = 0;
                self.end_run = 0;
                return Ok(Some(DetectorEvent::AttackStart));
            }
        } else {
            let calm = sample.blocked_qps < self.config.end_blocked_frac * al
                && sample.passed_qps <= al;
            if calm {
                self.end_run += 1;
            } else {
                self.end_run = 0;
            }
            if self.end_run >= self.config.end_streak {
                self.attack = false;
                self.attack_ended_at = Some(sample.ts);
                self.end_run = 0;
                self.start_run = 0;
                return Ok(Some(DetectorEvent::AttackEnd));
            }
        }
        Ok(None)
    }
}
