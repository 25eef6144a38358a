//! Filter selection: which filter (or ordered pipeline of filters) to
//! deploy against the current attack.
//!
//! Every selection tick the engine emulates each filter on fresh traffic
//! samples; this module turns those measurements into a deployment. A
//! single filter that brings projected load under the acceptable level
//! wins on lowest collateral damage. When no single filter suffices,
//! ordered combinations are tried, cheapest collateral first; if even the
//! best combination falls short, the one that drops the most is deployed
//! anyway. Deployments are re-examined continuously: a pipeline that stops
//! controlling load triggers re-selection within a few seconds, and a
//! member that stops contributing is retired.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::filters::FilterId;

/// Collateral-damage fractions are compared at this resolution: estimates
/// from finite samples are noisy, and a hair-thin cd difference must not
/// override the deterministic preference order.
pub const CD_QUANTUM: f64 = 1e-4;
/// Drop fractions are compared at this (coarser) resolution.
pub const DROP_QUANTUM: f64 = 1e-2;

fn q_cd(frac: f64) -> i64 {
    (frac / CD_QUANTUM).round() as i64
}

fn q_drop(frac: f64) -> i64 {
    (frac / DROP_QUANTUM).round() as i64
}

/// Selection behavior knobs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectorConfig {
    /// A filter is effective when its marginal drop is at least this
    /// fraction of the excess load (CL − AL).
    pub effectiveness_frac: f64,
    /// Consecutive ticks of passed > AL before re-selecting.
    pub reselect_streak: u32,
    /// A deployed filter dropping less than this fraction of incoming...
    pub retire_drop_frac: f64,
    /// ...for this many consecutive seconds is retired.
    pub retire_streak: u32,
    /// When true, the TTL and rate filters may only run behind the
    /// allow-list filter, never alone.
    pub strict_ordering: bool,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        SelectorConfig {
            effectiveness_frac: 0.05,
            reselect_streak: 3,
            retire_drop_frac: 0.001,
            retire_streak: 30,
            strict_ordering: false,
        }
    }
}

/// Measured effect of one filter, refreshed every selection tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateEvaluation {
    pub filter: FilterId,
    /// Fraction of the attack-period sample the filter drops.
    pub drop_frac: f64,
    /// Projected queries/s removed at the current load.
    pub drop_qps: f64,
    /// Fraction of the peace-period sample the filter drops.
    pub cd_frac: f64,
    /// Whether the filter can actually be installed (e.g. the name filter
    /// is inadmissible once its rule count exceeds the gateway cap).
    pub deployable: bool,
}

/// A candidate filter together with its effectiveness mark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub eval: CandidateEvaluation,
    /// Marginal drop ≥ `effectiveness_frac` × (CL − AL).
    pub effective: bool,
}

/// Keep filters that drop anything; mark the ones dropping a meaningful
/// share of the excess load.
pub fn candidates(
    evals: &[CandidateEvaluation],
    cl: f64,
    al: f64,
    effectiveness_frac: f64,
) -> Vec<Candidate> {
    let needed = effectiveness_frac * (cl - al);
    evals
        .iter()
        .filter(|e| e.drop_qps > 0.0)
        .map(|&eval| Candidate {
            eval,
            effective: eval.drop_qps >= needed,
        })
        .collect()
}

/// Sequential emulation of an ordered pipeline on the current samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineEval {
    pub pipeline: Vec<FilterId>,
    /// Marginal queries/s removed per member, in pipeline order: each
    /// member is measured only on traffic its upstream neighbors passed.
    pub member_drop_qps: Vec<f64>,
    pub total_drop_qps: f64,
    /// Fraction of the peace sample dropped by the pipeline as a whole.
    pub total_cd_frac: f64,
}

/// Every deployable multi-filter pipeline, in canonical order. The name
/// filter leads when present (it is free of collateral), the allow-list
/// filter guards the TTL filter, and both guard the source-block and rate
/// filters; a pipeline carries at most one frequent-name mode.
///
/// Canonical position doubles as the tie-breaker when two pipelines cost
/// the same collateral, which deliberately prefers the source-block tail
/// over the rate tail: blocking identified senders beats behavioral
/// scoring when both would do.
pub const COMBO_GRAMMAR: [&[FilterId]; 7] = [
    &[FilterId::FqT, FilterId::Ur],
    &[FilterId::Ur, FilterId::Hc],
    &[FilterId::FqT, FilterId::Ur, FilterId::Hc],
    &[FilterId::Ur, FilterId::Hc, FilterId::FqS],
    &[FilterId::Ur, FilterId::Hc, FilterId::Wr],
    &[FilterId::Ur, FilterId::Hc, FilterId::FqS, FilterId::Wr],
    &[FilterId::FqT, FilterId::Ur, FilterId::Hc, FilterId::Wr],
];

/// Whether a pipeline respects the deployment-order constraints.
pub fn pipeline_is_valid(pipeline: &[FilterId], strict_ordering: bool) -> bool {
    if pipeline.is_empty() || pipeline.contains(&FilterId::Ar) {
        return false;
    }
    let pos = |f: FilterId| pipeline.iter().position(|&x| x == f);
    let fq_modes =
        pipeline.iter().filter(|&&f| f == FilterId::FqT || f == FilterId::FqS).count();
    if fq_modes > 1 {
        return false;
    }
    if pipeline.len() == 1 {
        return match pipeline[0] {
            FilterId::FqT | FilterId::Ur => true,
            FilterId::Hc | FilterId::Wr => !strict_ordering,
            _ => false, // FQ_s needs upstream source hygiene, AR is excluded
        };
    }
    // Multi-filter pipelines: UR before HC, both before FQ_s/WR.
    let ur = pos(FilterId::Ur);
    let hc = pos(FilterId::Hc);
    if let Some(h) = hc {
        match ur {
            Some(u) if u < h => {}
            _ => return false,
        }
    }
    for tail in [FilterId::FqS, FilterId::Wr] {
        if let Some(t) = pos(tail) {
            match (ur, hc) {
                (Some(u), Some(h)) if u < t && h < t => {}
                _ => return false,
            }
        }
    }
    if let Some(f) = pos(FilterId::FqT) {
        if f != 0 {
            return false; // the name filter always leads
        }
    }
    true
}

/// A deployment decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub pipeline: Vec<FilterId>,
    pub projected_passed_qps: f64,
    pub total_cd_frac: f64,
    /// True when nothing reached AL and this is the best-effort choice.
    pub fallback: bool,
}

/// Pick what to deploy. `evals` holds one entry per available filter;
/// `eval_combo` measures an ordered pipeline by sequential emulation.
///
/// Returns `None` when the load is already acceptable or no filter drops
/// anything at all.
pub fn select<F>(
    evals: &[CandidateEvaluation],
    mut eval_combo: F,
    cl: f64,
    al: f64,
    config: &SelectorConfig,
) -> Option<Selection>
where
    F: FnMut(&[FilterId]) -> PipelineEval,
{
    if cl <= al {
        return None;
    }
    let cands = candidates(evals, cl, al, config.effectiveness_frac);

    let single_allowed = |f: FilterId| -> bool {
        match f {
            FilterId::FqT | FilterId::Ur => true,
            FilterId::Hc | FilterId::Wr => !config.strict_ordering,
            _ => false,
        }
    };
    let singles: Vec<&Candidate> = cands
        .iter()
        .filter(|c| c.eval.deployable && single_allowed(c.eval.filter))
        .collect();

    // 1. A single filter that reaches AL, cheapest collateral first.
    let feasible_single = singles
        .iter()
        .filter(|c| cl - c.eval.drop_qps <= al)
        .min_by_key(|c| (q_cd(c.eval.cd_frac), -q_drop(c.eval.drop_frac), c.eval.filter));
    if let Some(c) = feasible_single {
        return Some(Selection {
            pipeline: vec![c.eval.filter],
            projected_passed_qps: cl - c.eval.drop_qps,
            total_cd_frac: c.eval.cd_frac,
            fallback: false,
        });
    }

    // 2. Pipelines. A member must be deployable, and must be effective
    //    unless it is an upstream guard (UR/HC) shielding an effective
    //    FQ_s/WR/HC further down — those run for ordering, not for drops.
    let needed = config.effectiveness_frac * (cl - al);
    let available = |f: FilterId| evals.iter().any(|e| e.filter == f && e.deployable);
    let mut valid: Vec<PipelineEval> = Vec::new();
    for combo in COMBO_GRAMMAR {
        if !combo.iter().all(|&f| available(f)) {
            continue;
        }
        let eval = eval_combo(combo);
        debug_assert_eq!(eval.pipeline, combo);
        debug_assert_eq!(eval.member_drop_qps.len(), combo.len());
        let ok = combo.iter().enumerate().all(|(i, &f)| {
            if eval.member_drop_qps[i] >= needed {
                return true;
            }
            let guards_effective_member = matches!(f, FilterId::Ur | FilterId::Hc)
                && combo[i + 1..].iter().enumerate().any(|(j, &down)| {
                    matches!(down, FilterId::Hc | FilterId::FqS | FilterId::Wr)
                        && eval.member_drop_qps[i + 1 + j] >= needed
                });
            guards_effective_member
        });
        if ok {
            valid.push(eval);
        }
    }

    let mut by_cd: Vec<&PipelineEval> = valid.iter().collect();
    by_cd.sort_by_key(|e| q_cd(e.total_cd_frac)); // stable: grammar order breaks ties
    if let Some(e) = by_cd.iter().find(|e| cl - e.total_drop_qps <= al) {
        return Some(Selection {
            pipeline: e.pipeline.clone(),
            projected_passed_qps: cl - e.total_drop_qps,
            total_cd_frac: e.total_cd_frac,
            fallback: false,
        });
    }

    // 3. Nothing reaches AL: best effort. Prefer the hardest-dropping
    //    pipeline (a pipeline always drops at least as much as any of its
    //    members alone); fall back to the hardest-dropping single filter.
    let best_combo = valid.iter().fold(None::<&PipelineEval>, |best, e| match best {
        Some(b) if q_drop(e.total_drop_qps / cl) <= q_drop(b.total_drop_qps / cl) => Some(b),
        _ => Some(e),
    });
    if let Some(e) = best_combo {
        return Some(Selection {
            pipeline: e.pipeline.clone(),
            projected_passed_qps: cl - e.total_drop_qps,
            total_cd_frac: e.total_cd_frac,
            fallback: true,
        });
    }
    let best_single = singles.iter().fold(None::<&&Candidate>, |best, c| match best {
        Some(b)
            if (
                q_drop(b.eval.drop_frac),
                -q_cd(b.eval.cd_frac),
                std::cmp::Reverse(b.eval.filter),
            ) >= (
                q_drop(c.eval.drop_frac),
                -q_cd(c.eval.cd_frac),
                std::cmp::Reverse(c.eval.filter),
            ) =>
        {
            Some(b)
        }
        _ => Some(c),
    });
    best_single.map(|c| Selection {
        pipeline: vec![c.eval.filter],
        projected_passed_qps: cl - c.eval.drop_qps,
        total_cd_frac: c.eval.cd_frac,
        fallback: true,
    })
}

/// What to do with the current deployment this tick.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reassessment {
    Keep,
    /// Load is no longer controlled; run selection again.
    Reselect,
    /// These members stopped contributing; remove them.
    Retire(Vec<FilterId>),
}

/// Streak bookkeeping for the deployed pipeline.
#[derive(Debug, Clone, Default)]
pub struct DeploymentTracker {
    pipeline: Vec<FilterId>,
    deployed_at: Option<u64>,
    uncontrolled_run: u32,
    low_drop_runs: BTreeMap<FilterId, u32>,
}

impl DeploymentTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pipeline(&self) -> &[FilterId] {
        &self.pipeline
    }

    pub fn is_deployed(&self) -> bool {
        !self.pipeline.is_empty()
    }

    pub fn deployed_at(&self) -> Option<u64> {
        self.deployed_at
    }

    /// Install a new pipeline (deploy, reselect, or post-retirement
    /// shrink). All streaks restart.
    pub fn set_pipeline(&mut self, pipeline: Vec<FilterId>, ts: u64) {
        self.pipeline = pipeline;
        self.deployed_at = Some(ts);
        self.uncontrolled_run = 0;
        self.low_drop_runs.clear();
    }

    /// Tear everything down (attack over).
    pub fn clear(&mut self) {
        self.pipeline.clear();
        self.deployed_at = None;
        self.uncontrolled_run = 0;
        self.low_drop_runs.clear();
    }

    /// One tick of deployed-pipeline health checking.
    ///
    /// `member_drop_qps` holds this tick's measured drop rate per deployed
    /// member. Re-selection takes priority over retirement: if the load is
    /// out of control the whole pipeline is being reconsidered anyway.
    pub fn reevaluate(
        &mut self,
        passed_qps: f64,
        incoming_qps: f64,
        al: f64,
        member_drop_qps: &BTreeMap<FilterId, f64>,
        config: &SelectorConfig,
    ) -> Reassessment {
        if self.pipeline.is_empty() {
            return Reassessment::Keep;
        }

        if passed_qps > al {
            self.uncontrolled_run += 1;
        } else {
            self.uncontrolled_run = 0;
        }
        if self.uncontrolled_run >= config.reselect_streak {
            self.uncontrolled_run = 0;
            return Reassessment::Reselect;
        }

        let floor = config.retire_drop_frac * incoming_qps;
        for &f in &self.pipeline {
            let drop = member_drop_qps.get(&f).copied().unwrap_or(0.0);
            let run = self.low_drop_runs.entry(f).or_insert(0);
            if drop < floor {
                *run += 1;
            } else {
                *run = 0;
            }
        }
        let retirees: Vec<FilterId> = self
            .pipeline
            .iter()
            .copied()
            .filter(|&f| {
                self.low_drop_runs.get(&f).copied().unwrap_or(0) >= config.retire_streak
                    && self.is_retirable(f)
            })
            .collect();
        if !retirees.is_empty() {
            return Reassessment::Retire(retirees);
        }
        Reassessment::Keep
    }

    /// A guard stays as long as anything it shields is still deployed
    /// behind it, regardless of its own drop rate.
    fn is_retirable(&self, f: FilterId) -> bool {
        let Some(idx) = self.pipeline.iter().position(|&x| x == f) else {
            return false;
        };
        let downstream = &self.pipeline[idx + 1..];
        match f {
            FilterId::Ur => !downstream
                .iter()
                .any(|&d| matches!(d, FilterId::Hc | FilterId::FqS | FilterId::Wr)),
            FilterId::Hc => !downstream
                .iter()
                .any(|&d| matches!(d, FilterId::FqS | FilterId::Wr)),
            _ => true,
        }
    }
}
