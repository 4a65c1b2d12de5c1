//! One agent's round: filter, weight update, mixing, zeroth-order estimate and
//! projected descent.
//!
//! The round is split in two because out-degrees are only known once every
//! receiver has filtered. [`filter_phase`] runs before the degree exchange and
//! [`mix_and_descend`] after it. [`agent_round`] chains both for callers that
//! already hold the degrees.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::{deterministic_difference, FeasibleSet, LossSpec, OracleError, QueryRegion};
use crate::protocol::{
    accept_all, mix_row, resilient_filter, safety_threshold, update_weight, weighted_average, FilterResult, MixRow,
    ProtocolError, RoundInbox, SafeInterval, WeightInput,
};
use crate::AgentId;

#[derive(Clone, Debug, PartialEq)]
pub struct AgentState {
    pub id: AgentId,
    pub x: Vec<f64>,
    pub z: f64,
}

impl AgentState {
    /// Initial state with `z_0 = 1/n`.
    pub fn initial(id: AgentId, x: Vec<f64>, n: usize) -> Self {
        Self { id, x, z: 1.0 / n as f64 }
    }
}

/// Step size `α_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum StepSchedule {
    /// `a / t`
    InverseT { a: f64 },
    /// `1 / (σ n t)`
    Theorem2 { sigma: f64, n: usize },
    Constant { alpha: f64 },
}

impl StepSchedule {
    pub fn validate(&self) -> Result<(), String> {
        let ok = match self {
            StepSchedule::InverseT { a } => *a > 0.0 && a.is_finite(),
            StepSchedule::Theorem2 { sigma, n } => *sigma > 0.0 && sigma.is_finite() && *n >= 1,
            StepSchedule::Constant { alpha } => *alpha > 0.0 && alpha.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(format!("step schedule {self:?} must be positive and finite"))
        }
    }

    /// `α_t` for `t >= 1`; round 0 is treated as round 1.
    pub fn at(&self, t: u64) -> f64 {
        let t = t.max(1) as f64;
        match self {
            StepSchedule::InverseT { a } => a / t,
            StepSchedule::Theorem2 { sigma, n } => 1.0 / (sigma * *n as f64 * t),
            StepSchedule::Constant { alpha } => *alpha,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Threshold,
    DegreeIntake,
    WeightUpdate,
    Mixing,
    Average,
    Difference,
    Descent,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Threshold => "safety threshold",
            Phase::DegreeIntake => "out-degree intake",
            Phase::WeightUpdate => "weight update",
            Phase::Mixing => "mixing",
            Phase::Average => "weighted average",
            Phase::Difference => "deterministic difference",
            Phase::Descent => "descent",
        })
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PhaseFailure {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("no out-degree announced by accepted sender {0}")]
    MissingDegree(AgentId),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("{0} must be positive")]
    NonPositive(&'static str),
}

#[derive(Debug, Error, PartialEq)]
#[error("agent {agent}: {phase} phase failed: {source}")]
pub struct AgentError {
    pub agent: AgentId,
    pub phase: Phase,
    #[source]
    pub source: PhaseFailure,
}

fn fail(agent: AgentId, phase: Phase) -> impl FnOnce(PhaseFailure) -> AgentError {
    move |source| AgentError { agent, phase, source }
}

/// `P_X(y − α h / z_next)`.
pub fn descent_step(y: &[f64], h: &[f64], z_next: f64, alpha: f64, set: &FeasibleSet) -> Result<Vec<f64>, PhaseFailure> {
    if !(z_next > 0.0) {
        return Err(PhaseFailure::NonPositive("z_next"));
    }
    if !(alpha > 0.0) {
        return Err(PhaseFailure::NonPositive("alpha"));
    }
    if h.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(PhaseFailure::NonFinite("descent input"));
    }
    let scale = alpha / z_next;
    let v: Vec<f64> = y.iter().zip(h).map(|(yk, hk)| yk - scale * hk).collect();
    Ok(set.project(&v))
}

/// Output of the pre-feedback half of the round.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterPhase {
    pub interval: SafeInterval,
    pub filter: FilterResult,
}

/// Safety threshold and resilient filter. With `filter_enabled = false` every
/// received payload is accepted; the interval is still computed for reporting.
pub fn filter_phase(inbox: &RoundInbox, filter_enabled: bool) -> Result<FilterPhase, AgentError> {
    let interval =
        safety_threshold(inbox).map_err(|e| fail(inbox.receiver, Phase::Threshold)(e.into()))?;
    let filter = if filter_enabled { resilient_filter(inbox, &interval) } else { accept_all(inbox) };
    Ok(FilterPhase { interval, filter })
}

/// Per-round inputs for the descent half. `None` means a communication-only
/// warm-up round: no queries, `h = 0` and `x_{t+1} = P_X(y)`.
#[derive(Clone, Copy, Debug)]
pub struct DescentContext<'a> {
    pub t: u64,
    pub alpha: f64,
    pub c: f64,
    pub loss: &'a LossSpec,
    pub region: Option<QueryRegion<'a>>,
}

#[derive(Clone, Copy, Debug)]
pub struct RoundContext<'a> {
    pub set: &'a FeasibleSet,
    pub descent: Option<DescentContext<'a>>,
}

/// Everything one agent computed in one round.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentRound {
    pub agent: AgentId,
    pub interval: SafeInterval,
    pub accepted: BTreeSet<AgentId>,
    pub z_next: f64,
    pub mix: MixRow,
    pub y: Vec<f64>,
    pub h: Vec<f64>,
    pub x_next: Vec<f64>,
    pub queries: usize,
}

/// Weight update, mixing, difference estimate and descent. `degrees` holds the
/// out-degrees announced on the control channel; every accepted sender needs one.
pub fn mix_and_descend(
    state: &AgentState,
    inbox: &RoundInbox,
    phase: &FilterPhase,
    degrees: &BTreeMap<AgentId, usize>,
    ctx: &RoundContext<'_>,
) -> Result<(AgentState, AgentRound), AgentError> {
    let me = state.id;
    let mut inputs = BTreeMap::new();
    let mut xs: BTreeMap<AgentId, &[f64]> = BTreeMap::new();
    for &j in &phase.filter.accepted {
        let payload = inbox
            .entries
            .get(&j)
            .ok_or_else(|| fail(me, Phase::DegreeIntake)(ProtocolError::MissingPayload(j).into()))?;
        let d = *degrees.get(&j).ok_or_else(|| fail(me, Phase::DegreeIntake)(PhaseFailure::MissingDegree(j)))?;
        inputs.insert(j, WeightInput { z: payload.z, d });
        xs.insert(j, payload.x.as_slice());
    }
    let z_next = update_weight(inputs.values()).map_err(|e| fail(me, Phase::WeightUpdate)(e.into()))?;
    let mix = mix_row(&inputs, z_next).map_err(|e| fail(me, Phase::Mixing)(e.into()))?;
    let y = weighted_average(&mix, &xs).map_err(|e| fail(me, Phase::Average)(e.into()))?;

    let (h, x_next, queries) = match &ctx.descent {
        None => (vec![0.0; y.len()], ctx.set.project(&y), 0),
        Some(dc) => {
            let est = deterministic_difference(|p| dc.loss.value(me, dc.t, p), &y, dc.c, dc.region.as_ref())
                .map_err(|e| fail(me, Phase::Difference)(e.into()))?;
            let x_next = descent_step(&y, &est.h, z_next, dc.alpha, ctx.set).map_err(fail(me, Phase::Descent))?;
            (est.h, x_next, est.queries)
        }
    };
    let next = AgentState { id: me, x: x_next.clone(), z: z_next };
    let round = AgentRound {
        agent: me,
        interval: phase.interval.clone(),
        accepted: phase.filter.accepted.clone(),
        z_next,
        mix,
        y,
        h,
        x_next,
        queries,
    };
    Ok((next, round))
}

/// Both halves of the round for one agent.
pub fn agent_round(
    state: &AgentState,
    inbox: &RoundInbox,
    filter_enabled: bool,
    degrees: &BTreeMap<AgentId, usize>,
    ctx: &RoundContext<'_>,
) -> Result<(AgentState, AgentRound), AgentError> {
    let phase = filter_phase(inbox, filter_enabled)?;
    mix_and_descend(state, inbox, &phase, degrees, ctx)
}

/// All agents' work in round `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    pub t: u64,
    pub agents: Vec<AgentRound>,
}

impl RoundRecord {
    pub fn queries(&self) -> usize {
        self.agents.iter().map(|a| a.queries).sum()
    }

    /// `d_t^i` for every agent, recovered from the acceptance sets.
    pub fn out_degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.agents.len()];
        for a in &self.agents {
            for &j in &a.accepted {
                d[j] += 1;
            }
        }
        d
    }
}
