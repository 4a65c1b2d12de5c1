//! Resilient filtering and push-sum mixing.
//!
//! One receiver's view of a round:
//!
//! 1. [`safety_threshold`]: coordinatewise min/max over payloads that arrived
//!    on trusted edges (self included).
//! 2. [`resilient_filter`]: keep every sender whose payload lies inside that
//!    box in all coordinates. Comparisons are inclusive.
//! 3. [`out_degree`]: after feedback, each sender learns how many receivers
//!    accepted it.
//! 4. [`update_weight`] / [`mix_row`] / [`weighted_average`]: the push-sum
//!    weight `z_{t+1}[i] = Σ_{j∈S} z_j / d_j` and the row-stochastic mixing
//!    weights `z_j / (z_{t+1}[i] d_j)`.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::linalg::Matrix;
use crate::AgentId;

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("inbox of agent {0} has no trusted payloads")]
    EmptyTrustedSet(AgentId),
    #[error("inbox of agent {0} lacks its own payload")]
    MissingSelf(AgentId),
    #[error("trusted sender {sender} has no payload in the inbox of agent {receiver}")]
    TrustedWithoutPayload { receiver: AgentId, sender: AgentId },
    #[error("payload from {sender} has dimension {found}, expected {expected}")]
    DimensionMismatch { sender: AgentId, expected: usize, found: usize },
    #[error("payload from {0} is not finite or has non-positive weight")]
    InvalidPayload(AgentId),
    #[error("weight update needs at least one accepted sender")]
    NoAcceptedSenders,
    #[error("sender {0} reports out-degree zero")]
    ZeroDegree(AgentId),
    #[error("weight input needs z > 0 and d >= 1, got z={z}, d={d}")]
    InvalidWeightInput { z: f64, d: usize },
    #[error("next weight must be positive, got {0}")]
    NonPositiveWeight(f64),
    #[error("no payload for accepted sender {0}")]
    MissingPayload(AgentId),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Payload {
    pub sender: AgentId,
    pub x: Vec<f64>,
    pub z: f64,
}

impl Payload {
    pub fn is_valid(&self) -> bool {
        self.z > 0.0 && self.z.is_finite() && self.x.iter().all(|v| v.is_finite())
    }
}

/// Everything one receiver got in a round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundInbox {
    pub receiver: AgentId,
    pub entries: BTreeMap<AgentId, Payload>,
    /// Senders whose edge to the receiver is trusted this round.
    pub trusted: BTreeSet<AgentId>,
}

impl RoundInbox {
    pub fn new(
        receiver: AgentId,
        entries: BTreeMap<AgentId, Payload>,
        mut trusted: BTreeSet<AgentId>,
    ) -> Result<Self, ProtocolError> {
        if !entries.contains_key(&receiver) {
            return Err(ProtocolError::MissingSelf(receiver));
        }
        trusted.insert(receiver);
        if let Some(&sender) = trusted.iter().find(|s| !entries.contains_key(s)) {
            return Err(ProtocolError::TrustedWithoutPayload { receiver, sender });
        }
        Ok(Self { receiver, entries, trusted })
    }

    pub fn dim(&self) -> usize {
        self.entries[&self.receiver].x.len()
    }
}

/// The acceptance box `[lo, hi]` of one receiver.
#[derive(Clone, Debug, PartialEq)]
pub struct SafeInterval {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SafeInterval {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.lo.len() && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| l <= v && v <= h)
    }

    /// Membership with slack `tol · max(1, |bound|)` on each side.
    pub fn contains_approx(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.lo.len()
            && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (l, h))| {
                *v >= l - tol * l.abs().max(1.0) && *v <= h + tol * h.abs().max(1.0)
            })
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| l + 0.5 * (h - l)).collect()
    }
}

pub fn safety_threshold(inbox: &RoundInbox) -> Result<SafeInterval, ProtocolError> {
    let mut trusted = inbox.trusted.iter();
    let first = trusted.next().ok_or(ProtocolError::EmptyTrustedSet(inbox.receiver))?;
    let payload = |s: &AgentId| {
        inbox
            .entries
            .get(s)
            .ok_or(ProtocolError::TrustedWithoutPayload { receiver: inbox.receiver, sender: *s })
    };
    let seed = payload(first)?;
    let (mut lo, mut hi) = (seed.x.clone(), seed.x.clone());
    for s in trusted {
        let p = payload(s)?;
        if p.x.len() != lo.len() {
            return Err(ProtocolError::DimensionMismatch { sender: *s, expected: lo.len(), found: p.x.len() });
        }
        for (k, v) in p.x.iter().enumerate() {
            lo[k] = lo[k].min(*v);
            hi[k] = hi[k].max(*v);
        }
    }
    Ok(SafeInterval { lo, hi })
}

/// The accepted senders `S_t^i`; always contains the receiver.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilterResult {
    pub accepted: BTreeSet<AgentId>,
}

pub fn resilient_filter(inbox: &RoundInbox, interval: &SafeInterval) -> FilterResult {
    let accepted = inbox
        .entries
        .iter()
        .filter(|(_, p)| interval.contains(&p.x))
        .map(|(&s, _)| s)
        .collect();
    FilterResult { accepted }
}

/// Ablation baseline: accept every sender.
pub fn accept_all(inbox: &RoundInbox) -> FilterResult {
    FilterResult { accepted: inbox.entries.keys().copied().collect() }
}

/// Inverts per-receiver filter results into `sender → {receivers that accepted it}`.
pub fn acceptance_feedback<'a>(
    results: impl IntoIterator<Item = (AgentId, &'a FilterResult)>,
) -> BTreeMap<AgentId, BTreeSet<AgentId>> {
    let mut feedback: BTreeMap<AgentId, BTreeSet<AgentId>> = BTreeMap::new();
    for (receiver, result) in results {
        for &sender in &result.accepted {
            feedback.entry(sender).or_default().insert(receiver);
        }
    }
    feedback
}

/// `d[i] = |{j : i ∈ S_t^j}|`.
pub fn out_degree(feedback: &BTreeMap<AgentId, BTreeSet<AgentId>>) -> BTreeMap<AgentId, usize> {
    feedback.iter().map(|(&s, accepters)| (s, accepters.len())).collect()
}

/// What a receiver knows about one accepted sender: its weight and out-degree.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightInput {
    pub z: f64,
    pub d: usize,
}

/// `Σ_{j∈S} z_j / d_j`.
pub fn update_weight<'a>(inputs: impl IntoIterator<Item = &'a WeightInput>) -> Result<f64, ProtocolError> {
    let mut any = false;
    let mut total = 0.0;
    for w in inputs {
        if w.d == 0 || !(w.z > 0.0) {
            return Err(ProtocolError::InvalidWeightInput { z: w.z, d: w.d });
        }
        any = true;
        total += w.z / w.d as f64;
    }
    if !any {
        return Err(ProtocolError::NoAcceptedSenders);
    }
    Ok(total)
}

/// One row of the mixing matrix, restricted to accepted senders.
#[derive(Clone, Debug, PartialEq)]
pub struct MixRow {
    pub weights: BTreeMap<AgentId, f64>,
}

impl MixRow {
    pub fn sum(&self) -> f64 {
        self.weights.values().sum()
    }
}

pub fn mix_row(inputs: &BTreeMap<AgentId, WeightInput>, z_next: f64) -> Result<MixRow, ProtocolError> {
    if !(z_next > 0.0) {
        return Err(ProtocolError::NonPositiveWeight(z_next));
    }
    let mut weights = BTreeMap::new();
    for (&j, w) in inputs {
        if w.d == 0 {
            return Err(ProtocolError::ZeroDegree(j));
        }
        weights.insert(j, w.z / (z_next * w.d as f64));
    }
    Ok(MixRow { weights })
}

/// `Σ_j row[j] · x_j`.
pub fn weighted_average(row: &MixRow, payloads: &BTreeMap<AgentId, &[f64]>) -> Result<Vec<f64>, ProtocolError> {
    let mut out: Option<Vec<f64>> = None;
    for (&j, &w) in &row.weights {
        let x = payloads.get(&j).ok_or(ProtocolError::MissingPayload(j))?;
        let acc = out.get_or_insert_with(|| vec![0.0; x.len()]);
        if acc.len() != x.len() {
            return Err(ProtocolError::DimensionMismatch { sender: j, expected: acc.len(), found: x.len() });
        }
        for (a, v) in acc.iter_mut().zip(x.iter()) {
            *a += w * v;
        }
    }
    out.ok_or(ProtocolError::NoAcceptedSenders)
}

/// Places every receiver's row into an `n × n` matrix, zeros elsewhere.
pub fn assemble_matrix<'a>(n: usize, rows: impl IntoIterator<Item = (AgentId, &'a MixRow)>) -> Matrix {
    let mut m = Matrix::zeros(n);
    for (i, row) in rows {
        for (&j, &w) in &row.weights {
            m.set(i, j, w);
        }
    }
    m
}

/// `‖z_nextᵀ Ã − z_prevᵀ‖_∞`.
pub fn duality_gap(mix: &Matrix, z_prev: &[f64], z_next: &[f64]) -> f64 {
    mix.left_mul(z_next).iter().zip(z_prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}
