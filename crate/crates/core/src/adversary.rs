//! Byzantine corruption of payloads travelling on adversarial edges.
//!
//! Senders stay honest. Only the copy of a payload delivered over an edge
//! labelled adversarial in the current snapshot can change, and every such
//! edge draws from its own random stream, so one sender can show different
//! receivers different values.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{EdgeLabel, GraphSchedule, GraphSnapshot};
use crate::protocol::{Payload, ProtocolError, RoundInbox, SafeInterval};
use crate::rng;
use crate::AgentId;

#[derive(Debug, Error, PartialEq)]
pub enum AttackError {
    #[error("{0} needs the victim's safe interval")]
    MissingVictimContext(&'static str),
    #[error("invalid attack strategy: {0}")]
    InvalidStrategy(String),
    #[error("attack plan targets edge ({from}, {to}), which is never adversarial in the schedule")]
    NotAdversarial { from: usize, to: usize },
    #[error("expected {expected} outbox payloads, got {found}")]
    OutboxMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AttackStrategy {
    ReplaceConstant { value: Vec<f64> },
    /// Adds i.i.d. `N(0, scale²)` noise to every coordinate.
    AdditiveNoise { scale: f64 },
    SignFlip,
    Amplify { factor: f64 },
    /// `hi + margin` in every coordinate; always rejected by the filter.
    OutOfRange { margin: f64 },
    /// Midpoint of the victim's interval; always accepted by the filter.
    StealthMidpoint,
}

impl AttackStrategy {
    pub fn validate(&self, dim: usize) -> Result<(), AttackError> {
        let bad = |m: String| Err(AttackError::InvalidStrategy(m));
        match self {
            AttackStrategy::ReplaceConstant { value } if value.len() != dim || value.iter().any(|v| !v.is_finite()) => {
                bad(format!("replace-constant needs a finite vector of length {dim}"))
            }
            AttackStrategy::AdditiveNoise { scale } if !(*scale > 0.0) || !scale.is_finite() => {
                bad("additive-noise scale must be positive".into())
            }
            AttackStrategy::Amplify { factor } if *factor == 0.0 || !factor.is_finite() => {
                bad("amplify factor must be finite and non-zero".into())
            }
            AttackStrategy::OutOfRange { margin } if !(*margin > 0.0) || !margin.is_finite() => {
                bad("out-of-range margin must be positive".into())
            }
            _ => Ok(()),
        }
    }
}

/// Replace the payload's `x` according to `strategy`. Sender and `z` are kept.
pub fn corrupt(
    payload: &Payload,
    strategy: &AttackStrategy,
    victim: Option<&SafeInterval>,
    rng: &mut impl Rng,
) -> Result<Payload, AttackError> {
    let x = match strategy {
        AttackStrategy::ReplaceConstant { value } => value.clone(),
        AttackStrategy::AdditiveNoise { scale } => {
            payload.x.iter().map(|v| v + scale * rng.sample::<f64, _>(StandardNormal)).collect()
        }
        AttackStrategy::SignFlip => payload.x.iter().map(|v| -v).collect(),
        AttackStrategy::Amplify { factor } => payload.x.iter().map(|v| factor * v).collect(),
        AttackStrategy::OutOfRange { margin } => {
            let iv = victim.ok_or(AttackError::MissingVictimContext("out-of-range"))?;
            iv.hi.iter().map(|h| h + margin).collect()
        }
        AttackStrategy::StealthMidpoint => victim.ok_or(AttackError::MissingVictimContext("stealth-midpoint"))?.midpoint(),
    };
    Ok(Payload { sender: payload.sender, x, z: payload.z })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundOverride {
    pub round: u64,
    /// `None` disables attacks for that round.
    pub strategy: Option<AttackStrategy>,
}

/// Edge ids are one-based, as in schedule files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeOverride {
    pub from: usize,
    pub to: usize,
    pub strategy: AttackStrategy,
}

fn default_stream() -> String {
    rng::STREAM_ATTACK.to_string()
}

/// Which strategy hits which adversarial edge in which round.
///
/// Lookup order is edge override, then round override, then the default.
/// Edges not labelled adversarial in the current snapshot are never touched.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackPlan {
    #[serde(default)]
    pub default: Option<AttackStrategy>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rounds: Vec<RoundOverride>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<EdgeOverride>,
    /// Also scale `z` on attacked edges. Breaks weight conservation.
    #[serde(default)]
    pub corrupt_weights: bool,
    #[serde(default = "default_stream")]
    pub stream: String,
}

impl Default for AttackPlan {
    fn default() -> Self {
        Self::none()
    }
}

impl AttackPlan {
    pub fn none() -> Self {
        Self { default: None, rounds: Vec::new(), edges: Vec::new(), corrupt_weights: false, stream: default_stream() }
    }

    pub fn uniform(strategy: AttackStrategy) -> Self {
        Self { default: Some(strategy), ..Self::none() }
    }

    pub fn is_empty(&self) -> bool {
        self.default.is_none() && self.edges.is_empty() && self.rounds.iter().all(|r| r.strategy.is_none())
    }

    pub fn validate(&self, schedule: &GraphSchedule, dim: usize) -> Result<(), AttackError> {
        let strategies = self
            .default
            .iter()
            .chain(self.rounds.iter().filter_map(|r| r.strategy.as_ref()))
            .chain(self.edges.iter().map(|e| &e.strategy));
        for s in strategies {
            s.validate(dim)?;
        }
        for e in &self.edges {
            let hit = e.from >= 1
                && e.to >= 1
                && schedule
                    .snapshots()
                    .iter()
                    .any(|g| g.label(e.from - 1, e.to - 1) == Some(EdgeLabel::Adversarial));
            if !hit {
                return Err(AttackError::NotAdversarial { from: e.from, to: e.to });
            }
        }
        Ok(())
    }

    /// Strategy for zero-based edge `(from, to)` in round `t`, ignoring labels.
    pub fn strategy_for(&self, t: u64, from: AgentId, to: AgentId) -> Option<&AttackStrategy> {
        if let Some(e) = self.edges.iter().find(|e| e.from == from + 1 && e.to == to + 1) {
            return Some(&e.strategy);
        }
        if let Some(r) = self.rounds.iter().find(|r| r.round == t) {
            return r.strategy.as_ref();
        }
        self.default.as_ref()
    }
}

/// Inboxes for one round plus the edges whose payload was altered.
#[derive(Clone, Debug, PartialEq)]
pub struct Delivery {
    pub inboxes: Vec<RoundInbox>,
    pub corrupted: BTreeSet<(AgentId, AgentId)>,
}

/// Deliver `outboxes[j]` (agent `j`'s payload) along every edge of `snapshot`,
/// corrupting copies on adversarial edges covered by `plan`. Edge `(j, i)` in
/// round `t` draws from stream `(seed, plan.stream, t, j·n + i)`.
pub fn apply_attacks(
    outboxes: &[Payload],
    snapshot: &GraphSnapshot,
    plan: &AttackPlan,
    t: u64,
    seed: u64,
) -> Result<Delivery, AttackError> {
    let n = snapshot.n();
    if outboxes.len() != n {
        return Err(AttackError::OutboxMismatch { expected: n, found: outboxes.len() });
    }
    let mut inboxes = Vec::with_capacity(n);
    let mut corrupted = BTreeSet::new();
    for i in 0..n {
        let mut entries = BTreeMap::new();
        let mut trusted = BTreeSet::new();
        for (j, _, label) in snapshot.edges().filter(|&(_, to, _)| to == i) {
            if label == EdgeLabel::Trusted {
                trusted.insert(j);
            }
            entries.insert(j, outboxes[j].clone());
        }
        // Trusted copies are never touched, so the victim's interval can be
        // computed from clean payloads before corruption.
        let victim = interval_of(trusted.iter().map(|j| &outboxes[*j]));
        for (&j, payload) in entries.iter_mut() {
            if snapshot.label(j, i) != Some(EdgeLabel::Adversarial) {
                continue;
            }
            let Some(strategy) = plan.strategy_for(t, j, i) else { continue };
            let mut r = rng::stream(seed, &plan.stream, t, (j * n + i) as u64);
            let mut bad = corrupt(payload, strategy, Some(&victim), &mut r)?;
            if plan.corrupt_weights {
                bad.z *= r.random_range(0.5..2.0);
            }
            *payload = bad;
            corrupted.insert((j, i));
        }
        inboxes.push(RoundInbox::new(i, entries, trusted)?);
    }
    Ok(Delivery { inboxes, corrupted })
}

fn interval_of<'a>(mut payloads: impl Iterator<Item = &'a Payload>) -> SafeInterval {
    let first = payloads.next().expect("self-loop is always trusted");
    let (mut lo, mut hi) = (first.x.clone(), first.x.clone());
    for p in payloads {
        for (k, v) in p.x.iter().enumerate() {
            lo[k] = lo[k].min(*v);
            hi[k] = hi[k].max(*v);
        }
    }
    SafeInterval { lo, hi }
}
