//! Value-only loss oracles, central differences, projections and exact minimizers.
//!
//! Agents only ever see `f_t^i(x)` at points they choose. The tracking family
//! `ζ₁⟨π_t^i, x⟩ + ζ₂‖x − ξ_t‖²` additionally exposes its gradient and a
//! closed-form minimizer of the global sum, which the metrics use for exact
//! regret. Custom losses are value callables; their minimizers come from a
//! numeric projected-gradient fallback.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{distance, dot, norm, sub};
use crate::rng;
use crate::AgentId;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("query point {point:?} lies outside the admissible region (distance {distance} > {radius})")]
    QueryOutsideRegion { point: Vec<f64>, distance: f64, radius: f64 },
    #[error("difference radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("round {0} is not valid for this loss (rounds start at 1)")]
    InvalidRound(u64),
    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("operation not supported for the {0} loss family")]
    UnsupportedFamily(&'static str),
    #[error("global loss is not strongly convex (sum of quadratic weights is zero)")]
    Degenerate,
    #[error("numeric minimizer did not converge in {0} iterations")]
    NonConvergent(usize),
    #[error("invalid feasible set: {0}")]
    InvalidSet(String),
    #[error("invalid loss parameters: {0}")]
    InvalidLoss(String),
}

/// Compact convex feasible set with a closed-form projection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum FeasibleSet {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl FeasibleSet {
    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        FeasibleSet::Ball { center, radius }
    }

    pub fn cube(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        FeasibleSet::Box { lo, hi }
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        match self {
            FeasibleSet::Ball { center, radius } => {
                if !(*radius > 0.0) || !radius.is_finite() {
                    return Err(OracleError::InvalidSet(format!("radius must be positive, got {radius}")));
                }
                if center.is_empty() || center.iter().any(|v| !v.is_finite()) {
                    return Err(OracleError::InvalidSet("center must be a finite non-empty vector".into()));
                }
            }
            FeasibleSet::Box { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return Err(OracleError::InvalidSet("box bounds must be non-empty and of equal length".into()));
                }
                if lo.iter().zip(hi).any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite()) {
                    return Err(OracleError::InvalidSet("box needs finite lo <= hi in every coordinate".into()));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            FeasibleSet::Ball { center, .. } => center.len(),
            FeasibleSet::Box { lo, .. } => lo.len(),
        }
    }

    /// Euclidean projection: radial shrink for a ball, clamp for a box.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        match self {
            FeasibleSet::Ball { center, radius } => {
                let offset = sub(v, center);
                let dist = norm(&offset);
                if dist <= *radius {
                    v.to_vec()
                } else {
                    let scale = radius / dist;
                    center.iter().zip(&offset).map(|(c, o)| c + scale * o).collect()
                }
            }
            FeasibleSet::Box { lo, hi } => v.iter().zip(lo.iter().zip(hi)).map(|(x, (l, h))| x.clamp(*l, *h)).collect(),
        }
    }

    pub fn distance(&self, v: &[f64]) -> f64 {
        crate::linalg::distance(v, &self.project(v))
    }

    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        self.distance(v) <= tol
    }

    /// `M = sup{‖x‖ : x ∈ X}`.
    pub fn sup_norm(&self) -> f64 {
        match self {
            FeasibleSet::Ball { center, radius } => norm(center) + radius,
            FeasibleSet::Box { lo, hi } => {
                lo.iter().zip(hi).map(|(l, h)| l.abs().max(h.abs()).powi(2)).sum::<f64>().sqrt()
            }
        }
    }

    pub fn sample_uniform(&self, rng: &mut impl Rng) -> Vec<f64> {
        match self {
            FeasibleSet::Ball { center, radius } => {
                let d = center.len();
                let dir: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let len = norm(&dir).max(f64::MIN_POSITIVE);
                let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
                center.iter().zip(&dir).map(|(c, u)| c + r * u / len).collect()
            }
            FeasibleSet::Box { lo, hi } => {
                lo.iter().zip(hi).map(|(l, h)| l + (h - l) * rng.random::<f64>()).collect()
            }
        }
    }
}

/// Points at distance at most `radius` from the feasible set: `X' = X ⊕ B(radius)`.
#[derive(Clone, Copy, Debug)]
pub struct QueryRegion<'a> {
    pub set: &'a FeasibleSet,
    pub radius: f64,
}

impl QueryRegion<'_> {
    pub fn check(&self, point: &[f64]) -> Result<(), OracleError> {
        let distance = self.set.distance(point);
        // rounding slack only
        if distance <= self.radius * (1.0 + 1e-12) + 1e-12 {
            Ok(())
        } else {
            Err(OracleError::QueryOutsideRegion { point: point.to_vec(), distance, radius: self.radius })
        }
    }
}

/// Difference radius `c_t`, positive and decreasing to zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum DifferenceSchedule {
    /// `c / t`
    InverseT { c: f64 },
    /// `c / t^p`
    Power { c: f64, p: f64 },
}

impl DifferenceSchedule {
    pub fn validate(&self) -> Result<(), OracleError> {
        let ok = match self {
            DifferenceSchedule::InverseT { c } => *c > 0.0 && c.is_finite(),
            DifferenceSchedule::Power { c, p } => *c > 0.0 && c.is_finite() && *p > 0.0 && p.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(OracleError::InvalidLoss("difference schedule needs c > 0 and p > 0".into()))
        }
    }

    /// `c_t` for `t >= 1`; round 0 is treated as round 1.
    pub fn at(&self, t: u64) -> f64 {
        let t = t.max(1) as f64;
        match self {
            DifferenceSchedule::InverseT { c } => c / t,
            DifferenceSchedule::Power { c, p } => c / t.powf(*p),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DifferenceEstimate {
    pub h: Vec<f64>,
    pub queries: usize,
}

/// `h[k] = (f(y + c e^k) − f(y − c e^k)) / 2c`, consuming exactly `2d` queries.
/// Every query point is checked against `region` first.
pub fn deterministic_difference(
    mut f: impl FnMut(&[f64]) -> Result<f64, OracleError>,
    y: &[f64],
    c: f64,
    region: Option<&QueryRegion<'_>>,
) -> Result<DifferenceEstimate, OracleError> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(OracleError::NonPositiveRadius(c));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(OracleError::NonFinite("difference base point"));
    }
    let mut h = Vec::with_capacity(y.len());
    let mut queries = 0;
    let mut point = y.to_vec();
    for k in 0..y.len() {
        point[k] = y[k] + c;
        if let Some(r) = region {
            r.check(&point)?;
        }
        let plus = f(&point)?;
        point[k] = y[k] - c;
        if let Some(r) = region {
            r.check(&point)?;
        }
        let minus = f(&point)?;
        point[k] = y[k];
        queries += 2;
        h.push((plus - minus) / (2.0 * c));
    }
    Ok(DifferenceEstimate { h, queries })
}

/// Target path `ξ_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TargetPath {
    /// `ξ_t = (scale / t) · 1`
    InverseT { scale: f64 },
    Fixed { point: Vec<f64> },
}

/// Linear drift coefficients `π_t^i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DriftRule {
    /// i.i.d. uniform over `[0, 1]^d`, per agent and round, from the `drift` stream.
    Uniform01,
    Zero,
    /// One constant vector per agent.
    Fixed { vectors: Vec<Vec<f64>> },
}

/// `f_t^i(x) = ζ_{i,1}⟨π_t^i, x⟩ + ζ_{i,2}‖x − ξ_t‖²`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackingQuadratic {
    pub zeta1: Vec<f64>,
    pub zeta2: Vec<f64>,
    pub target: TargetPath,
    pub drift: DriftRule,
    pub dim: usize,
    pub seed: u64,
}

impl TrackingQuadratic {
    pub fn new(
        zeta1: Vec<f64>,
        zeta2: Vec<f64>,
        target: TargetPath,
        drift: DriftRule,
        dim: usize,
        seed: u64,
    ) -> Result<Self, OracleError> {
        let loss = Self { zeta1, zeta2, target, drift, dim, seed };
        loss.validate()?;
        Ok(loss)
    }

    fn validate(&self) -> Result<(), OracleError> {
        let bad = |m: &str| Err(OracleError::InvalidLoss(m.to_string()));
        if self.dim == 0 {
            return bad("dimension must be positive");
        }
        if self.zeta1.is_empty() || self.zeta1.len() != self.zeta2.len() {
            return bad("zeta1 and zeta2 need one entry per agent");
        }
        if self.zeta1.iter().chain(&self.zeta2).any(|z| !(*z >= 0.0) || !z.is_finite()) {
            return bad("zeta weights must be finite and nonnegative");
        }
        match &self.target {
            TargetPath::InverseT { scale } if !scale.is_finite() => return bad("target scale must be finite"),
            TargetPath::Fixed { point } if point.len() != self.dim || point.iter().any(|v| !v.is_finite()) => {
                return bad("fixed target must be a finite vector of the problem dimension")
            }
            _ => {}
        }
        if let DriftRule::Fixed { vectors } = &self.drift {
            if vectors.len() != self.zeta1.len()
                || vectors.iter().any(|v| v.len() != self.dim || v.iter().any(|x| !x.is_finite()))
            {
                return bad("fixed drift needs one finite vector of the problem dimension per agent");
            }
        }
        Ok(())
    }

    pub fn n_agents(&self) -> usize {
        self.zeta1.len()
    }

    pub fn target_at(&self, t: u64) -> Result<Vec<f64>, OracleError> {
        match &self.target {
            TargetPath::InverseT { scale } => {
                if t == 0 {
                    return Err(OracleError::InvalidRound(t));
                }
                Ok(vec![scale / t as f64; self.dim])
            }
            TargetPath::Fixed { point } => Ok(point.clone()),
        }
    }

    pub fn drift_at(&self, agent: AgentId, t: u64) -> Result<Vec<f64>, OracleError> {
        if agent >= self.n_agents() {
            return Err(OracleError::UnknownAgent(agent));
        }
        Ok(match &self.drift {
            DriftRule::Uniform01 => {
                let mut r = rng::stream(self.seed, rng::STREAM_DRIFT, t, agent as u64);
                (0..self.dim).map(|_| r.random::<f64>()).collect()
            }
            DriftRule::Zero => vec![0.0; self.dim],
            DriftRule::Fixed { vectors } => vectors[agent].clone(),
        })
    }

    pub fn value(&self, agent: AgentId, t: u64, x: &[f64]) -> Result<f64, OracleError> {
        self.check_point(x)?;
        let pi = self.drift_at(agent, t)?;
        let xi = self.target_at(t)?;
        let diff = sub(x, &xi);
        Ok(self.zeta1[agent] * dot(&pi, x) + self.zeta2[agent] * dot(&diff, &diff))
    }

    pub fn gradient(&self, agent: AgentId, t: u64, x: &[f64]) -> Result<Vec<f64>, OracleError> {
        self.check_point(x)?;
        let pi = self.drift_at(agent, t)?;
        let xi = self.target_at(t)?;
        let (z1, z2) = (self.zeta1[agent], self.zeta2[agent]);
        Ok(pi.iter().zip(x.iter().zip(&xi)).map(|(p, (xk, tk))| z1 * p + 2.0 * z2 * (xk - tk)).collect())
    }

    /// Projection of the unconstrained optimum `ξ_t − Σζ₁π / (2Σζ₂)`; exact
    /// because the global Hessian `2Σζ₂ I` is isotropic.
    pub fn minimizer(&self, t: u64, set: &FeasibleSet) -> Result<Vec<f64>, OracleError> {
        let total_z2: f64 = self.zeta2.iter().sum();
        if !(total_z2 > 0.0) {
            return Err(OracleError::Degenerate);
        }
        let mut linear = vec![0.0; self.dim];
        for i in 0..self.n_agents() {
            let pi = self.drift_at(i, t)?;
            for (l, p) in linear.iter_mut().zip(&pi) {
                *l += self.zeta1[i] * p;
            }
        }
        let xi = self.target_at(t)?;
        let u: Vec<f64> = xi.iter().zip(&linear).map(|(x, l)| x - l / (2.0 * total_z2)).collect();
        Ok(set.project(&u))
    }

    /// Strong-convexity modulus of each local loss, `2 min_i ζ_{i,2}`.
    pub fn sigma(&self) -> f64 {
        2.0 * self.zeta2.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Bound on every diagonal Hessian entry, `2 max_i ζ_{i,2}`; also the gradient Lipschitz constant.
    pub fn hessian_bound(&self) -> f64 {
        2.0 * self.zeta2.iter().copied().fold(0.0, f64::max)
    }

    fn drift_norm_bound(&self) -> f64 {
        match &self.drift {
            DriftRule::Uniform01 => (self.dim as f64).sqrt(),
            DriftRule::Zero => 0.0,
            DriftRule::Fixed { vectors } => vectors.iter().map(|v| norm(v)).fold(0.0, f64::max),
        }
    }

    fn target_norm_bound(&self) -> f64 {
        match &self.target {
            TargetPath::InverseT { scale } => scale.abs() * (self.dim as f64).sqrt(),
            TargetPath::Fixed { point } => norm(point),
        }
    }

    /// Upper bound on `‖∇f_t^i(x)‖` over `x ∈ X`, all agents and rounds.
    pub fn gradient_bound(&self, set: &FeasibleSet) -> f64 {
        let m = set.sup_norm();
        let (pn, tn) = (self.drift_norm_bound(), self.target_norm_bound());
        (0..self.n_agents())
            .map(|i| self.zeta1[i] * pn + 2.0 * self.zeta2[i] * (m + tn))
            .fold(0.0, f64::max)
    }

    fn check_point(&self, x: &[f64]) -> Result<(), OracleError> {
        if x.len() != self.dim {
            return Err(OracleError::DimensionMismatch { expected: self.dim, found: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(OracleError::NonFinite("query point"));
        }
        Ok(())
    }
}

pub type ValueFn = dyn Fn(AgentId, u64, &[f64]) -> f64 + Send + Sync;
pub type MinimizerHint = dyn Fn(u64, &FeasibleSet) -> Vec<f64> + Send + Sync;

/// A loss known only through value queries.
#[derive(Clone)]
pub struct CustomLoss {
    pub n: usize,
    pub dim: usize,
    pub value: Arc<ValueFn>,
    /// Warm start for the numeric minimizer.
    pub minimizer_hint: Option<Arc<MinimizerHint>>,
}

impl fmt::Debug for CustomLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomLoss")
            .field("n", &self.n)
            .field("dim", &self.dim)
            .field("minimizer_hint", &self.minimizer_hint.is_some())
            .finish()
    }
}

#[derive(Clone, Debug)]
pub enum LossSpec {
    Tracking(TrackingQuadratic),
    Custom(CustomLoss),
}

impl LossSpec {
    fn family(&self) -> &'static str {
        match self {
            LossSpec::Tracking(_) => "tracking-quadratic",
            LossSpec::Custom(_) => "custom-value-oracle",
        }
    }

    pub fn n_agents(&self) -> usize {
        match self {
            LossSpec::Tracking(l) => l.n_agents(),
            LossSpec::Custom(c) => c.n,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            LossSpec::Tracking(l) => l.dim,
            LossSpec::Custom(c) => c.dim,
        }
    }

    /// `f_t^i(x)`.
    pub fn value(&self, agent: AgentId, t: u64, x: &[f64]) -> Result<f64, OracleError> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(OracleError::NonFinite("query point"));
        }
        if agent >= self.n_agents() {
            return Err(OracleError::UnknownAgent(agent));
        }
        let v = match self {
            LossSpec::Tracking(l) => l.value(agent, t, x)?,
            LossSpec::Custom(c) => (c.value)(agent, t, x),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(OracleError::NonFinite("loss value"))
        }
    }

    /// Global loss `f_t(x) = Σ_i f_t^i(x)`.
    pub fn global_value(&self, t: u64, x: &[f64]) -> Result<f64, OracleError> {
        (0..self.n_agents()).map(|i| self.value(i, t, x)).sum()
    }

    pub fn analytic_gradient(&self, agent: AgentId, t: u64, x: &[f64]) -> Result<Vec<f64>, OracleError> {
        match self {
            LossSpec::Tracking(l) => l.gradient(agent, t, x),
            LossSpec::Custom(_) => Err(OracleError::UnsupportedFamily(self.family())),
        }
    }

    /// `argmin_{x∈X} f_t(x)`: closed form for the tracking family, numeric otherwise.
    pub fn minimizer(&self, t: u64, set: &FeasibleSet) -> Result<Vec<f64>, OracleError> {
        match self {
            LossSpec::Tracking(l) => l.minimizer(t, set),
            LossSpec::Custom(c) => {
                let start = c.minimizer_hint.as_ref().map(|h| h(t, set));
                self.numeric_minimizer(t, set, start)
            }
        }
    }

    /// Projected gradient descent on the global loss, to step tolerance
    /// `1e-10`. Uses the analytic gradient when the family has
    /// one and central differences otherwise.
    pub fn numeric_minimizer(
        &self,
        t: u64,
        set: &FeasibleSet,
        start: Option<Vec<f64>>,
    ) -> Result<Vec<f64>, OracleError> {
        const MAX_ITERS: usize = 100_000;
        const TOL: f64 = 1e-10;
        let d = self.dim();
        let grad = |x: &[f64]| -> Result<Vec<f64>, OracleError> {
            match self {
                LossSpec::Tracking(l) => {
                    let mut g = vec![0.0; d];
                    for i in 0..l.n_agents() {
                        for (gk, v) in g.iter_mut().zip(l.gradient(i, t, x)?) {
                            *gk += v;
                        }
                    }
                    Ok(g)
                }
                LossSpec::Custom(_) => {
                    let step = 1e-6 * norm(x).max(1.0);
                    Ok(deterministic_difference(|p| self.global_value(t, p), x, step, None)?.h)
                }
            }
        };
        let mut x = set.project(&start.unwrap_or_else(|| set.project(&vec![0.0; d])));
        let mut g = grad(&x)?;
        let mut step = 1.0;
        for _ in 0..MAX_ITERS {
            // Backtrack until the step is within the local gradient Lipschitz
            // bound. Function values are useless for this near the optimum,
            // where their differences fall below rounding.
            let (cand, g_cand, moved) = loop {
                let cand = set.project(&x.iter().zip(&g).map(|(xi, gi)| xi - step * gi).collect::<Vec<_>>());
                let moved = distance(&cand, &x);
                if moved == 0.0 {
                    return Ok(x);
                }
                let g_cand = grad(&cand)?;
                if step * distance(&g_cand, &g) <= moved {
                    break (cand, g_cand, moved);
                }
                step *= 0.5;
                if step < 1e-20 {
                    return Err(OracleError::NonConvergent(MAX_ITERS));
                }
            };
            x = cand;
            g = g_cand;
            if moved <= TOL * norm(&x).max(1.0) {
                return Ok(x);
            }
            step *= 2.0;
        }
        Err(OracleError::NonConvergent(MAX_ITERS))
    }
}
