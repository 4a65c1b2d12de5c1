//! Dynamic regret, consensus disagreement and the theoretical bound sequences.
//!
//! The bounds are diagnostics. Their constants exist only implicitly in the
//! analysis, so [`fit_constants`] measures or derives each one from a finished
//! run and the checks compare observations against the resulting sequences.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{contraction_fit, products_from, GraphError};
use crate::linalg::{distance, norm, Matrix};
use crate::oracle::{FeasibleSet, LossSpec, OracleError};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("lambda must lie in (0, 1), got {0}")]
    LambdaOutOfRange(f64),
    #[error("constant {0} is missing, negative or non-finite")]
    BadConstant(&'static str),
    #[error("series too short: need at least {need} entries, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("round {round} has {found} agents, expected {expected}")]
    Ragged { round: usize, expected: usize, found: usize },
    #[error("analytic constants are only available for the tracking-quadratic family")]
    UnsupportedLoss,
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Largest pairwise Euclidean distance; 0 for fewer than two agents.
pub fn disagreement(xs: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for (a, xa) in xs.iter().enumerate() {
        for xb in &xs[a + 1..] {
            worst = worst.max(distance(xa, xb));
        }
    }
    worst
}

/// `Σ_i w[i] x^i`.
pub fn weighted_mean(weights: &[f64], xs: &[Vec<f64>]) -> Vec<f64> {
    let d = xs.first().map_or(0, Vec::len);
    let mut out = vec![0.0; d];
    for (w, x) in weights.iter().zip(xs) {
        for (o, v) in out.iter_mut().zip(x) {
            *o += w * v;
        }
    }
    out
}

/// Per-agent dynamic regret against the global loss `f_t = Σ_i f_t^i`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegretLedger {
    /// `excess[t-1][i] = f_t(x_t^i) − f_t(x_t^*)`
    pub excess: Vec<Vec<f64>>,
    /// `cumulative[t-1][i] = Σ_{s≤t} excess[s-1][i]`
    pub cumulative: Vec<Vec<f64>>,
}

impl RegretLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, excess: Vec<f64>) {
        let next = match self.cumulative.last() {
            Some(prev) => prev.iter().zip(&excess).map(|(p, e)| p + e).collect(),
            None => excess.clone(),
        };
        self.excess.push(excess);
        self.cumulative.push(next);
    }

    pub fn rounds(&self) -> usize {
        self.cumulative.len()
    }

    /// `regret_T^{D,i}` for the last recorded round.
    pub fn final_regret(&self) -> Vec<f64> {
        self.cumulative.last().cloned().unwrap_or_default()
    }

    /// `regret_t^{D,i} / t` for `t = 1..=rounds`.
    pub fn regret_over_t(&self, agent: usize) -> Vec<f64> {
        self.cumulative.iter().enumerate().map(|(k, row)| row[agent] / (k + 1) as f64).collect()
    }
}

/// `f_t(x^i) − f_t(x_t^*)` for every agent, and the minimizer used.
pub fn regret_increment(
    loss: &LossSpec,
    set: &FeasibleSet,
    t: u64,
    xs: &[Vec<f64>],
) -> Result<(Vec<f64>, Vec<f64>), OracleError> {
    let star = loss.minimizer(t, set)?;
    let best = loss.global_value(t, &star)?;
    let excess = xs.iter().map(|x| Ok(loss.global_value(t, x)? - best)).collect::<Result<_, OracleError>>()?;
    Ok((excess, star))
}

/// Ledger for `trajectory[t-1] = (x_t^1, …, x_t^n)`, `t = 1..=upto`.
pub fn dynamic_regret(
    trajectory: &[Vec<Vec<f64>>],
    loss: &LossSpec,
    set: &FeasibleSet,
    upto: usize,
) -> Result<RegretLedger, MetricsError> {
    if trajectory.len() < upto {
        return Err(MetricsError::TooShort { need: upto, got: trajectory.len() });
    }
    let n = trajectory.first().map_or(0, Vec::len);
    let mut ledger = RegretLedger::new();
    for (k, xs) in trajectory.iter().take(upto).enumerate() {
        if xs.len() != n {
            return Err(MetricsError::Ragged { round: k + 1, expected: n, found: xs.len() });
        }
        ledger.push(regret_increment(loss, set, k as u64 + 1, xs)?.0);
    }
    Ok(ledger)
}

/// Constants feeding the consensus and regret bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub c: f64,
    pub lambda: f64,
    pub xi1: f64,
    pub xi2: f64,
    /// Gradient bound on `X`.
    pub l: f64,
    /// Gradient Lipschitz constant.
    pub l_prime: f64,
    /// Bound on diagonal Hessian entries over the query region.
    pub l_hess: f64,
    /// First difference radius `c_1`.
    pub c1: f64,
    /// `sup{‖x‖ : x ∈ X}`
    pub m: f64,
    pub sigma: f64,
    pub n: usize,
    pub d: usize,
    /// `max_j ‖x_1^j‖`
    pub x1_max_norm: f64,
}

impl BoundConstants {
    /// `L_h = L + c_1 √d L_H`
    pub fn l_h(&self) -> f64 {
        self.l + self.c1 * (self.d as f64).sqrt() * self.l_hess
    }

    fn check_lambda(&self) -> Result<(), MetricsError> {
        if self.lambda > 0.0 && self.lambda < 1.0 {
            Ok(())
        } else {
            Err(MetricsError::LambdaOutOfRange(self.lambda))
        }
    }

    fn check_complete(&self) -> Result<(), MetricsError> {
        let positive = [("C", self.c), ("xi1", self.xi1), ("xi2", self.xi2), ("c1", self.c1), ("M", self.m)];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(MetricsError::BadConstant(name));
            }
        }
        for (name, v) in [("L", self.l), ("L'", self.l_prime), ("L_H", self.l_hess)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(MetricsError::BadConstant(name));
            }
        }
        if self.n == 0 {
            return Err(MetricsError::BadConstant("n"));
        }
        if self.d == 0 {
            return Err(MetricsError::BadConstant("d"));
        }
        if !(self.x1_max_norm >= 0.0) || !self.x1_max_norm.is_finite() {
            return Err(MetricsError::BadConstant("x1_max_norm"));
        }
        Ok(())
    }
}

/// `β_t = nC·max‖x_1‖·λ^{t−2} + ξ₁²·C·L_h·Σ_{s=2}^{t−1} α_s λ^{t−s−1} + 2ξ₁·L_h·α_{t−1}`
/// for `t = 1..=upto` (entry `t−1`). Empty sums vanish and the last term is
/// dropped at `t = 1`.
pub fn beta_sequence(
    consts: &BoundConstants,
    alpha: impl Fn(u64) -> f64,
    upto: usize,
) -> Result<Vec<f64>, MetricsError> {
    consts.check_lambda()?;
    let (lambda, c, xi1, lh) = (consts.lambda, consts.c, consts.xi1, consts.l_h());
    let lead = consts.n as f64 * c * consts.x1_max_norm;
    let mut out = Vec::with_capacity(upto);
    // tail = Σ_{s=2}^{t−1} α_s λ^{t−s−1}
    let mut tail = 0.0;
    for t in 1..=upto as u64 {
        if t >= 3 {
            tail = lambda * tail + alpha(t - 1);
        }
        let last = if t >= 2 { 2.0 * xi1 * lh * alpha(t - 1) } else { 0.0 };
        out.push(lead * lambda.powi(t as i32 - 2) + xi1 * xi1 * c * lh * tail + last);
    }
    Ok(out)
}

/// The regret bound and its pieces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegretBound {
    pub c1: f64,
    pub c2: f64,
    pub sum_alpha: f64,
    pub theta_term: f64,
    pub difference_term: f64,
    pub value: f64,
}

/// `C₁ + C₂·Σα_t + 2M·Σθ_t/α_t + 2Mξ₁√d·Σc_t` over `t = 1..=T`.
pub fn regret_bound(
    consts: &BoundConstants,
    alpha: impl Fn(u64) -> f64,
    c: impl Fn(u64) -> f64,
    theta: &[f64],
    horizon: usize,
) -> Result<RegretBound, MetricsError> {
    consts.check_complete()?;
    consts.check_lambda()?;
    if theta.len() < horizon {
        return Err(MetricsError::TooShort { need: horizon, got: theta.len() });
    }
    let alpha1 = alpha(1);
    if !(alpha1 > 0.0) {
        return Err(MetricsError::BadConstant("alpha_1"));
    }
    let (n, m, l, lam) = (consts.n as f64, consts.m, consts.l, consts.lambda);
    let (xi1, lh, cc) = (consts.xi1, consts.l_h(), consts.c);
    let beta = beta_sequence(consts, &alpha, 2)?;
    let k = 2.0 * xi1 * lh + 2.0 * m * xi1 * consts.l_prime + n * l;
    let c1 = 2.0 * m * m / alpha1
        + k * (beta[0] + beta[1] + n * cc * m / (1.0 - lam))
        + 2.0 * m * n * l * xi1 * cc / (lam * lam * (1.0 - lam));
    let c2 = xi1 * xi1 * lh * lh / 2.0 + k * (xi1 * xi1 * cc * lh / (1.0 - lam) + 2.0 * xi1 * lh);
    let mut sum_alpha = 0.0;
    let mut theta_sum = 0.0;
    let mut c_sum = 0.0;
    for t in 1..=horizon as u64 {
        let a = alpha(t);
        sum_alpha += a;
        theta_sum += theta[t as usize - 1] / a;
        c_sum += c(t);
    }
    let theta_term = 2.0 * m * theta_sum;
    let difference_term = 2.0 * m * xi1 * (consts.d as f64).sqrt() * c_sum;
    let value = c1 + c2 * sum_alpha + theta_term + difference_term;
    Ok(RegretBound { c1, c2, sum_alpha, theta_term, difference_term, value })
}

/// `θ_t = ‖x_{t+1}^* − x_t^*‖` from consecutive minimizers.
pub fn path_variation(minimizers: &[Vec<f64>]) -> Vec<f64> {
    minimizers.windows(2).map(|w| distance(&w[1], &w[0])).collect()
}

/// Stochastic vectors with `π_kᵀ = π_{k+1}ᵀ Ã_k`, running backwards from a
/// uniform terminal vector. Returns `matrices.len() + 1` vectors; entry `k`
/// pairs with `matrices[k]` and the last one is the terminal vector.
pub fn pi_sequence(matrices: &[Matrix]) -> Vec<Vec<f64>> {
    let Some(n) = matrices.first().map(Matrix::dim) else { return Vec::new() };
    let mut pis = vec![vec![1.0 / n as f64; n]; matrices.len() + 1];
    for k in (0..matrices.len()).rev() {
        pis[k] = matrices[k].left_mul(&pis[k + 1]);
    }
    pis
}

/// A round where some `‖x̄_t − x_t^i‖` exceeds `β_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundViolation {
    pub t: usize,
    pub agent: usize,
    pub deviation: f64,
    pub beta: f64,
}

/// Checks `‖x̄_t − x_t^i‖ ≤ β_t` for `t >= from`, where `xs[t-1]`, `pis[t-1]`
/// and `betas[t-1]` describe round `t`.
pub fn bound_violations(xs: &[Vec<Vec<f64>>], pis: &[Vec<f64>], betas: &[f64], from: usize) -> Vec<BoundViolation> {
    let mut out = Vec::new();
    let rounds = xs.len().min(pis.len()).min(betas.len());
    for t in from.max(1)..=rounds {
        let mean = weighted_mean(&pis[t - 1], &xs[t - 1]);
        for (agent, x) in xs[t - 1].iter().enumerate() {
            let deviation = distance(&mean, x);
            if deviation > betas[t - 1] {
                out.push(BoundViolation { t, agent, deviation, beta: betas[t - 1] });
            }
        }
    }
    out
}

/// Raw material for [`fit_constants`].
#[derive(Clone, Copy, Debug)]
pub struct FitInput<'a> {
    /// Every observed weight vector, including `z_0`.
    pub z_history: &'a [Vec<f64>],
    /// `Ã_t` for `t = 1..=T`, in order.
    pub matrices: &'a [Matrix],
    pub loss: &'a LossSpec,
    pub set: &'a FeasibleSet,
    pub c1: f64,
    /// `x_1^j` for every agent.
    pub x1: &'a [Vec<f64>],
}

/// Products per anchor used by [`fit_constants`].
pub const FIT_WINDOW: usize = 60;

/// Measures `ξ₁, ξ₂` from the weights, `(C, λ)` as the worst contraction fit
/// over anchors at the start, one third and two thirds of the run, and derives
/// `L, L′, L_H, σ` from the tracking family on `X`.
pub fn fit_constants(input: &FitInput<'_>) -> Result<BoundConstants, MetricsError> {
    let LossSpec::Tracking(tracking) = input.loss else { return Err(MetricsError::UnsupportedLoss) };
    let rounds = input.matrices.len();
    if rounds < 3 {
        return Err(MetricsError::TooShort { need: 3, got: rounds });
    }
    let zs = input.z_history.iter().flatten().copied();
    let (z_min, z_max) = zs.fold((f64::INFINITY, 0.0f64), |(lo, hi), z| (lo.min(z), hi.max(z)));
    if !(z_min > 0.0) {
        return Err(MetricsError::BadConstant("z"));
    }

    let mut c = 0.0f64;
    let mut lambda = 0.0f64;
    let mut anchors = vec![0, rounds / 3, 2 * rounds / 3];
    anchors.dedup();
    for s in anchors {
        let count = FIT_WINDOW.min(rounds - s);
        if count < 3 {
            continue;
        }
        let fit = contraction_fit(&products_from(input.matrices, s, count)?)?;
        c = c.max(fit.c_hat);
        lambda = lambda.max(fit.lambda_hat);
    }

    Ok(BoundConstants {
        c,
        lambda,
        xi1: 1.0 / z_min,
        xi2: z_max,
        l: tracking.gradient_bound(input.set),
        l_prime: tracking.hessian_bound(),
        l_hess: tracking.hessian_bound(),
        c1: input.c1,
        m: input.set.sup_norm(),
        sigma: tracking.sigma(),
        n: tracking.n_agents(),
        d: tracking.dim,
        x1_max_norm: input.x1.iter().map(|x| norm(x)).fold(0.0, f64::max),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sublinearity {
    pub decreasing_tail: bool,
    pub tail_ratio: f64,
}

/// For `series[t-1] = regret_t / t`: is the last-quarter mean below the
/// second-quarter mean, and what is `series[T] / series[T/2]`.
pub fn sublinearity_check(series: &[f64]) -> Result<Sublinearity, MetricsError> {
    let len = series.len();
    if len < 4 {
        return Err(MetricsError::TooShort { need: 4, got: len });
    }
    let mean = |a: usize, b: usize| series[a..b].iter().sum::<f64>() / (b - a) as f64;
    let second = mean(len / 4, len / 2);
    let last = mean(3 * len / 4, len);
    Ok(Sublinearity { decreasing_tail: last < second, tail_ratio: series[len - 1] / series[len / 2 - 1] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{CustomLoss, DriftRule, TargetPath, TrackingQuadratic};
    use std::sync::Arc;

    fn consts() -> BoundConstants {
        BoundConstants {
            c: 1.0,
            lambda: 0.5,
            xi1: 1.0,
            xi2: 1.0,
            l: 1.0,
            l_prime: 1.0,
            l_hess: 0.0,
            c1: 1.0,
            m: 1.0,
            sigma: 1.0,
            n: 2,
            d: 1,
            x1_max_norm: 1.0,
        }
    }

    #[test]
    fn disagreement_examples() {
        assert_eq!(disagreement(&[vec![1.0, 2.0], vec![1.0, 2.0]]), 0.0);
        assert_eq!(disagreement(&[vec![0.0, 0.0], vec![3.0, 4.0]]), 5.0);
        assert_eq!(disagreement(&[vec![0.0], vec![1.0], vec![10.0]]), 10.0);
        assert_eq!(disagreement(&[vec![7.0]]), 0.0);
    }

    fn square() -> LossSpec {
        LossSpec::Tracking(
            TrackingQuadratic::new(vec![0.0], vec![1.0], TargetPath::Fixed { point: vec![0.0] }, DriftRule::Zero, 1, 0).unwrap(),
        )
    }

    #[test]
    fn regret_examples() {
        let set = FeasibleSet::cube(vec![-5.0], vec![5.0]);
        let fixed = vec![vec![vec![1.0]]; 3];
        let ledger = dynamic_regret(&fixed, &square(), &set, 3).unwrap();
        assert_eq!(ledger.final_regret(), vec![3.0]);
        assert_eq!(ledger.regret_over_t(0), vec![1.0, 1.0, 1.0]);

        let optimal = vec![vec![vec![0.0], vec![0.0]]; 4];
        assert_eq!(dynamic_regret(&optimal, &square(), &set, 4).unwrap().final_regret(), vec![0.0, 0.0]);

        let half = vec![vec![vec![0.5f64.sqrt()]]];
        let ledger = dynamic_regret(&half, &square(), &set, 1).unwrap();
        assert!((ledger.excess[0][0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn beta_hand_evaluation() {
        let b = beta_sequence(&consts(), |s| 1.0 / s as f64, 4).unwrap();
        let expected = 0.5 + (0.25 + 1.0 / 3.0) + 2.0 / 3.0;
        assert!((b[3] - expected).abs() < 1e-12, "{}", b[3]);
        assert!((b[3] - 1.75).abs() < 1e-12);
    }

    #[test]
    fn beta_degenerate_cases() {
        let k = consts();
        let b = beta_sequence(&k, |_| 0.0, 10).unwrap();
        for (idx, v) in b.iter().enumerate() {
            let t = idx as i32 + 1;
            assert!((v - 2.0 * 0.5f64.powi(t - 2)).abs() < 1e-12);
        }
        // As λ → 0 only the s = t−1 summand and the last term survive.
        let tiny = BoundConstants { lambda: 1e-12, ..k.clone() };
        let b = beta_sequence(&tiny, |s| 1.0 / s as f64, 6).unwrap();
        let lh = tiny.l_h();
        assert!((b[5] - (tiny.c * lh + 2.0 * lh) * 0.2).abs() < 1e-9);
        let none = BoundConstants { lambda: 1e-12, c: 1e-300, ..k.clone() };
        let b = beta_sequence(&none, |s| 1.0 / s as f64, 6).unwrap();
        assert!((b[5] - 2.0 * none.l_h() * 0.2).abs() < 1e-9);
        assert_eq!(beta_sequence(&BoundConstants { lambda: 1.0, ..k }, |_| 1.0, 3), Err(MetricsError::LambdaOutOfRange(1.0)));
    }

    #[test]
    fn beta_matches_direct_sum() {
        let k = BoundConstants { lambda: 0.8, c: 2.5, xi1: 3.0, l_hess: 2.0, d: 2, ..consts() };
        let alpha = |s: u64| 1.0 / (s as f64).sqrt();
        let b = beta_sequence(&k, alpha, 30).unwrap();
        for t in 3..=30u64 {
            let sum: f64 = (2..t).map(|s| alpha(s) * k.lambda.powi((t - s - 1) as i32)).sum();
            let direct = k.n as f64 * k.c * k.x1_max_norm * k.lambda.powi(t as i32 - 2)
                + k.xi1 * k.xi1 * k.c * k.l_h() * sum
                + 2.0 * k.xi1 * k.l_h() * alpha(t - 1);
            assert!((b[t as usize - 1] - direct).abs() <= 1e-12 * direct);
        }
    }

    #[test]
    fn regret_bound_term_isolation() {
        let k = consts();
        let one = regret_bound(&k, |_| 0.5, |_| 0.0, &[0.0], 1).unwrap();
        assert!((one.value - (one.c1 + one.c2 * 0.5)).abs() < 1e-12);
        let two = regret_bound(&k, |_| 0.5, |_| 0.0, &[0.0, 0.0, 0.0], 3).unwrap();
        assert!((two.value - (two.c1 + two.c2 * 1.5)).abs() < 1e-9);

        let t1 = regret_bound(&k, |_| 0.5, |_| 0.25, &[0.1], 1).unwrap();
        let expect = t1.c1 + t1.c2 * 0.5 + 2.0 * k.m * 0.1 / 0.5 + 2.0 * k.m * k.xi1 * 0.25;
        assert!((t1.value - expect).abs() < 1e-12);

        // C₁ and C₂ recomputed from the constant block by hand.
        let (n, m, l, lam, xi1, lh, c) = (2.0, 1.0, 1.0, 0.5, 1.0, k.l_h(), 1.0);
        let beta1 = n * c * 1.0 / lam;
        let beta2 = n * c * 1.0 + 2.0 * xi1 * lh * 0.5;
        let kk = 2.0 * xi1 * lh + 2.0 * m * xi1 * 1.0 + n * l;
        let c1 = 2.0 * m * m / 0.5 + kk * (beta1 + beta2 + n * c * m / (1.0 - lam)) + 2.0 * m * n * l * xi1 * c / (lam * lam * (1.0 - lam));
        let c2 = xi1 * xi1 * lh * lh / 2.0 + kk * (xi1 * xi1 * c * lh / (1.0 - lam) + 2.0 * xi1 * lh);
        assert!((t1.c1 - c1).abs() < 1e-12 && (t1.c2 - c2).abs() < 1e-12);

        assert_eq!(regret_bound(&BoundConstants { m: 0.0, ..k }, |_| 0.5, |_| 0.0, &[0.0], 1).unwrap_err(), MetricsError::BadConstant("M"));
    }

    #[test]
    fn sublinearity_examples() {
        let harmonic: Vec<f64> = (1..=100).map(|t| 1.0 / t as f64).collect();
        let s = sublinearity_check(&harmonic).unwrap();
        assert!(s.decreasing_tail && (s.tail_ratio - 0.5).abs() < 1e-12);
        let flat = sublinearity_check(&[2.0; 8]).unwrap();
        assert!(!flat.decreasing_tail && flat.tail_ratio == 1.0);
        let root: Vec<f64> = (1..=100).map(|t| 1.0 / (t as f64).sqrt()).collect();
        assert!((sublinearity_check(&root).unwrap().tail_ratio - 0.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(sublinearity_check(&[1.0; 3]).unwrap_err(), MetricsError::TooShort { need: 4, got: 3 });
    }

    #[test]
    fn pi_sequence_is_stochastic_and_consistent() {
        let a = Matrix::from_rows(&[vec![0.75, 0.25], vec![0.5, 0.5]]).unwrap();
        let b = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.3, 0.7]]).unwrap();
        let pis = pi_sequence(&[a.clone(), b.clone(), a.clone()]);
        assert_eq!(pis.len(), 4);
        for (k, m) in [a.clone(), b, a].iter().enumerate() {
            let back = m.left_mul(&pis[k + 1]);
            assert!(distance(&back, &pis[k]) < 1e-15);
            assert!((pis[k].iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn fit_constants_symmetric_pair() {
        let half = Matrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let loss = LossSpec::Tracking(
            TrackingQuadratic::new(vec![1.0; 2], vec![1.0; 2], TargetPath::InverseT { scale: 50.0 }, DriftRule::Uniform01, 2, 0)
                .unwrap(),
        );
        let set = FeasibleSet::ball(vec![0.0, 0.0], 100.0);
        let zs = vec![vec![0.5, 0.5]; 11];
        let x1 = vec![vec![3.0, 4.0], vec![0.0, 1.0]];
        let input = FitInput { z_history: &zs, matrices: &vec![half; 10], loss: &loss, set: &set, c1: 1.0, x1: &x1 };
        let k = fit_constants(&input).unwrap();
        assert_eq!((k.xi1, k.xi2), (2.0, 0.5));
        assert_eq!((k.l_hess, k.l_prime), (2.0, 2.0));
        assert_eq!(k.lambda, 0.0);
        assert_eq!(k.m, 100.0);
        assert_eq!(k.x1_max_norm, 5.0);
        assert_eq!(k.sigma, 2.0);

        let custom = LossSpec::Custom(CustomLoss { n: 2, dim: 2, value: Arc::new(|_, _, _| 0.0), minimizer_hint: None });
        assert_eq!(fit_constants(&FitInput { loss: &custom, ..input }).unwrap_err(), MetricsError::UnsupportedLoss);
    }

    #[test]
    fn violations_are_reported_with_round() {
        let xs = vec![vec![vec![0.0], vec![2.0]]; 3];
        let pis = vec![vec![0.5, 0.5]; 3];
        assert!(bound_violations(&xs, &pis, &[1.0, 1.0, 1.0], 1).is_empty());
        let v = bound_violations(&xs, &pis, &[1.0, 0.5, 1.0], 1);
        assert_eq!(v.len(), 2);
        assert!(v.iter().all(|b| b.t == 2));
    }

    #[test]
    fn path_variation_of_inverse_t_target() {
        let stars: Vec<Vec<f64>> = (1..=4).map(|t| vec![50.0 / t as f64]).collect();
        let th = path_variation(&stars);
        assert_eq!(th.len(), 3);
        assert!((th[0] - 25.0).abs() < 1e-12);
    }
}
