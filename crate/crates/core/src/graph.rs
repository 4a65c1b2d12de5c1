//! Time-varying directed graphs with per-edge trust labels.
//!
//! A [`GraphSnapshot`] is the edge set of one round. Every agent always has a
//! trusted self-loop. A [`GraphSchedule`] replays a finite list of snapshots,
//! cyclically by default. The contraction helpers measure how fast products of
//! row-stochastic mixing matrices lose memory of their starting row.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;
use crate::rng;
use crate::AgentId;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("unknown agent {id} (graph has {n} agents)")]
    UnknownAgent { id: AgentId, n: usize },
    #[error("graph must have at least one agent")]
    NoAgents,
    #[error("self-loop ({0},{0}) must be trusted")]
    UntrustedSelfLoop(AgentId),
    #[error("duplicate edge ({from},{to})")]
    DuplicateEdge { from: AgentId, to: AgentId },
    #[error("schedule has no snapshots")]
    EmptySchedule,
    #[error("snapshot {index} has {found} agents, expected {expected}")]
    AgentCountMismatch { index: usize, expected: usize, found: usize },
    #[error("matrix {index} is {found}x{found}, expected {expected}x{expected}")]
    DimensionMismatch { index: usize, expected: usize, found: usize },
    #[error("invalid product span s={s}, t={t} over {available} matrices")]
    InvalidSpan { s: usize, t: usize, available: usize },
    #[error("contraction fit needs at least 3 products, got {0}")]
    TooFewProducts(usize),
    #[error("contraction fit needs products anchored at one round with increasing t")]
    InconsistentProducts,
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("no valid schedule after {0} attempts")]
    RetryCapExceeded(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeLabel {
    Trusted,
    Normal,
    Adversarial,
}

/// The labelled edge set of one round. Edge `(from, to)` means `from` sends to `to`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphSnapshot {
    n: usize,
    edges: BTreeMap<(AgentId, AgentId), EdgeLabel>,
}

impl GraphSnapshot {
    /// Builds a snapshot; missing self-loops are added as trusted.
    pub fn new(
        n: usize,
        edges: impl IntoIterator<Item = (AgentId, AgentId, EdgeLabel)>,
    ) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::NoAgents);
        }
        let mut map = BTreeMap::new();
        for (from, to, label) in edges {
            for id in [from, to] {
                if id >= n {
                    return Err(GraphError::UnknownAgent { id, n });
                }
            }
            if from == to && label != EdgeLabel::Trusted {
                return Err(GraphError::UntrustedSelfLoop(from));
            }
            if map.insert((from, to), label).is_some() {
                return Err(GraphError::DuplicateEdge { from, to });
            }
        }
        for i in 0..n {
            map.entry((i, i)).or_insert(EdgeLabel::Trusted);
        }
        Ok(Self { n, edges: map })
    }

    /// Self-loops only.
    pub fn isolated(n: usize) -> Result<Self, GraphError> {
        Self::new(n, std::iter::empty())
    }

    /// Every ordered pair connected with one label.
    pub fn complete(n: usize, label: EdgeLabel) -> Result<Self, GraphError> {
        let edges = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j, label)));
        Self::new(n, edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn label(&self, from: AgentId, to: AgentId) -> Option<EdgeLabel> {
        self.edges.get(&(from, to)).copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = (AgentId, AgentId, EdgeLabel)> + '_ {
        self.edges.iter().map(|(&(f, t), &l)| (f, t, l))
    }

    /// Edges other than self-loops, as stored in files.
    pub fn non_loop_edges(&self) -> impl Iterator<Item = (AgentId, AgentId, EdgeLabel)> + '_ {
        self.edges().filter(|(f, t, _)| f != t)
    }

    pub fn adversarial_edges(&self) -> impl Iterator<Item = (AgentId, AgentId)> + '_ {
        self.edges().filter(|e| e.2 == EdgeLabel::Adversarial).map(|(f, t, _)| (f, t))
    }

    fn check_id(&self, i: AgentId) -> Result<(), GraphError> {
        if i < self.n {
            Ok(())
        } else {
            Err(GraphError::UnknownAgent { id: i, n: self.n })
        }
    }

    /// `{j : (j, i) ∈ edges}`; always contains `i`.
    pub fn in_neighbors(&self, i: AgentId) -> Result<BTreeSet<AgentId>, GraphError> {
        self.check_id(i)?;
        Ok(self.edges().filter(|e| e.1 == i).map(|e| e.0).collect())
    }

    /// In-neighbours over trusted edges; always contains `i`.
    pub fn trusted_in_neighbors(&self, i: AgentId) -> Result<BTreeSet<AgentId>, GraphError> {
        self.check_id(i)?;
        Ok(self
            .edges()
            .filter(|e| e.1 == i && e.2 == EdgeLabel::Trusted)
            .map(|e| e.0)
            .collect())
    }

    /// Smallest number of trusted in-edges (self-loop excluded) over all agents.
    pub fn min_trusted_in_degree(&self) -> usize {
        (0..self.n)
            .map(|i| self.edges().filter(|e| e.1 == i && e.0 != i && e.2 == EdgeLabel::Trusted).count())
            .min()
            .unwrap_or(0)
    }

    pub fn is_strongly_connected(&self) -> bool {
        strongly_connected(self.n, self.edges().map(|(f, t, _)| (f, t)))
    }
}

/// Strong connectivity of the graph on `0..n` with the given arcs.
fn strongly_connected(n: usize, arcs: impl Iterator<Item = (AgentId, AgentId)>) -> bool {
    let mut fwd = vec![Vec::new(); n];
    let mut bwd = vec![Vec::new(); n];
    for (f, t) in arcs {
        fwd[f].push(t);
        bwd[t].push(f);
    }
    let reaches_all = |adj: &[Vec<AgentId>]| {
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.iter().all(|&s| s)
    };
    n > 0 && reaches_all(&fwd) && reaches_all(&bwd)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleMode {
    /// Round `t` uses snapshot `t mod period`.
    #[default]
    Cycle,
    /// Round `t` uses snapshot `t`; rounds past the end have no graph.
    ExplicitPerRound,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphSchedule {
    snapshots: Vec<GraphSnapshot>,
    mode: ScheduleMode,
}

impl GraphSchedule {
    pub fn new(snapshots: Vec<GraphSnapshot>, mode: ScheduleMode) -> Result<Self, GraphError> {
        let first = snapshots.first().ok_or(GraphError::EmptySchedule)?;
        let n = first.n();
        if let Some((index, s)) = snapshots.iter().enumerate().find(|(_, s)| s.n() != n) {
            return Err(GraphError::AgentCountMismatch { index, expected: n, found: s.n() });
        }
        Ok(Self { snapshots, mode })
    }

    pub fn cyclic(snapshots: Vec<GraphSnapshot>) -> Result<Self, GraphError> {
        Self::new(snapshots, ScheduleMode::Cycle)
    }

    pub fn n(&self) -> usize {
        self.snapshots[0].n()
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn mode(&self) -> ScheduleMode {
        self.mode
    }

    pub fn snapshots(&self) -> &[GraphSnapshot] {
        &self.snapshots
    }

    pub fn snapshot(&self, t: u64) -> Option<&GraphSnapshot> {
        match self.mode {
            ScheduleMode::Cycle => self.snapshots.get((t % self.snapshots.len() as u64) as usize),
            ScheduleMode::ExplicitPerRound => usize::try_from(t).ok().and_then(|t| self.snapshots.get(t)),
        }
    }

    pub fn check_window_connectivity(&self, window: usize, trusted_only: bool) -> bool {
        check_window_connectivity(self, window, trusted_only)
    }
}

/// True iff the union of every `window` consecutive edge sets is strongly
/// connected. Cyclic schedules are checked from every offset of one period;
/// explicit ones from every start whose window fits in the list (or once over
/// the whole list when it is shorter than the window).
pub fn check_window_connectivity(schedule: &GraphSchedule, window: usize, trusted_only: bool) -> bool {
    let window = window.max(1);
    let len = schedule.len();
    let n = schedule.n();
    let union_connected = |indices: &mut dyn Iterator<Item = usize>| {
        let mut arcs = BTreeSet::new();
        for idx in indices {
            for (f, t, l) in schedule.snapshots[idx].edges() {
                if !trusted_only || l == EdgeLabel::Trusted {
                    arcs.insert((f, t));
                }
            }
        }
        strongly_connected(n, arcs.into_iter())
    };
    match schedule.mode {
        ScheduleMode::Cycle => {
            (0..len).all(|start| union_connected(&mut (start..start + window).map(|k| k % len)))
        }
        ScheduleMode::ExplicitPerRound => {
            if len < window {
                union_connected(&mut (0..len))
            } else {
                (0..=len - window).all(|start| union_connected(&mut (start..start + window)))
            }
        }
    }
}

/// `Φ_{t,s} = A_t ⋯ A_s`. When `t + 1 == s` the span is empty and the matrix is the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionProduct {
    pub matrix: Matrix,
    pub s: usize,
    pub t: usize,
}

impl TransitionProduct {
    /// Number of factors, `t - s + 1`.
    pub fn length(&self) -> usize {
        self.t + 1 - self.s
    }
}

/// Ordered left product of `matrices[s..=t]` (round `r` uses `matrices[r]`).
pub fn transition_product(matrices: &[Matrix], s: usize, t: usize) -> Result<TransitionProduct, GraphError> {
    let n = matrices.first().map(Matrix::dim).ok_or(GraphError::InvalidSpan { s, t, available: 0 })?;
    if t + 1 < s || (t + 1 > s && t >= matrices.len()) {
        return Err(GraphError::InvalidSpan { s, t, available: matrices.len() });
    }
    let mut product = Matrix::identity(n);
    for (index, m) in matrices.iter().enumerate().take(t + 1).skip(s) {
        if m.dim() != n {
            return Err(GraphError::DimensionMismatch { index, expected: n, found: m.dim() });
        }
        product = m.mul(&product);
    }
    Ok(TransitionProduct { matrix: product, s, t })
}

/// `Φ_{s,s}, Φ_{s+1,s}, …` up to `count` products, built incrementally.
pub fn products_from(matrices: &[Matrix], s: usize, count: usize) -> Result<Vec<TransitionProduct>, GraphError> {
    let n = matrices.first().map(Matrix::dim).ok_or(GraphError::InvalidSpan { s, t: s, available: 0 })?;
    if s + count > matrices.len() {
        return Err(GraphError::InvalidSpan { s, t: s + count.saturating_sub(1), available: matrices.len() });
    }
    let mut out = Vec::with_capacity(count);
    let mut product = Matrix::identity(n);
    for (t, m) in matrices.iter().enumerate().skip(s).take(count) {
        if m.dim() != n {
            return Err(GraphError::DimensionMismatch { index: t, expected: n, found: m.dim() });
        }
        product = m.mul(&product);
        out.push(TransitionProduct { matrix: product.clone(), s, t });
    }
    Ok(out)
}

/// Deviations at or below this level are rounding noise and are left out of the fit.
pub const DEVIATION_FLOOR: f64 = 1e-13;

#[derive(Clone, Debug, PartialEq)]
pub struct ContractionFit {
    pub c_hat: f64,
    /// May be `>= 1` when the products do not mix; callers assert `< 1`.
    pub lambda_hat: f64,
    pub pi_hat: Vec<f64>,
    /// `(t - s, max_{i,j} |Φ[i,j] - π̂[j]|)` for every product.
    pub deviations: Vec<(usize, f64)>,
}

/// Fits `max_{i,j} |Φ_{t,s}[i,j] - π̂[j]| ≈ Ĉ λ̂^{t-s}` by least squares in log space.
///
/// `π̂` is the mean row of the longest product. When fewer than two deviations
/// rise above [`DEVIATION_FLOOR`] the rows agree after at most one step and
/// `λ̂ = 0`.
pub fn contraction_fit(products: &[TransitionProduct]) -> Result<ContractionFit, GraphError> {
    if products.len() < 3 {
        return Err(GraphError::TooFewProducts(products.len()));
    }
    let s = products[0].s;
    if products.iter().any(|p| p.s != s) || products.windows(2).any(|w| w[1].t <= w[0].t) {
        return Err(GraphError::InconsistentProducts);
    }
    let longest = &products[products.len() - 1].matrix;
    let n = longest.dim();
    let pi_hat: Vec<f64> = (0..n).map(|j| (0..n).map(|i| longest.get(i, j)).sum::<f64>() / n as f64).collect();

    let deviations: Vec<(usize, f64)> = products
        .iter()
        .map(|p| {
            let mut dev = 0.0f64;
            for i in 0..n {
                for (j, pj) in pi_hat.iter().enumerate() {
                    dev = dev.max((p.matrix.get(i, j) - pj).abs());
                }
            }
            (p.t - p.s, dev)
        })
        .collect();

    let usable: Vec<(f64, f64)> = deviations
        .iter()
        .filter(|(_, d)| *d > DEVIATION_FLOOR)
        .map(|&(k, d)| (k as f64, d.ln()))
        .collect();
    let max_dev = deviations.iter().map(|d| d.1).fold(0.0, f64::max);
    if usable.len() < 2 {
        return Ok(ContractionFit { c_hat: max_dev.max(f64::MIN_POSITIVE), lambda_hat: 0.0, pi_hat, deviations });
    }
    let m = usable.len() as f64;
    let mean_x = usable.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = usable.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = usable.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    Ok(ContractionFit { c_hat: intercept.exp(), lambda_hat: slope.exp(), pi_hat, deviations })
}

/// Parameters for [`generate_schedule`]. Each ordered pair `(i, j)`, `i != j`,
/// independently becomes trusted, adversarial, normal, or absent with the given
/// probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub n: usize,
    pub period: usize,
    pub trusted_density: f64,
    pub adversarial_density: f64,
    #[serde(default = "default_normal_density")]
    pub normal_density: f64,
    /// Connectivity window; defaults to the period.
    #[serde(default)]
    pub window: Option<usize>,
    #[serde(default)]
    pub min_adversarial_per_snapshot: usize,
    pub seed: u64,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: usize,
}

fn default_normal_density() -> f64 {
    0.2
}

fn default_max_attempts() -> usize {
    1000
}

impl ScheduleParams {
    pub fn new(n: usize, period: usize, trusted_density: f64, adversarial_density: f64, seed: u64) -> Self {
        Self {
            n,
            period,
            trusted_density,
            adversarial_density,
            normal_density: default_normal_density(),
            window: None,
            min_adversarial_per_snapshot: 0,
            seed,
            max_attempts: default_max_attempts(),
        }
    }

    fn validate(&self) -> Result<(), GraphError> {
        let densities = [self.trusted_density, self.adversarial_density, self.normal_density];
        if densities.iter().any(|d| !(0.0..=1.0).contains(d)) {
            return Err(GraphError::InvalidParams("densities must lie in [0, 1]".into()));
        }
        if densities.iter().sum::<f64>() > 1.0 + 1e-12 {
            return Err(GraphError::InvalidParams("densities must sum to at most 1".into()));
        }
        if self.n == 0 || self.period == 0 {
            return Err(GraphError::InvalidParams("n and period must be positive".into()));
        }
        if self.window == Some(0) {
            return Err(GraphError::InvalidParams("window must be positive".into()));
        }
        Ok(())
    }
}

/// Rejection-samples a cyclic schedule whose full and trusted-only edge sets
/// both pass [`check_window_connectivity`].
pub fn generate_schedule(params: &ScheduleParams) -> Result<GraphSchedule, GraphError> {
    params.validate()?;
    let window = params.window.unwrap_or(params.period);
    let (td, ad, nd) = (params.trusted_density, params.adversarial_density, params.normal_density);
    for attempt in 0..params.max_attempts {
        let mut rng = rng::stream(params.seed, rng::STREAM_SCHEDULE, attempt as u64, 0);
        let mut snapshots = Vec::with_capacity(params.period);
        for _ in 0..params.period {
            let mut edges = Vec::new();
            for i in 0..params.n {
                for j in (0..params.n).filter(|&j| j != i) {
                    let r: f64 = rng.random();
                    let label = if r < td {
                        EdgeLabel::Trusted
                    } else if r < td + ad {
                        EdgeLabel::Adversarial
                    } else if r < td + ad + nd {
                        EdgeLabel::Normal
                    } else {
                        continue;
                    };
                    edges.push((i, j, label));
                }
            }
            snapshots.push(GraphSnapshot::new(params.n, edges)?);
        }
        let schedule = GraphSchedule::cyclic(snapshots)?;
        let enough_attacks = schedule
            .snapshots()
            .iter()
            .all(|s| s.adversarial_edges().count() >= params.min_adversarial_per_snapshot);
        if enough_attacks
            && schedule.check_window_connectivity(window, true)
            && schedule.check_window_connectivity(window, false)
        {
            return Ok(schedule);
        }
    }
    Err(GraphError::RetryCapExceeded(params.max_attempts))
}

/// File form of a schedule: one-based `[from, to, label]` triples per snapshot.
/// Self-loops may be omitted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleFile {
    #[serde(default)]
    pub mode: ScheduleMode,
    pub n: usize,
    pub snapshots: Vec<Vec<(usize, usize, EdgeLabel)>>,
}

impl ScheduleFile {
    pub fn from_schedule(schedule: &GraphSchedule) -> Self {
        Self {
            mode: schedule.mode(),
            n: schedule.n(),
            snapshots: schedule
                .snapshots()
                .iter()
                .map(|s| s.non_loop_edges().map(|(f, t, l)| (f + 1, t + 1, l)).collect())
                .collect(),
        }
    }

    pub fn to_schedule(&self) -> Result<GraphSchedule, GraphError> {
        let n = self.n;
        let snapshots = self
            .snapshots
            .iter()
            .map(|edges| {
                let mut zero_based = Vec::with_capacity(edges.len());
                for &(f, t, l) in edges {
                    for id in [f, t] {
                        if id == 0 || id > n {
                            return Err(GraphError::UnknownAgent { id, n });
                        }
                    }
                    zero_based.push((f - 1, t - 1, l));
                }
                GraphSnapshot::new(n, zero_based)
            })
            .collect::<Result<Vec<_>, _>>()?;
        GraphSchedule::new(snapshots, self.mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use EdgeLabel::*;

    fn ring(n: usize, label: EdgeLabel) -> GraphSnapshot {
        GraphSnapshot::new(n, (0..n).map(|i| (i, (i + 1) % n, label))).unwrap()
    }

    fn set(ids: &[usize]) -> BTreeSet<usize> {
        ids.iter().copied().collect()
    }

    #[test]
    fn in_neighbors_follow_edge_direction() {
        let g = GraphSnapshot::new(3, [(0, 1, Normal), (2, 1, Normal)]).unwrap();
        assert_eq!(g.in_neighbors(1).unwrap(), set(&[0, 1, 2]));
        assert_eq!(GraphSnapshot::isolated(3).unwrap().in_neighbors(0).unwrap(), set(&[0]));
        assert_eq!(ring(4, Normal).in_neighbors(2).unwrap(), set(&[1, 2]));
        assert!(matches!(g.in_neighbors(3), Err(GraphError::UnknownAgent { id: 3, n: 3 })));
    }

    #[test]
    fn trusted_in_neighbors_filter_labels() {
        let g = GraphSnapshot::new(3, [(0, 1, Trusted), (2, 1, Adversarial)]).unwrap();
        assert_eq!(g.trusted_in_neighbors(1).unwrap(), set(&[0, 1]));
        let normal = GraphSnapshot::complete(3, Normal).unwrap();
        assert_eq!(normal.trusted_in_neighbors(0).unwrap(), set(&[0]));
        let trusted = GraphSnapshot::complete(3, Trusted).unwrap();
        assert_eq!(trusted.trusted_in_neighbors(1).unwrap(), set(&[0, 1, 2]));
        assert!(g.trusted_in_neighbors(7).is_err());
    }

    #[test]
    fn snapshot_validation() {
        assert_eq!(
            GraphSnapshot::new(2, [(0, 0, Normal)]).unwrap_err(),
            GraphError::UntrustedSelfLoop(0)
        );
        assert_eq!(
            GraphSnapshot::new(2, [(0, 1, Normal), (0, 1, Trusted)]).unwrap_err(),
            GraphError::DuplicateEdge { from: 0, to: 1 }
        );
        let g = GraphSnapshot::new(2, [(0, 0, Trusted)]).unwrap();
        assert_eq!(g.label(1, 1), Some(Trusted));
    }

    #[test]
    fn strong_connectivity() {
        assert!(ring(4, Normal).is_strongly_connected());
        let two_parts = GraphSnapshot::new(4, [(0, 1, Normal), (1, 0, Normal), (2, 3, Normal), (3, 2, Normal)]).unwrap();
        assert!(!two_parts.is_strongly_connected());
        let star = GraphSnapshot::new(4, [(1, 0, Normal), (2, 0, Normal), (3, 0, Normal)]).unwrap();
        assert!(!star.is_strongly_connected());
    }

    #[test]
    fn window_connectivity() {
        // Even arcs of a ring in one snapshot, odd arcs in the other.
        let a = GraphSnapshot::new(4, [(0, 1, Trusted), (2, 3, Trusted), (1, 2, Adversarial)]).unwrap();
        let b = GraphSnapshot::new(4, [(1, 2, Trusted), (3, 0, Trusted)]).unwrap();
        let sched = GraphSchedule::cyclic(vec![a, b]).unwrap();
        assert!(sched.check_window_connectivity(2, true));
        assert!(!sched.check_window_connectivity(1, true));

        let starved = GraphSnapshot::new(
            4,
            [(0, 1, Trusted), (1, 2, Trusted), (2, 0, Trusted), (3, 0, Trusted), (2, 3, Normal)],
        )
        .unwrap();
        let sched = GraphSchedule::cyclic(vec![starved]).unwrap();
        for w in 1..5 {
            assert!(!sched.check_window_connectivity(w, true));
        }
        assert!(sched.check_window_connectivity(1, false));

        let complete = GraphSchedule::cyclic(vec![GraphSnapshot::complete(3, Trusted).unwrap()]).unwrap();
        assert!(complete.check_window_connectivity(1, true));
    }

    #[test]
    fn explicit_schedule_windows() {
        let a = GraphSnapshot::new(2, [(0, 1, Trusted)]).unwrap();
        let b = GraphSnapshot::new(2, [(1, 0, Trusted)]).unwrap();
        let sched = GraphSchedule::new(vec![a.clone(), b, a], ScheduleMode::ExplicitPerRound).unwrap();
        assert!(sched.check_window_connectivity(2, true));
        assert!(!sched.check_window_connectivity(1, true));
        assert!(sched.snapshot(3).is_none());
        assert!(sched.snapshot(2).is_some());
    }

    #[test]
    fn schedule_rejects_mixed_sizes() {
        let err = GraphSchedule::cyclic(vec![ring(3, Normal), ring(4, Normal)]).unwrap_err();
        assert_eq!(err, GraphError::AgentCountMismatch { index: 1, expected: 3, found: 4 });
        assert_eq!(GraphSchedule::cyclic(vec![]).unwrap_err(), GraphError::EmptySchedule);
    }

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn transition_products() {
        let half = m(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let mats = vec![half.clone(), Matrix::identity(2)];
        assert_eq!(transition_product(&mats, 1, 0).unwrap().matrix, Matrix::identity(2));
        assert_eq!(transition_product(&mats, 0, 0).unwrap().matrix, half);
        assert_eq!(transition_product(&mats, 0, 1).unwrap().matrix, half);
        assert!(transition_product(&mats, 0, 2).is_err());
        let bad = vec![half, Matrix::identity(3)];
        assert!(matches!(transition_product(&bad, 0, 1), Err(GraphError::DimensionMismatch { .. })));
    }

    #[test]
    fn contraction_of_constant_matrices() {
        let half = m(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let fit = contraction_fit(&products_from(&vec![half; 10], 0, 10).unwrap()).unwrap();
        assert_eq!(fit.lambda_hat, 0.0);
        assert_eq!(fit.pi_hat, vec![0.5, 0.5]);

        let lazy = m(&[&[0.75, 0.25], &[0.25, 0.75]]);
        let fit = contraction_fit(&products_from(&vec![lazy; 30], 0, 30).unwrap()).unwrap();
        assert!((fit.lambda_hat - 0.5).abs() < 0.05, "{}", fit.lambda_hat);
        assert_eq!(fit.pi_hat, vec![0.5, 0.5]);

        let fit = contraction_fit(&products_from(&vec![Matrix::identity(3); 10], 0, 10).unwrap()).unwrap();
        assert!((fit.lambda_hat - 1.0).abs() < 1e-12);
    }

    #[test]
    fn contraction_needs_three_products() {
        let p = products_from(&[Matrix::identity(2), Matrix::identity(2)], 0, 2).unwrap();
        assert_eq!(contraction_fit(&p).unwrap_err(), GraphError::TooFewProducts(2));
    }

    #[test]
    fn generator_is_deterministic_and_valid() {
        let params = ScheduleParams::new(4, 2, 0.6, 0.2, 11);
        let a = generate_schedule(&params).unwrap();
        let b = generate_schedule(&params).unwrap();
        assert_eq!(a, b);
        assert!(a.check_window_connectivity(2, true));
        for s in a.snapshots() {
            for i in 0..4 {
                assert_eq!(s.label(i, i), Some(Trusted));
            }
        }
    }

    #[test]
    fn generator_fails_without_trusted_edges() {
        let mut params = ScheduleParams::new(4, 2, 0.0, 0.5, 3);
        params.max_attempts = 50;
        assert_eq!(generate_schedule(&params).unwrap_err(), GraphError::RetryCapExceeded(50));
        params.trusted_density = 0.9;
        assert!(matches!(generate_schedule(&params), Err(GraphError::InvalidParams(_))));
    }

    #[test]
    fn schedule_file_round_trip() {
        let sched = generate_schedule(&ScheduleParams::new(5, 3, 0.5, 0.2, 9)).unwrap();
        let file = ScheduleFile::from_schedule(&sched);
        let json = serde_json::to_string(&file).unwrap();
        let back: ScheduleFile = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_schedule().unwrap(), sched);
        let bad = ScheduleFile { mode: ScheduleMode::Cycle, n: 2, snapshots: vec![vec![(0, 1, Trusted)]] };
        assert!(bad.to_schedule().is_err());
    }
}
