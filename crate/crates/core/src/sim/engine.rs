//! The seeded round loop.
//!
//! Each round runs four phases in order: send and corrupt, filter and
//! feedback, degree exchange, then weight update, mixing and descent. Round 0
//! only communicates; descent rounds are `1..=T`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::adversary::apply_attacks;
use crate::agent::{filter_phase, mix_and_descend, AgentState, DescentContext, RoundContext, RoundRecord};
use crate::graph::ScheduleMode;
use crate::linalg::Matrix;
use crate::metrics::{
    disagreement, fit_constants, path_variation, regret_bound, regret_increment, BoundConstants, FitInput,
    RegretLedger,
};
use crate::oracle::{LossSpec, QueryRegion};
use crate::protocol::{acceptance_feedback, assemble_matrix, duality_gap, out_degree, Payload};
use crate::rng;

use super::config::{ExperimentConfig, InitialEstimates};
use super::trace::{Trace, TraceRow};
use super::SimError;

/// Invariants measured while the run executes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantStats {
    pub rounds: usize,
    /// `max_t |Σ_i z_t[i] − 1|`
    pub max_weight_sum_error: f64,
    /// `max |Σ_j Ã_t[i,j] − 1|`
    pub max_row_sum_error: f64,
    /// `max_t ‖z_{t+1}ᵀ Ã_t − z_tᵀ‖_∞`
    pub max_duality_gap: f64,
    /// Mixed points `y_t^i` outside the receiver's safe interval.
    pub sandwich_violations: usize,
    /// Smallest positive mixing weight seen.
    pub min_mixing_weight: f64,
    /// Estimates outside the feasible set.
    pub infeasible_estimates: usize,
    /// Agent-rounds whose query count differed from `2d`.
    pub query_budget_violations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub config_hash: String,
    pub n: usize,
    pub d: usize,
    pub horizon: u64,
    pub filter_enabled: bool,
    pub initial_disagreement: f64,
    pub final_disagreement: f64,
    /// `final_disagreement ≤ 0.1 · disagreement at t = min(10, T)`
    pub consensus_reached: bool,
    pub regret: Vec<f64>,
    pub regret_over_t: Vec<f64>,
    pub xi1: f64,
    pub xi2: f64,
    pub lambda: Option<f64>,
    pub c: Option<f64>,
    pub constants: Option<BoundConstants>,
    pub regret_bound: Option<f64>,
    pub total_queries: u64,
    pub wall_time_secs: f64,
    pub corrupted_payloads: usize,
    pub corrupted_accepted: usize,
    pub min_trusted_in_degree: usize,
    pub invariants: InvariantStats,
    pub relaxed_invariants: Vec<String>,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
}

/// Everything a run produced.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub trace: Trace,
    /// `Ã_t` for `t = 0..=T`.
    pub matrices: Vec<Matrix>,
    /// `z_t` for `t = 0..=T+1`.
    pub z_history: Vec<Vec<f64>>,
    /// `x_t` for `t = 0..=T+1`.
    pub estimates: Vec<Vec<Vec<f64>>>,
    pub ledger: RegretLedger,
    /// `x_t^*` for `t = 1..=T+1`.
    pub minimizers: Vec<Vec<f64>>,
    /// One record per round, `t = 0..=T`.
    pub records: Vec<RoundRecord>,
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput, SimError> {
    cfg.validate()?;
    let loss = cfg.loss.build(cfg.d, cfg.seed)?;
    run_with_loss(cfg, loss)
}

/// Runs `cfg` with an arbitrary loss in place of the configured one.
pub fn run_with_loss(cfg: &ExperimentConfig, loss: LossSpec) -> Result<RunOutput, SimError> {
    let started = Instant::now();
    cfg.validate()?;
    let (n, d) = (cfg.n, cfg.d);
    if loss.n_agents() != n || loss.dim() != d {
        return Err(SimError::Config(format!(
            "loss is for {} agents in dimension {}, config has n = {n}, d = {d}",
            loss.n_agents(),
            loss.dim()
        )));
    }
    let schedule = cfg.schedule.build()?;
    if schedule.n() != n {
        return Err(SimError::Config(format!("schedule has {} agents, config has n = {n}", schedule.n())));
    }
    if schedule.mode() == ScheduleMode::ExplicitPerRound && (schedule.len() as u64) < cfg.horizon + 1 {
        return Err(SimError::Config(format!(
            "explicit schedule has {} snapshots but the run needs {} (rounds 0..=T)",
            schedule.len(),
            cfg.horizon + 1
        )));
    }
    cfg.attack.validate(&schedule, d).map_err(|e| SimError::Config(e.to_string()))?;

    let mut warnings = Vec::new();
    let mut relaxed = Vec::new();
    let window = cfg.connectivity_window.unwrap_or(schedule.len());
    if !schedule.check_window_connectivity(window, true) {
        let msg = format!("trusted edges are not strongly connected over every window of {window} rounds");
        if cfg.waive_connectivity {
            warnings.push(format!("{msg} (waived)"));
        } else {
            return Err(SimError::Config(msg));
        }
    }
    let set = &cfg.feasible_set;
    let c1 = cfg.difference.at(1);
    let enforce_region = cfg.enforce_query_region && cfg.filter_enabled;
    if cfg.enforce_query_region && !cfg.filter_enabled {
        relaxed.push("query-region: unfiltered mixing can leave X ⊕ B(c_1)".to_string());
    }
    if cfg.attack.corrupt_weights {
        relaxed.push("weight-conservation and duality: weights are corrupted on adversarial edges".to_string());
    }
    if !cfg.filter_enabled {
        warnings.push("filter disabled: every received payload is mixed".to_string());
    }
    let region = enforce_region.then_some(QueryRegion { set, radius: c1 });

    let mut states: Vec<AgentState> = match &cfg.initial {
        InitialEstimates::UniformOverSet => (0..n)
            .map(|i| {
                let mut r = rng::stream(cfg.seed, rng::STREAM_INIT, 0, i as u64);
                AgentState::initial(i, set.sample_uniform(&mut r), n)
            })
            .collect(),
        InitialEstimates::Explicit { points } => {
            points.iter().enumerate().map(|(i, p)| AgentState::initial(i, p.clone(), n)).collect()
        }
    };

    let horizon = cfg.horizon;
    let mut stats = InvariantStats { min_mixing_weight: f64::INFINITY, ..Default::default() };
    let mut trace = Trace::new(n, d);
    let mut ledger = RegretLedger::new();
    let mut matrices = Vec::with_capacity(horizon as usize + 1);
    let mut z_history = vec![states.iter().map(|s| s.z).collect::<Vec<_>>()];
    let mut estimates = vec![states.iter().map(|s| s.x.clone()).collect::<Vec<_>>()];
    let mut minimizers = Vec::with_capacity(horizon as usize + 1);
    let mut records = Vec::with_capacity(horizon as usize + 1);
    let mut total_queries = 0u64;
    let mut corrupted_payloads = 0;
    let mut corrupted_accepted = 0;
    let mut min_trusted_in_degree = usize::MAX;
    let note_weight_sum = |stats: &mut InvariantStats, z: &[f64]| {
        stats.max_weight_sum_error = stats.max_weight_sum_error.max((z.iter().sum::<f64>() - 1.0).abs());
    };
    note_weight_sum(&mut stats, &z_history[0]);

    for t in 0..=horizon {
        let snapshot = schedule.snapshot(t).expect("schedule covers every round");
        min_trusted_in_degree = min_trusted_in_degree.min(snapshot.min_trusted_in_degree());

        // Phase A: send, with corruption on adversarial edges.
        let outboxes: Vec<Payload> = states.iter().map(|s| Payload { sender: s.id, x: s.x.clone(), z: s.z }).collect();
        let delivery =
            apply_attacks(&outboxes, snapshot, &cfg.attack, t, cfg.seed).map_err(|source| SimError::Attack { t, source })?;

        // Phase B: thresholds, filtering and acceptance feedback.
        let phases = delivery
            .inboxes
            .iter()
            .map(|inbox| filter_phase(inbox, cfg.filter_enabled))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|source| SimError::Agent { t, source })?;
        let feedback = acceptance_feedback(phases.iter().enumerate().map(|(i, p)| (i, &p.filter)));

        // Phase C: out-degrees announced on the control channel.
        let degrees = out_degree(&feedback);

        // Phase D: weight update, mixing, difference estimate and descent.
        let ctx = RoundContext {
            set,
            descent: (t >= 1).then(|| DescentContext {
                t,
                alpha: cfg.step.at(t),
                c: cfg.difference.at(t),
                loss: &loss,
                region,
            }),
        };
        let mut next = Vec::with_capacity(n);
        let mut agents = Vec::with_capacity(n);
        for i in 0..n {
            let (state, round) = mix_and_descend(&states[i], &delivery.inboxes[i], &phases[i], &degrees, &ctx)
                .map_err(|source| SimError::Agent { t, source })?;
            next.push(state);
            agents.push(round);
        }
        let record = RoundRecord { t, agents };

        corrupted_payloads += delivery.corrupted.len();
        corrupted_accepted +=
            delivery.corrupted.iter().filter(|(j, i)| phases[*i].filter.accepted.contains(j)).count();

        let z_prev: Vec<f64> = states.iter().map(|s| s.z).collect();
        let z_next: Vec<f64> = next.iter().map(|s| s.z).collect();
        let mix = assemble_matrix(n, record.agents.iter().map(|a| (a.agent, &a.mix)));
        stats.rounds += 1;
        note_weight_sum(&mut stats, &z_next);
        stats.max_row_sum_error = stats.max_row_sum_error.max(mix.max_row_sum_error());
        stats.max_duality_gap = stats.max_duality_gap.max(duality_gap(&mix, &z_prev, &z_next));
        if let Some(w) = mix.min_positive_entry() {
            stats.min_mixing_weight = stats.min_mixing_weight.min(w);
        }
        for a in &record.agents {
            if cfg.filter_enabled && !a.interval.contains_approx(&a.y, 1e-12) {
                stats.sandwich_violations += 1;
            }
            if !set.contains(&a.x_next, 1e-9 * set.sup_norm().max(1.0)) {
                stats.infeasible_estimates += 1;
            }
            let expected = if t >= 1 { 2 * d } else { 0 };
            if a.queries != expected {
                stats.query_budget_violations += 1;
            }
        }
        total_queries += record.queries() as u64;

        if t >= 1 {
            let xs: Vec<Vec<f64>> = states.iter().map(|s| s.x.clone()).collect();
            let (excess, star) = regret_increment(&loss, set, t, &xs).map_err(SimError::Oracle)?;
            ledger.push(excess);
            minimizers.push(star);
            let cumulative = ledger.cumulative.last().expect("just pushed").clone();
            let s: Vec<usize> = record.agents.iter().map(|a| a.accepted.len()).collect();
            trace.rows.push(TraceRow {
                t,
                disagreement: disagreement(&xs),
                x: xs,
                z: z_prev,
                dout: record.out_degrees(),
                s,
                regret_over_t: cumulative.iter().map(|r| r / t as f64).collect(),
                regret: cumulative,
            });
        }

        matrices.push(mix);
        records.push(record);
        z_history.push(z_next);
        estimates.push(next.iter().map(|s| s.x.clone()).collect());
        states = next;
    }
    minimizers.push(loss.minimizer(horizon + 1, set).map_err(SimError::Oracle)?);
    if stats.min_mixing_weight == f64::INFINITY {
        stats.min_mixing_weight = 0.0;
    }

    let zs = z_history.iter().flatten().copied();
    let (z_min, z_max) = zs.fold((f64::INFINITY, 0.0f64), |(lo, hi), z| (lo.min(z), hi.max(z)));

    let x1 = &estimates[1];
    let fit = fit_constants(&FitInput { z_history: &z_history, matrices: &matrices[1..], loss: &loss, set, c1, x1 });
    let constants = match fit {
        Ok(k) => Some(k),
        Err(e) => {
            warnings.push(format!("bound constants unavailable: {e}"));
            None
        }
    };
    let bound = constants.as_ref().and_then(|k| {
        let theta = path_variation(&minimizers);
        match regret_bound(k, |t| cfg.step.at(t), |t| cfg.difference.at(t), &theta, horizon as usize) {
            Ok(b) => Some(b.value),
            Err(e) => {
                warnings.push(format!("regret bound unavailable: {e}"));
                None
            }
        }
    });

    let first = trace.rows.first().map_or(0.0, |r| r.disagreement);
    let last = trace.rows.last().map_or(0.0, |r| r.disagreement);
    let early = trace.rows[(horizon.min(10) - 1) as usize].disagreement;
    let regret = ledger.final_regret();
    let summary = RunSummary {
        schema_version: super::SCHEMA_VERSION,
        config_hash: cfg.hash(),
        n,
        d,
        horizon,
        filter_enabled: cfg.filter_enabled,
        initial_disagreement: first,
        final_disagreement: last,
        consensus_reached: last <= 0.1 * early,
        regret_over_t: regret.iter().map(|r| r / horizon as f64).collect(),
        regret,
        xi1: 1.0 / z_min,
        xi2: z_max,
        lambda: constants.as_ref().map(|k| k.lambda),
        c: constants.as_ref().map(|k| k.c),
        constants,
        regret_bound: bound,
        total_queries,
        wall_time_secs: started.elapsed().as_secs_f64(),
        corrupted_payloads,
        corrupted_accepted,
        min_trusted_in_degree,
        invariants: stats,
        relaxed_invariants: relaxed,
        warnings,
        notes: vec![
            "round 0 is communication only; regret and trace rows cover t = 1..=T".to_string(),
            "theta_t is the minimizer path length |x*_{t+1} - x*_t|".to_string(),
        ],
    };
    Ok(RunOutput { summary, trace, matrices, z_history, estimates, ledger, minimizers, records })
}

/// Writes `trace.csv` and `summary.json` into `dir`, creating it if needed.
pub fn write_outputs(output: &RunOutput, dir: &Path) -> Result<(PathBuf, PathBuf), SimError> {
    std::fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
    let trace_path = dir.join("trace.csv");
    let summary_path = dir.join("summary.json");
    output.trace.save(&trace_path)?;
    let json = serde_json::to_string_pretty(&output.summary).expect("summary serializes");
    std::fs::write(&summary_path, json + "\n").map_err(|e| SimError::io(&summary_path, e))?;
    Ok((trace_path, summary_path))
}
