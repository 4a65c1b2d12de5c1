//! Invariant suites behind the `verify` command.
//!
//! Every suite returns one [`Check`] per property with the measured value and
//! the threshold it was held to. Failures are reported, never raised.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{apply_attacks, AttackPlan, AttackStrategy};
use crate::agent::StepSchedule;
use crate::graph::{contraction_fit, generate_schedule, products_from, ScheduleFile, ScheduleParams};
use crate::linalg::{distance, dot, sub, Matrix};
use crate::metrics::dynamic_regret;
use crate::oracle::{
    deterministic_difference, DifferenceSchedule, DriftRule, FeasibleSet, TargetPath, TrackingQuadratic,
};
use crate::protocol::{mix_row, resilient_filter, safety_threshold, update_weight, MixRow, Payload, ProtocolError, WeightInput};
use crate::AgentId;

use super::config::{ExperimentConfig, InitialEstimates, LossConfig, ScheduleSpec, SCHEMA_VERSION};
use super::trace::Trace;
use super::{run, RunOutput, SimError};

pub const SUITES: &[&str] =
    &["stochasticity", "mutation", "zeroth-order", "projection", "contraction", "adversary", "determinism", "ledger"];

const SEED: u64 = 0x5eed_2024;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub suite: String,
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
}

impl Check {
    /// Passes when `measured <= threshold`.
    fn at_most(suite: &str, name: &str, measured: f64, threshold: f64) -> Self {
        Self { suite: suite.into(), name: name.into(), passed: measured <= threshold, measured, threshold }
    }

    fn at_least(suite: &str, name: &str, measured: f64, threshold: f64) -> Self {
        Self { suite: suite.into(), name: name.into(), passed: measured >= threshold, measured, threshold }
    }

    fn failed(suite: &str, name: &str, why: impl std::fmt::Display) -> Self {
        Self { suite: suite.into(), name: format!("{name}: {why}"), passed: false, measured: f64::NAN, threshold: f64::NAN }
    }
}

/// Runs one named suite, or every suite for `"all"`.
pub fn run_suite(name: &str) -> Result<Vec<Check>, SimError> {
    let checks = match name {
        "all" => return Ok(SUITES.iter().flat_map(|s| run_suite(s).expect("known suite")).collect()),
        "stochasticity" => stochasticity_suite(20, 50),
        "mutation" => mutation_suite(broken_mix_row),
        "zeroth-order" => zeroth_order_suite(100),
        "projection" => projection_suite(1000, 200),
        "contraction" => contraction_suite(10),
        "adversary" => adversary_suite(50),
        "determinism" => determinism_suite(),
        "ledger" => ledger_suite(),
        other => return Err(SimError::Config(format!("unknown suite {other:?}; expected one of {SUITES:?} or \"all\""))),
    };
    Ok(checks)
}

/// Small attacked configuration `index` of the built-in family on the cube
/// `[-50, 50]^d`: `n` cycles through `2..=8`, periods through `1..=3`, and the
/// attack through every strategy.
pub fn random_config(index: usize, horizon: u64) -> ExperimentConfig {
    let n = 2 + index % 7;
    let d = 1 + index % 3;
    let period = 1 + index % 3;
    let params = ScheduleParams {
        window: Some(period),
        normal_density: 0.15,
        ..ScheduleParams::new(n, period, 0.5, 0.2, SEED ^ index as u64)
    };
    let attack = match index % 5 {
        0 => AttackStrategy::Amplify { factor: 10.0 },
        1 => AttackStrategy::AdditiveNoise { scale: 5.0 },
        2 => AttackStrategy::SignFlip,
        3 => AttackStrategy::OutOfRange { margin: 1.0 },
        _ => AttackStrategy::StealthMidpoint,
    };
    ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        n,
        d,
        horizon,
        seed: SEED.wrapping_add(index as u64),
        schedule: ScheduleSpec::Generated(params),
        loss: LossConfig::TrackingQuadratic {
            zeta1: vec![1.0; n],
            zeta2: vec![1.0; n],
            target: TargetPath::InverseT { scale: 20.0 },
            drift: DriftRule::Uniform01,
        },
        feasible_set: FeasibleSet::cube(vec![-50.0; d], vec![50.0; d]),
        step: StepSchedule::InverseT { a: 1.0 },
        difference: DifferenceSchedule::InverseT { c: 1.0 },
        attack: AttackPlan::uniform(attack),
        filter_enabled: true,
        initial: InitialEstimates::UniformOverSet,
        waive_connectivity: false,
        connectivity_window: Some(period),
        enforce_query_region: true,
        output: None,
    }
}

/// Conservation, row-stochasticity and duality over `configs` attacked runs of
/// `horizon` descent rounds each.
pub fn stochasticity_suite(configs: usize, horizon: u64) -> Vec<Check> {
    const S: &str = "stochasticity";
    let (mut rounds, mut weight, mut row, mut gap, mut sandwich, mut infeasible, mut budget) = (0, 0.0f64, 0.0f64, 0.0f64, 0, 0, 0);
    for k in 0..configs {
        let out = match run(&random_config(k, horizon)) {
            Ok(out) => out,
            Err(e) => return vec![Check::failed(S, &format!("config {k}"), e)],
        };
        let s = &out.summary.invariants;
        rounds += s.rounds;
        weight = weight.max(s.max_weight_sum_error);
        row = row.max(s.max_row_sum_error);
        gap = gap.max(s.max_duality_gap);
        sandwich += s.sandwich_violations;
        infeasible += s.infeasible_estimates;
        budget += s.query_budget_violations;
    }
    vec![
        Check::at_least(S, "rounds simulated", rounds as f64, (configs as u64 * (horizon + 1)) as f64),
        Check::at_most(S, "max |sum z - 1|", weight, 1e-12),
        Check::at_most(S, "max |row sum - 1|", row, 1e-12),
        Check::at_most(S, "max duality gap", gap, 1e-12),
        Check::at_most(S, "mixed points outside safe interval", sandwich as f64, 0.0),
        Check::at_most(S, "estimates outside X", infeasible as f64, 0.0),
        Check::at_most(S, "rounds with query count != 2d", budget as f64, 0.0),
    ]
}

pub type Mixer = fn(&BTreeMap<AgentId, WeightInput>, f64) -> Result<MixRow, ProtocolError>;

/// Mutation fixture: forgets to divide by the sender's out-degree.
pub fn broken_mix_row(inputs: &BTreeMap<AgentId, WeightInput>, z_next: f64) -> Result<MixRow, ProtocolError> {
    Ok(MixRow { weights: inputs.iter().map(|(&j, w)| (j, w.z / z_next)).collect() })
}

/// Worst row-sum error of `mixer` on the weight inputs of a real run.
pub fn row_sum_error(mixer: Mixer, out: &RunOutput) -> Result<f64, ProtocolError> {
    let mut worst = 0.0f64;
    for record in &out.records {
        let z = &out.z_history[record.t as usize];
        let degrees = record.out_degrees();
        for a in &record.agents {
            let inputs: BTreeMap<AgentId, WeightInput> =
                a.accepted.iter().map(|&j| (j, WeightInput { z: z[j], d: degrees[j] })).collect();
            let z_next = update_weight(inputs.values())?;
            worst = worst.max((mixer(&inputs, z_next)?.sum() - 1.0).abs());
        }
    }
    Ok(worst)
}

/// Row-stochasticity with the reference mixer and with `mutant`; the suite
/// passes only when the reference is clean and the mutant is caught.
pub fn mutation_suite(mutant: Mixer) -> Vec<Check> {
    const S: &str = "mutation";
    let out = match run(&random_config(4, 100)) {
        Ok(out) => out,
        Err(e) => return vec![Check::failed(S, "fixture run", e)],
    };
    let measure = |m: Mixer| row_sum_error(m, &out).unwrap_or(f64::INFINITY);
    vec![
        Check::at_most(S, "reference mix_row row-sum error", measure(mix_row), 1e-12),
        Check::at_least(S, "mutant mix_row row-sum error detected", measure(mutant), 1e-12),
    ]
}

fn uniform_vec(rng: &mut impl Rng, d: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(lo..hi)).collect()
}

/// `c ∈ (0, 1]`.
fn difference_radius(rng: &mut impl Rng) -> f64 {
    1.0 - rng.random::<f64>()
}

/// Central differences against analytic gradients on random tracking
/// quadratics, and against the remainder bound on `Σ_k a_k x_k⁴` over the box
/// `[-2, 2]^d` inflated by one.
pub fn zeroth_order_suite(instances: usize) -> Vec<Check> {
    const S: &str = "zeroth-order";
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut quad_err = 0.0f64;
    for k in 0..instances {
        let d = rng.random_range(1..=5);
        let n = rng.random_range(1..=4);
        let zeta1 = uniform_vec(&mut rng, n, 0.0, 2.0);
        let zeta2 = uniform_vec(&mut rng, n, 0.1, 2.0);
        let target = TargetPath::Fixed { point: uniform_vec(&mut rng, d, -5.0, 5.0) };
        let drift = DriftRule::Fixed { vectors: (0..n).map(|_| uniform_vec(&mut rng, d, 0.0, 1.0)).collect() };
        let loss = match TrackingQuadratic::new(zeta1, zeta2, target, drift, d, k as u64) {
            Ok(l) => l,
            Err(e) => return vec![Check::failed(S, "instance", e)],
        };
        let y = uniform_vec(&mut rng, d, -5.0, 5.0);
        let c = difference_radius(&mut rng);
        let agent = rng.random_range(0..n);
        let h = deterministic_difference(|x| loss.value(agent, 1, x), &y, c, None).map(|e| e.h);
        let g = loss.gradient(agent, 1, &y);
        quad_err = match (h, g) {
            (Ok(h), Ok(g)) => quad_err.max(distance(&h, &g)),
            _ => f64::INFINITY,
        };
    }

    let mut quartic_ratio = 0.0f64;
    let radius = 3.0;
    for _ in 0..instances {
        let d = rng.random_range(1..=5);
        let a = uniform_vec(&mut rng, d, 0.1, 3.0);
        let y = uniform_vec(&mut rng, d, -2.0, 2.0);
        let c = difference_radius(&mut rng);
        let l_hess = 12.0 * a.iter().cloned().fold(0.0, f64::max) * radius * radius;
        let f = |x: &[f64]| Ok(x.iter().zip(&a).map(|(v, ak)| ak * v.powi(4)).sum());
        let grad: Vec<f64> = y.iter().zip(&a).map(|(v, ak)| 4.0 * ak * v.powi(3)).collect();
        let err = match deterministic_difference(f, &y, c, None) {
            Ok(e) => distance(&e.h, &grad),
            Err(_) => f64::INFINITY,
        };
        quartic_ratio = quartic_ratio.max(err / (2.0 * (d as f64).sqrt() * l_hess * c));
    }
    vec![
        Check::at_most(S, "quadratic max |h - grad f|", quad_err, 1e-9),
        Check::at_most(S, "quartic max |h - grad f| / (2 sqrt(d) L_H c)", quartic_ratio, 1.0),
    ]
}

fn random_set(rng: &mut impl Rng, ball: bool) -> FeasibleSet {
    let d = rng.random_range(1..=4);
    let center = uniform_vec(rng, d, -3.0, 3.0);
    if ball {
        FeasibleSet::ball(center, rng.random_range(0.5..5.0))
    } else {
        let half = uniform_vec(rng, d, 0.1, 4.0);
        let lo = center.iter().zip(&half).map(|(c, h)| c - h).collect();
        let hi = center.iter().zip(&half).map(|(c, h)| c + h).collect();
        FeasibleSet::cube(lo, hi)
    }
}

/// Literal mean-minimality slack `Σ‖x^i − x̄‖ − Σ‖x^i − x‖` and its squared
/// counterpart for one point set and competitor.
pub fn mean_minimality_slack(points: &[Vec<f64>], competitor: &[f64]) -> (f64, f64) {
    let m = points.len() as f64;
    let d = competitor.len();
    let mean: Vec<f64> = (0..d).map(|k| points.iter().map(|p| p[k]).sum::<f64>() / m).collect();
    let literal = points.iter().map(|p| distance(p, &mean) - distance(p, competitor)).sum();
    let squared = points.iter().map(|p| distance(p, &mean).powi(2) - distance(p, competitor).powi(2)).sum();
    (literal, squared)
}

/// Non-expansiveness and the obtuse-angle inequality on `pairs` random pairs per
/// shape, then mean-minimality on `point_sets` random point sets.
pub fn projection_suite(pairs: usize, point_sets: usize) -> Vec<Check> {
    const S: &str = "projection";
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 0xa11);
    let mut checks = Vec::new();
    for (shape, ball) in [("ball", true), ("box", false)] {
        let (mut expand, mut angle) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for _ in 0..pairs {
            let set = random_set(&mut rng, ball);
            let d = set.dim();
            let x = uniform_vec(&mut rng, d, -10.0, 10.0);
            let v = uniform_vec(&mut rng, d, -10.0, 10.0);
            let (px, pv) = (set.project(&x), set.project(&v));
            expand = expand.max(distance(&px, &pv) - distance(&x, &v));
            let inside = set.sample_uniform(&mut rng);
            angle = angle.max(dot(&sub(&px, &x), &sub(&px, &inside)));
        }
        checks.push(Check::at_most(S, &format!("{shape}: max |Px - Py| - |x - y|"), expand, 1e-12));
        checks.push(Check::at_most(S, &format!("{shape}: max <Px - x, Px - y>, y in X"), angle, 1e-12));
    }
    let (mut literal, mut squared, mut violated) = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0);
    for _ in 0..point_sets {
        let d = rng.random_range(1..=4);
        let m = rng.random_range(2..=8);
        let points: Vec<Vec<f64>> = (0..m).map(|_| uniform_vec(&mut rng, d, -10.0, 10.0)).collect();
        let competitor = uniform_vec(&mut rng, d, -10.0, 10.0);
        let (l, s) = mean_minimality_slack(&points, &competitor);
        literal = literal.max(l);
        violated += usize::from(l > 1e-12);
        squared = squared.max(s);
    }
    checks.push(Check::at_most(S, "mean minimality: point sets violating the literal form", violated as f64, 0.0));
    checks.push(Check::at_most(S, "mean minimality: max literal slack", literal, 1e-12));
    checks.push(Check::at_most(S, "mean minimality: max squared slack", squared, 1e-9));
    checks
}

/// Products of the assembled matrices of attacked runs on `schedules`
/// generated schedules (window at most 3), plus a constant two-agent control.
pub fn contraction_suite(schedules: usize) -> Vec<Check> {
    const S: &str = "contraction";
    let mut spread_rise = 0.0f64;
    let mut lambda_max = 0.0f64;
    for k in 0..schedules {
        let fit = run(&random_config(k + 100, 80)).map_err(|e| e.to_string()).and_then(|out| {
            let products = products_from(&out.matrices[1..], 0, 60).map_err(|e| e.to_string())?;
            for w in products.windows(2) {
                spread_rise = spread_rise.max(w[1].matrix.max_row_spread() - w[0].matrix.max_row_spread());
            }
            contraction_fit(&products).map_err(|e| e.to_string())
        });
        match fit {
            Ok(f) => lambda_max = lambda_max.max(f.lambda_hat),
            Err(e) => return vec![Check::failed(S, &format!("schedule {k}"), e)],
        }
    }
    let control = Matrix::from_rows(&[vec![0.75, 0.25], vec![0.25, 0.75]]).expect("square");
    let control_lambda = products_from(&vec![control; 30], 0, 30)
        .and_then(|p| contraction_fit(&p))
        .map_or(f64::NAN, |f| f.lambda_hat);
    vec![
        Check::at_most(S, "max increase of row spread along products", spread_rise, 1e-12),
        Check::at_most(S, "max lambda_hat", lambda_max, 1.0 - f64::EPSILON),
        Check::at_most(S, "control |lambda_hat - 0.5|", (control_lambda - 0.5).abs(), 0.05),
    ]
}

/// Trusted-edge integrity and the filter's detectability split on random
/// rounds over generated snapshots.
pub fn adversary_suite(rounds: usize) -> Vec<Check> {
    const S: &str = "adversary";
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 0xadd);
    let (mut tampered, mut out_of_range_accepted, mut stealth_rejected, mut attacked) = (0, 0, 0, 0);
    for k in 0..rounds {
        let n = 2 + k % 7;
        let d = 1 + k % 3;
        let params = ScheduleParams::new(n, 1, 0.5, 0.3, SEED ^ k as u64);
        let schedule = match generate_schedule(&params) {
            Ok(s) => s,
            Err(e) => return vec![Check::failed(S, "schedule", e)],
        };
        let snapshot = schedule.snapshot(0).expect("one snapshot");
        let outboxes: Vec<Payload> = (0..n)
            .map(|i| Payload { sender: i, x: uniform_vec(&mut rng, d, -10.0, 10.0), z: 1.0 / n as f64 })
            .collect();
        let strategies = [
            AttackStrategy::Amplify { factor: 100.0 },
            AttackStrategy::AdditiveNoise { scale: 3.0 },
            AttackStrategy::OutOfRange { margin: 0.5 },
            AttackStrategy::StealthMidpoint,
        ];
        for strategy in strategies {
            let plan = AttackPlan::uniform(strategy.clone());
            let delivery = match apply_attacks(&outboxes, snapshot, &plan, k as u64, SEED) {
                Ok(d) => d,
                Err(e) => return vec![Check::failed(S, "delivery", e)],
            };
            attacked += delivery.corrupted.len();
            for inbox in &delivery.inboxes {
                tampered += inbox.trusted.iter().filter(|j| inbox.entries[j] != outboxes[**j]).count();
                let Ok(interval) = safety_threshold(inbox) else {
                    tampered += 1;
                    continue;
                };
                let accepted = resilient_filter(inbox, &interval).accepted;
                for &(j, i) in delivery.corrupted.iter().filter(|(_, i)| *i == inbox.receiver) {
                    debug_assert_eq!(i, inbox.receiver);
                    match strategy {
                        AttackStrategy::OutOfRange { .. } if accepted.contains(&j) => out_of_range_accepted += 1,
                        AttackStrategy::StealthMidpoint if !accepted.contains(&j) => stealth_rejected += 1,
                        _ => {}
                    }
                }
            }
        }
    }
    vec![
        Check::at_least(S, "corrupted payloads exercised", attacked as f64, 1.0),
        Check::at_most(S, "trusted payloads altered", tampered as f64, 0.0),
        Check::at_most(S, "out-of-range payloads accepted", out_of_range_accepted as f64, 0.0),
        Check::at_most(S, "stealth-midpoint payloads rejected", stealth_rejected as f64, 0.0),
    ]
}

/// Byte equality of traces and generated schedules across repeated runs.
pub fn determinism_suite() -> Vec<Check> {
    const S: &str = "determinism";
    let cfg = random_config(1, 200);
    let traces: Result<Vec<String>, SimError> = (0..2).map(|_| run(&cfg).map(|o| o.trace.to_csv_string())).collect();
    let schedule = |_| match &cfg.schedule {
        ScheduleSpec::Generated(p) => generate_schedule(p).map(|s| serde_json::to_string(&ScheduleFile::from_schedule(&s)).expect("serializes")),
        ScheduleSpec::Explicit(f) => Ok(serde_json::to_string(f).expect("serializes")),
    };
    let schedules: Result<Vec<String>, _> = (0..2).map(schedule).collect();
    let differs = |v: &[String]| if v[0] == v[1] { 0.0 } else { 1.0 };
    let mut checks = Vec::new();
    match traces {
        Ok(t) => checks.push(Check::at_most(S, "trace bytes differ between runs", differs(&t), 0.0)),
        Err(e) => checks.push(Check::failed(S, "trace", e)),
    }
    match schedules {
        Ok(s) => checks.push(Check::at_most(S, "schedule bytes differ between generations", differs(&s), 0.0)),
        Err(e) => checks.push(Check::failed(S, "schedule", e)),
    }
    checks
}

/// Regret recomputed from a re-read trace against the online ledger.
pub fn ledger_suite() -> Vec<Check> {
    const S: &str = "ledger";
    let cfg = random_config(2, 150);
    let result = run(&cfg).and_then(|out| {
        let trace = Trace::read_from(out.trace.to_csv_string().as_bytes())?;
        let loss = cfg.loss.build(cfg.d, cfg.seed)?;
        let offline = dynamic_regret(&trace.trajectory(), &loss, &cfg.feasible_set, trace.rows.len())?.final_regret();
        let online = out.ledger.final_regret();
        let from_trace = &trace.rows[trace.rows.len() - 1].regret;
        let gap = offline
            .iter()
            .zip(&online)
            .chain(from_trace.iter().zip(&online))
            .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
            .fold(0.0, f64::max);
        Ok(gap)
    });
    match result {
        Ok(gap) => vec![Check::at_most(S, "relative gap between recomputed and online regret", gap, 1e-9)],
        Err(e) => vec![Check::failed(S, "recompute", e)],
    }
}
