//! Experiment configuration: one JSON file fully determines a run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adversary::{AttackPlan, AttackStrategy};
use crate::agent::StepSchedule;
use crate::graph::{generate_schedule, GraphSchedule, ScheduleFile, ScheduleParams};
use crate::oracle::{DifferenceSchedule, DriftRule, FeasibleSet, LossSpec, TargetPath, TrackingQuadratic};

use super::SimError;

pub const SCHEMA_VERSION: u32 = 1;

/// Where the graph schedule comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum ScheduleSpec {
    Explicit(ScheduleFile),
    Generated(ScheduleParams),
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<GraphSchedule, SimError> {
        let schedule = match self {
            ScheduleSpec::Explicit(file) => file.to_schedule()?,
            ScheduleSpec::Generated(params) => generate_schedule(params)?,
        };
        Ok(schedule)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum LossConfig {
    TrackingQuadratic { zeta1: Vec<f64>, zeta2: Vec<f64>, target: TargetPath, drift: DriftRule },
}

impl LossConfig {
    pub fn build(&self, d: usize, seed: u64) -> Result<LossSpec, SimError> {
        match self {
            LossConfig::TrackingQuadratic { zeta1, zeta2, target, drift } => Ok(LossSpec::Tracking(TrackingQuadratic::new(
                zeta1.clone(),
                zeta2.clone(),
                target.clone(),
                drift.clone(),
                d,
                seed,
            )?)),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialEstimates {
    /// i.i.d. uniform over the feasible set, from the `init` stream.
    #[default]
    UniformOverSet,
    Explicit { points: Vec<Vec<f64>> },
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub n: usize,
    pub d: usize,
    /// Number of descent rounds `T`; a communication-only round 0 precedes them.
    #[serde(rename = "T")]
    pub horizon: u64,
    pub seed: u64,
    pub schedule: ScheduleSpec,
    pub loss: LossConfig,
    pub feasible_set: FeasibleSet,
    pub step: StepSchedule,
    pub difference: DifferenceSchedule,
    #[serde(default)]
    pub attack: AttackPlan,
    #[serde(default = "yes")]
    pub filter_enabled: bool,
    #[serde(default)]
    pub initial: InitialEstimates,
    /// Run even if the schedule fails the trusted-window connectivity check.
    #[serde(default)]
    pub waive_connectivity: bool,
    /// Window for the connectivity check; defaults to the schedule length.
    #[serde(default)]
    pub connectivity_window: Option<usize>,
    /// Treat queries outside `X ⊕ B(c_1)` as errors. Ignored without the filter.
    #[serde(default = "yes")]
    pub enforce_query_region: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Four agents in the plane tracking `ξ_t = 50/t · 1` with uniform drift,
    /// `α_t = c_t = 1/t` on `ball(0, 100)`, two alternating generated topologies
    /// with adversarial edges, and `amplify(10)` on every adversarial edge.
    pub fn default_reproduction() -> Self {
        let params = default_schedule_params();
        let schedule = generate_schedule(&params).expect("default schedule parameters are feasible");
        Self {
            schema_version: SCHEMA_VERSION,
            n: 4,
            d: 2,
            horizon: 2000,
            seed: 20240601,
            schedule: ScheduleSpec::Explicit(ScheduleFile::from_schedule(&schedule)),
            loss: LossConfig::TrackingQuadratic {
                zeta1: vec![1.0; 4],
                zeta2: vec![1.0; 4],
                target: TargetPath::InverseT { scale: 50.0 },
                drift: DriftRule::Uniform01,
            },
            feasible_set: FeasibleSet::ball(vec![0.0, 0.0], 100.0),
            step: StepSchedule::InverseT { a: 1.0 },
            difference: DifferenceSchedule::InverseT { c: 1.0 },
            attack: AttackPlan::uniform(AttackStrategy::Amplify { factor: 10.0 }),
            filter_enabled: true,
            initial: InitialEstimates::UniformOverSet,
            waive_connectivity: false,
            connectivity_window: None,
            enforce_query_region: true,
            output: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(SimError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON serialization.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Structural checks that need no schedule generation.
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.n == 0 || self.d == 0 || self.horizon == 0 {
            return bad("n, d and T must all be at least 1".into());
        }
        if self.feasible_set.dim() != self.d {
            return bad(format!("feasible set has dimension {}, expected {}", self.feasible_set.dim(), self.d));
        }
        self.feasible_set.validate()?;
        self.step.validate().map_err(SimError::Config)?;
        self.difference.validate()?;
        if let StepSchedule::Theorem2 { sigma, n } = &self.step {
            if *n != self.n {
                return bad(format!("theorem2 step schedule uses n = {n}, config has n = {}", self.n));
            }
            if !(*sigma > 0.0) {
                return bad("theorem2 step schedule needs sigma > 0".into());
            }
        }
        let LossConfig::TrackingQuadratic { zeta1, .. } = &self.loss;
        if zeta1.len() != self.n {
            return bad(format!("loss has {} agents, config has n = {}", zeta1.len(), self.n));
        }
        if let InitialEstimates::Explicit { points } = &self.initial {
            if points.len() != self.n || points.iter().any(|p| p.len() != self.d) {
                return bad("explicit initial estimates need n points of dimension d".into());
            }
            if let Some(p) = points.iter().find(|p| !self.feasible_set.contains(p, 1e-12)) {
                return bad(format!("initial estimate {p:?} lies outside the feasible set"));
            }
        }
        if self.connectivity_window == Some(0) {
            return bad("connectivity_window must be positive".into());
        }
        Ok(())
    }
}

pub fn default_schedule_params() -> ScheduleParams {
    ScheduleParams {
        n: 4,
        period: 2,
        trusted_density: 0.35,
        adversarial_density: 0.2,
        normal_density: 0.2,
        window: Some(2),
        min_adversarial_per_snapshot: 1,
        seed: 5,
        max_attempts: 1000,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = ExperimentConfig::default_reproduction();
        cfg.validate().unwrap();
        let back = ExperimentConfig::from_json(&cfg.to_json_pretty()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        let schedule = cfg.schedule.build().unwrap();
        assert_eq!(schedule.len(), 2);
        assert!(schedule.snapshots().iter().all(|s| s.adversarial_edges().count() >= 1));
        assert!(schedule.check_window_connectivity(2, true));
    }

    #[test]
    fn rejects_bad_configs() {
        let mut cfg = ExperimentConfig::default_reproduction();
        cfg.schema_version = 99;
        assert!(ExperimentConfig::from_json(&cfg.to_json_pretty()).is_err());
        let mut cfg = ExperimentConfig::default_reproduction();
        cfg.d = 3;
        assert!(cfg.validate().is_err());
        let text = ExperimentConfig::default_reproduction().to_json_pretty().replacen('{', "{\"bogus\": 1,", 1);
        assert!(ExperimentConfig::from_json(&text).is_err());
    }
}
