use std::path::PathBuf;

use rezo_core::adversary::{AttackPlan, AttackStrategy};
use rezo_core::graph::{EdgeLabel, ScheduleFile, ScheduleMode, ScheduleParams};
use rezo_core::sim::config::{InitialEstimates, LossConfig};
use rezo_core::sim::verify::random_config;
use rezo_core::sim::{gen_schedule, report, run, trace, write_outputs, ExperimentConfig, ScheduleSpec, Trace};

fn shipped_default() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.json")
}

#[test]
fn shipped_config_is_the_default_reproduction() {
    let cfg = ExperimentConfig::load(&shipped_default()).unwrap();
    assert_eq!(cfg, ExperimentConfig::default_reproduction());
}

#[test]
fn configs_round_trip_through_json() {
    let mut configs: Vec<ExperimentConfig> = (0..12).map(|k| random_config(k, 30)).collect();
    let mut custom = ExperimentConfig::default_reproduction();
    custom.filter_enabled = false;
    custom.initial = InitialEstimates::Explicit { points: vec![vec![1.0, 2.0]; 4] };
    custom.connectivity_window = Some(3);
    custom.output = Some(PathBuf::from("elsewhere"));
    configs.push(custom);
    for cfg in configs {
        let text = cfg.to_json_pretty();
        let back = ExperimentConfig::from_json(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_json_pretty(), text);
    }
}

#[test]
fn trace_has_one_complete_row_per_round() {
    let cfg = random_config(6, 40);
    let out = run(&cfg).unwrap();
    let text = out.trace.to_csv_string();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header, trace::header(cfg.n, cfg.d));
    assert_eq!(header.len(), 2 + cfg.n * (cfg.d + 5));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len() as u64, cfg.horizon);
    for (k, row) in rows.iter().enumerate() {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells.len(), header.len());
        assert_eq!(cells[0], (k + 1).to_string());
        assert!(cells.iter().all(|c| !c.is_empty()));
    }
}

#[test]
fn smallest_run_has_a_warm_up_and_one_round() {
    let mut cfg = ExperimentConfig::default_reproduction();
    cfg.n = 1;
    cfg.horizon = 1;
    cfg.schedule = ScheduleSpec::Explicit(ScheduleFile { mode: ScheduleMode::Cycle, n: 1, snapshots: vec![vec![]] });
    cfg.loss = LossConfig::TrackingQuadratic {
        zeta1: vec![1.0],
        zeta2: vec![1.0],
        target: rezo_core::oracle::TargetPath::InverseT { scale: 50.0 },
        drift: rezo_core::oracle::DriftRule::Uniform01,
    };
    let out = run(&cfg).unwrap();
    assert_eq!(out.records.len(), 2);
    assert_eq!(out.trace.rows.len(), 1);
    assert_eq!(out.summary.total_queries, 4);
    assert_eq!(out.trace.rows[0].disagreement, 0.0);
    assert_eq!(out.trace.rows[0].z, vec![1.0]);
    assert!(out.summary.warnings.iter().any(|w| w.contains("bound constants")));
    let text = out.trace.to_csv_string();
    assert!(text.starts_with("t,x1_1,x1_2,z1,dout1,s1,regret1,regret_over_t1,disagreement\n1,"));
}

#[test]
fn filter_is_transparent_without_attacks_on_trusted_graphs() {
    let mut cfg = ExperimentConfig::default_reproduction();
    cfg.horizon = 300;
    let edges = (0..4).flat_map(|j| (0..4).filter(move |&i| i != j).map(move |i| (j + 1, i + 1, EdgeLabel::Trusted)));
    cfg.schedule =
        ScheduleSpec::Explicit(ScheduleFile { mode: ScheduleMode::Cycle, n: 4, snapshots: vec![edges.collect()] });
    cfg.attack = AttackPlan::none();
    let filtered = run(&cfg).unwrap();
    cfg.filter_enabled = false;
    let open = run(&cfg).unwrap();
    assert_eq!(filtered.estimates, open.estimates);
    assert_eq!(filtered.trace.to_csv_string(), open.trace.to_csv_string());
}

#[test]
fn unfiltered_amplified_run_completes_and_is_flagged() {
    let mut cfg = ExperimentConfig::default_reproduction();
    cfg.attack = AttackPlan::uniform(AttackStrategy::Amplify { factor: 100.0 });
    cfg.filter_enabled = false;
    let out = run(&cfg).unwrap();
    assert!(out.summary.warnings.iter().any(|w| w.contains("filter disabled")));
    assert!(!out.summary.relaxed_invariants.is_empty());
    assert!(out.summary.corrupted_accepted > 0);
    assert!(out.summary.final_disagreement > 0.1);
}

#[test]
fn report_of_the_default_run() {
    let out = run(&ExperimentConfig::default_reproduction()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (trace_path, summary_path) = write_outputs(&out, dir.path()).unwrap();
    assert!(summary_path.exists());
    let trace = Trace::load(&trace_path).unwrap();
    let csv = report::aligned_csv(&trace).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(header.matches("regret_over_t").count(), 4);
    assert_eq!(csv.lines().count(), 2001);
    let stats = report::summarize(&trace).unwrap();
    assert!(stats.sublinearity.iter().all(|s| s.unwrap().decreasing_tail));
    assert_eq!(stats.final_disagreement, out.summary.final_disagreement);
}

#[test]
fn schedule_generation_examples() {
    let dense = ScheduleParams::new(4, 2, 0.7, 0.1, 11);
    let a = gen_schedule(&dense).unwrap();
    assert_eq!(a, gen_schedule(&dense).unwrap());
    let schedule = a.to_schedule().unwrap();
    assert!(schedule.check_window_connectivity(2, true) && schedule.check_window_connectivity(2, false));
    assert!(gen_schedule(&ScheduleParams::new(4, 2, 0.0, 0.5, 11)).is_err());
}

#[test]
fn disconnected_trusted_edges_need_a_waiver() {
    let mut cfg = ExperimentConfig::default_reproduction();
    cfg.horizon = 20;
    cfg.schedule = ScheduleSpec::Explicit(ScheduleFile {
        mode: ScheduleMode::Cycle,
        n: 4,
        snapshots: vec![vec![(1, 2, EdgeLabel::Trusted), (2, 3, EdgeLabel::Normal)]],
    });
    let err = run(&cfg).unwrap_err();
    assert!(err.is_validation(), "{err}");
    cfg.waive_connectivity = true;
    let out = run(&cfg).unwrap();
    assert!(out.summary.warnings.iter().any(|w| w.contains("waived")));
}

#[test]
fn explicit_schedules_must_cover_every_round() {
    let mut cfg = ExperimentConfig::default_reproduction();
    cfg.horizon = 5;
    let ScheduleSpec::Explicit(file) = &mut cfg.schedule else { unreachable!() };
    file.mode = ScheduleMode::ExplicitPerRound;
    assert!(run(&cfg).unwrap_err().is_validation());
}
