use std::path::Path;

use oms_core::benchmarks::{BenchmarkFamily, BenchmarkSpec};
use oms_core::harness::{
    aggregate, emit_report, read_seed_csv, report_from_dir, run_experiment, summarize_rows, ExperimentConfig,
    HarnessError, TraceEvent, TRACE_HEADER,
};

fn chain_config(seeds: Vec<u64>, horizon: u64, output: &Path) -> ExperimentConfig {
    ExperimentConfig {
        benchmark: BenchmarkSpec {
            family: BenchmarkFamily::Chain {
                length: 2,
                p_forward: 0.35,
                p_backward: 0.05,
                left_reward: 0.05,
                right_reward: 1.0,
            },
            seed: 0,
        },
        delta: 0.05,
        horizon,
        seeds,
        output: output.to_path_buf(),
        log_stride: 1,
        workers: Some(2),
    }
}

fn aliased_config(seeds: Vec<u64>, horizon: u64, output: &Path) -> ExperimentConfig {
    ExperimentConfig {
        benchmark: BenchmarkSpec {
            family: BenchmarkFamily::AliasedMdp {
                states: 4,
                actions: 2,
                merge: vec![vec![0, 1]],
            },
            seed: 3,
        },
        ..chain_config(seeds, horizon, output)
    }
}

#[test]
fn single_model_chain_smoke_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = chain_config(vec![0], 10_000, dir.path());
    let result = run_experiment(&cfg).unwrap();
    let trace = &result.traces[0];
    assert_eq!(trace.rows.len(), 10_000);
    let last = trace.rows.last().unwrap();
    assert_eq!(last.t, 10_000);
    assert!(last.regret < 10_000.0 * result.reference.rho_star);
    assert_eq!(
        trace.summary.eliminations.values().sum::<u64>(),
        trace.counters.eliminations.iter().sum::<u64>()
    );
    let mut prev = 0.0;
    for row in &trace.rows {
        assert!((row.regret - prev - (result.reference.rho_star - row.r)).abs() < 1e-9);
        prev = row.regret;
    }
}

#[test]
fn report_files_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = aliased_config((0..20).collect(), 3_000, dir.path());
    let result = run_experiment(&cfg).unwrap();
    let files = emit_report(&result, dir.path()).unwrap();
    assert_eq!(files.len(), 22);
    let text = std::fs::read_to_string(dir.path().join("seed_0.csv")).unwrap();
    assert_eq!(text.lines().next(), Some(TRACE_HEADER));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    for key in [
        "rho_star",
        "diameter_star",
        "K_T",
        "total_runs",
        "eliminations",
        "final_regret",
        "slope_fit",
    ] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
    let curve = std::fs::read_to_string(dir.path().join("regret_curve.csv")).unwrap();
    assert_eq!(curve.lines().next(), Some("t,median_regret,q25_regret,q75_regret"));

    // Medians recomputed from the CSV files equal the in-memory aggregate.
    let direct = aggregate(result.traces.iter().map(|t| t.summary.clone()).collect()).unwrap();
    let from_files = report_from_dir(dir.path()).unwrap();
    assert_eq!(direct.k_t, from_files.k_t);
    assert_eq!(direct.total_runs, from_files.total_runs);
    assert_eq!(direct.eliminations, from_files.eliminations);
    assert_eq!(direct.diameter_star, from_files.diameter_star);
    assert!((direct.final_regret - from_files.final_regret).abs() < 1e-9);
    assert!((direct.rho_star - from_files.rho_star).abs() < 1e-9);
    match (direct.slope_fit, from_files.slope_fit) {
        (Some(a), Some(b)) => assert!((a - b).abs() < 1e-9),
        (a, b) => assert_eq!(a.is_some(), b.is_some()),
    }
}

#[test]
fn per_seed_summary_matches_counters() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = aliased_config(vec![4, 5], 4_000, dir.path());
    let result = run_experiment(&cfg).unwrap();
    emit_report(&result, dir.path()).unwrap();
    for trace in &result.traces {
        let rows = read_seed_csv(&dir.path().join(format!("seed_{}.csv", trace.seed))).unwrap();
        assert_eq!(rows, trace.rows);
        let ids: Vec<usize> = (0..trace.counters.eliminations.len()).collect();
        let summary = summarize_rows(trace.seed, &rows, trace.summary.diameter_star, &ids).unwrap();
        assert_eq!(summary.k_t, trace.summary.k_t);
        assert_eq!(summary.total_runs, trace.summary.total_runs);
        assert_eq!(summary.eliminations, trace.summary.eliminations);
        let episode_events = rows.iter().filter(|r| r.event.ends_episode()).count() as u64;
        assert_eq!(trace.summary.k_t, episode_events + 1);
    }
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let result = run_experiment(&aliased_config(vec![11, 12], 5_000, dir.path())).unwrap();
        emit_report(&result, dir.path()).unwrap();
    }
    for name in ["seed_11.csv", "seed_12.csv", "summary.json", "regret_curve.csv"] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{name} differs");
    }
}

#[test]
fn seed_order_does_not_matter() {
    let dir = tempfile::tempdir().unwrap();
    let forward = run_experiment(&aliased_config(vec![1, 2, 3], 2_000, dir.path())).unwrap();
    let backward = run_experiment(&aliased_config(vec![3, 2, 1], 2_000, dir.path())).unwrap();
    for (x, y) in forward.traces.iter().zip(&backward.traces) {
        assert_eq!(x.seed, y.seed);
        assert_eq!(x.rows, y.rows);
    }
}

#[test]
fn strided_logging_keeps_events_and_last_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = chain_config(vec![0], 100_001, dir.path());
    cfg.log_stride = 1_000;
    let result = run_experiment(&cfg).unwrap();
    let rows = &result.traces[0].rows;
    assert!(rows.len() < 2_000);
    assert_eq!(rows.last().unwrap().t, 100_001);
    assert!(rows
        .iter()
        .all(|r| r.t % 1_000 == 0 || r.event != TraceEvent::None || r.t == 100_001));
    assert_eq!(
        rows.iter().filter(|r| r.event != TraceEvent::None).count() as u64,
        result.traces[0].summary.total_runs - 1
    );
}

#[test]
fn config_file_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    std::fs::write(
        &path,
        r#"{"benchmark": {"family": "korder_process", "observations": 2, "order": 2, "actions": 2, "seed": 1},
            "delta": 0.1, "horizon": 500, "seeds": [0, 1], "output": "x"}"#,
    )
    .unwrap();
    let cfg = ExperimentConfig::load(&path).unwrap();
    assert_eq!(cfg.delta, 0.1);
    let result = run_experiment(&cfg).unwrap();
    assert_eq!(result.reference.model_id, 1);

    std::fs::write(
        &path,
        r#"{"benchmark": {"family": "chain", "length": 3}, "horizon": 10, "seeds": []}"#,
    )
    .unwrap();
    assert!(matches!(ExperimentConfig::load(&path), Err(HarnessError::Config(_))));

    let empty = tempfile::tempdir().unwrap();
    assert!(matches!(report_from_dir(empty.path()), Err(HarnessError::EmptyTraces)));
}
