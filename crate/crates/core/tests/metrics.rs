mod support;

use proptest::prelude::*;
use sharegate_core::controller::AlwaysYes;
use sharegate_core::metrics::{
    compute_from_events, compute_from_traces, compute_metrics, ecdf_at, freedman_diaconis_bins,
    write_report, VariantRow,
};
use sharegate_core::runtime::{write_trace_events, EpisodeTrace, SchedulerMode, TraceEvent};
use sharegate_core::sim::{
    generate_task, run_matrix, run_sim_episode, SimParams, SimTask, Variant,
};
use sharegate_core::{Action, Error, HashingEmbedder};

fn header() -> TraceEvent {
    TraceEvent::Episode {
        schema_version: 1,
        task_id: "t".into(),
        k: 3,
        seed: 0,
        gate: Some("policy".into()),
        scheduler: SchedulerMode::Deterministic,
    }
}

fn decision(team: usize, step: usize, action: Action) -> TraceEvent {
    TraceEvent::Decision {
        team,
        step,
        action,
        prob_yes: 0.5,
        log_prob: -0.69,
        fail_closed: false,
    }
}

fn aggregate() -> TraceEvent {
    TraceEvent::Aggregate {
        answer: Some("x".into()),
        first_finisher: Some(1),
        runtime: 40,
        total_moves: 13,
        r_agg: None,
        r_first: None,
        error: None,
    }
}

/// 10 decisions, 6 admits from team 1, retrievals of entries 1, 2, 3 by teams 2, 3, 1.
fn worked_example() -> Vec<TraceEvent> {
    let mut ev = vec![header()];
    for step in 1..=10 {
        let yes = step <= 6;
        ev.push(decision(
            1,
            step,
            if yes { Action::Yes } else { Action::No },
        ));
        if yes {
            ev.push(TraceEvent::Admit {
                seq: step as u64,
                entry_id: step as u64,
                team: 1,
                step,
                wall_ns: 0,
            });
        }
    }
    for (i, (entry_id, team)) in [(1, 2), (2, 3), (3, 1)].into_iter().enumerate() {
        ev.push(TraceEvent::Retrieve {
            seq: 7 + i as u64,
            entry_id,
            team,
            step: 11,
            wall_ns: 0,
        });
    }
    ev.push(aggregate());
    ev
}

#[test]
fn worked_example_percentages() {
    let m = compute_from_events(&[worked_example()]).unwrap();
    assert_eq!(m.memories_saved.pct, 60.0);
    assert_eq!(m.memory_recall.pct, 50.0);
    assert!((m.cross_team_recall.pct - 200.0 / 3.0).abs() < 1e-12);
    assert_eq!(
        (
            m.cross_team_entry_recall.numerator,
            m.cross_team_entry_recall.denominator
        ),
        (2, 3)
    );
    assert_eq!(m.mean_score, None);
    assert_eq!(m.mean_runtime, 40.0);
}

#[test]
fn schema_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let mut ep = worked_example();
    // Line 3 is the first admit; drop it so entry 1 is retrieved unadmitted.
    ep.remove(2);
    let path = dir.path().join("bad.jsonl");
    write_trace_events(std::fs::File::create(&path).unwrap(), &ep).unwrap();
    let bad_line = ep
        .iter()
        .position(|e| matches!(e, TraceEvent::Retrieve { .. }))
        .unwrap()
        + 1;
    match compute_metrics(&[&path]) {
        Err(Error::Schema { line, .. }) => assert_eq!(line, bad_line),
        other => panic!("expected schema error, got {other:?}"),
    }

    std::fs::write(&path, "{\"event\":\"nonsense\"}\n").unwrap();
    assert!(matches!(
        compute_metrics(&[&path]),
        Err(Error::Schema { line: 1, .. })
    ));

    let mut no_agg = worked_example();
    no_agg.pop();
    assert!(compute_from_events(&[no_agg]).is_err());
}

fn sim_traces(n: u64) -> Vec<EpisodeTrace> {
    let provider = HashingEmbedder::new(16);
    (0..n)
        .map(|s| {
            let task = generate_task(s, &SimParams::new(3, 3, 4, 3)).unwrap();
            run_sim_episode(&task, Some(&AlwaysYes), &provider, 3, s).unwrap()
        })
        .collect()
}

#[test]
fn file_metrics_equal_in_process_metrics() {
    let traces = sim_traces(25);
    let dir = tempfile::tempdir().unwrap();
    let mut paths = Vec::new();
    for (i, chunk) in traces.chunks(10).enumerate() {
        let p = dir.path().join(format!("part{i}.jsonl"));
        let mut f = std::fs::File::create(&p).unwrap();
        for t in chunk {
            write_trace_events(&mut f, &t.to_events(true)).unwrap();
        }
        paths.push(p);
    }
    let from_files = compute_metrics(&paths).unwrap();
    let in_process = compute_from_traces(&traces).unwrap();
    assert_eq!(from_files, in_process);
    assert_eq!(
        serde_json::to_string(&from_files).unwrap(),
        serde_json::to_string(&in_process).unwrap()
    );
    assert_eq!(in_process.memories_saved.pct, 100.0);
}

fn read_columns(path: &std::path::Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split('\t').map(|x| x.parse().unwrap()).collect())
        .collect()
}

fn file_label(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

#[test]
fn report_files_reflect_per_seed_speedups() {
    let tasks: Vec<SimTask> = (0..40)
        .map(|s| generate_task(s, &SimParams::new(3, 3, 4, 0)).unwrap())
        .collect();
    let res = run_matrix(
        &tasks,
        &[Variant::NoMemory, Variant::AddAll],
        3,
        &[0],
        &HashingEmbedder::new(16),
    )
    .unwrap();
    let (slow, fast) = (&res[0].metrics, &res[1].metrics);
    // Per-seed pairing: sharing is strictly faster on every task.
    for (s, f) in slow.runtimes.iter().zip(&fast.runtimes) {
        assert!(f < s);
    }
    let rows: Vec<VariantRow> = res
        .iter()
        .map(|r| VariantRow {
            label: r.label.to_string(),
            metrics: r.metrics.clone(),
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let written = write_report(dir.path(), &rows).unwrap();
    assert_eq!(written.len(), 2 + 2 * 4);

    let table = std::fs::read_to_string(dir.path().join("summary.tsv")).unwrap();
    assert_eq!(table.lines().count(), 3);

    let cdf = |label: &str| {
        let path = written
            .iter()
            .find(|p| {
                let name = p.file_name().unwrap().to_str().unwrap();
                name.starts_with(&format!("cdf_{label}")) && name.ends_with("_runtime.tsv")
            })
            .unwrap();
        read_columns(path)
    };
    let (slow_cdf, fast_cdf) = (
        cdf(&file_label(&rows[0].label)),
        cdf(&file_label(&rows[1].label)),
    );
    for pts in [&slow_cdf, &fast_cdf] {
        assert!(pts
            .windows(2)
            .all(|w| w[0][0] < w[1][0] && w[0][1] <= w[1][1]));
        assert_eq!(pts.last().unwrap()[1], 1.0);
    }
    // Pointwise dominance at every emitted sample of either variant.
    let step_fn = |pts: &[Vec<f64>], x: f64| {
        pts.iter()
            .take_while(|p| p[0] <= x)
            .last()
            .map_or(0.0, |p| p[1])
    };
    for x in slow_cdf.iter().chain(&fast_cdf).map(|p| p[0]) {
        assert!(
            step_fn(&fast_cdf, x) >= step_fn(&slow_cdf, x),
            "no dominance at {x}"
        );
        let fast_samples: Vec<f64> = fast.runtimes.iter().map(|&r| r as f64).collect();
        assert_eq!(step_fn(&fast_cdf, x), ecdf_at(&fast_samples, x));
    }

    for (row, metrics) in rows.iter().zip([slow, fast]) {
        let label = file_label(&row.label);
        let hist = read_columns(&dir.path().join(format!("hist_{label}_runtime.tsv")));
        let samples: Vec<f64> = metrics.runtimes.iter().map(|&r| r as f64).collect();
        assert_eq!(hist.len(), freedman_diaconis_bins(&samples));
        assert_eq!(hist.iter().map(|b| b[2]).sum::<f64>(), 40.0);
    }
}

#[test]
fn single_run_gives_one_row() {
    let m = compute_from_traces(&sim_traces(3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_report(
        dir.path(),
        &[VariantRow {
            label: "only".into(),
            metrics: m,
        }],
    )
    .unwrap();
    let table = std::fs::read_to_string(dir.path().join("summary.tsv")).unwrap();
    assert_eq!(table.lines().count(), 2);
    assert!(table.lines().nth(1).unwrap().starts_with("only\t3\t"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn percentages_stay_in_range(seed in any::<u64>(), n in 1usize..20) {
        let m = compute_from_events(&support::oracles::random_episodes(seed, n)).unwrap();
        for r in [m.memories_saved, m.memory_recall, m.cross_team_recall, m.cross_team_entry_recall] {
            prop_assert!((0.0..=100.0).contains(&r.pct));
            prop_assert_eq!(r.defined, r.denominator > 0);
        }
        prop_assert_eq!(m.runtimes.len(), n);
    }
}
