use std::fs;
use std::path::Path;

use jamnet::baselines::AgentKind;
use jamnet::harness::{
    emit_metrics, read_metrics, run_sweep, run_training, write_run, ExperimentConfig, MetricsFormat, MetricsRow,
    SweepPoint,
};
use jamnet::topology::NetworkConfig;

fn small(agent: AgentKind, episodes: usize) -> ExperimentConfig {
    ExperimentConfig {
        network: NetworkConfig { frame_slots: 5, master_seed: 7, ..Default::default() },
        agent,
        episodes,
        realizations: 3,
        sclar_window: 10,
        tag: "t".into(),
        ..Default::default()
    }
}

fn row(episode: usize, x: f64) -> MetricsRow {
    MetricsRow {
        episode,
        slot: Some(episode % 5 + 1),
        cumulative_reward: x * 3.0,
        average_reward: x / 7.0,
        sclar: 0.1 + x,
        average_sclar: std::f64::consts::PI * x,
        loss: (episode % 2 == 0).then_some(x.sqrt()),
        epoch_loss: None,
        action: Some((episode % 2) as u8),
        ack: Some("S".into()),
        epsilon: 1.0 / 3.0,
    }
}

#[test]
fn metrics_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<MetricsRow> = (1..=3).map(|e| row(e, e as f64 * 1.234567890123)).collect();
    for fmt in [MetricsFormat::Csv, MetricsFormat::Jsonl] {
        let path = dir.path().join(format!("m.{}", fmt.extension()));
        emit_metrics(&rows, &path, fmt).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let want_lines = if fmt == MetricsFormat::Csv { 4 } else { 3 };
        assert_eq!(text.lines().count(), want_lines, "{fmt:?}");
        assert_eq!(read_metrics(&path, fmt).unwrap(), rows);
    }
    assert!(emit_metrics(&rows, &dir.path().join("missing/m.csv"), MetricsFormat::Csv).is_err());
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn runs_are_deterministic() {
    for agent in [AgentKind::Oracle, AgentKind::Resdqn] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        for d in [&a, &b] {
            let cfg = ExperimentConfig { out_dir: Some(d.path().to_path_buf()), ..small(agent, 20) };
            run_training(&cfg).unwrap();
        }
        let (x, y) = (dir_bytes(a.path()), dir_bytes(b.path()));
        assert!(!x.is_empty());
        assert_eq!(x, y, "{agent:?}");
    }
}

#[test]
fn episode_reward_is_the_sum_of_its_slots() {
    let out = run_training(&small(AgentKind::Random, 12)).unwrap();
    assert_eq!(out.episode_rows.len(), 12);
    assert_eq!(out.slot_rows.len(), 60);
    for ep in &out.episode_rows {
        let slots: Vec<&MetricsRow> = out.slot_rows.iter().filter(|r| r.episode == ep.episode).collect();
        assert_eq!(slots.len(), 5);
        let mut prev = 0.0;
        let mut total = 0.0;
        for r in &slots {
            total += r.cumulative_reward - prev;
            prev = r.cumulative_reward;
        }
        assert!((total - ep.cumulative_reward).abs() < 1e-9);
        assert!((ep.average_reward - ep.cumulative_reward / 5.0).abs() < 1e-12);
        let mean_sclar = slots.iter().map(|r| r.sclar).sum::<f64>() / 5.0;
        assert!((ep.sclar - mean_sclar).abs() < 1e-12);
        assert!(ep.sclar >= 0.0);
    }
}

#[test]
fn oracle_beats_every_fixed_policy() {
    let oracle = run_training(&small(AgentKind::Oracle, 30)).unwrap().summary;
    for k in [AgentKind::Hold, AgentKind::Random] {
        let other = run_training(&small(k, 30)).unwrap().summary;
        assert!(oracle.mean_reward >= other.mean_reward, "{k:?}");
    }
}

#[test]
fn learner_runs_write_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_training(&small(AgentKind::Fcdqn, 15)).unwrap();
    assert!(out.agent.is_some());
    assert!(out.episode_rows.iter().any(|r| r.epoch_loss.is_some()));
    write_run(dir.path(), "t", &out).unwrap();
    let names: Vec<String> = dir_bytes(dir.path()).into_iter().map(|(n, _)| n).collect();
    assert!(names.contains(&"t.ckpt".to_string()), "{names:?}");
    assert!(names.contains(&"t.summary.json".to_string()));
}

#[test]
fn sweeps_cover_every_point_and_isolate_failures() {
    let base = small(AgentKind::Oracle, 4);
    assert!(run_sweep(&base, &[]).entries.is_empty());

    let sizes: Vec<SweepPoint> = [5, 10, 20, 30].into_iter().map(SweepPoint::FrameSize).collect();
    let rep = run_sweep(&base, &sizes);
    assert_eq!(rep.entries.len(), 4);
    assert!(rep.entries.iter().all(|e| e.outcome.is_ok()));
    for (e, s) in rep.entries.iter().zip([5, 10, 20, 30]) {
        assert_eq!(e.outcome.as_ref().unwrap().frame_slots, s);
    }

    let mixed = vec![
        SweepPoint::Roster { pues: 1, jammers: 1 },
        SweepPoint::FrameSize(0),
        SweepPoint::Agent(AgentKind::Hold),
    ];
    let rep = run_sweep(&base, &mixed);
    let ok: Vec<bool> = rep.entries.iter().map(|e| e.outcome.is_ok()).collect();
    assert_eq!(ok, vec![true, false, true]);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    rep.write_csv(&path).unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), 4);
}

#[test]
fn toml_config_round_trip() {
    let cfg = small(AgentKind::Fcdqn, 9);
    let text = toml::to_string(&cfg).unwrap();
    assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
}
