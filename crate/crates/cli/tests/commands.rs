mod common;

use common::{ok, powrl, s, scenario_dir, CHECKPOINT};
use powrl_core::analysis::DiversityReport;
use powrl_core::controller::Branch;
use powrl_core::environment::Action;
use powrl_core::evaluation::{run_agent, AgentKind, EvalConfig};
use powrl_core::grid::Bus;
use powrl_core::scenario::log::{DecisionRecord, EpisodeLog, LogMeta, StepRecord};
use powrl_core::scenario::{load_action_set, load_checkpoint, load_chronic, load_grid};
use powrl_core::topology::SubstationAction;
use serde_json::Value;
use std::path::Path;
use std::sync::Arc;

fn train_args<'a>(dir: &'a str, out: &'a str, seed: &'a str) -> Vec<String> {
    [
        "train", "--grid", &format!("{dir}/grid.grid"), "--chronics-dir", &format!("{dir}/chronics"),
        "--actions", &format!("{dir}/actions.actions"), "--seed", seed, "--envs", "2", "--epochs", "2",
        "--actor-hidden", "16", "--critic-hidden", "8", "--sample-size", "64", "--minibatch-size", "16", "--out", out,
    ]
    .iter()
    .map(|x| x.to_string())
    .collect()
}

fn run_strings(args: &[String]) -> std::process::Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    powrl(&refs)
}

#[test]
fn smoke_training_writes_a_loadable_reproducible_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = scenario_dir(tmp.path(), 3, 96);
    let d = s(&dir);
    let a = tmp.path().join("a.ckpt");
    let b = tmp.path().join("b.ckpt");
    ok(&run_strings(&train_args(d, s(&a), "5")));
    ok(&run_strings(&train_args(d, s(&b), "5")));
    let ck = load_checkpoint(&a).unwrap();
    assert_eq!(ck.meta.grid, "training5");
    assert_eq!(ck.meta.ppo.rounds, 2);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let metrics: Value = serde_json::from_str(&std::fs::read_to_string(tmp.path().join("a.metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics.as_array().unwrap().len(), 2);
}

#[test]
fn usage_and_data_errors_have_their_exit_codes() {
    let out = powrl(&["train", "--chronics-dir", "x", "--actions", "y", "--out", "z"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--grid"));
    assert_eq!(powrl(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(powrl(&["--help"]).status.code(), Some(0));
    let out = powrl(&["reduce", "--grid", "/nonexistent.grid", "--chronics-dir", "/tmp", "--out", "/tmp/x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluation_report_has_a_row_per_agent_and_chronic() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = scenario_dir(tmp.path(), 3, 96);
    let json = tmp.path().join("report.json");
    let logs = tmp.path().join("logs");
    let ck = dir.join("checkpoints").join(CHECKPOINT);
    let stdout = ok(&powrl(&[
        "evaluate", "--grid", s(&dir.join("grid.grid")), "--chronics-dir", s(&dir.join("chronics")),
        "--actions", s(&dir.join("actions.actions")), "--checkpoint", s(&ck), "--logs-dir", s(&logs), "--json", s(&json),
    ]));
    assert!(stdout.contains("expert_heuristic"));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3 * 3);
    assert_eq!(report["summary"].as_array().unwrap().len(), 3);
    assert_eq!(std::fs::read_dir(&logs).unwrap().count(), 9);
    for r in rows {
        assert!(AgentKind::parse(r["agent"].as_str().unwrap()).is_some());
        assert!(r["steps_survived"].as_u64().unwrap() <= r["max_steps"].as_u64().unwrap());
    }
}

#[test]
fn do_nothing_survives_easy_chronics() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("easy");
    ok(&powrl(&["generate", "--fixture", "training", "--suite", "easy", "--chronics", "2", "--steps", "60", "--out", s(&dir), "--budget", "4"]));
    let json = tmp.path().join("r.json");
    ok(&powrl(&[
        "evaluate", "--grid", s(&dir.join("grid.grid")), "--chronics-dir", s(&dir.join("chronics")),
        "--actions", s(&dir.join("actions.actions")), "--agents", "do-nothing", "--json", s(&json),
    ]));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    for r in report["rows"].as_array().unwrap() {
        assert_eq!(r["survival_pct"].as_f64(), Some(100.0));
    }
}

#[test]
fn checkpoint_for_another_grid_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = scenario_dir(tmp.path(), 2, 60);
    let fig = tmp.path().join("fig1");
    ok(&powrl(&["generate", "--fixture", "fig1", "--chronics", "1", "--steps", "60", "--out", s(&fig), "--budget", "4"]));
    let out = powrl(&[
        "evaluate", "--grid", s(&fig.join("grid.grid")), "--chronics-dir", s(&fig.join("chronics")),
        "--actions", s(&fig.join("actions.actions")), "--checkpoint", s(&dir.join("checkpoints").join(CHECKPOINT)),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trained on grid"));
    let out = powrl(&[
        "evaluate", "--grid", s(&fig.join("grid.grid")), "--chronics-dir", s(&fig.join("chronics")),
        "--actions", s(&fig.join("actions.actions")), "--agents", "powrl",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

fn record(step: usize, action: Action, branch: Branch) -> StepRecord {
    StepRecord {
        step,
        action,
        illegal: None,
        attacked: None,
        tripped: vec![],
        rho: 0.9,
        reward: 1.1,
        done: false,
        done_reason: None,
        decision: Some(DecisionRecord {
            branch,
            candidates: 1,
            rho_do_nothing: 1.0,
            rho_chosen: 0.9,
            simulated: vec![],
        }),
    }
}

fn split(sub: usize, n: usize, second: usize) -> Action {
    let mut buses = vec![Bus::One; n];
    buses[second] = Bus::Two;
    buses[n - 1] = Bus::Two;
    Action::SetSubstation(SubstationAction { substation: sub, buses })
}

fn analyze_json(tmp: &Path, logs: &[EpisodeLog], grid: &Path) -> Result<DiversityReport, String> {
    let dir = tmp.join("to-analyze");
    std::fs::create_dir_all(&dir).unwrap();
    for (i, l) in logs.iter().enumerate() {
        l.save(dir.join(format!("{i}.log"))).unwrap();
    }
    let json = tmp.join("analysis.json");
    let out = powrl(&["analyze", s(&dir), "--grid", s(grid), "--json", s(&json)]);
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    Ok(serde_json::from_str(&std::fs::read_to_string(json).unwrap()).unwrap())
}

#[test]
fn analysis_counts_a_known_action_mix_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = scenario_dir(tmp.path(), 1, 60);
    let grid = dir.join("grid.grid");
    let meta = LogMeta { grid: "training5".into(), chronic: "synthetic".into(), seed: 0, agent: "powrl".into() };
    let (a, b, c) = (split(1, 4, 0), split(2, 5, 1), split(1, 4, 1));
    let mut log = EpisodeLog::new(meta.clone());
    for (i, (act, br)) in [
        (a.clone(), Branch::RlAction),
        (a.clone(), Branch::RlAction),
        (b.clone(), Branch::RlAction),
        (Action::DoNothing, Branch::DoNothing),
        (split(3, 4, 0), Branch::Recovery),
        (c.clone(), Branch::RlAction),
    ]
    .into_iter()
    .enumerate()
    {
        log.push(record(i + 1, act, br));
    }
    let r = analyze_json(tmp.path(), &[log], &grid).unwrap();
    assert_eq!(r.per_substation, vec![0, 3, 1, 0, 0]);
    assert_eq!((r.topology_actions, r.distinct_actions, r.distinct_substations, r.overflow_events), (4, 3, 2, 2));
    let grams: Vec<(Vec<usize>, usize)> = r.ngrams.iter().map(|g| (g.substations.clone(), g.count)).collect();
    assert_eq!(grams, vec![(vec![1], 3), (vec![2], 1), (vec![1, 1], 1), (vec![1, 2], 1), (vec![1, 1, 2], 1)]);

    // only do-nothing: nothing to count
    let mut idle = EpisodeLog::new(meta);
    for i in 1..=5 {
        idle.push(record(i, Action::DoNothing, Branch::DoNothing));
    }
    let tmp2 = tempfile::tempdir().unwrap();
    let r = analyze_json(tmp2.path(), &[idle], &grid).unwrap();
    assert!(r.per_substation.iter().all(|&c| c == 0));
    assert_eq!((r.topology_actions, r.distinct_actions, r.overflow_events), (0, 0, 0));
    assert!(r.ngrams.is_empty());
}

#[test]
fn corrupt_log_names_the_record() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = scenario_dir(tmp.path(), 1, 60);
    let log = tmp.path().join("run.log");
    ok(&powrl(&[
        "run", "--grid", s(&dir.join("grid.grid")), "--chronic", s(&dir.join("chronics/adv-00.chronic")),
        "--actions", s(&dir.join("actions.actions")), "--max-steps", "5", "--log", s(&log),
    ]));
    let text = std::fs::read_to_string(&log).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[4] = "{\"step\": oops}";
    std::fs::write(&log, lines.join("\n") + "\n").unwrap();
    let out = powrl(&["analyze", s(&log), "--grid", s(&dir.join("grid.grid"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 5"), "{err}");
}

#[test]
fn run_log_equals_the_batch_episode_log() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = scenario_dir(tmp.path(), 2, 96);
    let grid = Arc::new(load_grid(dir.join("grid.grid")).unwrap());
    let actions = load_action_set(dir.join("actions.actions")).unwrap();
    let ck = load_checkpoint(dir.join("checkpoints").join(CHECKPOINT)).unwrap();
    for (agent, flag) in [(AgentKind::ExpertHeuristic, "expert-heuristic"), (AgentKind::Powrl, "powrl"), (AgentKind::DoNothing, "do-nothing")] {
        let chronic_path = dir.join("chronics/adv-01.chronic");
        let log = tmp.path().join(format!("{flag}.log"));
        let ck_path = dir.join("checkpoints").join(CHECKPOINT);
        let mut args: Vec<String> = [
            "run", s(&dir.join("grid.grid")), s(&chronic_path), s(&dir.join("actions.actions")), flag, s(&log),
        ]
        .iter()
        .zip(["", "--grid", "--chronic", "--actions", "--agent", "--log"])
        .flat_map(|(v, k)| if k.is_empty() { vec![v.to_string()] } else { vec![k.to_string(), v.to_string()] })
        .collect();
        args.extend(["--seed".into(), "9".into()]);
        if agent == AgentKind::Powrl {
            args.extend(["--checkpoint".into(), s(&ck_path).into()]);
        }
        ok(&run_strings(&args));
        let chronic = Arc::new(load_chronic(&chronic_path).unwrap());
        let batch = run_agent(&grid, &chronic, &actions, agent, Some(&ck.params), &EvalConfig::default(), 9).unwrap();
        assert_eq!(std::fs::read_to_string(&log).unwrap(), batch.log.to_text(), "{flag}");
    }
}

#[test]
fn scripted_run_applies_each_request() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = scenario_dir(tmp.path(), 1, 60);
    let script = tmp.path().join("script.jsonl");
    let set = load_action_set(dir.join("actions.actions")).unwrap();
    let chosen = set.action(1).clone();
    let split = serde_json::to_string(&chosen).unwrap();
    std::fs::write(&script, format!("\"accept\"\n# a comment\n{split}\n{{\"kind\":\"do_nothing\"}}\n\"accept\"\n")).unwrap();
    let log = tmp.path().join("script.log");
    ok(&powrl(&[
        "run", "--grid", s(&dir.join("grid.grid")), "--chronic", s(&dir.join("chronics/adv-00.chronic")),
        "--actions", s(&dir.join("actions.actions")), "--script", s(&script), "--log", s(&log),
    ]));
    let parsed = EpisodeLog::load(&log).unwrap();
    assert_eq!(parsed.records.len(), 4);
    assert!(parsed.records[0].decision.is_some() && parsed.records[3].decision.is_some());
    assert!(parsed.records[1].decision.is_none());
    assert_eq!(parsed.records[1].action, chosen);
    assert_eq!(parsed.records[2].action, Action::DoNothing);

    std::fs::write(&script, "\"accept\"\n{\"kind\":\"teleport\"}\n").unwrap();
    let out = powrl(&[
        "run", "--grid", s(&dir.join("grid.grid")), "--chronic", s(&dir.join("chronics/adv-00.chronic")),
        "--actions", s(&dir.join("actions.actions")), "--script", s(&script), "--log", s(&log),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}
