#![allow(dead_code)]

use powrl_cli::cli::{Command, FixtureName, GenerateArgs, SuiteKind};
use powrl_cli::data::{ACTIONS_FILE, CHECKPOINTS_DIR, GRID_FILE};
use powrl_core::controller::ControllerConfig;
use powrl_core::ppo::{
    feature_len, initial_params, Checkpoint, CheckpointMeta, NetworkShape, PPOConfig, FEATURE_LAYOUT_VERSION,
};
use powrl_core::scenario::{load_action_set, load_grid, save_checkpoint};
use std::path::{Path, PathBuf};
use std::process::Output;

pub const CHECKPOINT: &str = "tiny.ckpt";

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_powrl")
}

pub fn powrl(args: &[&str]) -> Output {
    std::process::Command::new(bin()).args(args).output().expect("binary runs")
}

pub fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn tiny_ppo() -> PPOConfig {
    PPOConfig {
        network: NetworkShape { actor_hidden: vec![16], critic_hidden: vec![8] },
        ..PPOConfig::default()
    }
}

/// Training-grid scenario directory with `n` adversarial chronics, an
/// action set and an untrained small checkpoint.
pub fn scenario_dir(root: &Path, n: usize, steps: usize) -> PathBuf {
    let dir = root.join("training");
    powrl_cli::commands::run(Command::Generate(GenerateArgs {
        fixture: FixtureName::Training,
        out: dir.clone(),
        chronics: n,
        steps,
        suite: SuiteKind::Adversarial,
        seed: 4,
        budget: Some(8),
    }))
    .expect("generate");
    let grid = load_grid(dir.join(GRID_FILE)).unwrap();
    let actions = load_action_set(dir.join(ACTIONS_FILE)).unwrap();
    let ppo = tiny_ppo();
    let params = initial_params(&grid, &actions, &ppo, 11);
    let ck = Checkpoint {
        meta: CheckpointMeta {
            grid: grid.name.clone(),
            input_dim: feature_len(&grid),
            n_actions: actions.len(),
            feature_layout: FEATURE_LAYOUT_VERSION,
            seed: 11,
            ppo,
            controller: ControllerConfig::default(),
        },
        params,
    };
    std::fs::create_dir_all(dir.join(CHECKPOINTS_DIR)).unwrap();
    save_checkpoint(&ck, dir.join(CHECKPOINTS_DIR).join(CHECKPOINT)).unwrap();
    dir
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
