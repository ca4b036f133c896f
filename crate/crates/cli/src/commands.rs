use crate::cli::*;
use crate::data::{files_with_extension, load_chronics_dir, ACTIONS_FILE, CHRONICS_DIR, GRID_FILE};
use crate::error::{io_error, CliError};
use crate::session::{Session, SessionError, SessionSpec, StepRequest};
use powrl_core::analysis::analyze;
use powrl_core::controller::ControllerConfig;
use powrl_core::environment::EnvConfig;
use powrl_core::evaluation::{check_policy, evaluate, AgentKind, EvalConfig, EvalRow};
use powrl_core::fixtures::{self, Fixture};
use powrl_core::grid::Grid;
use powrl_core::ppo::{
    feature_len, metrics_table, train, Checkpoint, CheckpointMeta, NetworkShape, PPOConfig,
    PolicyParams, TrainSetup, FEATURE_LAYOUT_VERSION,
};
use powrl_core::scenario::log::EpisodeLog;
use powrl_core::scenario::{
    generate_chronic, load_action_set, load_checkpoint, load_chronic_for, load_grid, save_action_set, save_chronic, save_checkpoint,
    save_grid, ChronicProfile,
};
use powrl_core::topology::{reduce_action_space, ActionSet, ReductionConfig};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Generate(a) => generate(&a),
        Command::Reduce(a) => reduce(&a),
        Command::Train(a) => train_cmd(&a),
        Command::Evaluate(a) => evaluate_cmd(&a),
        Command::Analyze(a) => analyze_cmd(&a),
        Command::Run(a) => run_cmd(&a),
        Command::Serve(a) => crate::service::serve(&a),
    }
}

impl From<AgentArg> for AgentKind {
    fn from(a: AgentArg) -> Self {
        match a {
            AgentArg::DoNothing => AgentKind::DoNothing,
            AgentArg::ExpertHeuristic => AgentKind::ExpertHeuristic,
            AgentArg::Powrl => AgentKind::Powrl,
        }
    }
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| io_error(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| io_error(path, e))
}

pub fn fixture(name: FixtureName) -> Fixture {
    match name {
        FixtureName::Fig1 => fixtures::fig1(),
        FixtureName::Training => fixtures::training(),
        FixtureName::Evaluation => fixtures::evaluation(),
    }
}

fn load_actions_for(path: &Path, grid: &Grid) -> Result<ActionSet, CliError> {
    let set = load_action_set(path)?;
    if set.grid_name != grid.name {
        return Err(CliError::Data(format!(
            "{}: action set for grid `{}`, but the grid is `{}`",
            path.display(),
            set.grid_name,
            grid.name
        )));
    }
    Ok(set)
}

/// Loads a checkpoint and checks it against the grid and action set.
pub fn load_policy(path: &Path, grid: &Grid, actions: &ActionSet) -> Result<Checkpoint, CliError> {
    let ck = load_checkpoint(path)?;
    let mismatch = |m: String| CliError::Data(format!("{}: {m}", path.display()));
    if ck.meta.grid != grid.name {
        return Err(mismatch(format!("trained on grid `{}`, not `{}`", ck.meta.grid, grid.name)));
    }
    if ck.meta.feature_layout != FEATURE_LAYOUT_VERSION {
        return Err(mismatch(format!(
            "feature layout {} (this build uses {FEATURE_LAYOUT_VERSION})",
            ck.meta.feature_layout
        )));
    }
    check_policy(grid, actions, &ck.params).map_err(|e| mismatch(e.to_string()))?;
    Ok(ck)
}

fn generate(a: &GenerateArgs) -> Result<(), CliError> {
    if a.chronics == 0 || a.steps == 0 {
        return Err(CliError::Usage("--chronics and --steps must be >= 1".into()));
    }
    let fx = fixture(a.fixture);
    let chronics = match a.suite {
        SuiteKind::Adversarial => fixtures::adversarial_suite(&fx, a.chronics, a.steps, a.seed),
        SuiteKind::Easy => (0..a.chronics)
            .map(|i| {
                let base = fx.nominal_load.iter().map(|x| 0.5 * x).collect();
                let mut p = ChronicProfile::flat(format!("easy-{i:02}"), fixtures::suite_start(i as u64), base);
                p.noise = 0.02;
                generate_chronic(&fx.grid, &p, a.steps, powrl_core::derive_seed(a.seed, 0xEA5E, i as u64))
            })
            .collect(),
    };
    let dir = a.out.join(CHRONICS_DIR);
    create_dir(&dir)?;
    save_grid(&fx.grid, a.out.join(GRID_FILE))?;
    for c in &chronics {
        save_chronic(c, dir.join(format!("{}.chronic", c.id)))?;
    }
    println!("wrote grid `{}` and {} chronics to {}", fx.grid.name, chronics.len(), a.out.display());
    if let Some(budget) = a.budget {
        let grid = Arc::new(fx.grid.clone());
        let chronics: Vec<_> = chronics.into_iter().map(Arc::new).collect();
        let cfg = ReductionConfig { seed: a.seed, ..ReductionConfig::default() };
        let set = reduce_action_space(&grid, &chronics, budget, &cfg).map_err(|e| CliError::Runtime(e.to_string()))?;
        save_action_set(&set, a.out.join(ACTIONS_FILE))?;
        println!("wrote an action set of {} entries", set.len());
    }
    Ok(())
}

fn reduce(a: &ReduceArgs) -> Result<(), CliError> {
    if a.budget == 0 {
        return Err(CliError::Usage("--budget must be >= 1".into()));
    }
    let grid = Arc::new(load_grid(&a.grid)?);
    let mut chronics = load_chronics_dir(&a.chronics_dir, &grid)?;
    if let Some(n) = a.limit {
        chronics.truncate(n.max(1));
    }
    let cfg = ReductionConfig { seed: a.seed, ..ReductionConfig::default() };
    let set = reduce_action_space(&grid, &chronics, a.budget, &cfg).map_err(|e| CliError::Runtime(e.to_string()))?;
    save_action_set(&set, &a.out)?;
    for (i, e) in set.entries().iter().enumerate() {
        println!("{i:>3}  {:<60} impact {:.4}", format!("{:?}", e.action), e.impact);
    }
    println!("wrote {} actions to {}", set.len(), a.out.display());
    Ok(())
}

fn train_cmd(a: &TrainArgs) -> Result<(), CliError> {
    if a.envs == 0 || a.epochs == 0 {
        return Err(CliError::Usage("--envs and --epochs must be >= 1".into()));
    }
    let grid = Arc::new(load_grid(&a.grid)?);
    let chronics = load_chronics_dir(&a.chronics_dir, &grid)?;
    let actions = load_actions_for(&a.actions, &grid)?;
    let defaults = PPOConfig::default();
    let network = NetworkShape {
        actor_hidden: a.actor_hidden.clone().unwrap_or(defaults.network.actor_hidden.clone()),
        critic_hidden: a.critic_hidden.clone().unwrap_or(defaults.network.critic_hidden.clone()),
    };
    let ppo = PPOConfig {
        rounds: a.epochs,
        n_envs: a.envs,
        epochs: a.update_epochs.unwrap_or(defaults.epochs),
        learning_rate: a.learning_rate.unwrap_or(defaults.learning_rate),
        sample_size: a.sample_size.unwrap_or(defaults.sample_size),
        minibatch_size: a.minibatch_size.unwrap_or(defaults.minibatch_size),
        max_seconds: a.max_seconds,
        network,
        ..defaults
    };
    let setup = TrainSetup {
        grid: &grid,
        chronics: &chronics,
        actions: &actions,
        env: EnvConfig::default(),
        controller: ControllerConfig::default(),
        ppo: ppo.clone(),
        seed: a.seed,
    };
    let out = train(&setup, None)?;
    print!("{}", metrics_table(&out.metrics));
    if out.no_overflow_transitions {
        log::warn!("no overflow state was reached during training; the checkpoint holds the initial weights");
    }
    let ck = Checkpoint {
        meta: CheckpointMeta {
            grid: grid.name.clone(),
            input_dim: feature_len(&grid),
            n_actions: actions.len(),
            feature_layout: FEATURE_LAYOUT_VERSION,
            seed: a.seed,
            ppo,
            controller: ControllerConfig::default(),
        },
        params: out.params,
    };
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save_checkpoint(&ck, &a.out)?;
    let metrics_path = sibling(&a.out, "metrics.json");
    write_json(&metrics_path, &out.metrics)?;
    println!("wrote {} and {}", a.out.display(), metrics_path.display());
    Ok(())
}

/// `dir/name.ckpt` -> `dir/name.<suffix>`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

#[derive(Serialize)]
struct EvalJson<'a> {
    rows: &'a [EvalRow],
    summary: Vec<powrl_core::evaluation::AgentSummary>,
}

fn evaluate_cmd(a: &EvaluateArgs) -> Result<(), CliError> {
    let grid = Arc::new(load_grid(&a.grid)?);
    let chronics = load_chronics_dir(&a.chronics_dir, &grid)?;
    let actions = load_actions_for(&a.actions, &grid)?;
    let agents: Vec<AgentKind> = match &a.agents {
        Some(list) => list.iter().map(|&x| x.into()).collect(),
        None if a.checkpoint.is_some() => AgentKind::ALL.to_vec(),
        None => vec![AgentKind::DoNothing, AgentKind::ExpertHeuristic],
    };
    if agents.is_empty() {
        return Err(CliError::Usage("--agents is empty".into()));
    }
    let params = match &a.checkpoint {
        Some(p) => Some(load_policy(p, &grid, &actions)?.params),
        None if agents.contains(&AgentKind::Powrl) => {
            return Err(CliError::Usage("the powrl agent needs --checkpoint".into()))
        }
        None => None,
    };
    let cfg = EvalConfig { seed: a.seed, ..EvalConfig::default() };
    let report = evaluate(&grid, &chronics, &actions, &agents, params.as_ref(), &cfg)?;
    print!("{}", report.table());
    println!("expert_heuristic = gated controller with exhaustive one-step look-ahead over the action set (no learning)");
    if let Some(dir) = &a.logs_dir {
        create_dir(dir)?;
        for (row, log) in report.rows.iter().zip(&report.logs) {
            log.save(dir.join(format!("{}__{}.log", row.agent.as_str(), row.chronic)))?;
        }
    }
    if let Some(path) = &a.json {
        write_json(path, &EvalJson { rows: &report.rows, summary: report.summary() })?;
    }
    Ok(())
}

fn collect_logs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            files.extend(files_with_extension(p, "log")?);
        } else if p.is_file() {
            files.push(p.clone());
        } else {
            return Err(CliError::Data(format!("{}: no such file or directory", p.display())));
        }
    }
    if files.is_empty() {
        return Err(CliError::Data("no episode logs found".into()));
    }
    Ok(files)
}

fn analyze_cmd(a: &AnalyzeArgs) -> Result<(), CliError> {
    if a.max_n == 0 {
        return Err(CliError::Usage("--max-n must be >= 1".into()));
    }
    let grid = load_grid(&a.grid)?;
    let mut logs = Vec::new();
    for path in collect_logs(&a.logs)? {
        let log = EpisodeLog::load(&path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if log.meta.grid != grid.name {
            return Err(CliError::Data(format!(
                "{}: recorded on grid `{}`, not `{}`",
                path.display(),
                log.meta.grid,
                grid.name
            )));
        }
        logs.push(log);
    }
    let report = analyze(&logs, grid.n_substations(), a.max_n);
    print!("{}", report.table(a.top));
    if let Some(path) = &a.json {
        write_json(path, &report)?;
    }
    Ok(())
}

fn session_error(e: SessionError) -> CliError {
    match e {
        SessionError::Malformed(m) => CliError::Data(format!("malformed action: {m}")),
        SessionError::Setup(m) => CliError::Data(m),
        other => CliError::Runtime(other.to_string()),
    }
}

fn read_script(path: &Path) -> Result<Vec<StepRequest>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::Data(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn run_cmd(a: &RunArgs) -> Result<(), CliError> {
    let grid = Arc::new(load_grid(&a.grid)?);
    let chronic = Arc::new(load_chronic_for(&a.chronic, &grid)?);
    let actions = Arc::new(load_actions_for(&a.actions, &grid)?);
    let agent: AgentKind = a.agent.into();
    let params: Option<Arc<PolicyParams>> = match (&a.checkpoint, agent) {
        (Some(p), _) => Some(Arc::new(load_policy(p, &grid, &actions)?.params)),
        (None, AgentKind::Powrl) => return Err(CliError::Usage("the powrl agent needs --checkpoint".into())),
        (None, _) => None,
    };
    let spec = SessionSpec {
        grid,
        chronic,
        actions,
        agent,
        params,
        env: EnvConfig::default(),
        controller: ControllerConfig::default(),
        seed: a.seed,
    };
    let mut session = Session::new(spec).map_err(session_error)?;
    match &a.script {
        Some(path) => {
            let limit = a.max_steps.unwrap_or(usize::MAX);
            for request in read_script(path)?.iter().take(limit) {
                if session.is_done() {
                    break;
                }
                session.step(request).map_err(session_error)?;
            }
        }
        None => {
            session.run(a.max_steps).map_err(session_error)?;
        }
    }
    session.log().save(&a.log)?;
    let env = session.env();
    println!(
        "{} steps, survived {}, total reward {:.3}, end {}",
        session.log().records.len(),
        env.steps_survived(),
        env.total_reward(),
        env.done_reason().map_or("-".into(), |d| format!("{d:?}"))
    );
    Ok(())
}
