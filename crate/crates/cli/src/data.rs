//! On-disk scenario directories.
//!
//! A scenario directory holds one grid and everything that refers to it:
//!
//! ```text
//! <dir>/grid.grid
//! <dir>/actions.actions          optional
//! <dir>/chronics/*.chronic
//! <dir>/checkpoints/*.ckpt       optional
//! ```
//!
//! `powrl generate` writes this layout; `powrl serve --data` accepts either
//! one such directory or a directory of them.

use crate::error::{io_error, CliError};
use powrl_core::grid::Grid;
use powrl_core::scenario::{load_action_set, load_chronic_for, load_grid, Chronic};
use powrl_core::topology::ActionSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub const GRID_FILE: &str = "grid.grid";
pub const ACTIONS_FILE: &str = "actions.actions";
pub const CHRONICS_DIR: &str = "chronics";
pub const CHECKPOINTS_DIR: &str = "checkpoints";

/// Files in `dir` with extension `ext`, sorted by name.
pub fn files_with_extension(dir: &Path, ext: &str) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| io_error(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|x| x == ext) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Every `*.chronic` file of `dir`, validated against `grid`.
pub fn load_chronics_dir(dir: &Path, grid: &Grid) -> Result<Vec<Arc<Chronic>>, CliError> {
    let files = files_with_extension(dir, "chronic")?;
    if files.is_empty() {
        return Err(CliError::Data(format!("{}: no .chronic files", dir.display())));
    }
    files
        .iter()
        .map(|p| load_chronic_for(p, grid).map(Arc::new).map_err(|e| CliError::Data(format!("{}: {e}", p.display()))))
        .collect()
}

#[derive(Debug, Clone)]
pub struct ScenarioDir {
    pub root: PathBuf,
    pub grid: Arc<Grid>,
    pub chronics: Vec<Arc<Chronic>>,
    pub actions: Option<Arc<ActionSet>>,
    /// File names under `checkpoints/`.
    pub checkpoints: Vec<String>,
}

impl ScenarioDir {
    pub fn is_scenario_dir(path: &Path) -> bool {
        path.join(GRID_FILE).is_file()
    }

    pub fn load(root: &Path) -> Result<Self, CliError> {
        let grid = load_grid(root.join(GRID_FILE))?;
        let chronics = load_chronics_dir(&root.join(CHRONICS_DIR), &grid)?;
        let actions_path = root.join(ACTIONS_FILE);
        let actions = if actions_path.is_file() {
            let set = load_action_set(&actions_path)?;
            if set.grid_name != grid.name {
                return Err(CliError::Data(format!(
                    "{}: built for grid `{}`, directory holds `{}`",
                    actions_path.display(),
                    set.grid_name,
                    grid.name
                )));
            }
            Some(Arc::new(set))
        } else {
            None
        };
        let ck_dir = root.join(CHECKPOINTS_DIR);
        let checkpoints = if ck_dir.is_dir() {
            files_with_extension(&ck_dir, "ckpt")?
                .iter()
                .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
                .collect()
        } else {
            vec![]
        };
        Ok(ScenarioDir { root: root.to_path_buf(), grid: Arc::new(grid), chronics, actions, checkpoints })
    }

    pub fn chronic(&self, id: &str) -> Option<&Arc<Chronic>> {
        self.chronics.iter().find(|c| c.id == id)
    }

    pub fn checkpoint_path(&self, name: &str) -> Option<PathBuf> {
        self.checkpoints.iter().any(|c| c == name).then(|| self.root.join(CHECKPOINTS_DIR).join(name))
    }
}

/// Loads `path` if it is a scenario directory, else each scenario directory
/// directly inside it. Grid names must be unique.
pub fn load_catalog(path: &Path) -> Result<Vec<ScenarioDir>, CliError> {
    let mut dirs = Vec::new();
    if ScenarioDir::is_scenario_dir(path) {
        dirs.push(ScenarioDir::load(path)?);
    } else {
        let mut children: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| ScenarioDir::is_scenario_dir(p))
            .collect();
        children.sort();
        for c in children {
            dirs.push(ScenarioDir::load(&c)?);
        }
    }
    if dirs.is_empty() {
        return Err(CliError::Data(format!("{}: no scenario directory (expected {GRID_FILE})", path.display())));
    }
    for (i, d) in dirs.iter().enumerate() {
        if dirs[..i].iter().any(|o| o.grid.name == d.grid.name) {
            return Err(CliError::Data(format!("grid `{}` appears in more than one directory", d.grid.name)));
        }
    }
    Ok(dirs)
}
