//! Text formats. Floats are written with Rust's shortest round-trip
//! representation, so `parse(write(x)) == x` holds bit for bit.
//!
//! Grid (`POWRL-GRID 1`):
//!
//! ```text
//! POWRL-GRID 1
//! name = fig1
//! substations = 4
//! [lines]
//! # id origin extremity reactance thermal_limit
//! [generators]
//! # id substation p_max
//! [loads]
//! # id substation
//! [layout]            (optional)
//! # substation x y
//! ```
//!
//! Chronic (`POWRL-CHRONIC 1`): header keys `id`, `start` (ISO 8601),
//! `steps`, `generators`, `loads`; `[maintenance]` rows `line start
//! duration`; `[opponent]` keys `targets` (comma list, may be empty),
//! `probability`, `budget` (`inf` or integer), `duration`, `cooldown`;
//! `[injections]` rows `step gen_p... load_p...`.
//!
//! Action set (`POWRL-ACTIONS 1`): header keys `grid`, `ranking`;
//! `[actions]` rows `index kind substation impact buses`, where `kind` is
//! `do_nothing` or `set_substation`, `buses` is a comma list of 1/2 and
//! unused columns hold `-`.

use super::text::{self, columns, value, Document};
use super::{Chronic, MaintenanceEvent, OpponentSchedule, ScenarioError};
use crate::environment::Action;
use crate::grid::{Bus, GeneratorSpec, Grid, LineSpec, LoadSpec};
use crate::topology::{ActionEntry, ActionRanking, ActionSet, SubstationAction};
use chrono::NaiveDateTime;
use std::fmt::Write as _;
use std::path::Path;

const GRID_MAGIC: &str = "POWRL-GRID";
const GRID_VERSION: u32 = 1;
const CHRONIC_MAGIC: &str = "POWRL-CHRONIC";
const CHRONIC_VERSION: u32 = 1;
const ACTIONS_MAGIC: &str = "POWRL-ACTIONS";
const ACTIONS_VERSION: u32 = 1;
const TIME_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

fn read(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })
}

fn write_file(path: &Path, text: &str) -> Result<(), ScenarioError> {
    std::fs::write(path, text).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })
}

// ---------------------------------------------------------------- grid

pub fn write_grid(grid: &Grid) -> String {
    let mut s = String::new();
    writeln!(s, "{GRID_MAGIC} {GRID_VERSION}").unwrap();
    writeln!(s, "name = {}", grid.name).unwrap();
    writeln!(s, "substations = {}", grid.n_substations()).unwrap();
    s.push_str("[lines]\n# id origin extremity reactance thermal_limit\n");
    for l in grid.lines() {
        writeln!(s, "{} {} {} {} {}", l.id, l.origin, l.extremity, l.reactance, l.thermal_limit).unwrap();
    }
    s.push_str("[generators]\n# id substation p_max\n");
    for g in grid.generators() {
        writeln!(s, "{} {} {}", g.id, g.substation, g.p_max).unwrap();
    }
    s.push_str("[loads]\n# id substation\n");
    for d in grid.loads() {
        writeln!(s, "{} {}", d.id, d.substation).unwrap();
    }
    if let Some(layout) = grid.layout() {
        s.push_str("[layout]\n# substation x y\n");
        for (i, (x, y)) in layout.iter().enumerate() {
            writeln!(s, "{i} {x} {y}").unwrap();
        }
    }
    s
}

pub fn parse_grid(text: &str) -> Result<Grid, ScenarioError> {
    let doc = text::parse(text, GRID_MAGIC, GRID_VERSION, "grid")?;
    let name: String = doc.header.key("name")?;
    let n_subs: usize = doc.header.key("substations")?;
    let mut lines = Vec::new();
    for (ln, row) in &doc.section("lines")?.rows {
        let [id, o, e, x, lim] = columns::<5>(*ln, row, "line")?;
        lines.push(LineSpec {
            id: value(*ln, id, "line id")?,
            origin: value(*ln, o, "origin")?,
            extremity: value(*ln, e, "extremity")?,
            reactance: value(*ln, x, "reactance")?,
            thermal_limit: value(*ln, lim, "thermal_limit")?,
        });
    }
    let mut gens = Vec::new();
    for (ln, row) in &doc.section("generators")?.rows {
        let [id, sub, pmax] = columns::<3>(*ln, row, "generator")?;
        gens.push(GeneratorSpec {
            id: value(*ln, id, "generator id")?,
            substation: value(*ln, sub, "substation")?,
            p_max: value(*ln, pmax, "p_max")?,
        });
    }
    let mut loads = Vec::new();
    for (ln, row) in &doc.section("loads")?.rows {
        let [id, sub] = columns::<2>(*ln, row, "load")?;
        loads.push(LoadSpec { id: value(*ln, id, "load id")?, substation: value(*ln, sub, "substation")? });
    }
    let mut grid = Grid::new(name, n_subs, lines, gens, loads).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
    if let Some(section) = doc.sections.get("layout") {
        let mut layout = vec![None; n_subs];
        for (ln, row) in &section.rows {
            let [sub, x, y] = columns::<3>(*ln, row, "layout")?;
            let sub: usize = value(*ln, sub, "substation")?;
            if sub >= n_subs {
                return Err(ScenarioError::Schema { line: *ln, message: format!("layout for unknown substation {sub}") });
            }
            layout[sub] = Some((value(*ln, x, "x")?, value(*ln, y, "y")?));
        }
        let layout: Option<Vec<(f64, f64)>> = layout.into_iter().collect();
        let layout = layout.ok_or_else(|| ScenarioError::Schema {
            line: section.line,
            message: "layout must list every substation".into(),
        })?;
        grid = grid.with_layout(layout);
    }
    Ok(grid)
}

pub fn save_grid(grid: &Grid, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    write_file(path.as_ref(), &write_grid(grid))
}

pub fn load_grid(path: impl AsRef<Path>) -> Result<Grid, ScenarioError> {
    parse_grid(&read(path.as_ref())?)
}

// ---------------------------------------------------------------- chronic

pub fn write_chronic(c: &Chronic) -> String {
    let mut s = String::new();
    writeln!(s, "{CHRONIC_MAGIC} {CHRONIC_VERSION}").unwrap();
    writeln!(s, "id = {}", c.id).unwrap();
    writeln!(s, "start = {}", c.start.format(TIME_FORMAT)).unwrap();
    writeln!(s, "steps = {}", c.steps()).unwrap();
    writeln!(s, "generators = {}", c.gen_p.first().map_or(0, Vec::len)).unwrap();
    writeln!(s, "loads = {}", c.load_p.first().map_or(0, Vec::len)).unwrap();
    s.push_str("[maintenance]\n# line start duration\n");
    for ev in &c.maintenance {
        writeln!(s, "{} {} {}", ev.line, ev.start, ev.duration).unwrap();
    }
    let o = &c.opponent;
    s.push_str("[opponent]\n");
    let targets: Vec<String> = o.targets.iter().map(usize::to_string).collect();
    writeln!(s, "targets = {}", targets.join(",")).unwrap();
    writeln!(s, "probability = {}", o.probability).unwrap();
    match o.budget {
        Some(b) => writeln!(s, "budget = {b}").unwrap(),
        None => s.push_str("budget = inf\n"),
    }
    writeln!(s, "duration = {}", o.duration).unwrap();
    writeln!(s, "cooldown = {}", o.cooldown).unwrap();
    s.push_str("[injections]\n# step gen_p... load_p...\n");
    for (t, (g, l)) in c.gen_p.iter().zip(&c.load_p).enumerate() {
        write!(s, "{t}").unwrap();
        for x in g.iter().chain(l) {
            write!(s, " {x}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn parse_chronic(text: &str) -> Result<Chronic, ScenarioError> {
    let doc: Document = text::parse(text, CHRONIC_MAGIC, CHRONIC_VERSION, "chronic")?;
    let id: String = doc.header.key("id")?;
    let (ln, raw) = doc.header.raw("start")?;
    let start = NaiveDateTime::parse_from_str(raw, TIME_FORMAT)
        .map_err(|e| ScenarioError::Schema { line: ln, message: format!("start: {e}") })?;
    let steps: usize = doc.header.key("steps")?;
    let n_gen: usize = doc.header.key("generators")?;
    let n_load: usize = doc.header.key("loads")?;

    let mut maintenance = Vec::new();
    for (ln, row) in &doc.section("maintenance")?.rows {
        let [line, start, duration] = columns::<3>(*ln, row, "maintenance")?;
        maintenance.push(MaintenanceEvent {
            line: value(*ln, line, "line")?,
            start: value(*ln, start, "start")?,
            duration: value(*ln, duration, "duration")?,
        });
    }

    let opp = doc.section("opponent")?;
    let (ln, raw) = opp.raw("targets")?;
    let targets = if raw.is_empty() {
        vec![]
    } else {
        raw.split(',').map(|t| value(ln, t.trim(), "target")).collect::<Result<Vec<usize>, _>>()?
    };
    let (ln, raw) = opp.raw("budget")?;
    let budget = if raw == "inf" { None } else { Some(value(ln, raw, "budget")?) };
    let opponent = OpponentSchedule {
        targets,
        probability: opp.key("probability")?,
        budget,
        duration: opp.key("duration")?,
        cooldown: opp.key("cooldown")?,
    };

    let inj = doc.section("injections")?;
    if inj.rows.len() != steps {
        return Err(ScenarioError::Schema {
            line: inj.line,
            message: format!("[injections] has {} rows, header declares {steps} steps", inj.rows.len()),
        });
    }
    let mut gen_p = Vec::with_capacity(steps);
    let mut load_p = Vec::with_capacity(steps);
    for (t, (ln, row)) in inj.rows.iter().enumerate() {
        if row.len() != 1 + n_gen + n_load {
            return Err(ScenarioError::Schema {
                line: *ln,
                message: format!("injection row needs {} columns, found {}", 1 + n_gen + n_load, row.len()),
            });
        }
        let step: usize = value(*ln, &row[0], "step")?;
        if step != t {
            return Err(ScenarioError::Schema { line: *ln, message: format!("expected step {t}, found {step}") });
        }
        let vals = row[1..].iter().map(|v| value(*ln, v, "injection")).collect::<Result<Vec<f64>, _>>()?;
        gen_p.push(vals[..n_gen].to_vec());
        load_p.push(vals[n_gen..].to_vec());
    }
    let chronic = Chronic { id, start, gen_p, load_p, maintenance, opponent };
    chronic.check()?;
    Ok(chronic)
}

pub fn save_chronic(chronic: &Chronic, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    write_file(path.as_ref(), &write_chronic(chronic))
}

pub fn load_chronic(path: impl AsRef<Path>) -> Result<Chronic, ScenarioError> {
    parse_chronic(&read(path.as_ref())?)
}

/// Loads a chronic and checks every reference against `grid`.
pub fn load_chronic_for(path: impl AsRef<Path>, grid: &Grid) -> Result<Chronic, ScenarioError> {
    let c = load_chronic(path)?;
    c.validate(grid)?;
    Ok(c)
}

// ---------------------------------------------------------------- actions

fn bus_list(buses: &[Bus]) -> String {
    buses.iter().map(|b| b.code().to_string()).collect::<Vec<_>>().join(",")
}

pub fn write_action_set(set: &ActionSet) -> String {
    let mut s = String::new();
    writeln!(s, "{ACTIONS_MAGIC} {ACTIONS_VERSION}").unwrap();
    writeln!(s, "grid = {}", set.grid_name).unwrap();
    writeln!(s, "ranking = {}", set.ranking.as_str()).unwrap();
    s.push_str("[actions]\n# index kind substation impact buses\n");
    for (i, e) in set.entries().iter().enumerate() {
        match &e.action {
            Action::SetSubstation(sa) => {
                writeln!(s, "{i} set_substation {} {} {}", sa.substation, e.impact, bus_list(&sa.buses)).unwrap()
            }
            _ => writeln!(s, "{i} do_nothing - {} -", e.impact).unwrap(),
        }
    }
    s
}

pub fn parse_action_set(text: &str) -> Result<ActionSet, ScenarioError> {
    let doc = text::parse(text, ACTIONS_MAGIC, ACTIONS_VERSION, "action set")?;
    let grid_name: String = doc.header.key("grid")?;
    let (ln, raw) = doc.header.raw("ranking")?;
    let ranking = ActionRanking::parse(raw)
        .ok_or_else(|| ScenarioError::Schema { line: ln, message: format!("unknown ranking `{raw}`") })?;
    let mut entries = Vec::new();
    for (i, (ln, row)) in doc.section("actions")?.rows.iter().enumerate() {
        let [index, kind, sub, impact, buses] = columns::<5>(*ln, row, "action")?;
        let index: usize = value(*ln, index, "index")?;
        if index != i {
            return Err(ScenarioError::Schema { line: *ln, message: format!("expected index {i}, found {index}") });
        }
        let impact: f64 = value(*ln, impact, "impact")?;
        let action = match kind {
            "do_nothing" => Action::DoNothing,
            "set_substation" => {
                let buses = buses
                    .split(',')
                    .map(|b| {
                        let code: i64 = value(*ln, b, "bus")?;
                        match Bus::from_code(code) {
                            Some(bus @ (Bus::One | Bus::Two)) => Ok(bus),
                            _ => Err(ScenarioError::Schema { line: *ln, message: format!("bus must be 1 or 2, found {code}") }),
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Action::SetSubstation(SubstationAction { substation: value(*ln, sub, "substation")?, buses })
            }
            other => return Err(ScenarioError::Schema { line: *ln, message: format!("unknown action kind `{other}`") }),
        };
        entries.push(ActionEntry { action, impact });
    }
    ActionSet::from_entries(grid_name, ranking, entries).map_err(|e| ScenarioError::Invalid(e.to_string()))
}

pub fn save_action_set(set: &ActionSet, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    write_file(path.as_ref(), &write_action_set(set))
}

pub fn load_action_set(path: impl AsRef<Path>) -> Result<ActionSet, ScenarioError> {
    parse_action_set(&read(path.as_ref())?)
}
