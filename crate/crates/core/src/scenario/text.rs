//! Line-oriented "header + key/value + [section] tables" text container
//! shared by the grid, chronic and action-set formats.
//!
//! ```text
//! MAGIC <version>
//! key = value
//! [section]
//! # comment
//! row tokens ...
//! ```

use super::ScenarioError;
use std::collections::BTreeMap;
use std::str::FromStr;

#[derive(Debug, Default)]
pub(crate) struct Section {
    pub line: usize,
    pub keys: BTreeMap<String, (usize, String)>,
    pub rows: Vec<(usize, Vec<String>)>,
}

impl Section {
    pub fn key<T: FromStr>(&self, key: &'static str) -> Result<T, ScenarioError>
    where
        T::Err: std::fmt::Display,
    {
        let (line, raw) = self.keys.get(key).ok_or(ScenarioError::MissingKey(key))?;
        raw.parse().map_err(|e| ScenarioError::Schema {
            line: *line,
            message: format!("`{key}`: cannot parse `{raw}`: {e}"),
        })
    }

    pub fn raw(&self, key: &'static str) -> Result<(usize, &str), ScenarioError> {
        self.keys.get(key).map(|(l, v)| (*l, v.as_str())).ok_or(ScenarioError::MissingKey(key))
    }
}

#[derive(Debug)]
pub(crate) struct Document {
    pub header: Section,
    pub sections: BTreeMap<String, Section>,
}

impl Document {
    pub fn section(&self, name: &'static str) -> Result<&Section, ScenarioError> {
        self.sections.get(name).ok_or(ScenarioError::MissingSection(name))
    }
}

pub(crate) fn parse(text: &str, magic: &str, version: u32, kind: &'static str) -> Result<Document, ScenarioError> {
    let mut lines = text.lines().enumerate();
    let first = lines.next().map(|(_, l)| l.trim()).unwrap_or("");
    let mut head = first.split_whitespace();
    if head.next() != Some(magic) {
        return Err(ScenarioError::BadHeader { expected: format!("{magic} {version}"), found: first.to_string() });
    }
    let found: u32 = head
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| ScenarioError::Schema { line: 1, message: "missing version number".into() })?;
    if found != version {
        return Err(ScenarioError::Version { kind, found, supported: version });
    }

    let mut doc = Document { header: Section { line: 1, ..Section::default() }, sections: BTreeMap::new() };
    let mut current: Option<String> = None;
    for (i, raw) in lines {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim().to_string();
            if doc.sections.contains_key(&name) {
                return Err(ScenarioError::Schema { line: line_no, message: format!("duplicate section [{name}]") });
            }
            doc.sections.insert(name.clone(), Section { line: line_no, ..Section::default() });
            current = Some(name);
            continue;
        }
        let target = match &current {
            Some(name) => doc.sections.get_mut(name).unwrap(),
            None => &mut doc.header,
        };
        if let Some((k, v)) = line.split_once('=') {
            let k = k.trim().to_string();
            if target.keys.insert(k.clone(), (line_no, v.trim().to_string())).is_some() {
                return Err(ScenarioError::Schema { line: line_no, message: format!("duplicate key `{k}`") });
            }
        } else if current.is_some() {
            target.rows.push((line_no, line.split_whitespace().map(str::to_string).collect()));
        } else {
            return Err(ScenarioError::Schema { line: line_no, message: format!("unexpected `{line}` before first section") });
        }
    }
    Ok(doc)
}

/// Parses row `fields` into exactly `N` typed columns.
pub(crate) fn columns<'a, const N: usize>(line: usize, fields: &'a [String], what: &str) -> Result<[&'a str; N], ScenarioError> {
    if fields.len() != N {
        return Err(ScenarioError::Schema {
            line,
            message: format!("{what} row needs {N} columns, found {}", fields.len()),
        });
    }
    Ok(std::array::from_fn(|i| fields[i].as_str()))
}

pub(crate) fn value<T: FromStr>(line: usize, raw: &str, what: &str) -> Result<T, ScenarioError>
where
    T::Err: std::fmt::Display,
{
    raw.parse()
        .map_err(|e| ScenarioError::Schema { line, message: format!("{what}: cannot parse `{raw}`: {e}") })
}
