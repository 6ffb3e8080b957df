//! Scenario files: a TOML document carrying the program text, parameter
//! values, map, ego behavior, limits, success criteria and an optional
//! parameter grid.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;
use toml::Spanned;

use crate::dsl::{parse_scenario, BoilerplateConfig, ScenarioProgram};
use crate::eval::SuccessCriteria;
use crate::lane_map::{build_t_intersection, LaneGraph, MapError, TIntersectionConfig};
use crate::orchestrator::{assemble_initial, IdmConfig, OrchestrationError, OrchestrationMode, Problem};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed scenario file: {0}")]
    Toml(String),
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{0}")]
    Lower(String),
    #[error("map: {0}")]
    Map(#[from] MapError),
    #[error("{0}")]
    Invalid(String),
}

/// Where the lane graph comes from.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum MapSource {
    /// A lane graph JSON file, relative to the scenario file.
    File { file: PathBuf },
    TIntersection(TIntersectionConfig),
}

impl Default for MapSource {
    fn default() -> Self {
        MapSource::TIntersection(TIntersectionConfig::default())
    }
}

/// Default execution settings; command-line flags override them.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunDefaults {
    pub horizon: f64,
    pub dt: f64,
    pub replan_hz: f64,
}

impl Default for RunDefaults {
    fn default() -> Self {
        RunDefaults { horizon: 20.0, dt: 0.1, replan_hz: 1.0 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    id: String,
    #[serde(default)]
    family: Option<String>,
    #[serde(default)]
    description: String,
    actors: Spanned<String>,
    constraints: Spanned<String>,
    #[serde(default)]
    parameters: BTreeMap<String, f64>,
    #[serde(default)]
    map: MapSource,
    #[serde(default)]
    ego: IdmConfig,
    #[serde(default)]
    limits: BoilerplateConfig,
    #[serde(default)]
    run: RunDefaults,
    #[serde(default)]
    expect: Option<SuccessCriteria>,
    #[serde(default)]
    grid: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub id: String,
    pub family: String,
    pub description: String,
    pub program: ScenarioProgram,
    /// The assembled program as parsed.
    pub program_text: String,
    pub parameters: BTreeMap<String, f64>,
    pub map: MapSource,
    pub ego: IdmConfig,
    pub limits: BoilerplateConfig,
    pub run: RunDefaults,
    pub expect: Option<SuccessCriteria>,
    /// Values to sweep per parameter.
    pub grid: BTreeMap<String, Vec<f64>>,
    base_dir: Option<PathBuf>,
    /// File line of each program line, 1-based, index 0 unused.
    lines: Vec<usize>,
}

/// 1-based line of byte `offset` in `text`.
fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// File line of the first content line of a TOML string whose literal starts at `start`.
fn content_line(text: &str, start: usize) -> usize {
    let rest = &text[start..];
    let opener = ["\"\"\"", "'''"].into_iter().find(|q| rest.starts_with(q));
    match opener {
        Some(q) if rest[q.len()..].starts_with('\n') || rest[q.len()..].starts_with("\r\n") => line_of(text, start) + 1,
        _ => line_of(text, start),
    }
}

impl Scenario {
    /// Parses a scenario document. Map files are resolved against `base_dir`.
    pub fn from_toml(text: &str, base_dir: Option<&Path>) -> Result<Scenario, ScenarioError> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| ScenarioError::Toml(e.to_string()))?;
        let actors = raw.actors.get_ref().trim_end();
        let constraints = raw.constraints.get_ref();
        let actor_first = content_line(text, raw.actors.span().start);
        let constraint_first = content_line(text, raw.constraints.span().start);
        let actor_lines = actors.lines().count();
        let program_text = format!("{actors}\n\nConstraints:\n{constraints}");

        let mut lines = vec![0];
        lines.extend((0..actor_lines).map(|i| actor_first + i));
        // The separator lines have no counterpart in the file; point them at the constraints key.
        lines.extend([constraint_first.saturating_sub(1).max(1); 2]);
        lines.extend((0..constraints.lines().count().max(1)).map(|i| constraint_first + i));

        let program = parse_scenario(&program_text).map_err(|e| ScenarioError::Parse {
            line: lines.get(e.line).copied().unwrap_or(e.line),
            column: e.column,
            message: e.message,
        })?;
        let mut expect = raw.expect;
        if let Some(c) = &mut expect {
            c.routes = program.actors.iter().map(|a| (a.id, a.route.clone())).collect();
        }
        for (name, values) in &raw.grid {
            if values.is_empty() {
                return Err(ScenarioError::Invalid(format!("grid parameter `{name}` has no values")));
            }
        }
        Ok(Scenario {
            family: raw.family.unwrap_or_else(|| raw.id.clone()),
            id: raw.id,
            description: raw.description,
            program,
            program_text,
            parameters: raw.parameters,
            map: raw.map,
            ego: raw.ego,
            limits: raw.limits,
            run: raw.run,
            expect,
            grid: raw.grid,
            base_dir: base_dir.map(Path::to_path_buf),
            lines,
        })
    }

    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
        Scenario::from_toml(&text, path.parent())
    }

    /// File line of a program line.
    pub fn file_line(&self, program_line: usize) -> usize {
        self.lines.get(program_line).copied().unwrap_or(program_line)
    }

    pub fn graph(&self) -> Result<LaneGraph, ScenarioError> {
        match &self.map {
            MapSource::TIntersection(config) => Ok(build_t_intersection(config)),
            MapSource::File { file } => {
                let path = self.base_dir.as_ref().map_or_else(|| file.clone(), |d| d.join(file));
                let text = std::fs::read_to_string(&path).map_err(|source| ScenarioError::Io { path, source })?;
                Ok(LaneGraph::from_json(&text)?)
            }
        }
    }

    /// Scenario parameters with `overrides` applied.
    pub fn bindings(&self, overrides: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
        let mut b = self.parameters.clone();
        b.extend(overrides.iter().map(|(k, v)| (k.clone(), *v)));
        b
    }

    /// Resolves routes and conflicts for the given parameter values.
    pub fn problem(&self, overrides: &BTreeMap<String, f64>) -> Result<Problem, ScenarioError> {
        Problem::new(&self.id, &self.program, &self.graph()?, self.bindings(overrides), self.limits)
            .map_err(|e| self.relocate(e))
    }

    /// Builds the problem and lowers every constraint without solving.
    pub fn check(&self, overrides: &BTreeMap<String, f64>) -> Result<Problem, ScenarioError> {
        let problem = self.problem(overrides)?;
        assemble_initial(&problem, OrchestrationMode::OpenLoop).map_err(|e| self.relocate(e))?;
        Ok(problem)
    }

    /// Success criteria, with intended routes taken from the actor declarations.
    pub fn criteria(&self) -> Option<&SuccessCriteria> {
        self.expect.as_ref()
    }

    /// Rewrites program line numbers in an orchestration error into file lines.
    pub fn relocate(&self, err: OrchestrationError) -> ScenarioError {
        match err {
            OrchestrationError::Lower(e) => {
                let line = self.file_line(e.line());
                ScenarioError::Lower(e.at_line(line).to_string())
            }
            OrchestrationError::Route { source, .. } => ScenarioError::Map(source),
            other => ScenarioError::Invalid(other.to_string()),
        }
    }
}
