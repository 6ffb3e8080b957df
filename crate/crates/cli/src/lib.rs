//! Command-line harness: runs scenario files open- or closed-loop, sweeps
//! parameter grids and writes traces, plots and reports.

pub mod commands;
pub mod document;
pub mod grid;
pub mod plot;

use std::fmt;
use std::path::{Path, PathBuf};

use orchestra::eval::EvalError;
use orchestra::orchestrator::OrchestrationError;
use orchestra::scenario::ScenarioError;

pub use commands::{cmd_compare_modes, cmd_run, cmd_validate, Mode, Settings};
pub use grid::{cmd_grid, CellStatus, GridDocument};

/// Process exit status of each failure class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Parse = 2,
    Lowering = 3,
    Solve = 4,
    Evaluation = 5,
    Io = 6,
}

impl Exit {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug)]
pub struct HarnessError {
    pub exit: Exit,
    pub message: String,
}

impl HarnessError {
    pub fn new(exit: Exit, message: impl Into<String>) -> Self {
        HarnessError { exit, message: message.into() }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        HarnessError::new(Exit::Io, format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for HarnessError {}

impl From<ScenarioError> for HarnessError {
    fn from(e: ScenarioError) -> Self {
        let exit = match &e {
            ScenarioError::Io { .. } => Exit::Io,
            ScenarioError::Toml(_) | ScenarioError::Parse { .. } | ScenarioError::Invalid(_) => Exit::Parse,
            ScenarioError::Lower(_) | ScenarioError::Map(_) => Exit::Lowering,
        };
        HarnessError::new(exit, e.to_string())
    }
}

impl From<OrchestrationError> for HarnessError {
    fn from(e: OrchestrationError) -> Self {
        let exit = match &e {
            OrchestrationError::Route { .. } | OrchestrationError::Profile(_) | OrchestrationError::Lower(_) => Exit::Lowering,
            OrchestrationError::Config(_) | OrchestrationError::Mode(_) => Exit::Parse,
            OrchestrationError::Solve(_) | OrchestrationError::OffPath { .. } | OrchestrationError::Instantiate(_) => Exit::Solve,
        };
        HarnessError::new(exit, e.to_string())
    }
}

impl From<EvalError> for HarnessError {
    fn from(e: EvalError) -> Self {
        HarnessError::new(Exit::Evaluation, format!("evaluation: {e}"))
    }
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let mut tmp = PathBuf::from(path);
    tmp.as_mut_os_string().push(".tmp");
    std::fs::write(&tmp, contents).map_err(|e| HarnessError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}
