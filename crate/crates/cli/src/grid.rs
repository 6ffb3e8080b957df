//! Parameter grids: the cross product of per-parameter value lists, one run per cell.

use std::collections::BTreeMap;

use orchestra::eval::SuccessReport;
use orchestra::orchestrator::{OrchestrationError, Trace};
use orchestra::scenario::Scenario;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::commands::{assess, execute, run_hash, Mode, Settings, SolveTimes};
use crate::document::{write_trace, Header};
use crate::{write_atomic, Exit, HarnessError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Pass,
    Fail,
    /// The run completed but some trigger's anchor never happened.
    NotMet,
    /// No initial solution on any ladder step.
    Infeasible,
    /// Any other orchestration or evaluation failure.
    Error,
}

impl CellStatus {
    pub fn mark(self) -> &'static str {
        match self {
            CellStatus::Pass => "ok",
            CellStatus::Fail => "--",
            CellStatus::NotMet => "x",
            CellStatus::Infeasible => "inf",
            CellStatus::Error => "err",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Cell {
    pub index: usize,
    pub parameters: BTreeMap<String, f64>,
    pub status: CellStatus,
    pub residuals: Vec<Option<f64>>,
    /// Overall pass per tolerance level.
    pub levels: Vec<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridSummary {
    pub cells: usize,
    pub passed: usize,
    pub failed: usize,
    pub not_met: usize,
    pub infeasible: usize,
    pub errors: usize,
    /// Passes over cells that had an initial solution.
    pub pass_rate_feasible: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridDocument {
    pub scenario_id: String,
    pub mode: Mode,
    /// Tolerance level a cell must meet to pass.
    pub level: usize,
    pub threshold_m: f64,
    pub axes: Vec<(String, Vec<f64>)>,
    pub cells: Vec<Cell>,
    pub summary: GridSummary,
    pub solve_times: SolveTimes,
}

/// Grid options on top of [`Settings`].
#[derive(Debug, Clone, Default)]
pub struct GridOptions {
    /// Replaces the scenario's `[grid]` table when non-empty.
    pub axes: Vec<(String, Vec<f64>)>,
    /// Runs only this many cells, drawn with the settings' seed.
    pub sample: Option<usize>,
    /// Worker threads; `None` uses one per core.
    pub workers: Option<usize>,
    /// Tolerance level index that decides pass or fail.
    pub level: usize,
}

fn cross_product(axes: &[(String, Vec<f64>)]) -> Vec<BTreeMap<String, f64>> {
    let mut cells = vec![BTreeMap::new()];
    for (name, values) in axes {
        cells = cells
            .into_iter()
            .flat_map(|c| {
                values.iter().map(move |v| {
                    let mut c = c.clone();
                    c.insert(name.clone(), *v);
                    c
                })
            })
            .collect();
    }
    cells
}

/// How far a cell's run got.
#[derive(Debug, Clone)]
pub enum CellRun {
    /// The initial solve failed on every ladder step.
    Infeasible(String),
    Failed(String),
    Ran(Option<SuccessReport>),
}

pub fn classify(run: &CellRun, level: usize) -> CellStatus {
    match run {
        CellRun::Infeasible(_) => CellStatus::Infeasible,
        CellRun::Failed(_) => CellStatus::Error,
        CellRun::Ran(None) => CellStatus::Pass,
        CellRun::Ran(Some(r)) if r.triggers.iter().any(|t| t.measured.is_none()) => CellStatus::NotMet,
        CellRun::Ran(Some(r)) if r.overall(level) => CellStatus::Pass,
        CellRun::Ran(Some(_)) => CellStatus::Fail,
    }
}

/// Runs every cell of the grid and writes `<id>.grid.json` plus one trace per cell.
pub fn cmd_grid(settings: &Settings, options: &GridOptions) -> Result<(crate::commands::Outcome, GridDocument), HarnessError> {
    let scenario = Scenario::load(&settings.scenario)?;
    let config = settings.run_config(&scenario)?;
    let axes: Vec<(String, Vec<f64>)> =
        if options.axes.is_empty() { scenario.grid.clone().into_iter().collect() } else { options.axes.clone() };
    for (name, values) in &axes {
        if !scenario.parameters.contains_key(name) {
            return Err(HarnessError::new(Exit::Parse, format!("grid parameter `{name}` is not a scenario parameter")));
        }
        if values.is_empty() {
            return Err(HarnessError::new(Exit::Parse, format!("grid parameter `{name}` has no values")));
        }
    }
    let levels = orchestra::eval::default_tolerances();
    let threshold = levels.get(options.level).ok_or_else(|| HarnessError::new(Exit::Parse, "no such tolerance level"))?.distance_m;

    let mut cells: Vec<(usize, BTreeMap<String, f64>)> = cross_product(&axes).into_iter().enumerate().collect();
    if let Some(n) = options.sample.filter(|&n| n < cells.len()) {
        let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
        let mut keep = sample(&mut rng, cells.len(), n).into_vec();
        keep.sort_unstable();
        cells = keep.into_iter().map(|i| cells[i].clone()).collect();
    }

    let backend = settings.backend();
    let run_cell = |(index, params): &(usize, BTreeMap<String, f64>)| -> Result<(Cell, Option<Trace>), HarnessError> {
        let mut overrides = settings.set.clone();
        overrides.extend(params.iter().map(|(k, v)| (k.clone(), *v)));
        let problem = scenario.check(&overrides)?;
        let (run, trace) = match execute(&scenario, &problem, &config, &backend, settings.mode) {
            Err(e) if is_infeasible(&e) => (CellRun::Infeasible(e.to_string()), None),
            Err(e) => (CellRun::Failed(e.to_string()), None),
            Ok(trace) => match assess(&scenario, &problem, &trace) {
                Ok(report) => (CellRun::Ran(report), Some(trace)),
                Err(e) => (CellRun::Failed(e.message), Some(trace)),
            },
        };
        let status = classify(&run, options.level);
        let (message, residuals, levels) = match run {
            CellRun::Infeasible(m) | CellRun::Failed(m) => (Some(m), Vec::new(), Vec::new()),
            CellRun::Ran(report) => {
                let residuals = report.as_ref().map_or(Vec::new(), |r| r.triggers.iter().map(|t| t.residual).collect());
                let levels = report.as_ref().map_or(Vec::new(), |r| r.levels.iter().map(|l| l.overall).collect());
                (None, residuals, levels)
            }
        };
        let mut trace_file = None;
        if let Some(t) = &trace {
            let hash = run_hash(&scenario, &problem, &config, settings.mode, settings.seed)?;
            let name = format!("{}.cell{index:03}.trace.jsonl", scenario.id);
            let path = settings.out.join("cells").join(&name);
            write_atomic(&path, &write_trace(&Header::new(t, hash, problem.bindings.clone()), t))?;
            trace_file = Some(format!("cells/{name}"));
        }
        let cell = Cell { index: *index, parameters: params.clone(), status, residuals, levels, message, trace: trace_file };
        Ok((cell, trace))
    };

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = options.workers {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| HarnessError::new(Exit::Io, format!("worker pool: {e}")))?;
    let results: Vec<Result<(Cell, Option<Trace>), HarnessError>> = pool.install(|| cells.par_iter().map(run_cell).collect());

    let mut done = Vec::with_capacity(results.len());
    let mut traces = Vec::new();
    for (r, (index, params)) in results.into_iter().zip(&cells) {
        match r {
            Ok((cell, trace)) => {
                done.push(cell);
                traces.extend(trace);
            }
            // An I/O failure stops the batch; anything else is recorded against the cell.
            Err(e) if e.exit == Exit::Io => return Err(e),
            Err(e) => done.push(Cell {
                index: *index,
                parameters: params.clone(),
                status: CellStatus::Error,
                residuals: Vec::new(),
                levels: Vec::new(),
                message: Some(e.message),
                trace: None,
            }),
        }
    }
    let count = |s: CellStatus| done.iter().filter(|c| c.status == s).count();
    let infeasible = count(CellStatus::Infeasible);
    let passed = count(CellStatus::Pass);
    let feasible = done.len() - infeasible;
    let summary = GridSummary {
        cells: done.len(),
        passed,
        failed: count(CellStatus::Fail),
        not_met: count(CellStatus::NotMet),
        infeasible,
        errors: count(CellStatus::Error),
        pass_rate_feasible: (feasible > 0).then(|| passed as f64 / feasible as f64),
    };
    let doc = GridDocument {
        scenario_id: scenario.id.clone(),
        mode: settings.mode,
        level: options.level,
        threshold_m: threshold,
        axes,
        cells: done,
        summary,
        solve_times: SolveTimes::from_traces(&traces),
    };
    let path = settings.out.join(format!("{}.grid.json", scenario.id));
    let mut text = serde_json::to_string_pretty(&doc).expect("grid documents serialize");
    text.push('\n');
    write_atomic(&path, &text)?;

    let mut lines = render_matrix(&doc);
    lines.push(doc.solve_times.summary());
    Ok((crate::commands::Outcome { exit: Exit::Ok, lines, artifacts: vec![path] }, doc))
}

/// Text rendering: a matrix for two axes, one line per cell otherwise.
pub fn render_matrix(doc: &GridDocument) -> Vec<String> {
    let mut lines = Vec::new();
    if let [(row_name, rows), (col_name, cols)] = doc.axes.as_slice() {
        lines.push(format!("rows: {row_name}, columns: {col_name}"));
        let mut head = format!("{:>10}", "");
        for c in cols {
            head.push_str(&format!("{c:>8}"));
        }
        lines.push(head);
        for r in rows {
            let mut line = format!("{r:>10}");
            for c in cols {
                let mark = doc
                    .cells
                    .iter()
                    .find(|cell| cell.parameters.get(row_name) == Some(r) && cell.parameters.get(col_name) == Some(c))
                    .map_or(" ", |cell| cell.status.mark());
                line.push_str(&format!("{mark:>8}"));
            }
            lines.push(line);
        }
    } else {
        for cell in &doc.cells {
            let params: Vec<String> = cell.parameters.iter().map(|(k, v)| format!("{k}={v}")).collect();
            lines.push(format!("{:>4} {:<4} {}", cell.index, cell.status.mark(), params.join(" ")));
        }
    }
    let s = &doc.summary;
    lines.push(format!(
        "{} cells at {} m: {} pass, {} fail, {} not met, {} infeasible, {} error; pass rate over feasible cells {}",
        s.cells,
        doc.threshold_m,
        s.passed,
        s.failed,
        s.not_met,
        s.infeasible,
        s.errors,
        s.pass_rate_feasible.map_or("n/a".into(), |r| format!("{:.0}%", 100.0 * r))
    ));
    lines
}

/// Whether an orchestration failure means the cell has no solution at all.
pub fn is_infeasible(err: &OrchestrationError) -> bool {
    matches!(err, OrchestrationError::Solve(_))
}
