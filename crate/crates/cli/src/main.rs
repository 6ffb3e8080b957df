use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use orchestra_cli::grid::GridOptions;
use orchestra_cli::{cmd_compare_modes, cmd_grid, cmd_run, cmd_validate, Exit, HarnessError, Mode, Settings};

#[derive(Parser)]
#[command(name = "orchestra", version, about = "Run, sweep and compare orchestrated traffic scenarios")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Run one scenario and write its trace, plot and report.
    Run(Common),
    /// Run every cell of a parameter grid.
    Grid {
        #[command(flatten)]
        common: Common,
        /// Grid axis as `name=v1,v2,...`; replaces the scenario's grid table.
        #[arg(long = "axis", value_parser = parse_axis)]
        axes: Vec<(String, Vec<f64>)>,
        /// Run only this many cells, drawn with --seed.
        #[arg(long)]
        sample: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
        /// Tolerance level that decides pass or fail (0 is the tightest).
        #[arg(long, default_value_t = 0)]
        level: usize,
    },
    /// Run open-loop and closed-loop under the same ego and report both.
    CompareModes(Common),
    /// Parse and lower the scenario without solving.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    scenario: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::ClosedLoop)]
    mode: Mode,
    #[arg(long)]
    replan_hz: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    /// Ascending comma-separated tolerances.
    #[arg(long, value_delimiter = ',')]
    ladder: Option<Vec<f64>>,
    #[arg(long, env = "ORCHESTRA_SOLVER")]
    solver: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Parameter override as `name=value`.
    #[arg(long = "set", value_parser = parse_binding)]
    set: Vec<(String, f64)>,
}

impl Common {
    fn settings(self) -> Settings {
        Settings {
            scenario: self.scenario,
            mode: self.mode,
            replan_hz: self.replan_hz,
            horizon: self.horizon,
            dt: self.dt,
            ladder: self.ladder,
            solver: self.solver,
            out: self.out,
            seed: self.seed,
            set: self.set.into_iter().collect::<BTreeMap<_, _>>(),
        }
    }
}

fn parse_binding(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or("expected name=value")?;
    let value = value.trim().parse().map_err(|e| format!("{value}: {e}"))?;
    Ok((name.trim().to_string(), value))
}

fn parse_axis(s: &str) -> Result<(String, Vec<f64>), String> {
    let (name, values) = s.split_once('=').ok_or("expected name=v1,v2,...")?;
    let values = values
        .split(',')
        .filter(|v| !v.trim().is_empty())
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("{v}: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((name.trim().to_string(), values))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.verb {
        Verb::Run(c) => cmd_run(&c.settings()),
        Verb::CompareModes(c) => cmd_compare_modes(&c.settings()),
        Verb::Validate(c) => cmd_validate(&c.settings()),
        Verb::Grid { common, axes, sample, workers, level } => {
            let options = GridOptions { axes, sample, workers, level };
            cmd_grid(&common.settings(), &options).map(|(outcome, _)| outcome)
        }
    };
    match result {
        Ok(outcome) => {
            for line in &outcome.lines {
                println!("{line}");
            }
            for path in &outcome.artifacts {
                println!("wrote {}", path.display());
            }
            ExitCode::from(outcome.exit.code() as u8)
        }
        Err(HarnessError { exit, message }) => {
            eprintln!("error: {message}");
            debug_assert_ne!(exit, Exit::Ok);
            ExitCode::from(exit.code() as u8)
        }
    }
}
