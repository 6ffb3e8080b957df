//! SMT-LIB 2 over a solver subprocess.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::time::Duration;

use super::sexpr::{model_entries, parse_all, Value};
use super::{Answer, Backend, SolverError};

/// Environment variable overriding the solver binary.
pub const SOLVER_ENV: &str = "ORCHESTRA_SOLVER";

const MARK: &str = "@@orchestra@@";

/// Runs one solver process per query, fed through standard input.
#[derive(Debug, Clone)]
pub struct SmtProcess {
    pub path: PathBuf,
}

impl SmtProcess {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        SmtProcess { path: path.into() }
    }

    /// `$ORCHESTRA_SOLVER` if set, else `z3` from `PATH`.
    pub fn from_env() -> Self {
        SmtProcess::new(std::env::var_os(SOLVER_ENV).map(PathBuf::from).unwrap_or_else(|| "z3".into()))
    }
}

impl Default for SmtProcess {
    fn default() -> Self {
        SmtProcess::from_env()
    }
}

fn driver() -> String {
    format!(
        "(check-sat)\n(echo \"{MARK}\")\n(get-model)\n(echo \"{MARK}\")\n\
         (set-option :pp.decimal true)\n(set-option :pp.decimal_precision 40)\n(get-model)\n(echo \"{MARK}\")\n\
         (get-info :reason-unknown)\n(echo \"{MARK}\")\n"
    )
}

impl Backend for SmtProcess {
    fn name(&self) -> String {
        self.path.display().to_string()
    }

    fn check(&self, script: &str, timeout: Duration) -> Result<Answer, SolverError> {
        // The hard limit ends the process if the soft timeout is not honoured.
        let hard = timeout.as_secs() + 2;
        let mut child = Command::new(&self.path)
            .args(["-in", "-smt2", &format!("-T:{hard}")])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| SolverError::Transport(format!("cannot start `{}`: {e}", self.path.display())))?;
        {
            let mut stdin = child.stdin.take().expect("piped stdin");
            stdin
                .write_all(script.as_bytes())
                .and_then(|_| stdin.write_all(driver().as_bytes()))
                .map_err(|e| SolverError::Transport(format!("writing to solver: {e}")))?;
        }
        let output = child.wait_with_output().map_err(|e| SolverError::Transport(format!("reading solver output: {e}")))?;
        let stdout = String::from_utf8_lossy(&output.stdout);
        parse_reply(&stdout).map_err(|msg| {
            let stderr = String::from_utf8_lossy(&output.stderr);
            SolverError::Transport(format!("{msg}; stderr: {}", stderr.trim()))
        })
    }
}

fn parse_reply(stdout: &str) -> Result<Answer, String> {
    let sections: Vec<&str> = stdout.split(MARK).collect();
    let status = sections[0].lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    match status {
        "sat" => {}
        "unsat" => return Ok(Answer::Unsat),
        // Killed by the hard limit before answering.
        "" => return Ok(Answer::Timeout),
        "unknown" => {
            let reason = sections.get(3).map(|s| s.trim()).unwrap_or("");
            return Ok(if reason.contains("timeout") || reason.contains("canceled") {
                Answer::Timeout
            } else {
                Answer::Unknown(reason.to_string())
            });
        }
        other if other.starts_with("(error") => return Err(format!("solver rejected the query: {other}")),
        other => return Err(format!("unexpected solver reply `{other}`")),
    }
    let read = |i: usize| -> Result<Vec<(String, Value)>, String> {
        let text = sections.get(i).ok_or("truncated model")?;
        let parsed = parse_all(text)?;
        Ok(parsed.first().map(model_entries).unwrap_or_default())
    };
    let decimals: BTreeMap<String, Value> = read(2)?.into_iter().collect();
    let mut model = BTreeMap::new();
    for (name, value) in read(1)? {
        let value = match value {
            Value::Irrational => decimals.get(&name).cloned().unwrap_or(Value::Irrational),
            v => v,
        };
        model.insert(name, value);
    }
    Ok(Answer::Sat(model))
}
