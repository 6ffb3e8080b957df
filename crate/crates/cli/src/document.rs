//! JSONL trace documents: one header line, then one record per frame and per replan.

use std::collections::BTreeMap;

use orchestra::orchestrator::{Execution, ReplanRecord, Trace, WorldState};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const FORMAT: &str = "orchestra-trace";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub format_version: u32,
    pub engine_version: String,
    pub scenario_id: String,
    pub execution: Execution,
    pub dt: f64,
    /// Digest of everything that determines the run; see [`config_hash`].
    pub config_hash: String,
    pub parameters: BTreeMap<String, f64>,
}

impl Header {
    pub fn new(trace: &Trace, config_hash: String, parameters: BTreeMap<String, f64>) -> Self {
        Header {
            format: FORMAT.into(),
            format_version: FORMAT_VERSION,
            engine_version: env!("CARGO_PKG_VERSION").into(),
            scenario_id: trace.scenario_id.clone(),
            execution: trace.execution,
            dt: trace.dt,
            config_hash,
            parameters,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Header(Header),
    Frame(WorldState),
    Replan(ReplanRecord),
}

#[derive(Debug, thiserror::Error)]
pub enum DocumentError {
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("document is empty")]
    Empty,
    #[error("line 1 is not a trace header")]
    MissingHeader,
    #[error("line {0}: second header")]
    ExtraHeader(usize),
    #[error("unsupported trace format `{0}` version {1}")]
    Format(String, u32),
}

/// `sha256:` digest of any serializable run description.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("run descriptions serialize");
    let digest = Sha256::digest(&bytes);
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    format!("sha256:{hex}")
}

pub fn write_trace(header: &Header, trace: &Trace) -> String {
    let mut out = String::new();
    let mut line = |r: &Record| {
        out.push_str(&serde_json::to_string(r).expect("trace records serialize"));
        out.push('\n');
    };
    line(&Record::Header(header.clone()));
    for f in &trace.frames {
        line(&Record::Frame(f.clone()));
    }
    for r in &trace.replans {
        line(&Record::Replan(r.clone()));
    }
    out
}

pub fn read_trace(text: &str) -> Result<(Header, Trace), DocumentError> {
    let mut header = None;
    let mut frames = Vec::new();
    let mut replans = Vec::new();
    for (i, raw) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let line = i + 1;
        let record: Record = serde_json::from_str(raw).map_err(|source| DocumentError::Json { line, source })?;
        match record {
            Record::Header(h) if header.is_none() && frames.is_empty() && replans.is_empty() => header = Some(h),
            Record::Header(_) => return Err(DocumentError::ExtraHeader(line)),
            _ if header.is_none() => return Err(DocumentError::MissingHeader),
            Record::Frame(f) => frames.push(f),
            Record::Replan(r) => replans.push(r),
        }
    }
    let header = header.ok_or(DocumentError::Empty)?;
    if header.format != FORMAT || header.format_version != FORMAT_VERSION {
        return Err(DocumentError::Format(header.format, header.format_version));
    }
    let trace = Trace { scenario_id: header.scenario_id.clone(), execution: header.execution, dt: header.dt, frames, replans };
    Ok((header, trace))
}
