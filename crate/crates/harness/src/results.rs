//! `result.json`: the serialized result matrix.

use std::io;
use std::path::Path;

use satqic_core::analysis::{Status, TransferOutcome};
use satqic_core::results::{Cell, ResultMatrix, RunResult, ScenarioResults};
use satqic_core::scenarios::ScenarioSpec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const RESULT_FILE: &str = "result.json";
pub const FORMAT_VERSION: &str = concat!("satqic-", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub version: String,
    pub shuffle_seed: u64,
    pub scenarios: Vec<ScenarioJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioJson {
    pub name: String,
    pub spec: ScenarioSpec,
    pub cells: Vec<CellJson>,
    pub summary: SummaryJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellJson {
    pub client: String,
    pub server: String,
    pub mean_goodput: Option<f64>,
    pub failures: Failures,
    pub runs: Vec<RunJson>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failures {
    pub timeout: usize,
    pub error: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunJson {
    pub iteration: u32,
    pub seed: u64,
    pub status: Status,
    pub ttc_s: Option<f64>,
    pub goodput_bps: Option<f64>,
    pub efficiency: f64,
    pub redundancy: Option<f64>,
    pub wire_bytes_forward: u64,
    pub wire_bytes_reverse: u64,
    pub nonmonotone_offset_count: u64,
    pub trace_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryJson {
    pub mean_goodput_bps: Option<f64>,
    pub max_goodput_bps: Option<f64>,
    pub mean_efficiency: Option<f64>,
    pub max_efficiency: Option<f64>,
    pub timeouts: usize,
    pub errors: usize,
}

impl RunJson {
    pub fn from_run(r: &RunResult) -> Self {
        let o = &r.outcome;
        Self {
            iteration: r.iteration,
            seed: r.seed,
            status: o.status,
            ttc_s: o.time_to_completion,
            goodput_bps: o.goodput,
            efficiency: o.efficiency,
            redundancy: o.redundancy_factor,
            wire_bytes_forward: o.wire_bytes_forward,
            wire_bytes_reverse: o.wire_bytes_reverse,
            nonmonotone_offset_count: o.nonmonotone_offset_count,
            trace_file: r.trace_file.clone(),
        }
    }

    pub fn to_run(&self) -> RunResult {
        RunResult {
            iteration: self.iteration,
            seed: self.seed,
            outcome: TransferOutcome {
                status: self.status,
                time_to_completion: self.ttc_s,
                goodput: self.goodput_bps,
                efficiency: self.efficiency,
                wire_bytes_forward: self.wire_bytes_forward,
                wire_bytes_reverse: self.wire_bytes_reverse,
                redundancy_factor: self.redundancy,
                nonmonotone_offset_count: self.nonmonotone_offset_count,
            },
            trace_file: self.trace_file.clone(),
        }
    }
}

impl ResultFile {
    pub fn from_matrix(m: &ResultMatrix) -> Self {
        let scenarios = m
            .scenarios
            .iter()
            .map(|s| {
                let summary = s.summary();
                ScenarioJson {
                    name: s.spec.name.clone(),
                    spec: s.spec.clone(),
                    cells: s
                        .cells
                        .iter()
                        .map(|c| CellJson {
                            client: c.client.clone(),
                            server: c.server.clone(),
                            mean_goodput: c.mean_goodput(),
                            failures: Failures {
                                timeout: c.count(Status::Timeout),
                                error: c.count(Status::Error),
                            },
                            runs: c.runs.iter().map(RunJson::from_run).collect(),
                        })
                        .collect(),
                    summary: SummaryJson {
                        mean_goodput_bps: summary.mean_goodput,
                        max_goodput_bps: summary.max_goodput,
                        mean_efficiency: summary.mean_efficiency,
                        max_efficiency: summary.max_efficiency,
                        timeouts: summary.timeouts,
                        errors: summary.errors,
                    },
                }
            })
            .collect();
        Self {
            version: m.version.clone(),
            shuffle_seed: m.shuffle_seed,
            scenarios,
        }
    }

    /// The matrix the file was produced from; derived fields are dropped.
    pub fn to_matrix(&self) -> ResultMatrix {
        ResultMatrix {
            version: self.version.clone(),
            shuffle_seed: self.shuffle_seed,
            scenarios: self
                .scenarios
                .iter()
                .map(|s| ScenarioResults {
                    spec: s.spec.clone(),
                    cells: s
                        .cells
                        .iter()
                        .map(|c| Cell {
                            client: c.client.clone(),
                            server: c.server.clone(),
                            runs: c.runs.iter().map(RunJson::to_run).collect(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ResultsError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
}

pub fn to_json(m: &ResultMatrix) -> String {
    let mut s = serde_json::to_string_pretty(&ResultFile::from_matrix(m))
        .expect("result matrix serializes");
    s.push('\n');
    s
}

pub fn from_json(text: &str) -> Result<ResultMatrix, serde_json::Error> {
    serde_json::from_str::<ResultFile>(text).map(|f| f.to_matrix())
}

/// Writes `result.json` into `out_dir`, creating the directory if needed.
pub fn emit_results(m: &ResultMatrix, out_dir: &Path) -> Result<(), ResultsError> {
    let io_err = |source| ResultsError::Io {
        path: out_dir.display().to_string(),
        source,
    };
    std::fs::create_dir_all(out_dir).map_err(io_err)?;
    let path = out_dir.join(RESULT_FILE);
    std::fs::write(&path, to_json(m)).map_err(|source| ResultsError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_results(out_dir: &Path) -> Result<ResultMatrix, ResultsError> {
    let path = out_dir.join(RESULT_FILE);
    let text = std::fs::read_to_string(&path).map_err(|source| ResultsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_json(&text).map_err(|source| ResultsError::Json {
        path: path.display().to_string(),
        source,
    })
}
