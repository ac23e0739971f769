//! The result matrix: scenario, then (client, server) cell, then iterations.

use alloc::string::String;
use alloc::vec::Vec;

use crate::analysis::{self, Status, Summary, TransferOutcome};
use crate::scenarios::ScenarioSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub iteration: u32,
    pub seed: u64,
    pub outcome: TransferOutcome,
    /// Trace path relative to the output directory.
    pub trace_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub client: String,
    pub server: String,
    /// Sorted by iteration.
    pub runs: Vec<RunResult>,
}

impl Cell {
    pub fn outcomes(&self) -> Vec<TransferOutcome> {
        self.runs.iter().map(|r| r.outcome.clone()).collect()
    }

    pub fn mean_goodput(&self) -> Option<f64> {
        analysis::cell_mean_goodput(&self.outcomes())
    }

    pub fn count(&self, status: Status) -> usize {
        self.runs
            .iter()
            .filter(|r| r.outcome.status == status)
            .count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResults {
    pub spec: ScenarioSpec,
    /// Sorted by (client, server).
    pub cells: Vec<Cell>,
}

impl ScenarioResults {
    pub fn summary(&self) -> Summary {
        analysis::summarize(
            self.cells
                .iter()
                .flat_map(|c| c.runs.iter().map(|r| &r.outcome)),
        )
    }

    pub fn cell(&self, client: &str, server: &str) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.client == client && c.server == server)
    }

    /// Distinct clients in first-appearance order.
    pub fn clients(&self) -> Vec<String> {
        let mut v: Vec<String> = Vec::new();
        for c in &self.cells {
            if !v.contains(&c.client) {
                v.push(c.client.clone());
            }
        }
        v
    }

    pub fn servers(&self) -> Vec<String> {
        let mut v: Vec<String> = Vec::new();
        for c in &self.cells {
            if !v.contains(&c.server) {
                v.push(c.server.clone());
            }
        }
        v
    }

    pub fn heatmap(&self) -> Vec<HeatmapCell> {
        let means: Vec<Option<f64>> = self.cells.iter().map(Cell::mean_goodput).collect();
        let normalized = normalize(&means);
        self.cells
            .iter()
            .zip(means)
            .zip(normalized)
            .map(|((c, mean), norm)| HeatmapCell {
                client: c.client.clone(),
                server: c.server.clone(),
                mean_goodput: mean,
                marker: match mean {
                    Some(_) => None,
                    None if c.count(Status::Timeout) >= c.count(Status::Error) => {
                        Some(Status::Timeout)
                    }
                    None => Some(Status::Error),
                },
                normalized: norm,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapCell {
    pub client: String,
    pub server: String,
    pub mean_goodput: Option<f64>,
    /// Set when no run of the cell succeeded: the more frequent failure
    /// class, timeouts winning ties.
    pub marker: Option<Status>,
    pub normalized: Option<f64>,
}

/// Min-max normalization over the present values; a degenerate range maps
/// everything to 0.
pub fn normalize(values: &[Option<f64>]) -> Vec<Option<f64>> {
    let present = values.iter().flatten().copied();
    let lo = present.clone().fold(f64::INFINITY, f64::min);
    let hi = present.fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|v| v.map(|x| if hi > lo { (x - lo) / (hi - lo) } else { 0.0 }))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultMatrix {
    pub version: String,
    pub shuffle_seed: u64,
    pub scenarios: Vec<ScenarioResults>,
}

impl ResultMatrix {
    pub fn scenario(&self, name: &str) -> Option<&ScenarioResults> {
        self.scenarios.iter().find(|s| s.spec.name == name)
    }

    pub fn run_count(&self) -> usize {
        self.scenarios
            .iter()
            .flat_map(|s| &s.cells)
            .map(|c| c.runs.len())
            .sum()
    }
}
