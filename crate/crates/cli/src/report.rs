//! JSON report shared by every command.

use std::path::Path;

use serde::{Deserialize, Serialize};
use simgap_core::bounds::{BoundResult, ConvexityReport};
use simgap_core::mode::ModeResult;

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub command: String,
    pub config: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bounds: Vec<FunctionalRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<Vec<SamplerComparison>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage: Option<CoverageStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consistency: Option<ConsistencyStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ModeResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convexity: Option<ConvexityReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSummary>,
    pub runtime: Runtime,
}

/// Everything that varies between identical runs lives here.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Runtime {
    pub started_unix: u64,
    pub elapsed_seconds: f64,
    pub threads: usize,
    pub version: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FunctionalRecord {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<usize>,
    pub is_probability: bool,
    pub status: RecordStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<BoundResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerComparison {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimization: Option<BoundResult>,
    pub sampler_lower: f64,
    pub sampler_upper: f64,
    pub sampler_mean: f64,
    pub effective_sample_size: f64,
    pub acceptance_rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Proportion {
    pub estimate: f64,
    pub standard_error: f64,
    pub count: usize,
    pub total: usize,
}

impl Proportion {
    pub fn new(count: usize, total: usize) -> Self {
        let p = if total == 0 { 0.0 } else { count as f64 / total as f64 };
        let se = if total == 0 { 0.0 } else { (p * (1.0 - p) / total as f64).sqrt() };
        Self {
            estimate: p,
            standard_error: se,
            count,
            total,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageStats {
    pub n: u64,
    pub ell: f64,
    pub true_value: f64,
    pub replications: usize,
    pub failures: usize,
    pub upper: Proportion,
    pub lower: Proportion,
    pub both: Proportion,
    pub mean_width: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LadderStep {
    pub n: u64,
    pub replications: usize,
    pub failures: usize,
    /// Replications whose plug-in estimate was undefined (a design with no data).
    pub undefined_plug_in: usize,
    /// Mean of `√n·(upper − plug-in)`.
    pub upper_slope: Option<f64>,
    /// Mean of `√n·(lower − plug-in)`.
    pub lower_slope: Option<f64>,
    /// `ℓ·√(Σ_j Var Z_j / ξ_j)`.
    pub target_slope: f64,
    /// `upper_slope / target_slope`; absent when the target is zero.
    pub upper_ratio: Option<f64>,
    /// `−lower_slope / target_slope`.
    pub lower_ratio: Option<f64>,
    pub mean_width: Option<f64>,
    /// Mean `|midpoint − true value|`.
    pub mean_midpoint_error: Option<f64>,
    pub containment: Proportion,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranking: Option<Proportion>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsistencyStats {
    pub ell: f64,
    pub true_value: f64,
    pub steps: Vec<LadderStep>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub designs: String,
    pub counts: String,
    pub sidecar: String,
    pub row_totals: Vec<u64>,
}

impl ExperimentReport {
    pub fn write_json(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::json(path, e))
    }

    /// Whether every record reached a terminal state: an optimal interval or a recorded failure.
    pub fn all_terminal(&self) -> bool {
        self.bounds.iter().all(|r| match (&r.status, &r.result) {
            (RecordStatus::Failed, _) => r.error.is_some(),
            (RecordStatus::Ok, Some(b)) => b.is_optimal(),
            (RecordStatus::Ok, None) => false,
        })
    }
}
