//! Versioned JSON run configuration.
//!
//! Relative paths are resolved against the directory holding the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use simgap_core::bounds::{QueryFunctional, ThresholdSpec};
use simgap_core::io::Design;
use simgap_core::options::SolverOptions;
use simgap_core::posterior::{GaussianPriorSpec, ProbTable, Table, DEFAULT_JITTER};
use simgap_core::sampler::SamplerOptions;
use simgap_core::sim::{CallCenterConfig, SyntheticScheme, TrueModelConfig};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataBlock>,
    #[serde(default)]
    pub prior: PriorBlock,
    #[serde(default = "default_threshold")]
    pub threshold: ThresholdSpec,
    #[serde(default)]
    pub functionals: FunctionalSpec,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub sampler: SamplerOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convexity: Option<ConvexityBlock>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_threshold() -> ThresholdSpec {
    ThresholdSpec::Quantile(0.975)
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataBlock {
    pub designs: PathBuf,
    /// One or more count files; real and simulated rows may be split or mixed.
    pub counts: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorBlock {
    pub lambda_d: f64,
    pub lambda_p: f64,
    pub rho_design: f64,
    pub rho_outcome: f64,
    pub jitter: f64,
    /// JSON file with `r_d` and/or `r_p` matrices overriding the kernel.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrices: Option<PathBuf>,
}

impl Default for PriorBlock {
    fn default() -> Self {
        Self {
            lambda_d: 0.25,
            lambda_p: 0.01,
            rho_design: 0.75,
            rho_outcome: 0.75,
            jitter: DEFAULT_JITTER,
            matrices: None,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
struct Matrices {
    r_d: Option<Vec<Vec<f64>>>,
    r_p: Option<Vec<Vec<f64>>>,
}

impl PriorBlock {
    pub fn to_spec(&self, base: &Path) -> Result<GaussianPriorSpec, CliError> {
        let mut spec = GaussianPriorSpec::new(self.lambda_d, self.lambda_p, self.rho_design, self.rho_outcome);
        spec.jitter = self.jitter;
        if let Some(path) = &self.matrices {
            let path = resolve(base, path);
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            let m: Matrices = serde_json::from_str(&text).map_err(|e| CliError::json(&path, e))?;
            spec.r_d = m.r_d;
            spec.r_p = m.r_p;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedTable {
    pub name: String,
    pub z: Table,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionalSpec {
    /// `P(outcome i at design j)` for every cell.
    #[default]
    BinIndicators,
    /// Per-design expectation with the given value for each outcome.
    BinMidpoints { midpoints: Vec<f64> },
    Explicit { tables: Vec<NamedTable> },
}

/// A functional with the labels used in reports.
#[derive(Debug, Clone)]
pub struct LabeledFunctional {
    pub name: String,
    pub design: Option<String>,
    pub outcome: Option<usize>,
    pub functional: QueryFunctional,
}

impl FunctionalSpec {
    pub fn build(&self, designs: &[Design], m: usize) -> Result<Vec<LabeledFunctional>, CliError> {
        let s = designs.len();
        let mut out = Vec::new();
        match self {
            FunctionalSpec::BinIndicators => {
                for (j, d) in designs.iter().enumerate() {
                    for i in 0..m {
                        out.push(LabeledFunctional {
                            name: format!("design {} bin {}", d.id, i + 1),
                            design: Some(d.id.clone()),
                            outcome: Some(i + 1),
                            functional: QueryFunctional::indicator(s, m, j, i),
                        });
                    }
                }
            }
            FunctionalSpec::BinMidpoints { midpoints } => {
                if midpoints.len() != m {
                    return Err(CliError::Config(format!(
                        "functionals.midpoints has {} entries, expected {m}",
                        midpoints.len()
                    )));
                }
                for (j, d) in designs.iter().enumerate() {
                    out.push(LabeledFunctional {
                        name: format!("design {} mean", d.id),
                        design: Some(d.id.clone()),
                        outcome: None,
                        functional: QueryFunctional::expectation(s, j, midpoints)?,
                    });
                }
            }
            FunctionalSpec::Explicit { tables } => {
                if tables.is_empty() {
                    return Err(CliError::Config("functionals.tables is empty".into()));
                }
                for t in tables {
                    if t.z.rows() != s || t.z.cols() != m {
                        return Err(CliError::Config(format!(
                            "functional `{}` is {}x{}, expected {s}x{m}",
                            t.name,
                            t.z.rows(),
                            t.z.cols()
                        )));
                    }
                    out.push(LabeledFunctional {
                        name: t.name.clone(),
                        design: None,
                        outcome: None,
                        functional: QueryFunctional::new(t.z.clone(), t.name.clone())?,
                    });
                }
            }
        }
        Ok(out)
    }
}

/// Synthetic-truth setup for the coverage and consistency experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentBlock {
    /// True real-system probabilities `π`.
    pub pi: ProbTable,
    pub xi: Vec<f64>,
    /// Simulator probabilities; defaults to `pi`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim_pi: Option<ProbTable>,
    /// Simulation replications per design.
    #[serde(default = "default_sim_reps")]
    pub sim_reps: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<Vec<f64>>,
    /// Functional under study; defaults to the outcome-1 indicator at the first design.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Table>,
    /// Real-data size for `coverage`.
    #[serde(default = "default_n")]
    pub n: u64,
    /// Real-data sizes for `consistency`.
    #[serde(default = "default_ladder")]
    pub n_ladder: Vec<u64>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// Designs `[j, k]` (0-based) whose per-design intervals are compared for ranking.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranking: Option<[usize; 2]>,
}

fn default_sim_reps() -> u64 {
    250
}
fn default_n() -> u64 {
    2000
}
fn default_ladder() -> Vec<u64> {
    vec![5, 10, 20, 200, 2000]
}
fn default_replications() -> usize {
    500
}

impl ExperimentBlock {
    pub fn validate(&self) -> Result<(), CliError> {
        let (s, m) = (self.pi.rows(), self.pi.cols());
        self.scheme(0).validate()?;
        if let Some(sp) = &self.sim_pi {
            if sp.rows() != s || sp.cols() != m {
                return Err(CliError::Config("experiment.sim_pi must match the shape of pi".into()));
            }
        }
        if let Some(c) = &self.coords {
            if c.len() != s {
                return Err(CliError::Config("experiment.coords must have one entry per design".into()));
            }
        }
        if let Some(z) = &self.z {
            if z.rows() != s || z.cols() != m {
                return Err(CliError::Config("experiment.z must match the shape of pi".into()));
            }
        }
        if let Some([j, k]) = self.ranking {
            if j >= s || k >= s || j == k {
                return Err(CliError::Config("experiment.ranking must name two distinct designs".into()));
            }
        }
        if self.replications == 0 {
            return Err(CliError::Config("experiment.replications must be at least 1".into()));
        }
        if self.n_ladder.is_empty() {
            return Err(CliError::Config("experiment.n_ladder is empty".into()));
        }
        Ok(())
    }

    pub fn scheme(&self, n_total: u64) -> SyntheticScheme {
        SyntheticScheme {
            pi: self.pi.clone(),
            xi: self.xi.clone(),
            n_total,
        }
    }

    pub fn coords(&self) -> Vec<f64> {
        self.coords.clone().unwrap_or_else(|| (1..=self.pi.rows()).map(|j| j as f64).collect())
    }

    pub fn functional(&self) -> Result<QueryFunctional, CliError> {
        let (s, m) = (self.pi.rows(), self.pi.cols());
        Ok(match &self.z {
            Some(z) => QueryFunctional::new(z.clone(), "experiment")?,
            None => QueryFunctional::indicator(s, m, 0, 0),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    CallCenter,
    TrueSystem,
    Multinomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Real,
    Sim,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    pub generator: Generator,
    /// Which `source` column the generated counts are written under.
    #[serde(default = "default_source")]
    pub source: Source,
    /// Replications per design for the queue generators.
    #[serde(default = "default_sim_reps")]
    pub reps: u64,
    /// Per-design replications overriding `reps`, aligned with `servers`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reps_per_design: Option<Vec<u64>>,
    #[serde(default = "default_servers")]
    pub servers: Vec<usize>,
    /// Queue parameters; `servers` is overridden per design. The break
    /// fields are only read by the `true_system` generator.
    #[serde(default)]
    pub queue: TrueModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<SyntheticScheme>,
}

fn default_source() -> Source {
    Source::Sim
}
fn default_servers() -> Vec<usize> {
    vec![5, 6, 7, 8, 9]
}

impl SimulateBlock {
    pub fn validate(&self) -> Result<(), CliError> {
        match self.generator {
            Generator::Multinomial => {
                self.scheme
                    .as_ref()
                    .ok_or_else(|| CliError::Config("simulate.scheme is required for the multinomial generator".into()))?
                    .validate()?;
            }
            Generator::CallCenter | Generator::TrueSystem => {
                if self.servers.is_empty() {
                    return Err(CliError::Config("simulate.servers is empty".into()));
                }
                if let Some(r) = &self.reps_per_design {
                    if r.len() != self.servers.len() {
                        return Err(CliError::Config("simulate.reps_per_design must align with servers".into()));
                    }
                }
                let mut sorted = self.servers.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != self.servers.len() {
                    return Err(CliError::Config("simulate.servers has duplicates".into()));
                }
                for &x in &self.servers {
                    self.base_config(x).validate()?;
                }
            }
        }
        Ok(())
    }

    pub fn base_config(&self, servers: usize) -> CallCenterConfig {
        CallCenterConfig {
            servers,
            ..self.queue.base.clone()
        }
    }

    pub fn true_config(&self, servers: usize) -> TrueModelConfig {
        TrueModelConfig {
            base: self.base_config(servers),
            ..self.queue.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvexityBlock {
    pub n_pairs: usize,
}

impl Default for ConvexityBlock {
    fn default() -> Self {
        Self { n_pairs: 1000 }
    }
}

pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// A parsed config with its base directory.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub path: PathBuf,
    pub base: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let config: RunConfig = serde_json::from_str(&text).map_err(|e| CliError::json(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let loaded = Self {
            config,
            path: path.to_path_buf(),
            base,
        };
        loaded.validate()?;
        Ok(loaded)
    }

    fn validate(&self) -> Result<(), CliError> {
        let c = &self.config;
        if c.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                c.schema_version
            )));
        }
        c.threshold.validate()?;
        c.solver.validate()?;
        c.sampler.validate()?;
        if let Some(d) = &c.data {
            if d.counts.is_empty() {
                return Err(CliError::Config("data.counts lists no files".into()));
            }
            for p in std::iter::once(&d.designs).chain(&d.counts) {
                let full = self.resolve(p);
                if !full.is_file() {
                    return Err(CliError::Config(format!("referenced file {} does not exist", full.display())));
                }
            }
        }
        if let Some(m) = &c.prior.matrices {
            let full = self.resolve(m);
            if !full.is_file() {
                return Err(CliError::Config(format!("referenced file {} does not exist", full.display())));
            }
        }
        if let Some(e) = &c.experiment {
            e.validate()?;
        }
        if let Some(s) = &c.simulate {
            s.validate()?;
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        resolve(&self.base, p)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.output_dir)
    }
}
