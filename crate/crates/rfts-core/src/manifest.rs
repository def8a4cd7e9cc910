//! Declarative run manifests (TOML): a single file describes a
//! simulation study, a forecast run, or a method comparison.

use crate::error::{Error, Result};
use crate::fcurve::Grid;
use crate::ingest::IngestSpec;
use crate::mcs::{BootstrapSpec, McsStatistic};
use crate::pipeline::{
    EvaluationPlan, FpcaKind, MethodSpec, StudyConfig, Tunables, TuneOptions,
};
use crate::sim::{ContaminationShape, FarSpec};
use crate::var::EstimatorKind;

fn default_n() -> usize {
    200
}
fn default_grid_points() -> usize {
    101
}
fn default_sigma() -> Vec<f64> {
    vec![1.0, 1.0, 1.0]
}
fn default_replications() -> usize {
    100
}
fn default_magnitude() -> f64 {
    8.0
}
fn default_shape() -> ContaminationShape {
    ContaminationShape::ConstantShift
}
fn default_budget() -> usize {
    200
}
fn default_restarts() -> usize {
    3
}
fn default_max_order() -> usize {
    2
}
fn default_samples() -> usize {
    5000
}
fn default_levels() -> Vec<f64> {
    vec![0.80, 0.90]
}
fn default_horizon() -> usize {
    1
}

#[derive(Debug, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct SimulateSection {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    /// row-major operator matrix; omitted = the built-in reference operator
    pub psi: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_sigma")]
    pub sigma: Vec<f64>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub contamination_rate: f64,
    #[serde(default = "default_magnitude")]
    pub contamination_magnitude: f64,
    #[serde(default = "default_shape")]
    pub contamination_shape: ContaminationShape,
}

impl SimulateSection {
    pub fn far_spec(&self) -> Result<FarSpec> {
        let grid = Grid::uniform(0.0, 1.0, self.grid_points)?;
        let psi = match &self.psi {
            None => FarSpec::reference_psi(),
            Some(rows) => {
                let d = rows.len();
                if rows.iter().any(|r| r.len() != d) {
                    return Err(Error::Config("simulate.psi: matrix must be square".into()));
                }
                nalgebra::DMatrix::from_fn(d, d, |r, c| rows[r][c])
            }
        };
        FarSpec::new(psi, self.sigma.clone(), self.n, grid)
    }

    pub fn study_config(&self, tune: TuneOptions, seed: u64) -> StudyConfig {
        StudyConfig {
            contamination_rate: self.contamination_rate,
            contamination_magnitude: self.contamination_magnitude,
            contamination_shape: self.contamination_shape,
            replications: self.replications,
            tune,
            seed,
        }
    }
}

#[derive(Debug, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct MethodSection {
    pub name: String,
    pub fpca: FpcaKind,
    pub estimator: EstimatorKind,
}

#[derive(Debug, Clone, Copy, serde::Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct PlanSection {
    pub train_end: usize,
    pub validation_end: usize,
    pub test_end: usize,
}

#[derive(Debug, Clone, Copy, serde::Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct TuneSection {
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_max_order")]
    pub max_order: usize,
    pub k_max: Option<usize>,
}

impl Default for TuneSection {
    fn default() -> Self {
        TuneSection {
            budget: default_budget(),
            restarts: default_restarts(),
            max_order: default_max_order(),
            k_max: None,
        }
    }
}

impl TuneSection {
    pub fn options(&self) -> TuneOptions {
        TuneOptions {
            budget: self.budget,
            restarts: self.restarts,
            max_order: self.max_order,
            k_max: self.k_max,
        }
    }
}

#[derive(Debug, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct McsSection {
    #[serde(default = "default_samples")]
    pub samples: usize,
    pub block_length: Option<usize>,
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
}

impl Default for McsSection {
    fn default() -> Self {
        McsSection { samples: default_samples(), block_length: None, levels: default_levels() }
    }
}

impl McsSection {
    pub fn bootstrap(&self, seed: u64) -> BootstrapSpec {
        BootstrapSpec { samples: self.samples, block_length: self.block_length, seed }
    }
}

#[derive(Debug, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ForecastSection {
    /// method name; must match one of the configured methods
    pub method: String,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
}

#[derive(Debug, Clone, serde::Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Manifest {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub simulate: Option<SimulateSection>,
    pub ingest: Option<IngestSpec>,
    pub plan: Option<PlanSection>,
    #[serde(default)]
    pub tune: TuneSection,
    #[serde(default)]
    pub mcs: McsSection,
    pub methods: Option<Vec<MethodSection>>,
    pub forecast: Option<ForecastSection>,
}

impl Manifest {
    pub fn from_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("manifest: {e}")))
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("read manifest {path:?}: {e}")))?;
        Self::from_str(&text)
    }

    pub fn methods(&self) -> Vec<MethodSpec> {
        match &self.methods {
            None => MethodSpec::standard_four(),
            Some(list) => list
                .iter()
                .map(|m| MethodSpec { name: m.name.clone(), fpca: m.fpca, estimator: m.estimator })
                .collect(),
        }
    }

    /// Evaluation plan: explicit when given, otherwise the conventional
    /// layout for `n` curves (last 33 test, preceding block validation).
    pub fn plan_for(&self, n: usize) -> Result<EvaluationPlan> {
        if let Some(p) = self.plan {
            return EvaluationPlan::new(p.train_end, p.validation_end, p.test_end);
        }
        if n < 12 {
            return Err(Error::Config(format!("series of {n} curves too short to evaluate")));
        }
        let test_len = 33.min(n.saturating_sub(12)).max(1);
        let validation_end = n - test_len;
        let train_end = (validation_end * 2).div_ceil(3);
        EvaluationPlan::new(train_end, validation_end, n)
    }

    pub fn ingest_spec(&self) -> Result<&IngestSpec> {
        self.ingest
            .as_ref()
            .ok_or_else(|| Error::Config("manifest needs an [ingest] section".into()))
    }
}

pub fn default_tunables() -> Tunables {
    Tunables::default()
}

pub fn statistics() -> [McsStatistic; 2] {
    [McsStatistic::TR, McsStatistic::TMax]
}
