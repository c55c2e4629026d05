use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use novelty_core::networks::{
    build_rate_network, realization_rng, GraphEnsembleConfig, RateNetConfig, StreamPurpose,
};
use novelty_core::novelty_ct::NoveltyVariant;
use novelty_core::novelty_dt::{DtControlSequence, OracleOptions};
use novelty_core::{ControlSignal, DtSystem, Grid, LtvSystem};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

pub type Matrix = Vec<Vec<f64>>;

pub fn to_matrix(rows: &Matrix, what: &str) -> Result<DMatrix<f64>, CliError> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return Err(CliError::Usage(format!("{what} must be a nonempty matrix")));
    }
    if rows.iter().any(|r| r.len() != m) {
        return Err(CliError::Usage(format!("{what} has rows of different lengths")));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

pub fn to_vector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Parse a JSON config file into `T`, rejecting unknown keys.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// A nested definition given inline or as a path relative to the config file.
pub fn resolve<T: DeserializeOwned>(value: &Value, base: &Path, what: &str) -> Result<T, CliError> {
    match value {
        Value::String(rel) => {
            let path = base.join(rel);
            load(&path)
        }
        other => serde_json::from_value(other.clone()).map_err(|e| CliError::Usage(format!("{what}: {e}"))),
    }
}

pub fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemDef {
    Lti {
        a: Matrix,
        b: Matrix,
    },
    /// `a[i]`, `b[i]` at the nodes of a uniform grid, linear in between.
    Tabulated {
        horizon: f64,
        intervals: usize,
        a: Vec<Matrix>,
        b: Vec<Matrix>,
    },
    RateNetwork {
        #[serde(default)]
        network: RateNetConfig,
        #[serde(default)]
        realization: u64,
    },
}

impl SystemDef {
    pub fn build(&self) -> Result<LtvSystem, CliError> {
        Ok(match self {
            Self::Lti { a, b } => LtvSystem::lti(to_matrix(a, "a")?, to_matrix(b, "b")?)?,
            Self::Tabulated { horizon, intervals, a, b } => {
                let a = a.iter().map(|m| to_matrix(m, "a")).collect::<Result<Vec<_>, _>>()?;
                let b = b.iter().map(|m| to_matrix(m, "b")).collect::<Result<Vec<_>, _>>()?;
                LtvSystem::tabulated(Grid::new(*horizon, *intervals)?, a, b)?
            }
            Self::RateNetwork { network, realization } => {
                network.validate()?;
                let mut rng = realization_rng(network.seed, StreamPurpose::Neurons, *realization);
                build_rate_network(network, &mut rng)?.system()
            }
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DtSystemDef {
    Lti { a: Matrix, b: Matrix, steps: usize },
    /// `a[k]`, `b[k]` for `k = 0..p−1`.
    Sequence { a: Vec<Matrix>, b: Vec<Matrix> },
}

impl DtSystemDef {
    pub fn build(&self) -> Result<DtSystem, CliError> {
        Ok(match self {
            Self::Lti { a, b, steps } => DtSystem::lti(to_matrix(a, "a")?, to_matrix(b, "b")?, *steps)?,
            Self::Sequence { a, b } => {
                let a = a.iter().map(|m| to_matrix(m, "a")).collect::<Result<Vec<_>, _>>()?;
                let b = b.iter().map(|m| to_matrix(m, "b")).collect::<Result<Vec<_>, _>>()?;
                DtSystem::new(a, b)?
            }
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorDef {
    Constant {
        value: Vec<f64>,
    },
    /// `offset + amplitude · sin(2π f t)`.
    Sinusoid {
        offset: Vec<f64>,
        amplitude: Vec<f64>,
        frequency: f64,
    },
    /// `values[k]` samples input `k` at every grid node.
    Samples {
        values: Matrix,
    },
}

impl PriorDef {
    pub fn build(&self, grid: Grid) -> Result<ControlSignal, CliError> {
        Ok(match self {
            Self::Constant { value } => ControlSignal::constant(grid, &to_vector(value))?,
            Self::Sinusoid {
                offset,
                amplitude,
                frequency,
            } => ControlSignal::sinusoid(grid, &to_vector(offset), &to_vector(amplitude), *frequency)?,
            Self::Samples { values } => ControlSignal::new(grid, to_matrix(values, "prior samples")?)?,
        })
    }
}

fn default_variant() -> NoveltyVariant {
    NoveltyVariant::InnerProduct
}

fn default_intervals() -> usize {
    Grid::DEFAULT_INTERVALS
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveCtConfig {
    /// Inline definition or path to one.
    pub system: Value,
    pub horizon: f64,
    #[serde(default = "default_intervals")]
    pub intervals: usize,
    pub x_0: Vec<f64>,
    pub x_f: Vec<f64>,
    pub gamma_v: f64,
    pub gamma_u: f64,
    #[serde(default)]
    pub x_r: Option<Vec<f64>>,
    #[serde(default)]
    pub prior: Option<PriorDef>,
    /// Scale the prior to average energy `gamma_v` before solving.
    #[serde(default)]
    pub rescale_prior: bool,
    #[serde(default = "default_variant")]
    pub variant: NoveltyVariant,
    /// `T*` of the average variant; the prior is sampled over `[0, T*]`.
    #[serde(default)]
    pub prior_horizon: Option<f64>,
    #[serde(default)]
    pub condition_cap: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleDef {
    #[serde(default)]
    pub max_iterations: Option<usize>,
    #[serde(default)]
    pub gap_rtol: Option<f64>,
    #[serde(default)]
    pub step_rtol: Option<f64>,
}

impl OracleDef {
    pub fn options(&self) -> OracleOptions {
        let d = OracleOptions::default();
        OracleOptions {
            max_iterations: self.max_iterations.unwrap_or(d.max_iterations),
            gap_rtol: self.gap_rtol.unwrap_or(d.gap_rtol),
            step_rtol: self.step_rtol.unwrap_or(d.step_rtol),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveDtConfig {
    pub system: Value,
    pub x_0: Vec<f64>,
    pub x_f: Vec<f64>,
    pub gamma_v: f64,
    pub gamma_u: f64,
    /// Prior input, one vector per step.
    pub v: Matrix,
    #[serde(default)]
    pub rescale_prior: bool,
    #[serde(default)]
    pub oracle: Option<OracleDef>,
}

impl SolveDtConfig {
    pub fn prior(&self) -> Result<DtControlSequence, CliError> {
        let steps = to_matrix(&self.v, "v")?;
        let seq = DtControlSequence::new(steps.transpose())?;
        Ok(if self.rescale_prior {
            seq.with_energy(self.gamma_v)?
        } else {
            seq
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GramianConfig {
    pub system: Value,
    pub horizon: f64,
    #[serde(default = "default_intervals")]
    pub intervals: usize,
    #[serde(default)]
    pub condition_cap: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkDef {
    Graph {
        ensemble: GraphEnsembleConfig,
        #[serde(default)]
        realization: u64,
    },
    Rate {
        #[serde(default)]
        network: RateNetConfig,
        #[serde(default)]
        realization: u64,
    },
}
