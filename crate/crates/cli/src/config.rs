//! Experiment configuration files (TOML) and the shipped presets.

use std::path::{Path, PathBuf};

use hamrom::basis::Indicator;
use hamrom::deim::Pairing;
use hamrom::integrators::{IntegrateOptions, NewtonConfig, Scheme};
use hamrom::models::{GridSpec, HamiltonianModel, NlsModel, ParameterPoint, WaveModel};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const PRESET_NAMES: [&str; 4] = ["wave-paper", "wave-desk", "nls-paper", "nls-desk"];

pub fn preset_source(name: &str) -> Option<&'static str> {
    match name {
        "wave-paper" => Some(include_str!("../presets/wave-paper.toml")),
        "wave-desk" => Some(include_str!("../presets/wave-desk.toml")),
        "nls-paper" => Some(include_str!("../presets/nls-paper.toml")),
        "nls-desk" => Some(include_str!("../presets/nls-desk.toml")),
        _ => None,
    }
}

pub fn preset(name: &str) -> CliResult<ExperimentConfig> {
    let src = preset_source(name).ok_or_else(|| {
        CliError::Config(format!(
            "unknown preset '{name}' (available: {})",
            PRESET_NAMES.join(", ")
        ))
    })?;
    ExperimentConfig::parse(src)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub time: TimeSpec,
    pub parameters: ParameterGridSpec,
    pub basis: BasisSpec,
    #[serde(default)]
    pub deim: DeimSpec,
    #[serde(default)]
    pub integrator: IntegratorSpec,
    pub simulate: SimulateSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    Wave {
        length: f64,
        points: usize,
        c2: f64,
    },
    Nls {
        length: f64,
        points: usize,
        speed: f64,
        /// Soliton center; defaults to the middle of the domain.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default = "one")]
    pub snapshot_stride: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterGridSpec {
    /// Equidistant points per parameter dimension over the model's parameter box.
    pub points_per_dim: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisMethod {
    Pod,
    Cotangent,
    Csvd,
    Greedy,
}

impl BasisMethod {
    pub fn name(self) -> &'static str {
        match self {
            Self::Pod => "pod",
            Self::Cotangent => "cotangent",
            Self::Csvd => "csvd",
            Self::Greedy => "greedy",
        }
    }

    pub fn is_symplectic(self) -> bool {
        !matches!(self, Self::Pod)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndicatorSpec {
    Hamiltonian,
    SymplecticProjection,
    OrthogonalProjection,
}

impl From<IndicatorSpec> for Indicator {
    fn from(s: IndicatorSpec) -> Self {
        match s {
            IndicatorSpec::Hamiltonian => Indicator::HamiltonianError,
            IndicatorSpec::SymplecticProjection => Indicator::SymplecticProjection,
            IndicatorSpec::OrthogonalProjection => Indicator::OrthogonalProjection,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSpec {
    pub method: BasisMethod,
    /// Half-dimension of symplectic bases; POD keeps `2k` columns.
    pub k: usize,
    /// Greedy tolerance.
    #[serde(default = "default_greedy_delta")]
    pub delta: f64,
    #[serde(default = "default_indicator")]
    pub indicator: IndicatorSpec,
    #[serde(default = "one")]
    pub min_k: usize,
    #[serde(default)]
    pub fresh_snapshots: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeimMethod {
    #[default]
    None,
    Deim,
    Sdeim,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairingSpec {
    None,
    #[default]
    Closure,
    Inline,
}

impl From<PairingSpec> for Pairing {
    fn from(s: PairingSpec) -> Self {
        match s {
            PairingSpec::None => Pairing::None,
            PairingSpec::Closure => Pairing::Closure,
            PairingSpec::Inline => Pairing::Inline,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeimSpec {
    #[serde(default)]
    pub method: DeimMethod,
    /// DEIM basis size, or the number of symplectic pairs SDEIM may add to the basis.
    #[serde(default)]
    pub m: usize,
    /// SDEIM enrichment tolerance.
    #[serde(default = "default_sdeim_delta")]
    pub delta: f64,
    #[serde(default)]
    pub pairing: PairingSpec,
}

impl Default for DeimSpec {
    fn default() -> Self {
        Self {
            method: DeimMethod::None,
            m: 0,
            delta: default_sdeim_delta(),
            pairing: PairingSpec::Closure,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeSpec {
    StormerVerlet,
    Rk2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorSpec {
    /// Scheme of the full-order runs. Symplectic ROMs always use Störmer-Verlet, POD ROMs RK2.
    pub scheme: SchemeSpec,
    pub newton_tol: f64,
    pub newton_max_iters: usize,
}

impl Default for IntegratorSpec {
    fn default() -> Self {
        let n = NewtonConfig::default();
        Self {
            scheme: SchemeSpec::StormerVerlet,
            newton_tol: n.tol,
            newton_max_iters: n.max_iters,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    pub omega: Vec<f64>,
    pub t_final: f64,
    #[serde(default = "one")]
    pub stride: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

fn one() -> usize {
    1
}

fn default_greedy_delta() -> f64 {
    5e-3
}

fn default_sdeim_delta() -> f64 {
    1e-4
}

fn default_indicator() -> IndicatorSpec {
    IndicatorSpec::Hamiltonian
}

/// A model behind a trait object plus the snapshot time window.
pub struct BuiltModel {
    pub model: Box<dyn HamiltonianModel<f64>>,
    pub grid: GridSpec<f64>,
}

impl ExperimentConfig {
    pub fn parse(src: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(src).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&src)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    /// SHA-256 of the canonical TOML serialization, as lowercase hex.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |msg: &str| Err(CliError::Config(msg.to_string()));
        let (length, points, constant) = match &self.model {
            ModelSpec::Wave { length, points, c2 } => (*length, *points, *c2),
            ModelSpec::Nls {
                length,
                points,
                speed,
                ..
            } => (*length, *points, *speed),
        };
        if !(length > 0.0) || points < 2 || !(constant > 0.0) {
            return bad("model needs length > 0, points >= 2 and a positive wave speed");
        }
        if !(self.time.dt > 0.0) || !(self.time.t_final >= 0.0) || self.time.snapshot_stride == 0 {
            return bad("time needs dt > 0, t_final >= 0 and snapshot_stride >= 1");
        }
        if self.parameters.points_per_dim == 0 {
            return bad("parameters.points_per_dim must be at least 1");
        }
        if self.basis.k == 0 || self.basis.min_k == 0 || !(self.basis.delta > 0.0) {
            return bad("basis needs k >= 1, min_k >= 1 and delta > 0");
        }
        if self.basis.min_k > self.basis.k {
            return bad("basis.min_k cannot exceed basis.k");
        }
        if self.basis.k > points {
            return bad("basis.k cannot exceed the number of grid points");
        }
        if self.deim.method != DeimMethod::None && self.deim.m == 0 {
            return bad("deim.m must be positive when a DEIM method is selected");
        }
        if !(self.deim.delta > 0.0) {
            return bad("deim.delta must be positive");
        }
        if !(self.integrator.newton_tol > 0.0) || self.integrator.newton_max_iters == 0 {
            return bad("integrator needs newton_tol > 0 and newton_max_iters >= 1");
        }
        if !(self.simulate.t_final >= 0.0) || self.simulate.stride == 0 {
            return bad("simulate needs t_final >= 0 and stride >= 1");
        }
        let expected = match self.model {
            ModelSpec::Wave { .. } => 4,
            ModelSpec::Nls { .. } => 1,
        };
        if self.simulate.omega.len() != expected {
            return Err(CliError::Config(format!(
                "simulate.omega needs {expected} value(s), found {}",
                self.simulate.omega.len()
            )));
        }
        Ok(())
    }

    pub fn model_id(&self) -> &'static str {
        match self.model {
            ModelSpec::Wave { .. } => "wave",
            ModelSpec::Nls { .. } => "nls",
        }
    }

    pub fn build_model(&self) -> CliResult<BuiltModel> {
        let config_err = |e: hamrom::error::Error| CliError::Config(e.to_string());
        let (length, points) = match self.model {
            ModelSpec::Wave { length, points, .. } | ModelSpec::Nls { length, points, .. } => {
                (length, points)
            }
        };
        let grid = GridSpec::new(length, points, self.time.dt, self.time.t_final).map_err(config_err)?;
        let model: Box<dyn HamiltonianModel<f64>> = match self.model {
            ModelSpec::Wave { c2, .. } => Box::new(WaveModel::new(grid.clone(), c2).map_err(config_err)?),
            ModelSpec::Nls { speed, center, .. } => {
                let m = match center {
                    Some(x0) => NlsModel::with_center(grid.clone(), speed, x0),
                    None => NlsModel::new(grid.clone(), speed),
                };
                Box::new(m.map_err(config_err)?)
            }
        };
        Ok(BuiltModel { model, grid })
    }

    pub fn parameter_grid(&self, model: &dyn HamiltonianModel<f64>) -> CliResult<Vec<ParameterPoint<f64>>> {
        model
            .parameter_box()
            .equidistant_grid(self.parameters.points_per_dim)
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn newton(&self) -> NewtonConfig {
        NewtonConfig {
            tol: self.integrator.newton_tol,
            max_iters: self.integrator.newton_max_iters,
            ..NewtonConfig::default()
        }
    }

    /// Options of the full-order snapshot runs.
    pub fn snapshot_options(&self) -> IntegrateOptions {
        IntegrateOptions {
            scheme: match self.integrator.scheme {
                SchemeSpec::StormerVerlet => Scheme::StormerVerlet,
                SchemeSpec::Rk2 => Scheme::Rk2,
            },
            newton: self.newton(),
            stride: self.time.snapshot_stride,
        }
    }

    pub fn test_parameter(&self) -> ParameterPoint<f64> {
        ParameterPoint::new(self.simulate.omega.clone())
    }
}
