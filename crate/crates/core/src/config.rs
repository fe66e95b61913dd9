//! TOML experiment configuration. Unknown keys are rejected; every section
//! is optional and falls back to the coarse 2D defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bvp::MixedPlacement;
use crate::fem::{Gauge, PressureMode};
use crate::mesh::{HalfSpace, MeshSpec, OuterShape};
use crate::tensor::TensorSpec;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {msg}")]
    Invalid { key: String, msg: String },
}

fn invalid(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.into(), msg: msg.into() }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MeshConfig {
    pub dim: usize,
    pub radius: f64,
    pub h: f64,
    pub half_width: f64,
    pub outer_shape: OuterShape,
    /// Half-space rule such as `"x>0"` tagging outer facets as Neumann.
    pub neumann: Option<String>,
    pub interface_neumann: Option<String>,
    /// Number of uniform refinements after the base mesh.
    pub refinements: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig {
            dim: 2,
            radius: 2.0,
            h: 0.25,
            half_width: 0.5,
            outer_shape: OuterShape::Ball,
            neumann: None,
            interface_neumann: None,
            refinements: 0,
        }
    }
}

impl MeshConfig {
    pub fn spec(&self) -> Result<MeshSpec, ConfigError> {
        let rule = |key: &str, r: &Option<String>| {
            r.as_deref().map(HalfSpace::parse).transpose().map_err(|e| invalid(key, e.to_string()))
        };
        Ok(MeshSpec {
            dim: self.dim,
            half_width: self.half_width,
            radius: self.radius,
            h: self.h,
            outer_shape: self.outer_shape,
            neumann: rule("mesh.neumann", &self.neumann)?,
            interface_neumann: rule("mesh.interface_neumann", &self.interface_neumann)?,
        })
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    #[default]
    Transmission,
    Dirichlet,
    Neumann,
    Mixed,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    /// Manufactured velocity components in `x`, `y`, `z`.
    pub velocity: Vec<String>,
    pub pressure: String,
    /// Body force for the Navier–Stokes run.
    pub load: Vec<String>,
    /// Rescale the Navier–Stokes load to this uniqueness margin (unscaled when absent).
    pub target_margin: Option<f64>,
    pub placement: MixedPlacement,
    /// Truncation radii for the truncation study.
    pub radii: Vec<f64>,
    /// Half width of the comparison collar in the truncation study.
    pub collar: f64,
    /// Number of random data sets for cross-method checks.
    pub trials: usize,
}

impl ProblemConfig {
    /// The first `dim` components, missing ones read as zero.
    pub fn components(list: &[String], dim: usize) -> Vec<String> {
        (0..dim).map(|i| list.get(i).cloned().unwrap_or_else(|| "0".into())).collect()
    }
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig {
            kind: ProblemKind::Transmission,
            velocity: vec!["sin(x)*cos(y) + x*y".into(), "exp(0.5*x)*y - x^2".into()],
            pressure: "(x^2 - 0.25)*(y^2 - 0.25)*(1 + x)".into(),
            load: vec!["sin(3*y) + 1".into(), "x^2 - y".into()],
            target_margin: Some(0.45),
            placement: MixedPlacement::OuterBoundary,
            radii: vec![4.0, 8.0, 16.0],
            collar: 1.0,
            trials: 3,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Relative tolerance for identity and cross-method checks.
    pub rtol: f64,
    pub gauge: Gauge,
    pub pressure_mode: PressureMode,
    pub theta: f64,
    pub tol: f64,
    pub maxit: usize,
    pub skew: bool,
    pub seed: u64,
    /// Random samples per identity.
    pub samples: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rtol: 1e-8,
            gauge: Gauge::Collar,
            pressure_mode: PressureMode::Continuous,
            theta: 1.0,
            tol: 1e-12,
            maxit: 200,
            skew: false,
            seed: 1,
            samples: 5,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// JSON report path; CSV tables are written next to it.
    pub report: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub mesh: MeshConfig,
    pub tensor: TensorSpec,
    pub problem: ProblemConfig,
    pub solver: SolverConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mesh: MeshConfig::default(),
            tensor: TensorSpec::isotropic(1.0, 0.0),
            problem: ProblemConfig::default(),
            solver: SolverConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let m = &self.mesh;
        if m.dim != 2 && m.dim != 3 {
            return Err(invalid("mesh.dim", format!("{} (expected 2 or 3)", m.dim)));
        }
        if !(m.half_width > 0.0) {
            return Err(invalid("mesh.half_width", "must be positive"));
        }
        let corner = match m.outer_shape {
            OuterShape::Ball => m.half_width * (m.dim as f64).sqrt(),
            OuterShape::Box => m.half_width,
        };
        if !(m.radius > corner) {
            return Err(invalid("mesh.radius", "the outer boundary must enclose the inner square/cube"));
        }
        if !(m.h > 0.0 && m.h < m.radius) {
            return Err(invalid("mesh.h", "must lie in (0, radius)"));
        }
        m.spec()?;
        let p = &self.problem;
        for (key, list) in [("problem.velocity", &p.velocity), ("problem.load", &p.load)] {
            if list.len() > 3 {
                return Err(invalid(key, "at most 3 components"));
            }
            for s in list {
                crate::expr::Expr::parse(s).map_err(|e| invalid(key, e.to_string()))?;
            }
        }
        crate::expr::Expr::parse(&p.pressure).map_err(|e| invalid("problem.pressure", e.to_string()))?;
        if p.radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("problem.radii", "must be strictly increasing"));
        }
        if let Some(t) = p.target_margin {
            if !(t > 0.0) {
                return Err(invalid("problem.target_margin", "must be positive"));
            }
        }
        let s = &self.solver;
        if !(s.theta > 0.0 && s.theta <= 1.0) {
            return Err(invalid("solver.theta", "must lie in (0, 1]"));
        }
        if !(s.rtol > 0.0) || !(s.tol > 0.0) {
            return Err(invalid("solver.rtol/tol", "must be positive"));
        }
        if s.maxit == 0 {
            return Err(invalid("solver.maxit", "must be at least 1"));
        }
        self.tensor.build(m.dim).map_err(|e| invalid("tensor", e.to_string()))?;
        Ok(())
    }
}
