//! JSON run configuration. Every field is optional; omitted fields take the
//! defaults below and the fully resolved config is echoed next to the artifacts.

use std::path::{Path, PathBuf};

use kyleback::beliefs::BeliefDistribution;
use kyleback::fixed_point::PicardConfig;
use kyleback::pde::ModelParams;
use kyleback::potential::{TailMode, XiGrid};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub belief: BeliefConfig,
    pub grids: GridConfig,
    pub fixed_point: FixedPointConfig,
    pub simulate: SimulateConfig,
    pub report: ReportConfig,
    pub outputs: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            belief: BeliefConfig::Gaussian { mean: 1.0, stdev: 1.0 },
            grids: GridConfig::default(),
            fixed_point: FixedPointConfig::default(),
            simulate: SimulateConfig::default(),
            report: ReportConfig::default(),
            outputs: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub horizon: f64,
    pub sigma: f64,
    pub gamma: f64,
    /// Slope cap `l`; the prior's admissible cap when omitted.
    pub l_cap: Option<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { horizon: 1.0, sigma: 0.5, gamma: 0.1, l_cap: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BeliefConfig {
    Gaussian { mean: f64, stdev: f64 },
    Uniform { a: f64, b: f64 },
    TruncatedLognormal { mu_log: f64, sigma_log: f64, lo: f64, hi: f64 },
    Tabulated { grid: Vec<f64>, density: Vec<f64> },
}

impl Default for BeliefConfig {
    fn default() -> Self {
        BeliefConfig::Gaussian { mean: 1.0, stdev: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub xi_nodes: usize,
    /// Half-width of the `ξ` grid; `8σ√T` when omitted.
    pub xi_halfwidth: Option<f64>,
    pub t_steps: usize,
    pub quadrature_order: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { xi_nodes: 2049, xi_halfwidth: None, t_steps: 512, quadrature_order: 64 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    Constant,
    Linear,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedPointConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub tail: Tail,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 200, damping: 1.0, tail: Tail::Constant }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    /// Below this many paths the statistical gates are skipped.
    pub min_paths: usize,
    pub ks_alpha: f64,
    pub max_abs_z: f64,
    /// The mean `|P_T − ṽ|` must stay below this many last-step pinning scales.
    pub pin_factor: f64,
    pub checkpoints: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            n_steps: 512,
            seed: 0,
            min_paths: 1000,
            ks_alpha: 0.01,
            max_abs_z: 3.0,
            pin_factor: 10.0,
            checkpoints: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// `(t, ξ)` points for the conditional law of the value.
    pub probes: Vec<[f64; 2]>,
    pub t_stride: usize,
    pub xi_stride: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            probes: vec![[0.0, 0.0], [0.5, 0.0], [0.95, 0.0], [0.5, -0.5], [0.5, 0.5], [0.95, -0.5], [0.95, 0.5]],
            t_stride: 8,
            xi_stride: 8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// Error raised while reading or validating a config.
#[derive(Debug)]
pub enum ConfigError {
    Invalid(String),
    /// `γσ²T·l` is out of range.
    Budget(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Invalid(m) => write!(f, "invalid config: {m}"),
            ConfigError::Budget(m) => write!(f, "slope budget violated: {m}"),
        }
    }
}

/// Config with the derived quantities filled in.
pub struct Resolved {
    pub config: RunConfig,
    pub nu: BeliefDistribution<f64>,
    pub params: ModelParams<f64>,
    pub grid: XiGrid<f64>,
}

impl Resolved {
    pub fn picard(&self) -> PicardConfig<f64> {
        let fp = &self.config.fixed_point;
        PicardConfig {
            tol: fp.tol,
            max_iter: fp.max_iter,
            damping: fp.damping,
            grid: Some(self.grid.clone()),
            quadrature_order: self.config.grids.quadrature_order,
            tail: self.tail(),
            initial: None,
        }
    }

    pub fn tail(&self) -> TailMode {
        match self.config.fixed_point.tail {
            Tail::Constant => TailMode::Constant,
            Tail::Linear => TailMode::Linear,
        }
    }
}

pub fn load(path: Option<&Path>) -> Result<RunConfig, ConfigError> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| ConfigError::Invalid(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| ConfigError::Invalid(format!("{}: {e}", p.display())))
        }
    }
}

fn belief(cfg: &BeliefConfig) -> kyleback::Result<BeliefDistribution<f64>> {
    match cfg {
        BeliefConfig::Gaussian { mean, stdev } => BeliefDistribution::gaussian(*mean, *stdev),
        BeliefConfig::Uniform { a, b } => BeliefDistribution::uniform(*a, *b),
        BeliefConfig::TruncatedLognormal { mu_log, sigma_log, lo, hi } => {
            BeliefDistribution::truncated_lognormal(*mu_log, *sigma_log, *lo, *hi)
        }
        BeliefConfig::Tabulated { grid, density } => BeliefDistribution::tabulated(grid.clone(), density.clone()),
    }
}

/// Validates a config and fills in `l_cap` and the grid half-width.
pub fn resolve(mut config: RunConfig) -> Result<Resolved, ConfigError> {
    let invalid = |e: kyleback::Error| match e {
        kyleback::Error::Budget(m) => ConfigError::Budget(m),
        other => ConfigError::Invalid(other.to_string()),
    };
    let nu = belief(&config.belief).map_err(invalid)?;
    let m = &mut config.model;
    let l_cap = *m.l_cap.get_or_insert_with(|| nu.admissible_slope(m.horizon, m.sigma));
    let params = ModelParams::new(m.horizon, m.sigma, m.gamma, l_cap).map_err(invalid)?;
    params.require_representation_budget().map_err(invalid)?;
    let half = *config.grids.xi_halfwidth.get_or_insert(8.0 * m.sigma * m.horizon.sqrt());
    let grid = XiGrid::new(half, config.grids.xi_nodes).map_err(invalid)?;
    if config.grids.t_steps < 2 {
        return Err(ConfigError::Invalid("grids.t_steps must be at least 2".into()));
    }
    let s = &config.simulate;
    if s.n_steps < 2 || s.checkpoints == 0 {
        return Err(ConfigError::Invalid("simulate.n_steps must be at least 2 and checkpoints positive".into()));
    }
    if !(s.ks_alpha > 0.0 && s.ks_alpha < 1.0) {
        return Err(ConfigError::Invalid(format!("simulate.ks_alpha must lie in (0,1), got {}", s.ks_alpha)));
    }
    for [t, x] in &config.report.probes {
        if !(t.is_finite() && x.is_finite()) || *t < 0.0 {
            return Err(ConfigError::Invalid(format!("probe ({t}, {x}) is not a valid point")));
        }
    }
    Ok(Resolved { config, nu, params, grid })
}
