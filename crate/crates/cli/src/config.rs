//! Run configuration (TOML, schema version 1).
//!
//! Relative paths are resolved against the directory of the config file.
//! Unknown keys are rejected everywhere.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use nsgmrf::grid::{Domain, RegularGrid};
use nsgmrf::inference::{CvSettings, HoldoutSettings};
use nsgmrf::model::{SpatialModel, WeightPrior, DEFAULT_TAU_BETA};
use nsgmrf::optim::LbfgsSettings;
use serde::Deserialize;

pub const CONFIG_VERSION: u32 = 1;

/// Invalid or unreadable configuration; reported with exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub optimizer: LbfgsSettings,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub cv: CvConfig,
    #[serde(default)]
    pub score: ScoreConfig,
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub predict: PredictConfig,
    pub summary: Option<SummaryConfig>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub m: usize,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Stationary,
    Nonstationary,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Spline functions along x and y.
    pub basis: Option<[usize; 2]>,
    /// Natural logs of the four RW2 precisions.
    pub log_tau: Option<[f64; 4]>,
    #[serde(default = "default_tau_beta")]
    pub tau_beta: f64,
}

fn default_tau_beta() -> f64 {
    DEFAULT_TAU_BETA
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { kind: ModelKind::Stationary, basis: None, log_tau: None, tau_beta: DEFAULT_TAU_BETA }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> anyhow::Result<()> {
        if !(self.tau_beta > 0.0 && self.tau_beta.is_finite()) {
            return Err(bad(format!("tau_beta must be positive, got {}", self.tau_beta)));
        }
        match self.kind {
            ModelKind::Stationary => {
                if self.basis.is_some() || self.log_tau.is_some() {
                    return Err(bad("a stationary model takes neither `basis` nor `log_tau`"));
                }
            }
            ModelKind::Nonstationary => {
                let [k, l] = self.basis.ok_or_else(|| bad("a non-stationary model needs `basis = [k, l]`"))?;
                if k == 0 || l == 0 {
                    return Err(bad("basis sizes must be positive"));
                }
                if self.log_tau.is_none() {
                    return Err(bad("a non-stationary model needs `log_tau` (four values)"));
                }
            }
        }
        if let Some(t) = self.log_tau {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(bad("log_tau values must be finite"));
            }
        }
        Ok(())
    }

    /// Basis size; `[1, 1]` when stationary.
    pub fn kl(&self) -> [usize; 2] {
        self.basis.unwrap_or([1, 1])
    }

    pub fn build(&self, grid: &RegularGrid) -> anyhow::Result<SpatialModel> {
        self.validate()?;
        Ok(match self.kind {
            ModelKind::Stationary => SpatialModel::stationary(grid.clone())?,
            ModelKind::Nonstationary => {
                let [k, l] = self.kl();
                let tau = self.log_tau.expect("validated").map(f64::exp);
                SpatialModel::new(grid.clone(), k, l, WeightPrior::Rw2 { tau })?
            }
        })
    }

    /// Basis and prior only; the RW2 precisions are chosen by the caller.
    pub fn basis_for_cv(&self) -> anyhow::Result<[usize; 2]> {
        if self.kind != ModelKind::Nonstationary {
            return Err(bad("cross-validation needs a non-stationary `[model]`"));
        }
        self.basis.ok_or_else(|| bad("a non-stationary model needs `basis = [k, l]`"))
    }
}

/// Covariate raster: values are multiplied by `scale` after interpolation.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RasterCovariate {
    pub path: PathBuf,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Station table (`id,lon,lat,elev_m,m01..m12`) or prepared observations
    /// (`id,lon,lat,y[,covariates]`).
    pub observations: Option<PathBuf>,
    pub year: Option<i64>,
    /// Covariate name to raster, used wherever covariates are needed at cell
    /// centres or simulated locations.
    #[serde(default)]
    pub rasters: BTreeMap<String, RasterCovariate>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    #[serde(default = "yes")]
    pub sd: bool,
    /// Model file whose estimate starts the optimizer.
    pub init: Option<PathBuf>,
}

fn yes() -> bool {
    true
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { sd: true, init: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvConfig {
    #[serde(default = "five")]
    pub folds: usize,
    #[serde(default = "default_grid")]
    pub log_tau_grid: Vec<f64>,
    #[serde(default)]
    pub full_factorial: bool,
    #[serde(default = "three")]
    pub max_sweeps: usize,
    pub init: Option<PathBuf>,
}

fn five() -> usize {
    5
}

fn three() -> usize {
    3
}

fn default_grid() -> Vec<f64> {
    vec![2.0, 4.0, 6.0, 8.0]
}

impl Default for CvConfig {
    fn default() -> Self {
        Self { folds: 5, log_tau_grid: default_grid(), full_factorial: false, max_sweeps: 3, init: None }
    }
}

impl CvConfig {
    pub fn settings(&self, seed: u64) -> CvSettings {
        CvSettings {
            folds: self.folds,
            seed,
            log_tau_grid: self.log_tau_grid.clone(),
            full_factorial: self.full_factorial,
            max_sweeps: self.max_sweeps,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreConfig {
    #[serde(default = "twenty")]
    pub repetitions: usize,
    #[serde(default = "fifth")]
    pub holdout_fraction: f64,
    /// Defaults to the stationary model.
    pub first: Option<ModelSpec>,
    /// Defaults to `[model]`.
    pub second: Option<ModelSpec>,
}

fn twenty() -> usize {
    20
}

fn fifth() -> f64 {
    0.2
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self { repetitions: 20, holdout_fraction: 0.2, first: None, second: None }
    }
}

impl ScoreConfig {
    pub fn settings(&self, seed: u64) -> HoldoutSettings {
        HoldoutSettings { repetitions: self.repetitions, holdout_fraction: self.holdout_fraction, seed }
    }
}

/// A field given as one constant or as `k*l` spline weights.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum FieldValue {
    Constant(f64),
    Weights(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateFields {
    pub log_kappa2: FieldValue,
    pub log_gamma: FieldValue,
    pub vx: FieldValue,
    pub vy: FieldValue,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub fields: SimulateFields,
    pub log_tau_noise: f64,
    /// Uniformly placed observations; ignored when `locations` is given.
    #[serde(default)]
    pub n_obs: usize,
    /// Table with columns `id,lon,lat`.
    pub locations: Option<PathBuf>,
    /// Intercept first, then one coefficient per `[data.rasters]` entry in
    /// name order.
    #[serde(default = "zero_beta")]
    pub beta: Vec<f64>,
}

fn zero_beta() -> Vec<f64> {
    vec![0.0]
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    /// Fitted model file.
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub include_noise: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SummaryKind {
    Approximate,
    Exact,
    Both,
}

impl SummaryKind {
    pub fn approximate(self) -> bool {
        matches!(self, SummaryKind::Approximate | SummaryKind::Both)
    }

    pub fn exact(self) -> bool {
        matches!(self, SummaryKind::Exact | SummaryKind::Both)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummaryConfig {
    #[serde(default = "both")]
    pub kind: SummaryKind,
    /// Fitted model file; defaults to `[predict].model`.
    pub model: Option<PathBuf>,
    /// Points at which correlation contours are traced.
    #[serde(default)]
    pub locations: Vec<[f64; 2]>,
    #[serde(default = "seventy")]
    pub rho: f64,
    #[serde(default = "points")]
    pub points: usize,
}

fn both() -> SummaryKind {
    SummaryKind::Both
}

fn seventy() -> f64 {
    0.7
}

fn points() -> usize {
    72
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(bad(format!("unsupported config version {} (expected {CONFIG_VERSION})", cfg.version)));
        }
        cfg.model.validate()?;
        for spec in [&cfg.score.first, &cfg.score.second].into_iter().flatten() {
            spec.validate()?;
        }
        if let Some(s) = &cfg.summary {
            if !(s.rho > 0.0 && s.rho < 1.0) {
                return Err(bad(format!("summary rho must be in (0, 1), got {}", s.rho)));
            }
            if s.points < 3 {
                return Err(bad("summary needs at least 3 points per ellipse"));
            }
        }
        for (name, r) in &cfg.data.rasters {
            if name == "intercept" {
                return Err(bad("`intercept` cannot be a raster covariate"));
            }
            if !r.scale.is_finite() {
                return Err(bad(format!("raster `{name}` has a non-finite scale")));
            }
        }
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn grid(&self) -> anyhow::Result<RegularGrid> {
        let g = self.grid.as_ref().ok_or_else(|| bad("missing `[grid]` section"))?;
        let domain = Domain::new(g.x_min, g.x_max, g.y_min, g.y_max).map_err(|e| bad(e.to_string()))?;
        RegularGrid::new(domain, g.m, g.n).map_err(|e| bad(e.to_string()))
    }
}
