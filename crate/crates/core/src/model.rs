//! Parameter vectors, observation models and the spatial model definition.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::RegularGrid;
use crate::rw2::Rw2Precision;
use crate::spde::{CoefficientFields, FieldId, QPattern, SpdeOperator};
use crate::spline::{BasisMatrix, TensorBasis2D};

/// Default prior precision of the covariate coefficients.
pub const DEFAULT_TAU_BETA: f64 = 1e-4;

/// Spline weights for log κ², log γ, vx, vy and the log noise precision.
///
/// The flat layout is `[α₁, α₂, α₃, α₄, log τ_noise]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub alpha: [Vec<f64>; 4],
    pub log_tau_noise: f64,
}

impl Theta {
    /// Constant fields expressed in a basis with `kl` functions.
    pub fn constant(kl: usize, log_kappa2: f64, log_gamma: f64, vx: f64, vy: f64, log_tau_noise: f64) -> Self {
        Self { alpha: [vec![log_kappa2; kl], vec![log_gamma; kl], vec![vx; kl], vec![vy; kl]], log_tau_noise }
    }

    pub fn stationary(log_kappa2: f64, log_gamma: f64, vx: f64, vy: f64, log_tau_noise: f64) -> Self {
        Self::constant(1, log_kappa2, log_gamma, vx, vy, log_tau_noise)
    }

    pub fn kl(&self) -> usize {
        self.alpha[0].len()
    }

    pub fn len(&self) -> usize {
        4 * self.kl() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tau_noise(&self) -> f64 {
        self.log_tau_noise.exp()
    }

    pub fn field(&self, f: FieldId) -> &[f64] {
        &self.alpha[f.index()]
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        for a in &self.alpha {
            v.extend_from_slice(a);
        }
        v.push(self.log_tau_noise);
        v
    }

    pub fn from_vec(kl: usize, v: &[f64]) -> Result<Self> {
        if v.len() != 4 * kl + 1 {
            return Err(Error::Dimension(format!("parameter vector of length {} for {kl} basis functions", v.len())));
        }
        Ok(Self { alpha: std::array::from_fn(|f| v[f * kl..(f + 1) * kl].to_vec()), log_tau_noise: v[4 * kl] })
    }

    /// Name of flat component `i`, e.g. `alpha1[3]` or `log_tau_noise`.
    pub fn component_name(kl: usize, i: usize) -> String {
        if i == 4 * kl {
            "log_tau_noise".to_string()
        } else if kl == 1 {
            ["log_kappa2", "log_gamma", "vx", "vy"][i].to_string()
        } else {
            format!("alpha{}[{}]", i / kl + 1, i % kl)
        }
    }
}

/// Prior on the spline weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WeightPrior {
    /// Flat prior; the prior term is dropped.
    Uniform,
    /// Second-order random walk with precision `τᵢ` for field `i`.
    Rw2 { tau: [f64; 4] },
}

/// Grid, basis and prior of a (possibly non-stationary) model.
#[derive(Debug, Clone)]
pub struct SpatialModel {
    grid: RegularGrid,
    basis: TensorBasis2D,
    f: BasisMatrix,
    rw2: Rw2Precision,
    prior: WeightPrior,
    pattern: QPattern,
}

impl SpatialModel {
    pub fn new(grid: RegularGrid, k: usize, l: usize, prior: WeightPrior) -> Result<Self> {
        if let WeightPrior::Rw2 { tau } = &prior {
            if tau.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
                return Err(Error::Parameter(format!("smoothing precisions must be positive, got {tau:?}")));
            }
        }
        let basis = TensorBasis2D::new(grid.domain(), k, l)?;
        let f = basis.eval_basis_matrix(&grid)?;
        let rw2 = Rw2Precision::build(&basis)?;
        let pattern = QPattern::new(&grid);
        Ok(Self { grid, basis, f, rw2, prior, pattern })
    }

    /// Constant fields with flat priors.
    pub fn stationary(grid: RegularGrid) -> Result<Self> {
        Self::new(grid, 1, 1, WeightPrior::Uniform)
    }

    pub fn grid(&self) -> &RegularGrid {
        &self.grid
    }

    pub fn basis(&self) -> &TensorBasis2D {
        &self.basis
    }

    pub fn basis_matrix(&self) -> &BasisMatrix {
        &self.f
    }

    pub fn rw2(&self) -> &Rw2Precision {
        &self.rw2
    }

    pub fn prior(&self) -> &WeightPrior {
        &self.prior
    }

    pub fn pattern(&self) -> &QPattern {
        &self.pattern
    }

    pub fn kl(&self) -> usize {
        self.basis.len()
    }

    pub fn num_params(&self) -> usize {
        4 * self.kl() + 1
    }

    pub fn is_stationary(&self) -> bool {
        self.kl() == 1
    }

    pub fn check_theta(&self, theta: &Theta) -> Result<()> {
        if theta.alpha.iter().any(|a| a.len() != self.kl()) {
            return Err(Error::Dimension(format!(
                "theta has {} weights per field, basis has {}",
                theta.kl(),
                self.kl()
            )));
        }
        if !theta.log_tau_noise.is_finite() {
            return Err(Error::Parameter("non-finite log noise precision".into()));
        }
        Ok(())
    }

    pub fn fields(&self, theta: &Theta) -> Result<CoefficientFields> {
        self.check_theta(theta)?;
        let a = &theta.alpha;
        CoefficientFields::materialize(&self.f, [&a[0], &a[1], &a[2], &a[3]])
    }

    pub fn operator(&self, fields: &CoefficientFields) -> Result<SpdeOperator> {
        SpdeOperator::assemble_with(&self.grid, &self.pattern, fields)
    }

    /// `−½ Σ τᵢ αᵢᵀ Q_RW2 αᵢ`, zero under the flat prior.
    pub fn log_prior(&self, theta: &Theta) -> f64 {
        match &self.prior {
            WeightPrior::Uniform => 0.0,
            WeightPrior::Rw2 { tau } => {
                -0.5 * theta.alpha.iter().zip(tau).map(|(a, t)| t * self.rw2.quad_form(a)).sum::<f64>()
            }
        }
    }

    /// Adds the gradient of [`SpatialModel::log_prior`] to a flat gradient.
    pub fn add_log_prior_gradient(&self, theta: &Theta, grad: &mut [f64]) {
        if let WeightPrior::Rw2 { tau } = &self.prior {
            let kl = self.kl();
            for (f, a) in theta.alpha.iter().enumerate() {
                for (i, v) in self.rw2.apply(a).into_iter().enumerate() {
                    grad[f * kl + i] -= tau[f] * v;
                }
            }
        }
    }
}

/// `y = Xβ + Eu + ε` with one grid cell per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel {
    cells: Vec<usize>,
    y: Vec<f64>,
    x: DMatrix<f64>,
    tau_beta: f64,
}

impl ObservationModel {
    pub fn new(num_cells: usize, cells: Vec<usize>, y: Vec<f64>, x: DMatrix<f64>, tau_beta: f64) -> Result<Self> {
        if cells.len() != y.len() || x.nrows() != y.len() {
            return Err(Error::Dimension(format!(
                "{} cells, {} responses and {} covariate rows",
                cells.len(),
                y.len(),
                x.nrows()
            )));
        }
        if let Some(&c) = cells.iter().find(|&&c| c >= num_cells) {
            return Err(Error::IndexOutOfRange { index: c, len: num_cells });
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Parameter("non-finite response or covariate".into()));
        }
        if !(tau_beta > 0.0) || !tau_beta.is_finite() {
            return Err(Error::Parameter(format!("tau_beta must be positive, got {tau_beta}")));
        }
        Ok(Self { cells, y, x, tau_beta })
    }

    /// Observations at point locations, each assigned to its grid cell.
    pub fn at_locations(
        grid: &RegularGrid,
        locations: &[(f64, f64)],
        y: Vec<f64>,
        x: DMatrix<f64>,
        tau_beta: f64,
    ) -> Result<Self> {
        let cells = locations.iter().map(|&(px, py)| grid.locate_flat(px, py)).collect::<Result<_>>()?;
        Self::new(grid.num_cells(), cells, y, x, tau_beta)
    }

    /// No observations and `p` covariates.
    pub fn empty(p: usize, tau_beta: f64) -> Self {
        Self { cells: Vec::new(), y: Vec::new(), x: DMatrix::zeros(0, p), tau_beta }
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn tau_beta(&self) -> f64 {
        self.tau_beta
    }

    /// Rows `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            cells: idx.iter().map(|&i| self.cells[i]).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            x: self.x.select_rows(idx),
            tau_beta: self.tau_beta,
        }
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.p() != other.p() {
            return Err(Error::Dimension(format!("{} vs {} covariates", self.p(), other.p())));
        }
        let (n1, n2, p) = (self.n_obs(), other.n_obs(), self.p());
        let x = DMatrix::from_fn(n1 + n2, p, |r, c| if r < n1 { self.x[(r, c)] } else { other.x[(r - n1, c)] });
        Ok(Self {
            cells: self.cells.iter().chain(&other.cells).copied().collect(),
            y: self.y.iter().chain(&other.y).copied().collect(),
            x,
            tau_beta: self.tau_beta,
        })
    }

    /// Same locations and covariates with new responses.
    pub fn with_y(&self, y: Vec<f64>) -> Result<Self> {
        Self::new(usize::MAX, self.cells.clone(), y, self.x.clone(), self.tau_beta)
    }
}
