//! Fitted-model files: versioned JSON holding the grid, basis, prior and the
//! estimate. Floating-point values round-trip exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::RegularGrid;
use crate::inference::FitResult;
use crate::model::{SpatialModel, Theta, WeightPrior};

pub const MODEL_FORMAT: &str = "nsgmrf-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub grid: RegularGrid,
    pub basis: [usize; 2],
    pub prior: WeightPrior,
    pub tau_beta: f64,
    pub covariates: Vec<String>,
    pub fit: FitResult,
}

impl ModelFile {
    pub fn new(model: &SpatialModel, tau_beta: f64, covariates: Vec<String>, fit: FitResult) -> Self {
        Self {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            grid: model.grid().clone(),
            basis: [model.basis().k(), model.basis().l()],
            prior: model.prior().clone(),
            tau_beta,
            covariates,
            fit,
        }
    }

    pub fn theta(&self) -> &Theta {
        &self.fit.theta
    }

    pub fn model(&self) -> Result<SpatialModel> {
        SpatialModel::new(self.grid.clone(), self.basis[0], self.basis[1], self.prior.clone())
    }

    /// Fails unless the file was fitted on `grid`.
    pub fn expect_grid(&self, grid: &RegularGrid) -> Result<()> {
        if self.grid.m() != grid.m() || self.grid.n() != grid.n() || !self.grid.domain().approx_eq(grid.domain()) {
            return Err(Error::ModelFile(format!(
                "model grid is {}x{} over {:?}, expected {}x{} over {:?}",
                self.grid.m(),
                self.grid.n(),
                self.grid.domain(),
                grid.m(),
                grid.n(),
                grid.domain()
            )));
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.format != MODEL_FORMAT {
            return Err(Error::ModelFile(format!("not a model file (format `{}`)", self.format)));
        }
        if self.version != MODEL_VERSION {
            return Err(Error::ModelFile(format!("unsupported version {} (expected {MODEL_VERSION})", self.version)));
        }
        let kl = self.basis[0] * self.basis[1];
        if kl == 0 || self.fit.theta.alpha.iter().any(|a| a.len() != kl) {
            return Err(Error::ModelFile(format!(
                "theta has {} weights per field but the basis is {}x{}",
                self.fit.theta.kl(),
                self.basis[0],
                self.basis[1]
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(text).map_err(|e| Error::ModelFile(e.to_string()))?;
        file.validate()?;
        Ok(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;
    use crate::optim::StopReason;

    fn sample() -> ModelFile {
        let grid = RegularGrid::new(Domain::new(-3.0, 2.0, 0.1, 0.7).unwrap(), 5, 3).unwrap();
        let model =
            SpatialModel::new(grid, 2, 1, WeightPrior::Rw2 { tau: [7.38905609893065, 54.598150033144236, 1.0, 0.1] })
                .unwrap();
        let theta = Theta {
            alpha: [
                vec![0.1, 1.0 / 3.0],
                vec![-2.0 / 7.0, 1e-300],
                vec![std::f64::consts::PI, -0.0],
                vec![1e10, 2.5e-8],
            ],
            log_tau_noise: 4.266000000000001,
        };
        let fit = FitResult {
            theta,
            log_posterior: -1234.5678901234567,
            gradient_inf_norm: 1e-6,
            sd: Some(vec![0.1; 9]),
            iterations: 12,
            evaluations: 15,
            converged: true,
            stop_reason: StopReason::GradientTolerance,
        };
        ModelFile::new(&model, 1e-4, vec!["intercept".into(), "elevation_km".into()], fit)
    }

    #[test]
    fn roundtrip_is_bitwise() {
        let m = sample();
        let back = ModelFile::from_json(&m.to_json().unwrap()).unwrap();
        let bits = |t: &Theta| t.to_vec().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(back.theta()), bits(m.theta()));
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_bad_files() {
        let m = sample();
        let other = RegularGrid::new(Domain::new(-3.0, 2.0, 0.1, 0.7).unwrap(), 6, 3).unwrap();
        assert!(matches!(m.expect_grid(&other), Err(Error::ModelFile(_))));
        m.expect_grid(&m.grid).unwrap();
        let mut bad = m.clone();
        bad.version = 99;
        assert!(ModelFile::from_json(&bad.to_json().unwrap()).is_err());
        let mut bad = m.clone();
        bad.basis = [3, 1];
        assert!(ModelFile::from_json(&bad.to_json().unwrap()).is_err());
        assert!(ModelFile::from_json("{\"format\": 1}").is_err());
    }
}
