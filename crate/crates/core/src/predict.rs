//! Posterior prediction at cell centres and proper scoring rules.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::model::{ObservationModel, SpatialModel, Theta};
use crate::posterior::{Conditional, Posterior};

/// Predictive mean and standard deviation per target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionField {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub include_noise: bool,
}

/// Predicts `x*ᵀβ + u(s*)` (plus noise when `include_noise`) for targets
/// given as `(cell, covariate row)` pairs.
pub fn predict_targets(
    cond: &Conditional,
    cells: &[usize],
    x: &DMatrix<f64>,
    include_noise: bool,
) -> Result<PredictionField> {
    let p = cond.p();
    let nu = cond.num_cells();
    if x.ncols() != p || x.nrows() != cells.len() {
        return Err(Error::Dimension(format!(
            "covariates are {}x{}, expected {}x{p}",
            x.nrows(),
            x.ncols(),
            cells.len()
        )));
    }
    if let Some(&c) = cells.iter().find(|&&c| c >= nu) {
        return Err(Error::IndexOutOfRange { index: c, len: nu });
    }
    let sel = cond.selected_inverse();
    // Columns of Q_C⁻¹ belonging to the covariate coefficients.
    let beta_cols: Vec<Vec<f64>> = (0..p)
        .map(|r| {
            let mut e = vec![0.0; nu + p];
            e[nu + r] = 1.0;
            cond.qc_factor.solve(&e)
        })
        .collect::<Result<_>>()?;
    let beta = cond.beta();
    let noise = if include_noise { 1.0 / cond.tau_noise } else { 0.0 };

    let mut mean = Vec::with_capacity(cells.len());
    let mut sd = Vec::with_capacity(cells.len());
    for (t, &c) in cells.iter().enumerate() {
        let mut m = cond.mu[c];
        let mut v = sel.get(c, c).expect("diagonal of the selected inverse");
        for r in 0..p {
            let xr = x[(t, r)];
            m += xr * beta[r];
            v += 2.0 * xr * beta_cols[r][c];
            for s in 0..p {
                v += xr * x[(t, s)] * beta_cols[s][nu + r];
            }
        }
        mean.push(m);
        sd.push((v.max(0.0) + noise).sqrt());
    }
    Ok(PredictionField { mean, sd, include_noise })
}

/// Predicts at every cell centre; `covariates` has one row per cell.
pub fn predict_cells(cond: &Conditional, covariates: &DMatrix<f64>, include_noise: bool) -> Result<PredictionField> {
    let cells: Vec<usize> = (0..cond.num_cells()).collect();
    predict_targets(cond, &cells, covariates, include_noise)
}

/// `log π(y* | y, θ)` for the joint Gaussian predictive distribution of the
/// test responses, as `log p(y, y*) − log p(y)`.
pub fn joint_log_predictive(
    model: &SpatialModel,
    train: &ObservationModel,
    test: &ObservationModel,
    theta: &Theta,
) -> Result<f64> {
    let all = train.concat(test)?;
    let joint = Posterior::new(model, &all).log_marginal_likelihood(theta)?;
    let marginal = Posterior::new(model, train).log_marginal_likelihood(theta)?;
    Ok(joint - marginal)
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// CRPS of `N(mu, sigma²)` at observation `y`.
pub fn crps_gaussian(mu: f64, sigma: f64, y: f64) -> Result<f64> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Parameter(format!("sigma must be non-negative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok((y - mu).abs());
    }
    let z = (y - mu) / sigma;
    Ok(sigma * (z * (2.0 * std_normal_cdf(z) - 1.0) + 2.0 * std_normal_pdf(z) - 1.0 / PI.sqrt()))
}

/// Average CRPS over the marginal predictive distributions and the
/// logarithmic score of the joint predictive distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub crps: f64,
    pub logscore: f64,
    pub n_test: usize,
}

/// Scores held-out observations against the model fitted on `train`.
pub fn score(
    model: &SpatialModel,
    train: &ObservationModel,
    test: &ObservationModel,
    theta: &Theta,
) -> Result<ScoreReport> {
    if test.n_obs() == 0 {
        return Err(Error::EmptyDataset("no test observations".into()));
    }
    let cond = Posterior::new(model, train).conditional(theta)?;
    let pred = predict_targets(&cond, test.cells(), test.x(), true)?;
    let mut total = 0.0;
    for ((m, s), y) in pred.mean.iter().zip(&pred.sd).zip(test.y()) {
        total += crps_gaussian(*m, *s, *y)?;
    }
    let logscore = -joint_log_predictive(model, train, test, theta)?;
    Ok(ScoreReport { crps: total / test.n_obs() as f64, logscore, n_test: test.n_obs() })
}
