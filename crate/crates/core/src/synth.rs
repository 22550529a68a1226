//! Sampling from the model: latent fields and noisy observations.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::Domain;
use crate::model::{ObservationModel, SpatialModel, Theta};
use crate::sparse::{CholFactor, Ordering};

/// One draw of `u ~ N(0, Q(κ², H)⁻¹)` for the fields in θ.
pub fn sample_latent<R: Rng + ?Sized>(model: &SpatialModel, theta: &Theta, rng: &mut R) -> Result<Vec<f64>> {
    let fields = model.fields(theta)?;
    let op = model.operator(&fields)?;
    let factor = CholFactor::factorize(op.q(), &Ordering::Amd)?;
    let z: Vec<f64> = (0..factor.dim()).map(|_| rng.sample(StandardNormal)).collect();
    factor.sample(&z)
}

pub fn uniform_locations<R: Rng + ?Sized>(domain: &Domain, n: usize, rng: &mut R) -> Vec<(f64, f64)> {
    (0..n).map(|_| (rng.gen_range(domain.x_min..domain.x_max), rng.gen_range(domain.y_min..domain.y_max))).collect()
}

/// Simulated data set together with the latent field that generated it.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub latent: Vec<f64>,
    pub locations: Vec<(f64, f64)>,
    pub obs: ObservationModel,
}

/// Draws `u`, then `y = Xβ + u(cell) + ε` with `ε ~ N(0, 1/τ_noise)`.
pub fn simulate<R: Rng + ?Sized>(
    model: &SpatialModel,
    theta: &Theta,
    locations: Vec<(f64, f64)>,
    x: DMatrix<f64>,
    beta: &[f64],
    tau_beta: f64,
    rng: &mut R,
) -> Result<Synthetic> {
    if x.ncols() != beta.len() || x.nrows() != locations.len() {
        return Err(Error::Dimension(format!(
            "covariates {}x{}, {} coefficients, {} locations",
            x.nrows(),
            x.ncols(),
            beta.len(),
            locations.len()
        )));
    }
    let latent = sample_latent(model, theta, rng)?;
    let grid = model.grid();
    let sd = (1.0 / theta.tau_noise()).sqrt();
    let mut cells = Vec::with_capacity(locations.len());
    let mut y = Vec::with_capacity(locations.len());
    for (o, &(px, py)) in locations.iter().enumerate() {
        let c = grid.locate_flat(px, py)?;
        let e: f64 = rng.sample(StandardNormal);
        let xb: f64 = (0..beta.len()).map(|r| x[(o, r)] * beta[r]).sum();
        cells.push(c);
        y.push(xb + latent[c] + sd * e);
    }
    let obs = ObservationModel::new(grid.num_cells(), cells, y, x, tau_beta)?;
    Ok(Synthetic { latent, locations, obs })
}
