//! Fixtures shared by the benchmarks.

use nalgebra::DMatrix;
use nsgmrf::grid::{Domain, RegularGrid};
use nsgmrf::model::{ObservationModel, SpatialModel, Theta, WeightPrior, DEFAULT_TAU_BETA};
use nsgmrf::synth::{simulate, uniform_locations};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The precipitation domain at `m x n` cells.
pub fn us_grid(m: usize, n: usize) -> RegularGrid {
    RegularGrid::new(Domain::new(-130.15, -60.85, 21.65, 51.35).unwrap(), m, n).unwrap()
}

pub fn stationary_truth() -> Theta {
    Theta::stationary(-1.75, -0.272, 0.477, -0.313, 4.266)
}

pub fn nonstationary(grid: &RegularGrid, k: usize, l: usize) -> SpatialModel {
    SpatialModel::new(grid.clone(), k, l, WeightPrior::Rw2 { tau: [2f64.exp(), 4f64.exp(), 2f64.exp(), 8f64.exp()] })
        .unwrap()
}

/// Stationary-truth data with an intercept and one covariate.
pub fn observations(grid: &RegularGrid, n: usize, seed: u64) -> ObservationModel {
    let model = SpatialModel::stationary(grid.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let locs = uniform_locations(grid.domain(), n, &mut rng);
    let x = DMatrix::from_fn(n, 2, |r, c| if c == 0 { 1.0 } else { (locs[r].1 - 21.65) / 30.0 });
    simulate(&model, &stationary_truth(), locs, x, &[6.5, 0.3], DEFAULT_TAU_BETA, &mut rng).unwrap().obs
}

/// A smooth random parameter vector for `model` around the stationary truth.
pub fn perturbed_theta(model: &SpatialModel, seed: u64) -> Theta {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = stationary_truth();
    let base = t.to_vec();
    let kl = model.kl();
    let mut v = Vec::with_capacity(model.num_params());
    for b in &base[..4] {
        for _ in 0..kl {
            v.push(b + rng.gen_range(-0.2..0.2));
        }
    }
    v.push(base[4]);
    Theta::from_vec(kl, &v).unwrap()
}
