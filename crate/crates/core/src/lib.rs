//! Non-stationary Gaussian Markov random fields from the SPDE
//! `(κ²(s) − ∇·H(s)∇) u(s) = W(s)` on a regular grid.
//!
//! The coefficient functions κ², γ, vx and vy (with `H = γI + vvᵀ`) are
//! expanded in a tensor basis of quadratic B-splines with zero-derivative
//! ends. The latent field and the regression coefficients are integrated
//! out analytically; the remaining parameters are estimated by maximizing
//! the marginal log-posterior with its analytic gradient.
//!
//! A typical fit:
//!
//! ```no_run
//! use nsgmrf::{fit_map, LbfgsSettings, ObservationModel, RegularGrid, SpatialModel};
//! # fn main() -> nsgmrf::Result<()> {
//! # let obs: ObservationModel = unimplemented!();
//! let grid = RegularGrid::from_bounds(-130.15, -60.85, 21.65, 51.35, 100, 50)?;
//! let model = SpatialModel::stationary(grid)?;
//! let fit = fit_map(&model, &obs, None, &LbfgsSettings::default(), true)?;
//! println!("{:?}", fit.theta);
//! # Ok(())
//! # }
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod error;
pub mod grid;
pub mod inference;
pub mod io;
pub mod matern;
pub mod model;
pub mod optim;
pub mod posterior;
pub mod predict;
pub mod rw2;
pub mod sparse;
pub mod spde;
pub mod spline;
pub mod summary;
pub mod synth;

pub use error::{Error, Result, Stage};
pub use grid::{CellIndex, Domain, RegularGrid};
pub use inference::{
    cross_validate, fit_map, holdout_compare, CvResult, CvSettings, FitResult, HoldoutRow, HoldoutSettings,
};
pub use matern::LocalMatern;
pub use model::{ObservationModel, SpatialModel, Theta, WeightPrior, DEFAULT_TAU_BETA};
pub use optim::{LbfgsSettings, StopReason};
pub use posterior::{Conditional, Posterior};
pub use predict::{crps_gaussian, PredictionField, ScoreReport};
pub use spde::{CoefficientFields, FieldId, SpdeOperator};
pub use spline::TensorBasis2D;
