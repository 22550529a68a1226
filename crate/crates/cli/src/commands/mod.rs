mod cv;
mod fit;
mod predict;
mod score;
mod simulate;
mod summarize;

pub use cv::run as cv;
pub use fit::run as fit;
pub use predict::run as predict;
pub use score::run as score;
pub use simulate::run as simulate;
pub use summarize::run as summarize;

use anyhow::{bail, Context, Result};
use nalgebra::DMatrix;
use nsgmrf::grid::RegularGrid;
use nsgmrf::inference::{expand_constant, FitResult};
use nsgmrf::io::{read_dataset, Dataset, ModelFile, Raster};
use nsgmrf::model::{ObservationModel, SpatialModel, Theta};

use crate::config::{ConfigError, RunConfig};
use crate::output::num;

pub(crate) fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let path = cfg.data.observations.as_ref().ok_or_else(|| ConfigError("missing `[data].observations`".into()))?;
    let path = cfg.resolve(path);
    let ds = read_dataset(&path, cfg.data.year).with_context(|| format!("reading {}", path.display()))?;
    eprintln!(
        "read {} observations from {} ({} incomplete, {} zero totals dropped)",
        ds.len(),
        path.display(),
        ds.excluded_missing,
        ds.excluded_zero
    );
    Ok(ds)
}

/// The configured observations, or none when `[data].observations` is unset.
pub(crate) fn load_optional(
    cfg: &RunConfig,
    grid: &RegularGrid,
    covariates: &[String],
    tau_beta: f64,
) -> Result<ObservationModel> {
    if cfg.data.observations.is_none() {
        return Ok(ObservationModel::empty(covariates.len(), tau_beta));
    }
    let ds = load_dataset(cfg)?;
    if ds.covariate_names != covariates {
        bail!("data covariates {:?} do not match the model's {:?}", ds.covariate_names, covariates);
    }
    Ok(ds.to_observations(grid, tau_beta)?)
}

pub(crate) fn load_model(cfg: &RunConfig, path: Option<&std::path::PathBuf>, what: &str) -> Result<ModelFile> {
    let path = path.ok_or_else(|| ConfigError(format!("missing `{what}`")))?;
    let path = cfg.resolve(path);
    let mf = ModelFile::load(&path).with_context(|| format!("loading {}", path.display()))?;
    if cfg.grid.is_some() {
        mf.expect_grid(&cfg.grid()?)?;
    }
    Ok(mf)
}

/// Starting point from a saved model, expanded to `model`'s basis when the
/// saved one is stationary.
pub(crate) fn init_theta(cfg: &RunConfig, path: Option<&std::path::PathBuf>, kl: usize) -> Result<Option<Theta>> {
    let Some(path) = path else { return Ok(None) };
    let path = cfg.resolve(path);
    let mf = ModelFile::load(&path).with_context(|| format!("loading {}", path.display()))?;
    let theta = mf.theta();
    Ok(Some(if theta.kl() == kl {
        theta.clone()
    } else if theta.kl() == 1 {
        expand_constant(theta, kl)?
    } else {
        bail!("starting model has {} weights per field, expected 1 or {kl}", theta.kl())
    }))
}

/// Covariates at `points`: an intercept, then each named raster.
pub(crate) fn raster_covariates(
    cfg: &RunConfig,
    names: &[String],
    points: &[(f64, f64)],
) -> Result<Vec<Option<Vec<f64>>>> {
    if names.first().map(String::as_str) != Some("intercept") {
        bail!("covariates must start with `intercept`, got {names:?}");
    }
    let mut rasters = Vec::new();
    for name in &names[1..] {
        let Some(rc) = cfg.data.rasters.get(name) else {
            return Err(ConfigError(format!("covariate `{name}` needs an entry in `[data.rasters]`")).into());
        };
        let path = cfg.resolve(&rc.path);
        let r = Raster::read(&path).with_context(|| format!("reading {}", path.display()))?;
        rasters.push((r, rc.scale));
    }
    Ok(points
        .iter()
        .map(|&(x, y)| {
            let mut row = vec![1.0];
            for (r, scale) in &rasters {
                row.push(r.bilinear(x, y).ok()? * scale);
            }
            Some(row)
        })
        .collect())
}

pub(crate) fn to_matrix(rows: &[Vec<f64>], p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), p, |r, c| rows[r][c])
}

/// Rows of the parameter table: name, estimate, standard deviation.
pub(crate) fn parameter_rows(model: &SpatialModel, fit: &FitResult) -> Vec<Vec<String>> {
    let v = fit.theta.to_vec();
    (0..v.len())
        .map(|i| {
            let sd = fit.sd.as_ref().map_or(String::new(), |s| num(s[i]));
            vec![Theta::component_name(model.kl(), i), num(v[i]), sd]
        })
        .collect()
}
