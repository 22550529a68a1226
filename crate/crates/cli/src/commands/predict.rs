use anyhow::Result;
use nsgmrf::io::Raster;
use nsgmrf::posterior::Posterior;
use nsgmrf::predict::predict_targets;

use super::summarize::write_summaries;
use super::{load_model, load_optional, raster_covariates, to_matrix};
use crate::config::RunConfig;
use crate::output::OutputDir;

pub const NODATA: f64 = -9999.0;

pub fn run(cfg: &RunConfig, out: &mut OutputDir) -> Result<()> {
    let mf = load_model(cfg, cfg.predict.model.as_ref(), "[predict].model")?;
    let model = mf.model()?;
    let grid = model.grid().clone();
    let theta = mf.theta();
    let obs = load_optional(cfg, &grid, &mf.covariates, mf.tau_beta)?;
    let cond = Posterior::new(&model, &obs).conditional(theta)?;

    let rows = raster_covariates(cfg, &mf.covariates, &grid.centers())?;
    let cells: Vec<usize> = (0..grid.num_cells()).filter(|&c| rows[c].is_some()).collect();
    let known: Vec<Vec<f64>> = cells.iter().map(|&c| rows[c].clone().expect("filtered")).collect();
    let x = to_matrix(&known, mf.covariates.len());
    let pred = predict_targets(&cond, &cells, &x, cfg.predict.include_noise)?;

    let mut mean = vec![NODATA; grid.num_cells()];
    let mut sd = vec![NODATA; grid.num_cells()];
    for (k, &c) in cells.iter().enumerate() {
        mean[c] = pred.mean[k];
        sd[c] = pred.sd[k];
    }
    let masked = grid.num_cells() - cells.len();
    out.write_raster("mean.asc", &Raster::from_grid(&grid, &mean, Some(NODATA))?)?;
    out.write_raster("sd.asc", &Raster::from_grid(&grid, &sd, Some(NODATA))?)?;
    if masked > 0 {
        let mask: Vec<f64> = rows.iter().map(|r| if r.is_some() { 1.0 } else { 0.0 }).collect();
        out.write_raster("mask.asc", &Raster::from_grid(&grid, &mask, None)?)?;
        eprintln!("{masked} cells without covariate values are masked");
    }
    eprintln!("predicted {} cells from {} observations", cells.len(), obs.n_obs());
    if let Some(s) = &cfg.summary {
        write_summaries(out, &model, theta, s)?;
    }
    Ok(())
}
