use anyhow::Result;
use nsgmrf::io::Raster;
use nsgmrf::model::{SpatialModel, Theta};
use nsgmrf::summary::{approximate_ellipse, approximate_sd, contour, ExactCovariance};

use super::load_model;
use crate::config::{ConfigError, RunConfig, SummaryConfig};
use crate::output::{num, OutputDir};

/// Marginal SD rasters and level-`rho` correlation contours around each
/// listed location.
pub(crate) fn write_summaries(
    out: &mut OutputDir,
    model: &SpatialModel,
    theta: &Theta,
    s: &SummaryConfig,
) -> Result<()> {
    let grid = model.grid();
    let fields = model.fields(theta)?;
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut push = |loc: usize, at: [f64; 2], method: &str, line: usize, pts: &[(f64, f64)]| {
        for (v, (x, y)) in pts.iter().enumerate() {
            rows.push(vec![
                loc.to_string(),
                num(at[0]),
                num(at[1]),
                method.to_string(),
                line.to_string(),
                v.to_string(),
                num(*x),
                num(*y),
            ]);
        }
    };
    if s.kind.approximate() {
        out.write_raster("approx_sd.asc", &Raster::from_grid(grid, &approximate_sd(&fields), None)?)?;
        for (loc, at) in s.locations.iter().enumerate() {
            let e = approximate_ellipse(grid, &fields, (at[0], at[1]), s.rho, s.points)?;
            push(loc, *at, "approximate", 0, &e);
        }
    }
    if s.kind.exact() {
        let exact = ExactCovariance::new(&model.operator(&fields)?)?;
        out.write_raster("exact_sd.asc", &Raster::from_grid(grid, &exact.sd(), None)?)?;
        for (loc, at) in s.locations.iter().enumerate() {
            let c = grid.locate_flat(at[0], at[1])?;
            let corr = exact.correlation_with(c)?;
            for (line, pts) in contour(grid, &corr, s.rho)?.iter().enumerate() {
                push(loc, *at, "exact", line, pts);
            }
        }
    }
    if !s.locations.is_empty() {
        out.write_csv("contours.csv", &["location", "x0", "y0", "method", "line", "vertex", "x", "y"], &rows)?;
    }
    Ok(())
}

pub fn run(cfg: &RunConfig, out: &mut OutputDir) -> Result<()> {
    let s = cfg.summary.as_ref().ok_or_else(|| ConfigError("missing `[summary]` section".into()))?;
    let path = s.model.as_ref().or(cfg.predict.model.as_ref());
    let mf = load_model(cfg, path, "[summary].model")?;
    let model = mf.model()?;
    write_summaries(out, &model, mf.theta(), s)
}
