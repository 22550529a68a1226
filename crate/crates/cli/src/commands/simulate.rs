use anyhow::{bail, Context, Result};
use nsgmrf::io::Raster;
use nsgmrf::model::{SpatialModel, Theta};
use nsgmrf::synth::{sample_latent, simulate, uniform_locations};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{raster_covariates, to_matrix};
use crate::config::{ConfigError, FieldValue, RunConfig, SimulateConfig};
use crate::output::{num, OutputDir};

#[derive(Serialize)]
struct Truth<'a> {
    seed: u64,
    basis: [usize; 2],
    theta: &'a Theta,
    covariates: &'a [String],
    beta: &'a [f64],
}

fn weights(model: &SpatialModel, name: &str, v: &FieldValue) -> Result<Vec<f64>> {
    match v {
        FieldValue::Constant(c) => Ok(model.basis().constant_coefficients(*c)),
        FieldValue::Weights(w) if w.len() == model.kl() => Ok(w.clone()),
        FieldValue::Weights(w) => {
            Err(ConfigError(format!("`{name}` has {} weights, the basis has {}", w.len(), model.kl())).into())
        }
    }
}

fn theta(model: &SpatialModel, sim: &SimulateConfig) -> Result<Theta> {
    let f = &sim.fields;
    Ok(Theta {
        alpha: [
            weights(model, "log_kappa2", &f.log_kappa2)?,
            weights(model, "log_gamma", &f.log_gamma)?,
            weights(model, "vx", &f.vx)?,
            weights(model, "vy", &f.vy)?,
        ],
        log_tau_noise: sim.log_tau_noise,
    })
}

fn read_locations(path: &std::path::Path) -> Result<Vec<(String, (f64, f64))>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).with_context(|| format!("{}: missing column `{name}`", path.display()))
    };
    let (ci, cx, cy) = (col("id")?, col("lon")?, col("lat")?);
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |c: usize| -> Result<f64> {
            rec[c].parse().with_context(|| format!("{}: row {}: bad number `{}`", path.display(), k + 2, &rec[c]))
        };
        out.push((rec[ci].to_string(), (parse(cx)?, parse(cy)?)));
    }
    Ok(out)
}

pub fn run(cfg: &RunConfig, out: &mut OutputDir) -> Result<()> {
    let sim = cfg.simulate.as_ref().ok_or_else(|| ConfigError("missing `[simulate]` section".into()))?;
    let grid = cfg.grid()?;
    let model = cfg.model.build(&grid)?;
    let theta = theta(&model, sim)?;
    model.check_theta(&theta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let sites: Vec<(String, (f64, f64))> = match &sim.locations {
        Some(p) => read_locations(&cfg.resolve(p))?,
        None => uniform_locations(grid.domain(), sim.n_obs, &mut rng)
            .into_iter()
            .enumerate()
            .map(|(i, p)| (format!("s{:05}", i + 1), p))
            .collect(),
    };
    let mut names = vec!["intercept".to_string()];
    names.extend(cfg.data.rasters.keys().cloned());
    if sim.beta.len() != names.len() {
        return Err(
            ConfigError(format!("`beta` needs {} values (intercept, then {:?})", names.len(), &names[1..])).into()
        );
    }

    let latent = if sites.is_empty() {
        sample_latent(&model, &theta, &mut rng)?
    } else {
        let points: Vec<(f64, f64)> = sites.iter().map(|s| s.1).collect();
        let rows = raster_covariates(cfg, &names, &points)?;
        let rows: Vec<Vec<f64>> = rows
            .into_iter()
            .zip(&sites)
            .map(|(r, s)| r.with_context(|| format!("no covariate value at site `{}`", s.0)))
            .collect::<Result<_>>()?;
        let x = to_matrix(&rows, names.len());
        let data = simulate(&model, &theta, points, x, &sim.beta, cfg.model.tau_beta, &mut rng)?;
        let mut header: Vec<&str> = vec!["id", "lon", "lat", "y"];
        header.extend(names[1..].iter().map(String::as_str));
        let table: Vec<Vec<String>> = sites
            .iter()
            .enumerate()
            .map(|(o, (id, (x, y)))| {
                let mut r = vec![id.clone(), num(*x), num(*y), num(data.obs.y()[o])];
                r.extend(rows[o][1..].iter().map(|v| num(*v)));
                r
            })
            .collect();
        out.write_csv("observations.csv", &header, &table)?;
        data.latent
    };
    if latent.iter().any(|v| !v.is_finite()) {
        bail!("sampled field is not finite");
    }
    out.write_raster("field.asc", &Raster::from_grid(&grid, &latent, None)?)?;
    let truth = Truth { seed: cfg.seed, basis: cfg.model.kl(), theta: &theta, covariates: &names, beta: &sim.beta };
    out.write("truth.json", serde_json::to_string_pretty(&truth)?.as_bytes())?;
    eprintln!("simulated {} cells and {} observations", grid.num_cells(), sites.len());
    Ok(())
}
