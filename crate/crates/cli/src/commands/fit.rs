use anyhow::Result;
use nsgmrf::inference::fit_map;
use nsgmrf::io::ModelFile;
use nsgmrf::posterior::Posterior;

use super::{init_theta, load_dataset, parameter_rows};
use crate::config::RunConfig;
use crate::output::{num, OutputDir};

pub fn run(cfg: &RunConfig, out: &mut OutputDir) -> Result<()> {
    let grid = cfg.grid()?;
    let model = cfg.model.build(&grid)?;
    let ds = load_dataset(cfg)?;
    let obs = ds.to_observations(&grid, cfg.model.tau_beta)?;
    let init = init_theta(cfg, cfg.fit.init.as_ref(), model.kl())?;
    eprintln!("fitting {} parameters to {} observations", model.num_params(), obs.n_obs());
    let fit = fit_map(&model, &obs, init.as_ref(), &cfg.optimizer, cfg.fit.sd)?;
    eprintln!(
        "log-posterior {} after {} iterations ({:?}), |grad| {}",
        fit.log_posterior, fit.iterations, fit.stop_reason, fit.gradient_inf_norm
    );
    if cfg.fit.sd && fit.sd.is_none() {
        eprintln!("warning: observed information is not positive definite; standard deviations omitted");
    }

    let cond = Posterior::new(&model, &obs).conditional(&fit.theta)?;
    let inv = cond.selected_inverse();
    let nu = cond.num_cells();
    let effects: Vec<Vec<String>> = ds
        .covariate_names
        .iter()
        .enumerate()
        .map(|(r, name)| {
            let sd = inv.get(nu + r, nu + r).map_or(String::new(), |v| num(v.sqrt()));
            vec![name.clone(), num(cond.beta()[r]), sd]
        })
        .collect();

    out.write_csv("parameters.csv", &["parameter", "estimate", "sd"], &parameter_rows(&model, &fit))?;
    out.write_csv("fixed_effects.csv", &["covariate", "mean", "sd"], &effects)?;
    let file = ModelFile::new(&model, cfg.model.tau_beta, ds.covariate_names.clone(), fit);
    out.write("model.json", file.to_json()?.as_bytes())?;
    Ok(())
}
