use anyhow::Result;
use nsgmrf::inference::cross_validate;

use super::{init_theta, load_dataset};
use crate::config::RunConfig;
use crate::output::{num, OutputDir};

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, num)
}

pub fn run(cfg: &RunConfig, out: &mut OutputDir) -> Result<()> {
    let grid = cfg.grid()?;
    let [k, l] = cfg.model.basis_for_cv()?;
    let ds = load_dataset(cfg)?;
    let obs = ds.to_observations(&grid, cfg.model.tau_beta)?;
    let init = init_theta(cfg, cfg.cv.init.as_ref(), k * l)?;
    let settings = cfg.cv.settings(cfg.seed);
    eprintln!(
        "cross-validating a {k}x{l} basis over log-tau grid {:?} ({} folds, seed {})",
        settings.log_tau_grid, settings.folds, settings.seed
    );
    let result = cross_validate(&grid, k, l, &obs, &settings, &cfg.optimizer, init.as_ref())?;

    let mut header =
        vec!["log_tau_1".to_string(), "log_tau_2".into(), "log_tau_3".into(), "log_tau_4".into(), "score".into()];
    header.extend((1..=settings.folds).map(|f| format!("fold_{f}_log_predictive")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = result
        .rows
        .iter()
        .map(|r| {
            let mut row: Vec<String> = r.log_tau.iter().map(|v| num(*v)).collect();
            row.push(opt(r.score));
            row.extend(r.fold_log_predictive.iter().map(|v| opt(*v)));
            row
        })
        .collect();
    out.write_csv("cv.csv", &header, &rows)?;

    let best_score = result.rows.iter().find(|r| r.log_tau == result.best).and_then(|r| r.score);
    let mut best: Vec<String> = vec![result.seed.to_string()];
    best.extend(result.best.iter().map(|v| num(*v)));
    best.push(opt(best_score));
    out.write_csv("cv_best.csv", &["seed", "log_tau_1", "log_tau_2", "log_tau_3", "log_tau_4", "score"], &[best])?;
    eprintln!("selected log-tau {:?}", result.best);
    Ok(())
}
