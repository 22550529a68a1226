use anyhow::{bail, Result};
use nsgmrf::inference::holdout_compare;
use nsgmrf::predict::ScoreReport;

use super::load_dataset;
use crate::config::{ModelSpec, RunConfig};
use crate::output::{num, OutputDir};

fn cells(r: Option<&ScoreReport>) -> [String; 2] {
    r.map_or([String::new(), String::new()], |s| [num(s.crps), num(s.logscore)])
}

pub fn run(cfg: &RunConfig, out: &mut OutputDir) -> Result<()> {
    let grid = cfg.grid()?;
    let first_spec = cfg.score.first.clone().unwrap_or_default();
    let second_spec = cfg.score.second.clone().unwrap_or_else(|| cfg.model.clone());
    if first_spec.tau_beta != second_spec.tau_beta {
        bail!("both arms must use the same tau_beta");
    }
    let first = first_spec.build(&grid)?;
    let second = second_spec.build(&grid)?;
    let ds = load_dataset(cfg)?;
    let obs = ds.to_observations(&grid, first_spec.tau_beta)?;
    let settings = cfg.score.settings(cfg.seed);
    eprintln!(
        "scoring {} holdout repetitions ({}% held out, seed {})",
        settings.repetitions,
        100.0 * settings.holdout_fraction,
        settings.seed
    );
    let rows = holdout_compare(&first, &second, &obs, &settings, &cfg.optimizer)?;

    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let [c1, l1] = cells(r.first.as_ref());
            let [c2, l2] = cells(r.second.as_ref());
            let diff = |a: Option<f64>, b: Option<f64>| a.zip(b).map_or(String::new(), |(a, b)| num(b - a));
            let dc = diff(r.first.as_ref().map(|s| s.crps), r.second.as_ref().map(|s| s.crps));
            let dl = diff(r.first.as_ref().map(|s| s.logscore), r.second.as_ref().map(|s| s.logscore));
            vec![r.repetition.to_string(), r.n_train.to_string(), r.n_test.to_string(), c1, l1, c2, l2, dc, dl]
        })
        .collect();
    out.write_csv(
        "scores.csv",
        &[
            "repetition",
            "n_train",
            "n_test",
            "first_crps",
            "first_logscore",
            "second_crps",
            "second_logscore",
            "crps_difference",
            "logscore_difference",
        ],
        &table,
    )?;

    let summary: Vec<Vec<String>> = [("first", &first_spec), ("second", &second_spec)]
        .iter()
        .enumerate()
        .map(|(arm, (name, spec))| {
            let ok: Vec<&ScoreReport> =
                rows.iter().filter_map(|r| if arm == 0 { r.first.as_ref() } else { r.second.as_ref() }).collect();
            let mean = |f: fn(&ScoreReport) -> f64| {
                if ok.is_empty() {
                    String::new()
                } else {
                    num(ok.iter().map(|s| f(s)).sum::<f64>() / ok.len() as f64)
                }
            };
            vec![name.to_string(), describe(spec), ok.len().to_string(), mean(|s| s.crps), mean(|s| s.logscore)]
        })
        .collect();
    out.write_csv("score_summary.csv", &["arm", "model", "repetitions", "mean_crps", "mean_logscore"], &summary)?;
    for r in &summary {
        eprintln!("{} ({}): mean CRPS {}, mean LogScore {}", r[0], r[1], r[3], r[4]);
    }
    Ok(())
}

fn describe(spec: &ModelSpec) -> String {
    match (spec.basis, spec.log_tau) {
        (Some([k, l]), Some(t)) => format!("nonstationary {k}x{l} log_tau {t:?}"),
        _ => "stationary".to_string(),
    }
}
