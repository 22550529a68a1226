//! MAP estimation, observed-information standard deviations,
//! cross-validation of the smoothing precisions and the holdout harness.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::RegularGrid;
use crate::model::{ObservationModel, SpatialModel, Theta, WeightPrior};
use crate::optim::{maximize, LbfgsSettings, StopReason};
use crate::posterior::Posterior;
use crate::predict::{joint_log_predictive, score, ScoreReport};

/// Starting value of vx and vy. The log-posterior is even in v, so v = 0 is
/// a stationary point and an optimizer started there never leaves it.
pub const INITIAL_V: f64 = 0.1;

/// Step of the central differences used for the observed information.
pub const HESSIAN_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub theta: Theta,
    pub log_posterior: f64,
    pub gradient_inf_norm: f64,
    /// Observed-information standard deviations, absent if the negative
    /// Hessian is not positive definite or was not requested.
    pub sd: Option<Vec<f64>>,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
}

/// Constant fields κ² = γ = 1, small v, and τ_noise = 2 / var(y).
pub fn initial_theta(model: &SpatialModel, obs: &ObservationModel) -> Theta {
    let y = obs.y();
    let n = y.len() as f64;
    let mut log_tau = 0.0;
    if y.len() > 1 {
        let mean = y.iter().sum::<f64>() / n;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        if var > 0.0 {
            log_tau = (2.0 / var).ln();
        }
    }
    Theta::constant(model.kl(), 0.0, 0.0, INITIAL_V, INITIAL_V, log_tau)
}

/// Re-expresses θ in a basis with `kl` functions. Only constant fields
/// (a stationary θ) can be transferred exactly.
pub fn expand_constant(theta: &Theta, kl: usize) -> Result<Theta> {
    if theta.kl() != 1 {
        return Err(Error::Dimension("only a single-function theta can be expanded".into()));
    }
    let a = &theta.alpha;
    Ok(Theta::constant(kl, a[0][0], a[1][0], a[2][0], a[3][0], theta.log_tau_noise))
}

/// MAP estimate of θ by L-BFGS on the log-posterior.
pub fn fit_map(
    model: &SpatialModel,
    obs: &ObservationModel,
    init: Option<&Theta>,
    settings: &LbfgsSettings,
    with_sd: bool,
) -> Result<FitResult> {
    if obs.n_obs() == 0 {
        return Err(Error::EmptyDataset("no observations to fit".into()));
    }
    let start = match init {
        Some(t) => {
            model.check_theta(t)?;
            t.clone()
        }
        None => initial_theta(model, obs),
    };
    let post = Posterior::new(model, obs);
    let kl = model.kl();
    let r = maximize(|x| post.value_and_gradient(&Theta::from_vec(kl, x)?), &start.to_vec(), settings)?;
    let sd = if with_sd {
        observed_information_sd(|x| Ok(post.value_and_gradient(&Theta::from_vec(kl, x)?)?.1), &r.x, HESSIAN_STEP)?
    } else {
        None
    };
    Ok(FitResult {
        theta: Theta::from_vec(kl, &r.x)?,
        log_posterior: r.value,
        gradient_inf_norm: r.gradient.iter().fold(0.0, |m, g| m.max(g.abs())),
        sd,
        iterations: r.iterations,
        evaluations: r.evaluations,
        converged: r.converged(),
        stop_reason: r.reason,
    })
}

/// Hessian of a log-density by central differences of its gradient.
pub fn numerical_hessian<G>(grad: G, x: &[f64], step: f64) -> Result<DMatrix<f64>>
where
    G: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let n = x.len();
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[i] += step;
            xm[i] -= step;
            let (gp, gm) = (grad(&xp)?, grad(&xm)?);
            Ok(gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * step)).collect())
        })
        .collect::<Result<_>>()?;
    let h = DMatrix::from_fn(n, n, |r, c| cols[c][r]);
    Ok((&h + h.transpose()) * 0.5)
}

/// Square roots of the diagonal of the inverse observed information;
/// `None` when the negative Hessian is not positive definite.
pub fn observed_information_sd<G>(grad: G, x: &[f64], step: f64) -> Result<Option<Vec<f64>>>
where
    G: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let info = -numerical_hessian(grad, x, step)?;
    let Some(chol) = info.cholesky() else {
        return Ok(None);
    };
    Ok(Some(chol.inverse().diagonal().iter().map(|v| v.sqrt()).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSettings {
    pub folds: usize,
    pub seed: u64,
    /// Candidate values of log τᵢ, shared by the four fields.
    pub log_tau_grid: Vec<f64>,
    /// Evaluate every tuple instead of coordinate sweeps.
    pub full_factorial: bool,
    pub max_sweeps: usize,
}

impl Default for CvSettings {
    fn default() -> Self {
        Self { folds: 5, seed: 1, log_tau_grid: vec![2.0, 4.0, 6.0, 8.0], full_factorial: false, max_sweeps: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub log_tau: [f64; 4],
    /// `−(1/K) Σ log π(y_k | y_−k, θ̂_k)`; absent if a fold fit failed.
    pub score: Option<f64>,
    pub fold_log_predictive: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub best: [f64; 4],
    pub rows: Vec<CvRow>,
    pub seed: u64,
}

/// Seeded assignment of `n` items to `folds` groups of near-equal size.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        fold[i] = rank % folds;
    }
    fold
}

fn split(obs: &ObservationModel, fold: &[usize], k: usize) -> (ObservationModel, ObservationModel) {
    let train: Vec<usize> = (0..obs.n_obs()).filter(|&i| fold[i] != k).collect();
    let test: Vec<usize> = (0..obs.n_obs()).filter(|&i| fold[i] == k).collect();
    (obs.subset(&train), obs.subset(&test))
}

fn lex_less(a: &[f64; 4], b: &[f64; 4]) -> bool {
    a.iter().zip(b).find(|(x, y)| x != y).is_some_and(|(x, y)| x < y)
}

/// Five-fold (by default) cross-validation of the RW2 smoothing precisions
/// of a `k × l` basis on `grid`.
pub fn cross_validate(
    grid: &RegularGrid,
    k: usize,
    l: usize,
    obs: &ObservationModel,
    cv: &CvSettings,
    optimizer: &LbfgsSettings,
    init: Option<&Theta>,
) -> Result<CvResult> {
    if cv.log_tau_grid.is_empty() {
        return Err(Error::Config("empty log-tau grid".into()));
    }
    if cv.log_tau_grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config("non-finite value in the log-tau grid".into()));
    }
    if cv.folds < 2 || obs.n_obs() < cv.folds {
        return Err(Error::Config(format!("{} observations cannot form {} folds", obs.n_obs(), cv.folds)));
    }
    let fold = fold_assignment(obs.n_obs(), cv.folds, cv.seed);
    let splits: Vec<_> = (0..cv.folds).map(|f| split(obs, &fold, f)).collect();

    let evaluate = |tuples: &[[f64; 4]]| -> Vec<CvRow> {
        let tasks: Vec<(usize, usize)> = (0..tuples.len()).flat_map(|t| (0..cv.folds).map(move |f| (t, f))).collect();
        let results: Vec<Option<f64>> = tasks
            .par_iter()
            .map(|&(t, f)| {
                let tau = tuples[t].map(f64::exp);
                let model = SpatialModel::new(grid.clone(), k, l, WeightPrior::Rw2 { tau }).ok()?;
                let (train, test) = &splits[f];
                let start = init.map(|s| if s.kl() == 1 { expand_constant(s, model.kl()) } else { Ok(s.clone()) });
                let start = match start {
                    Some(Ok(s)) => Some(s),
                    Some(Err(_)) => return None,
                    None => None,
                };
                let fit = fit_map(&model, train, start.as_ref(), optimizer, false).ok()?;
                joint_log_predictive(&model, train, test, &fit.theta).ok()
            })
            .collect();
        tuples
            .iter()
            .enumerate()
            .map(|(t, &log_tau)| {
                let folds: Vec<Option<f64>> = results[t * cv.folds..(t + 1) * cv.folds].to_vec();
                let score = folds.iter().try_fold(0.0, |acc, v| v.map(|x| acc + x)).map(|s| -s / cv.folds as f64);
                CvRow { log_tau, score, fold_log_predictive: folds }
            })
            .collect()
    };

    let g = &cv.log_tau_grid;
    let mut rows: Vec<CvRow> = Vec::new();
    if cv.full_factorial {
        let mut tuples = Vec::new();
        for &a in g {
            for &b in g {
                for &c in g {
                    for &d in g {
                        tuples.push([a, b, c, d]);
                    }
                }
            }
        }
        rows = evaluate(&tuples);
    } else {
        let mut current = [g[(g.len() - 1) / 2]; 4];
        for _ in 0..cv.max_sweeps.max(1) {
            let before = current;
            for coord in 0..4 {
                let candidates: Vec<[f64; 4]> = g
                    .iter()
                    .map(|&v| {
                        let mut t = current;
                        t[coord] = v;
                        t
                    })
                    .filter(|t| !rows.iter().any(|r| r.log_tau == *t))
                    .collect();
                rows.extend(evaluate(&candidates));
                if let Some(best) = argmin(&rows, |t| {
                    g.iter().any(|&v| {
                        let mut c = current;
                        c[coord] = v;
                        c == *t
                    })
                }) {
                    current = best;
                }
            }
            if current == before {
                break;
            }
        }
    }
    let best = argmin(&rows, |_| true).ok_or_else(|| Error::Config("every cross-validation fit failed".into()))?;
    Ok(CvResult { best, rows, seed: cv.seed })
}

/// Smallest finite score among rows passing `filter`; ties go to the
/// lexicographically smallest tuple.
fn argmin(rows: &[CvRow], filter: impl Fn(&[f64; 4]) -> bool) -> Option<[f64; 4]> {
    let mut best: Option<(&[f64; 4], f64)> = None;
    for r in rows.iter().filter(|r| filter(&r.log_tau)) {
        let Some(s) = r.score.filter(|s| s.is_finite()) else { continue };
        best = match best {
            Some((t, b)) if b < s || (b == s && lex_less(t, &r.log_tau)) => Some((t, b)),
            _ => Some((&r.log_tau, s)),
        };
    }
    best.map(|(t, _)| *t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoldoutSettings {
    pub repetitions: usize,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for HoldoutSettings {
    fn default() -> Self {
        Self { repetitions: 20, holdout_fraction: 0.2, seed: 1 }
    }
}

/// Scores of both arms for one random holdout split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldoutRow {
    pub repetition: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// `None` when the arm's fit failed.
    pub first: Option<ScoreReport>,
    pub second: Option<ScoreReport>,
}

/// Random holdout split for repetition `rep`.
pub fn holdout_split(n: usize, fraction: f64, seed: u64, rep: usize) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_test = ((fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    (train, test)
}

/// Fits both models on each training split and scores the held-out part.
///
/// A non-stationary second arm starts from the first arm's estimate when
/// the first arm is stationary.
pub fn holdout_compare(
    first: &SpatialModel,
    second: &SpatialModel,
    obs: &ObservationModel,
    settings: &HoldoutSettings,
    optimizer: &LbfgsSettings,
) -> Result<Vec<HoldoutRow>> {
    if !(settings.holdout_fraction > 0.0 && settings.holdout_fraction < 1.0) {
        return Err(Error::Config(format!("holdout fraction must be in (0, 1), got {}", settings.holdout_fraction)));
    }
    if obs.n_obs() < 2 {
        return Err(Error::EmptyDataset("holdout needs at least two observations".into()));
    }
    let rows = (0..settings.repetitions)
        .into_par_iter()
        .map(|rep| {
            let (train_idx, test_idx) = holdout_split(obs.n_obs(), settings.holdout_fraction, settings.seed, rep);
            let train = obs.subset(&train_idx);
            let test = obs.subset(&test_idx);
            let fit1 = fit_map(first, &train, None, optimizer, false).ok();
            let s1 = fit1.as_ref().and_then(|f| score(first, &train, &test, &f.theta).ok());
            let warm = match (&fit1, first.is_stationary() && !second.is_stationary()) {
                (Some(f), true) => expand_constant(&f.theta, second.kl()).ok(),
                _ => None,
            };
            let s2 = fit_map(second, &train, warm.as_ref(), optimizer, false)
                .ok()
                .and_then(|f| score(second, &train, &test, &f.theta).ok());
            HoldoutRow { repetition: rep, n_train: train.n_obs(), n_test: test.n_obs(), first: s1, second: s2 }
        })
        .collect();
    Ok(rows)
}
