//! Limited-memory BFGS maximization with a backtracking line search.
//!
//! Objective evaluations may fail (for example when a trial point makes a
//! precision matrix indefinite); a failed trial is treated like a rejected
//! step and the step length is reduced.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbfgsSettings {
    pub memory: usize,
    pub max_iterations: usize,
    /// Converged when `max|grad| <= gtol * max(1, |f|)`.
    pub gtol: f64,
    /// Converged when the objective changes by at most `ftol * max(1, |f|)`.
    pub ftol: f64,
    pub max_backtracks: usize,
    /// Largest allowed change of any coordinate in one step.
    pub max_step: f64,
}

impl Default for LbfgsSettings {
    fn default() -> Self {
        Self { memory: 10, max_iterations: 500, gtol: 1e-5, ftol: 1e-9, max_backtracks: 40, max_step: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    ObjectiveTolerance,
    MaxIterations,
    LineSearchFailed,
}

impl StopReason {
    pub fn converged(self) -> bool {
        matches!(self, StopReason::GradientTolerance | StopReason::ObjectiveTolerance)
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub reason: StopReason,
    /// Objective at every accepted iterate, starting point included.
    pub history: Vec<f64>,
}

impl OptimResult {
    pub fn converged(&self) -> bool {
        self.reason.converged()
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Maximizes `f`, which returns the value and gradient at a point.
pub fn maximize<F>(mut f: F, x0: &[f64], settings: &LbfgsSettings) -> Result<OptimResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let n = x0.len();
    // Internally minimize phi = -f.
    let mut eval = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let (v, g) = f(x)?;
        if !v.is_finite() || g.len() != n || g.iter().any(|x| !x.is_finite()) {
            return Err(Error::Parameter("objective is not finite".into()));
        }
        Ok((-v, g.into_iter().map(|x| -x).collect()))
    };

    let mut x = x0.to_vec();
    let (mut phi, mut g) = eval(&x)?;
    let mut evaluations = 1;
    let mut history = vec![-phi];
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(settings.memory);
    let finish = |x, phi: f64, g: Vec<f64>, it, ev, reason, history| OptimResult {
        x,
        value: -phi,
        gradient: g.into_iter().map(|v: f64| -v).collect(),
        iterations: it,
        evaluations: ev,
        reason,
        history,
    };

    if inf_norm(&g) <= settings.gtol * phi.abs().max(1.0) {
        return Ok(finish(x, phi, g, 0, evaluations, StopReason::GradientTolerance, history));
    }

    for iter in 1..=settings.max_iterations {
        let mut d = direction(&g, &mem);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            mem.clear();
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }

        let mut step = 1.0f64;
        if mem.is_empty() {
            step = step.min(1.0 / inf_norm(&g).max(1e-12));
        }
        step = step.min(settings.max_step / inf_norm(&d).max(1e-300));

        let mut accepted = None;
        for _ in 0..settings.max_backtracks {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            evaluations += 1;
            match eval(&trial) {
                Ok((p, gt)) if p <= phi + 1e-4 * step * slope => {
                    accepted = Some((trial, p, gt));
                    break;
                }
                Ok((p, _)) => {
                    // Minimizer of the quadratic through phi, slope and p.
                    let q = -slope * step * step / (2.0 * (p - phi - slope * step));
                    step = if q.is_finite() { q.clamp(0.1 * step, 0.5 * step) } else { 0.5 * step };
                }
                Err(_) => step *= 0.25,
            }
        }

        let Some((xn, pn, gn)) = accepted else {
            if !mem.is_empty() {
                mem.clear();
                continue;
            }
            return Ok(finish(x, phi, g, iter - 1, evaluations, StopReason::LineSearchFailed, history));
        };

        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if mem.len() == settings.memory {
                mem.pop_front();
            }
            mem.push_back((s, y, 1.0 / sy));
        }
        let change = (phi - pn).abs();
        x = xn;
        phi = pn;
        g = gn;
        history.push(-phi);

        if inf_norm(&g) <= settings.gtol * phi.abs().max(1.0) {
            return Ok(finish(x, phi, g, iter, evaluations, StopReason::GradientTolerance, history));
        }
        if change <= settings.ftol * phi.abs().max(1.0) {
            return Ok(finish(x, phi, g, iter, evaluations, StopReason::ObjectiveTolerance, history));
        }
    }
    let it = settings.max_iterations;
    Ok(finish(x, phi, g, it, evaluations, StopReason::MaxIterations, history))
}

/// Two-loop recursion: `-H g` for the current inverse-Hessian estimate.
fn direction(g: &[f64], mem: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut a = vec![0.0; mem.len()];
    for (i, (s, y, rho)) in mem.iter().enumerate().rev() {
        a[i] = rho * dot(s, &q);
        for (qj, yj) in q.iter_mut().zip(y) {
            *qj -= a[i] * yj;
        }
    }
    if let Some((s, y, _)) = mem.back() {
        let gamma = dot(s, y) / dot(y, y);
        for v in q.iter_mut() {
            *v *= gamma;
        }
    }
    for (i, (s, y, rho)) in mem.iter().enumerate() {
        let b = rho * dot(y, &q);
        for (qj, sj) in q.iter_mut().zip(s) {
            *qj += (a[i] - b) * sj;
        }
    }
    q.iter().map(|v| -v).collect()
}
