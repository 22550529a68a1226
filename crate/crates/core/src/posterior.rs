//! Marginal log-posterior of θ with the latent block `z = (u, β)` integrated
//! out, its gradient, and the conditional distribution of `z`.
//!
//! `Q_z = blockdiag(Q, τ_β I)` and `Q_C = Q_z + τ SᵀS` with `S = [E X]`.
//! The gradient with respect to the spline weights uses
//! `∂Q = V(∂Aᵀ A + Aᵀ ∂A)`, contracted once against
//! `W = Q⁻¹ − (Q_C⁻¹)_uu` on the pattern of `Q`.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use crate::error::{Result, Stage};
use crate::model::{ObservationModel, SpatialModel, Theta};
use crate::sparse::{CholFactor, Ordering, SelectedInverse, SymSparse, SymbolicCholesky};
use crate::spde::{stencil_sensitivities, CoefficientFields, SpdeOperator, StencilMatrix};

/// Pattern and data-dependent constants of `Q_C`.
#[derive(Debug)]
struct ConditionalLayout {
    nu: usize,
    p: usize,
    colptr: Vec<usize>,
    rowidx: Vec<usize>,
    q_map: Vec<usize>,
    sts: Vec<f64>,
    beta_diag: Vec<usize>,
    sty: Vec<f64>,
}

impl ConditionalLayout {
    fn new(model: &SpatialModel, obs: &ObservationModel) -> Self {
        let nu = model.grid().num_cells();
        let p = obs.p();
        let x = obs.x();
        let mut count = vec![0.0; nu];
        let mut ex = vec![0.0; nu * p];
        let mut sty = vec![0.0; nu + p];
        for (o, (&c, &y)) in obs.cells().iter().zip(obs.y()).enumerate() {
            count[c] += 1.0;
            sty[c] += y;
            for r in 0..p {
                ex[c * p + r] += x[(o, r)];
                sty[nu + r] += x[(o, r)] * y;
            }
        }
        let xtx = x.transpose() * x;

        let pat = model.pattern();
        let (qp, qi) = (pat.colptr(), pat.rowidx());
        let mut colptr = Vec::with_capacity(nu + p + 1);
        let mut rowidx = Vec::with_capacity(qi.len() + nu * p);
        let mut q_map = vec![0usize; qi.len()];
        let mut sts = Vec::with_capacity(qi.len());
        colptr.push(0);
        for c in 0..nu {
            for e in qp[c]..qp[c + 1] {
                q_map[e] = rowidx.len();
                rowidx.push(qi[e]);
                sts.push(if qi[e] == c { count[c] } else { 0.0 });
            }
            if count[c] > 0.0 {
                for r in 0..p {
                    rowidx.push(nu + r);
                    sts.push(ex[c * p + r]);
                }
            }
            colptr.push(rowidx.len());
        }
        let mut beta_diag = Vec::with_capacity(p);
        for c in 0..p {
            for r in c..p {
                if r == c {
                    beta_diag.push(rowidx.len());
                }
                rowidx.push(nu + r);
                sts.push(xtx[(r, c)]);
            }
            colptr.push(rowidx.len());
        }
        Self { nu, p, colptr, rowidx, q_map, sts, beta_diag, sty }
    }

    fn assemble(&self, q: &SymSparse, tau: f64, tau_beta: f64) -> Result<SymSparse> {
        let mut values: Vec<f64> = self.sts.iter().map(|v| tau * v).collect();
        for (src, &dst) in self.q_map.iter().enumerate() {
            values[dst] += q.values()[src];
        }
        for &d in &self.beta_diag {
            values[d] += tau_beta;
        }
        SymSparse::from_lower_csc(self.nu + self.p, self.colptr.clone(), self.rowidx.clone(), values)
    }
}

/// Conditional distribution `z | θ, y ~ N(μ_C, Q_C⁻¹)` and the pieces it was
/// built from.
#[derive(Debug, Clone)]
pub struct Conditional {
    pub fields: CoefficientFields,
    pub operator: SpdeOperator,
    pub q_factor: CholFactor,
    pub qc_factor: CholFactor,
    /// `μ_C`, latent field first, then the covariate coefficients.
    pub mu: Vec<f64>,
    pub tau_noise: f64,
    pub tau_beta: f64,
    nu: usize,
}

impl Conditional {
    pub fn mu_u(&self) -> &[f64] {
        &self.mu[..self.nu]
    }

    pub fn beta(&self) -> &[f64] {
        &self.mu[self.nu..]
    }

    pub fn num_cells(&self) -> usize {
        self.nu
    }

    pub fn p(&self) -> usize {
        self.mu.len() - self.nu
    }

    /// Fitted values `S μ_C` at the observations.
    pub fn fitted(&self, obs: &ObservationModel) -> Vec<f64> {
        let beta = self.beta();
        let x = obs.x();
        obs.cells()
            .iter()
            .enumerate()
            .map(|(o, &c)| self.mu[c] + (0..beta.len()).map(|r| x[(o, r)] * beta[r]).sum::<f64>())
            .collect()
    }

    /// `Q_C⁻¹` on the pattern of its factor.
    pub fn selected_inverse(&self) -> SelectedInverse {
        self.qc_factor.selected_inverse()
    }
}

/// Value and optional gradient of the log-posterior.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Option<Vec<f64>>,
}

/// Log-posterior of θ for one model and one set of observations.
///
/// Symbolic factorizations are computed on first use and reused.
#[derive(Debug)]
pub struct Posterior<'a> {
    model: &'a SpatialModel,
    obs: &'a ObservationModel,
    layout: ConditionalLayout,
    q_symbolic: OnceLock<Arc<SymbolicCholesky>>,
    qc_symbolic: OnceLock<Arc<SymbolicCholesky>>,
}

fn symbolic<'s>(cell: &'s OnceLock<Arc<SymbolicCholesky>>, a: &SymSparse) -> Result<&'s Arc<SymbolicCholesky>> {
    if let Some(s) = cell.get() {
        return Ok(s);
    }
    let s = Arc::new(SymbolicCholesky::analyze(a, &Ordering::Amd)?);
    Ok(cell.get_or_init(|| s))
}

impl<'a> Posterior<'a> {
    pub fn new(model: &'a SpatialModel, obs: &'a ObservationModel) -> Self {
        Self {
            model,
            obs,
            layout: ConditionalLayout::new(model, obs),
            q_symbolic: OnceLock::new(),
            qc_symbolic: OnceLock::new(),
        }
    }

    pub fn model(&self) -> &SpatialModel {
        self.model
    }

    pub fn observations(&self) -> &ObservationModel {
        self.obs
    }

    pub fn num_params(&self) -> usize {
        self.model.num_params()
    }

    pub fn conditional(&self, theta: &Theta) -> Result<Conditional> {
        let fields = self.model.fields(theta)?;
        let operator = self.model.operator(&fields)?;
        let q = operator.q();
        let q_factor = symbolic(&self.q_symbolic, q)?.factorize(q).map_err(|e| e.at_stage(Stage::Prior))?;
        let tau = theta.tau_noise();
        let tau_beta = self.obs.tau_beta();
        let qc = self.layout.assemble(q, tau, tau_beta)?;
        let qc_factor = symbolic(&self.qc_symbolic, &qc)?.factorize(&qc).map_err(|e| e.at_stage(Stage::Conditional))?;
        let rhs: Vec<f64> = self.layout.sty.iter().map(|v| tau * v).collect();
        let mu = qc_factor.solve(&rhs)?;
        Ok(Conditional { fields, operator, q_factor, qc_factor, mu, tau_noise: tau, tau_beta, nu: self.layout.nu })
    }

    /// Log-posterior up to an additive constant.
    pub fn log_posterior(&self, theta: &Theta) -> Result<f64> {
        Ok(self.evaluate(theta, false)?.value)
    }

    pub fn value_and_gradient(&self, theta: &Theta) -> Result<(f64, Vec<f64>)> {
        let e = self.evaluate(theta, true)?;
        Ok((e.value, e.gradient.unwrap_or_default()))
    }

    /// `log p(y | θ)` including all normalising constants.
    pub fn log_marginal_likelihood(&self, theta: &Theta) -> Result<f64> {
        let cond = self.conditional(theta)?;
        Ok(self.data_term(&cond, theta) - 0.5 * self.obs.n_obs() as f64 * (2.0 * PI).ln())
    }

    fn residuals(&self, cond: &Conditional) -> Vec<f64> {
        cond.fitted(self.obs).iter().zip(self.obs.y()).map(|(f, y)| y - f).collect()
    }

    fn data_term(&self, cond: &Conditional, theta: &Theta) -> f64 {
        let p = self.layout.p as f64;
        let n = self.obs.n_obs() as f64;
        let tau = cond.tau_noise;
        let logdet_qz = cond.q_factor.logdet() + p * cond.tau_beta.ln();
        let mu_u = cond.mu_u();
        let qmu = cond.operator.q().mul_vec(mu_u);
        let quad = dot(mu_u, &qmu) + cond.tau_beta * dot(cond.beta(), cond.beta());
        let resid = self.residuals(cond);
        0.5 * logdet_qz + 0.5 * n * theta.log_tau_noise
            - 0.5 * cond.qc_factor.logdet()
            - 0.5 * quad
            - 0.5 * tau * dot(&resid, &resid)
    }

    pub fn evaluate(&self, theta: &Theta, with_gradient: bool) -> Result<Evaluation> {
        let cond = self.conditional(theta)?;
        let value = self.model.log_prior(theta) + self.data_term(&cond, theta);
        let gradient = if with_gradient { Some(self.gradient(&cond, theta)) } else { None };
        Ok(Evaluation { value, gradient })
    }

    fn gradient(&self, cond: &Conditional, theta: &Theta) -> Vec<f64> {
        let model = self.model;
        let grid = model.grid();
        let pattern = model.pattern();
        let nu = self.layout.nu;
        let p = self.layout.p;
        let sq = cond.q_factor.selected_inverse();
        let sc = cond.qc_factor.selected_inverse();

        let (qp, qi) = (pattern.colptr(), pattern.rowidx());
        let mut w = vec![0.0; qi.len()];
        for b in 0..nu {
            for e in qp[b]..qp[b + 1] {
                let a = qi[e];
                w[e] = sq.get(a, b).expect("Q pattern inside factor pattern")
                    - sc.get(a, b).expect("Q pattern inside factor pattern");
            }
        }

        let a = cond.operator.a();
        let mu = cond.mu_u();
        let r = a.mul_vec(mu);
        let v = grid.cell_area();
        let mut omega = StencilMatrix::zeros(grid.m(), grid.n());
        let mut cols = [usize::MAX; 9];
        for k in 0..nu {
            for (s, col) in cols.iter_mut().enumerate() {
                *col = a.column(k, s).unwrap_or(usize::MAX);
            }
            let row = a.row(k);
            for s in 0..9 {
                let c = cols[s];
                if c == usize::MAX {
                    continue;
                }
                let mut aw = 0.0;
                for t in 0..9 {
                    let l = cols[t];
                    if l == usize::MAX || row[t] == 0.0 {
                        continue;
                    }
                    if let Some(pos) = pattern.lookup(l, c) {
                        aw += row[t] * w[pos];
                    }
                }
                omega.row_mut(k)[s] = v * (aw - r[k] * mu[c]);
            }
        }
        let sens = stencil_sensitivities(grid, &omega);
        let d = cond.fields.pullback(model.basis_matrix(), &sens);
        let mut grad: Vec<f64> = d.concat();

        let tau = cond.tau_noise;
        let x = self.obs.x();
        let mut tr = 0.0;
        for (o, &c) in self.obs.cells().iter().enumerate() {
            let mut t = sc.get(c, c).expect("diagonal");
            for r1 in 0..p {
                let x1 = x[(o, r1)];
                t += 2.0 * x1 * sc.get(c, nu + r1).expect("observed cell couples to covariates");
                for r2 in 0..p {
                    t += x1 * x[(o, r2)] * sc.get(nu + r1, nu + r2).expect("covariate block");
                }
            }
            tr += t;
        }
        let resid = self.residuals(cond);
        grad.push(0.5 * self.obs.n_obs() as f64 - 0.5 * tau * tr - 0.5 * tau * dot(&resid, &resid));
        model.add_log_prior_gradient(theta, &mut grad);
        grad
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
