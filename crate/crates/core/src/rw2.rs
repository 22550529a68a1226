//! Second-order random-walk prior for spline weights.
//!
//! The precision is the Gram matrix of the Laplacian over the tensor basis,
//! `Q = G2 (x) H0 + 2 G1 (x) H1 + G0 (x) H2`, where `Gn`/`Hn` are the n-th
//! derivative Gram matrices of the x and y splines. Weights are stacked with
//! the x index varying slowest, matching `TensorBasis2D::index`.
//!
//! The improper prior's normalising constant is not included anywhere: the
//! smoothing precisions are fixed before estimation. Estimating them would
//! need the extra `((kl - 1) / 2) log tau` term.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::spline::TensorBasis2D;

#[derive(Debug, Clone, PartialEq)]
pub struct Rw2Precision {
    q: DMatrix<f64>,
    rank: usize,
}

impl Rw2Precision {
    pub fn build(basis: &TensorBasis2D) -> Result<Self> {
        let gx: Vec<_> = (0..3).map(|o| basis.x().derivative_gram(o)).collect::<Result<_>>()?;
        let gy: Vec<_> = (0..3).map(|o| basis.y().derivative_gram(o)).collect::<Result<_>>()?;
        let q = gx[2].kronecker(&gy[0]) + gx[1].kronecker(&gy[1]) * 2.0 + gx[0].kronecker(&gy[2]);
        let rank = numerical_rank(&q);
        Ok(Self { q, rank })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// `alpha^T Q alpha`.
    pub fn quad_form(&self, alpha: &[f64]) -> f64 {
        let a = DVector::from_column_slice(alpha);
        a.dot(&(&self.q * &a))
    }

    /// `Q alpha`.
    pub fn apply(&self, alpha: &[f64]) -> Vec<f64> {
        let a = DVector::from_column_slice(alpha);
        (&self.q * a).as_slice().to_vec()
    }

    /// Log-prior contribution `-(tau / 2) alpha^T Q alpha`.
    pub fn prior_quadform(&self, alpha: &[f64], tau: f64) -> Result<f64> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::Parameter(format!("smoothing precision must be positive, got {tau}")));
        }
        if alpha.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "weight vector has length {}, basis has {} functions",
                alpha.len(),
                self.dim()
            )));
        }
        Ok(-0.5 * tau * self.quad_form(alpha))
    }
}

fn numerical_rank(q: &DMatrix<f64>) -> usize {
    if q.nrows() == 0 {
        return 0;
    }
    let eig = q.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return 0;
    }
    eig.eigenvalues.iter().filter(|v| **v > 1e-10 * max).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Domain;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const GAUSS5: [(f64, f64); 5] = [
        (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
        (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
        (0.0, 0.568_888_888_888_888_9),
        (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
        (0.906_179_845_938_664, 0.236_926_885_056_189_1),
    ];

    /// Direct 2-D quadrature of <Laplacian f_a, Laplacian f_b> over the domain.
    fn brute_force(basis: &TensorBasis2D) -> DMatrix<f64> {
        let n = basis.len();
        let mut out = DMatrix::zeros(n, n);
        let xs = basis.x().breakpoints();
        let ys = basis.y().breakpoints();
        let lap = |i: usize, j: usize, x: f64, y: f64| {
            basis.x().value(i, x, 2) * basis.y().value(j, y, 0) + basis.x().value(i, x, 0) * basis.y().value(j, y, 2)
        };
        for wx in xs.windows(2) {
            for wy in ys.windows(2) {
                let (hx, mx) = (0.5 * (wx[1] - wx[0]), 0.5 * (wx[1] + wx[0]));
                let (hy, my) = (0.5 * (wy[1] - wy[0]), 0.5 * (wy[1] + wy[0]));
                for &(nx, cx) in &GAUSS5 {
                    for &(ny, cy) in &GAUSS5 {
                        let (x, y) = (mx + hx * nx, my + hy * ny);
                        let w = cx * cy * hx * hy;
                        for a in 0..n {
                            let la = lap(a / basis.l(), a % basis.l(), x, y);
                            if la == 0.0 {
                                continue;
                            }
                            for b in 0..n {
                                out[(a, b)] += w * la * lap(b / basis.l(), b % basis.l(), x, y);
                            }
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn matches_brute_force_laplacian_gram() {
        let d = Domain::new(-1.0, 2.0, 0.5, 2.0).unwrap();
        for k in 1..=3 {
            for l in 1..=3 {
                let basis = TensorBasis2D::new(&d, k, l).unwrap();
                let q = Rw2Precision::build(&basis).unwrap();
                let oracle = brute_force(&basis);
                let diff = (q.matrix() - &oracle).amax();
                assert!(diff < 1e-8, "k={k} l={l} diff={diff}");
            }
        }
    }

    #[test]
    fn constants_in_null_space_and_rank() {
        let d = Domain::new(0.0, 1.0, 0.0, 1.0).unwrap();
        for k in 2..=4 {
            for l in 2..=4 {
                let basis = TensorBasis2D::new(&d, k, l).unwrap();
                let q = Rw2Precision::build(&basis).unwrap();
                let ones = basis.constant_coefficients(1.0);
                assert!(q.apply(&ones).iter().all(|v| v.abs() < 1e-10));
                assert_eq!(q.rank(), k * l - 1, "k={k} l={l}");
            }
        }
        let one = Rw2Precision::build(&TensorBasis2D::constant(&d).unwrap()).unwrap();
        assert_eq!(one.matrix(), &DMatrix::zeros(1, 1));
        assert_eq!(one.rank(), 0);
    }

    #[test]
    fn prior_quadform_examples() {
        let d = Domain::new(0.0, 1.0, 0.0, 1.0).unwrap();
        let basis = TensorBasis2D::new(&d, 3, 3).unwrap();
        let q = Rw2Precision::build(&basis).unwrap();
        assert!(q.prior_quadform(&[2.5; 9], 3.0).unwrap().abs() < 1e-10);
        assert_eq!(q.prior_quadform(&[0.0; 9], 3.0).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let alpha: Vec<f64> = (0..9).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let one = q.prior_quadform(&alpha, 1.0).unwrap();
        let two = q.prior_quadform(&alpha, 2.0).unwrap();
        assert_eq!(two, 2.0 * one);
        assert!(one < 0.0);
        assert!(matches!(q.prior_quadform(&alpha, 0.0), Err(Error::Parameter(_))));
        assert!(matches!(q.prior_quadform(&alpha[..4], 1.0), Err(Error::Dimension(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn nonnegative_and_zero_only_on_constants(alpha in proptest::collection::vec(-5.0f64..5.0, 12)) {
                let d = Domain::new(0.0, 4.0, 0.0, 3.0).unwrap();
                let basis = TensorBasis2D::new(&d, 4, 3).unwrap();
                let q = Rw2Precision::build(&basis).unwrap();
                let quad = q.quad_form(&alpha);
                prop_assert!(quad >= -1e-12);
                let mean = alpha.iter().sum::<f64>() / alpha.len() as f64;
                let resid: f64 = alpha.iter().map(|a| (a - mean).powi(2)).sum::<f64>().sqrt();
                // Smallest positive eigenvalue bounds the form away from zero off the constants.
                let eig = q.matrix().clone().symmetric_eigen();
                let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
                ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
                if resid > 1e-10 {
                    prop_assert!(quad >= 0.99 * ev[1] * resid * resid);
                }
            }
        }
    }
}
