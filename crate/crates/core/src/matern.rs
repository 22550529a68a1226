//! Closed-form quantities of the continuous anisotropic Matérn field with
//! smoothness one in two dimensions.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Modified Bessel function of the second kind, order one, from
/// `K₁(x) = ∫₀^∞ exp(−x cosh t) cosh t dt` by the trapezoid rule, which
/// converges geometrically for this integrand.
pub fn bessel_k1(x: f64) -> f64 {
    if x <= 0.0 {
        return f64::INFINITY;
    }
    let h: f64 = 0.02;
    let mut sum = 0.5 * (-x).exp();
    let mut t: f64 = h;
    loop {
        let c = t.cosh();
        let term = (-x * c).exp() * c;
        sum += term;
        if x * c > 750.0 || term < 1e-18 * sum {
            break;
        }
        t += h;
    }
    sum * h
}

/// Correlation at scaled distance `d = κ ‖H^{−1/2} h‖`: `d K₁(d)`.
pub fn matern_correlation(d: f64) -> f64 {
    if d == 0.0 {
        1.0
    } else {
        d * bessel_k1(d)
    }
}

/// Scaled distance at which the correlation equals `rho` (0 < rho < 1).
pub fn correlation_distance(rho: f64) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Parameter(format!("correlation level must be in (0, 1), got {rho}")));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while matern_correlation(hi) > rho {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if matern_correlation(mid) > rho {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Local stationary parameters implied by κ² and `H = γI + vvᵀ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalMatern {
    pub kappa2: f64,
    pub gamma: f64,
    pub v: [f64; 2],
}

impl LocalMatern {
    pub fn new(kappa2: f64, gamma: f64, vx: f64, vy: f64) -> Self {
        Self { kappa2, gamma, v: [vx, vy] }
    }

    pub fn from_logs(log_kappa2: f64, log_gamma: f64, vx: f64, vy: f64) -> Self {
        Self::new(log_kappa2.exp(), log_gamma.exp(), vx, vy)
    }

    /// `[H11, H12, H22]`.
    pub fn h(&self) -> [f64; 3] {
        let [x, y] = self.v;
        [self.gamma + x * x, x * y, self.gamma + y * y]
    }

    pub fn det_h(&self) -> f64 {
        self.gamma * (self.gamma + self.v[0].powi(2) + self.v[1].powi(2))
    }

    /// Marginal variance `1 / (4π κ² √det H)` for unit noise scale.
    pub fn marginal_variance(&self) -> f64 {
        1.0 / (4.0 * PI * self.kappa2 * self.det_h().sqrt())
    }

    /// `H / κ²`, the matrix whose square root scales distances.
    pub fn h_over_kappa2(&self) -> [f64; 3] {
        self.h().map(|v| v / self.kappa2)
    }

    /// Eigenpairs of H as `(value, unit vector)`: γ across v and
    /// `γ + |v|²` along v, in that order.
    pub fn eigen(&self) -> [(f64, [f64; 2]); 2] {
        let [x, y] = self.v;
        let norm = (x * x + y * y).sqrt();
        let along = if norm > 0.0 { [x / norm, y / norm] } else { [1.0, 0.0] };
        let across = [-along[1], along[0]];
        [(self.gamma, across), (self.gamma + norm * norm, along)]
    }

    /// Correlation between two points separated by `(dx, dy)`.
    pub fn correlation(&self, dx: f64, dy: f64) -> f64 {
        let [a, b, c] = self.h();
        let det = a * c - b * b;
        let q = (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
        matern_correlation(self.kappa2.sqrt() * q.sqrt())
    }

    /// Distance at which the isotropic correlation reaches about 0.13,
    /// `√8 / κ`, in the units of `H^{1/2}`.
    pub fn range(&self) -> f64 {
        8f64.sqrt() / self.kappa2.sqrt()
    }

    /// Closed polyline (first point repeated) of the level-`rho` correlation
    /// contour around `(x0, y0)`.
    pub fn ellipse(&self, x0: f64, y0: f64, rho: f64, points: usize) -> Result<Vec<(f64, f64)>> {
        let d = correlation_distance(rho)?;
        let [(l1, e1), (l2, e2)] = self.eigen();
        let kappa = self.kappa2.sqrt();
        let (a1, a2) = (d * l1.sqrt() / kappa, d * l2.sqrt() / kappa);
        let n = points.max(3);
        Ok((0..=n)
            .map(|i| {
                let t = 2.0 * PI * (i % n) as f64 / n as f64;
                let (c, s) = (a1 * t.cos(), a2 * t.sin());
                (x0 + c * e1[0] + s * e2[0], y0 + c * e1[1] + s * e2[1])
            })
            .collect())
    }
}
