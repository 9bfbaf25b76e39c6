//! Closed-form limiting laws used as references: the disordered-boson
//! density `ρ∞` on `(0, 3√3]` and the semicircle.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::measure::AtomicMeasure;
use crate::quadrature;

/// Right edge `b = 3√3` of the disordered-boson density.
pub const BOSON_EDGE: f64 = 5.196_152_422_706_632;

/// `ρ∞(t) = (1/2π) (t/b)^{-1/3} [(1 + √(1 − t²/b²))^{1/3} − (1 − √(1 − t²/b²))^{1/3}]`
/// for `0 < t ≤ b`, zero elsewhere.
pub fn rho_infinity(t: f64) -> f64 {
    if !(t > 0.0 && t <= BOSON_EDGE) {
        return 0.0;
    }
    let u = (t / BOSON_EDGE).cbrt();
    bracket(u) / (2.0 * PI * u)
}

/// `(1 + s)^{1/3} − (1 − s)^{1/3}` with `s = √(1 − u⁶)`.
fn bracket(u: f64) -> f64 {
    let u6 = u.powi(6);
    let s = (1.0 - u6).max(0.0).sqrt();
    // 1 − s = u⁶ / (1 + s), computed without cancellation for small u.
    (1.0 + s).cbrt() - (u6 / (1.0 + s)).cbrt()
}

const CDF_TOL: f64 = 1e-13;

/// `∫_0^t ρ∞`, by adaptive quadrature in `u = (s/b)^{1/3}`, which removes the
/// `t^{-1/3}` singularity at the origin.
pub fn rho_infinity_cdf(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let upper = (t.min(BOSON_EDGE) / BOSON_EDGE).cbrt();
    rho_integral_u(0.0, upper)
}

fn rho_integral_u(u0: f64, u1: f64) -> f64 {
    let c = 3.0 * BOSON_EDGE / (2.0 * PI);
    let (v, _) = quadrature::adaptive(&|u: f64| c * u * bracket(u), u0, u1, CDF_TOL);
    v
}

/// Semicircle density `(2/(π R²)) √(R² − x²)` on `[−R, R]`.
pub fn semicircle(x: f64, radius: f64) -> f64 {
    if x.abs() >= radius {
        return 0.0;
    }
    2.0 / (PI * radius * radius) * (radius * radius - x * x).sqrt()
}

pub fn semicircle_cdf(x: f64, radius: f64) -> f64 {
    if x <= -radius {
        return 0.0;
    }
    if x >= radius {
        return 1.0;
    }
    let s = x / radius;
    0.5 + (s * (1.0 - s * s).sqrt() + s.asin()) / PI
}

/// A limiting law with a closed-form density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum ReferenceLaw {
    RhoInfinity,
    Semicircle {
        #[serde(default = "two")]
        radius: f64,
    },
}

fn two() -> f64 {
    2.0
}

/// Number of cells used when a reference law is reduced to atoms.
pub const REFERENCE_CELLS: usize = 1 << 15;

impl ReferenceLaw {
    pub fn density(&self, x: f64) -> f64 {
        match self {
            ReferenceLaw::RhoInfinity => rho_infinity(x),
            ReferenceLaw::Semicircle { radius } => semicircle(x, *radius),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            ReferenceLaw::RhoInfinity => rho_infinity_cdf(x),
            ReferenceLaw::Semicircle { radius } => semicircle_cdf(x, *radius),
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            ReferenceLaw::RhoInfinity => (0.0, BOSON_EDGE),
            ReferenceLaw::Semicircle { radius } => (-radius, *radius),
        }
    }

    /// Exact cell masses on `cells` equal cells of the support, placed at
    /// the cell midpoints.
    pub fn discretize(&self, cells: usize) -> AtomicMeasure {
        let (a, b) = self.support();
        let h = (b - a) / cells as f64;
        let masses: Vec<f64> = match self {
            ReferenceLaw::RhoInfinity => (0..cells)
                .map(|k| {
                    let lo = (a + h * k as f64) / BOSON_EDGE;
                    let hi = (a + h * (k + 1) as f64) / BOSON_EDGE;
                    rho_integral_u(lo.cbrt(), hi.min(1.0).cbrt())
                })
                .collect(),
            ReferenceLaw::Semicircle { radius } => (0..cells)
                .map(|k| {
                    semicircle_cdf(a + h * (k + 1) as f64, *radius)
                        - semicircle_cdf(a + h * k as f64, *radius)
                })
                .collect(),
        };
        let total: f64 = masses.iter().sum();
        let atoms = (0..cells).map(|k| a + h * (k as f64 + 0.5)).collect();
        AtomicMeasure::new(atoms, masses.into_iter().map(|m| m / total).collect())
            .expect("reference cell masses are finite and nonnegative")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rho_infinity_is_normalized() {
        assert_abs_diff_eq!(rho_infinity_cdf(BOSON_EDGE), 1.0, epsilon = 1e-10);
        assert_eq!(rho_infinity(0.0), 0.0);
        assert_eq!(rho_infinity(6.0), 0.0);
    }

    #[test]
    fn rho_infinity_mean_is_three_halves() {
        let c = 3.0 * BOSON_EDGE / (2.0 * PI);
        // t = b u³
        let (m, _) = quadrature::adaptive(
            &|u: f64| c * u * bracket(u) * BOSON_EDGE * u.powi(3),
            0.0,
            1.0,
            1e-13,
        );
        assert_abs_diff_eq!(m, 1.5, epsilon = 1e-9);
    }

    #[test]
    fn rho_infinity_cdf_matches_direct_density_integration() {
        // Independent route: midpoint sums of ρ∞ away from the singular ends.
        let (lo, hi) = (1.0, 4.0);
        let n = 200_000;
        let h = (hi - lo) / n as f64;
        let direct: f64 = (0..n).map(|k| rho_infinity(lo + h * (k as f64 + 0.5)) * h).sum();
        assert_abs_diff_eq!(
            rho_infinity_cdf(hi) - rho_infinity_cdf(lo),
            direct,
            epsilon = 1e-9
        );
    }

    #[test]
    fn semicircle_cdf_endpoints() {
        assert_abs_diff_eq!(semicircle_cdf(0.0, 2.0), 0.5, epsilon = 1e-15);
        assert_eq!(semicircle_cdf(2.0, 2.0), 1.0);
        let law = ReferenceLaw::Semicircle { radius: 2.0 };
        let d = law.discretize(1000);
        assert!(d.is_normalized(1e-12));
        assert_abs_diff_eq!(d.mean(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn discretized_rho_has_correct_mean() {
        let d = ReferenceLaw::RhoInfinity.discretize(4096);
        assert!(d.is_normalized(1e-12));
        assert_abs_diff_eq!(d.mean(), 1.5, epsilon = 1e-5);
    }
}
