use rayon::prelude::*;

use super::grid::Grid;
use crate::ensemble::{log_abs_q, EnsembleSpec};
use crate::error::{Error, Result};

/// `G(z) = z² log|z| / 2 − 3z²/4`, the second antiderivative of `log|z|`.
fn g2(z: f64) -> f64 {
    if z == 0.0 {
        0.0
    } else {
        0.5 * z * z * z.abs().ln() - 0.75 * z * z
    }
}

/// `∬_{[0,1]²} log|k + s − t| ds dt` for an integer cell offset `k ≥ 0`.
pub fn unit_offset_log_average(k: usize) -> f64 {
    if k < 16 {
        let k = k as f64;
        g2(k + 1.0) - 2.0 * g2(k) + g2(k - 1.0)
    } else {
        // log k + E log(1 + u/k), u triangular on [−1, 1]
        let k = k as f64;
        let k2 = 1.0 / (k * k);
        k.ln() - k2 / 12.0 - k2 * k2 / 60.0 - k2 * k2 * k2 / 168.0
    }
}

/// Average of `log|x − y|` over two cells of width `width`, `k` cells apart.
pub fn cell_log_average(k: usize, width: f64) -> f64 {
    width.ln() + unit_offset_log_average(k)
}

/// Average of `log|x − y|` over `[a1, b1] × [a2, b2]`.
pub fn rect_log_average(a1: f64, b1: f64, a2: f64, b2: f64) -> f64 {
    let integral = g2(b1 - a2) - g2(a1 - a2) - g2(b1 - b2) + g2(a1 - b2);
    integral / ((b1 - a1) * (b2 - a2))
}

/// Discretized interaction `K` and external field `U` on a grid.
///
/// `K[i][j]` is the cell average of `−[log|x − y| + log|x^θ − y^θ|]`, with the
/// `log|x − y|` factors averaged exactly and the smooth remainder
/// `log|q(x, y)|` taken at the midpoints. `U[i] = −log w(node_i)`, `+∞` where
/// the weight vanishes; such nodes are excluded from the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionKernel {
    pub grid: Grid,
    k: Vec<f64>,
    u: Vec<f64>,
    excluded: Vec<bool>,
    /// Whether each side of the grid cuts an unbounded or larger support.
    pub truncated: (bool, bool),
}

impl InteractionKernel {
    /// Builds a kernel from an explicit symmetric matrix (row-major) and field.
    pub fn from_parts(grid: Grid, k: Vec<f64>, u: Vec<f64>) -> Result<Self> {
        let m = grid.cells;
        if k.len() != m * m || u.len() != m {
            return Err(Error::Contract(format!(
                "kernel of size {} and field of size {} do not match {m} nodes",
                k.len(),
                u.len()
            )));
        }
        for i in 0..m {
            for j in 0..m {
                let v = k[i * m + j];
                if !v.is_finite() {
                    return Err(Error::Config(format!("kernel entry ({i},{j}) is not finite")));
                }
                if v != k[j * m + i] {
                    return Err(Error::Contract(format!("kernel is not symmetric at ({i},{j})")));
                }
            }
        }
        if u.iter().any(|&v| v.is_nan() || v == f64::NEG_INFINITY) {
            return Err(Error::Config(
                "external field is −∞ or undefined at a node (weight diverges)".into(),
            ));
        }
        let excluded: Vec<bool> = u.iter().map(|&v| v == f64::INFINITY).collect();
        if excluded.iter().all(|&e| e) {
            return Err(Error::Config("the weight vanishes at every grid node".into()));
        }
        Ok(InteractionKernel {
            grid,
            k,
            u,
            excluded,
            truncated: (false, false),
        })
    }

    pub fn size(&self) -> usize {
        self.grid.cells
    }

    #[inline]
    pub fn k(&self, i: usize, j: usize) -> f64 {
        self.k[i * self.grid.cells + j]
    }

    /// Row `i` of `K` (equal to column `i`).
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.grid.cells;
        &self.k[i * m..(i + 1) * m]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.k
    }

    pub fn field(&self) -> &[f64] {
        &self.u
    }

    pub fn excluded(&self) -> &[bool] {
        &self.excluded
    }

    pub fn is_symmetric(&self) -> bool {
        let m = self.grid.cells;
        (0..m).all(|i| (0..i).all(|j| self.k[i * m + j] == self.k[j * m + i]))
    }
}

/// Assembles `K` and `U` for a one-species ensemble on `grid`.
pub fn assemble_kernel(spec: &EnsembleSpec, grid: &Grid) -> Result<InteractionKernel> {
    spec.validate()?;
    if !spec.support.contains_interval(&grid.interval()) {
        return Err(Error::Config(format!(
            "grid [{}, {}] leaves the support [{}, {}]",
            grid.lower, grid.upper, spec.support.lower, spec.support.upper
        )));
    }
    let m = grid.cells;
    let h = grid.width();
    let nodes = grid.nodes();
    let theta = spec.theta;
    let offsets: Vec<f64> = (0..m).map(|k| cell_log_average(k, h)).collect();
    let mut k = vec![0.0; m * m];
    k.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
        for (j, v) in row.iter_mut().enumerate() {
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            *v = -(2.0 * offsets[b - a] + log_abs_q(theta, nodes[a], nodes[b]));
        }
    });
    let u: Vec<f64> = nodes.iter().map(|&x| -spec.weight.log_weight(x)).collect();
    let mut kernel = InteractionKernel::from_parts(*grid, k, u)?;
    kernel.truncated = (
        grid.lower > spec.support.lower,
        grid.upper < spec.support.upper,
    );
    Ok(kernel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{Interval, WeightFamily, WeightScaling};
    use crate::quadrature::Rule;
    use approx::assert_abs_diff_eq;

    fn flat(theta: u32, lo: f64, hi: f64) -> EnsembleSpec {
        EnsembleSpec::new(
            theta,
            1.0,
            Interval::new(lo, hi),
            WeightFamily::Constant,
            WeightScaling::Fixed,
        )
        .unwrap()
    }

    #[test]
    fn self_cell_average_is_log_width_minus_three_halves() {
        assert_abs_diff_eq!(unit_offset_log_average(0), -1.5, epsilon = 1e-15);
        // Over the triangle t < s write t = s(1 − v), then grade both axes
        // with s = y³, v = z³ so the log singularities become integrable
        // polynomial-times-log factors that Gauss–Legendre resolves.
        let r = Rule::new(120, 0.0, 1.0);
        let tri = r.integrate(|y| {
            let s = y * y * y;
            r.integrate(|z| {
                let v = z * z * z;
                s * (s * v).ln() * 3.0 * z * z
            }) * 3.0 * y * y
        });
        assert_abs_diff_eq!(2.0 * tri, -1.5, epsilon = 1e-8);
    }

    #[test]
    fn series_branch_matches_closed_form() {
        for k in [16usize, 20, 40] {
            let kf = k as f64;
            let closed = g2(kf + 1.0) - 2.0 * g2(kf) + g2(kf - 1.0);
            assert_abs_diff_eq!(unit_offset_log_average(k), closed, epsilon = 1e-10);
        }
    }

    #[test]
    fn rect_average_agrees_with_uniform_formula() {
        let h = 0.1;
        for k in 0..5usize {
            let a = rect_log_average(0.0, h, k as f64 * h, (k + 1) as f64 * h);
            assert_abs_diff_eq!(a, cell_log_average(k, h), epsilon = 1e-12);
        }
    }

    #[test]
    fn diagonal_entry_theta_one() {
        let g = Grid::new(0.0, 1.0, 100).unwrap();
        let k = assemble_kernel(&flat(1, 0.0, 1.0), &g).unwrap();
        let expected = -2.0 * (0.01f64.ln() - 1.5);
        assert_abs_diff_eq!(k.k(5, 5), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(k.k(5, 5), 12.2103, epsilon = 1e-4);
        assert!(k.is_symmetric());
    }

    #[test]
    fn far_entries_approach_log_distance() {
        let g = Grid::new(0.0, 10.0, 1000).unwrap();
        let k = assemble_kernel(&flat(1, 0.0, 10.0), &g).unwrap();
        let d = g.node(900) - g.node(100);
        let h = g.width();
        assert!((k.k(100, 900) + 2.0 * d.ln()).abs() <= h * h / (d * d));
    }

    #[test]
    fn theta_two_diagonal_uses_local_factor() {
        let g = Grid::new(0.0, 1.0, 50).unwrap();
        let k = assemble_kernel(&flat(2, 0.0, 1.0), &g).unwrap();
        let x = g.node(10);
        let expected = -2.0 * (g.width().ln() - 1.5) - (2.0 * x).ln();
        assert_abs_diff_eq!(k.k(10, 10), expected, epsilon = 1e-12);
    }

    #[test]
    fn zero_weight_nodes_are_excluded() {
        let spec = EnsembleSpec::new(
            1,
            1.0,
            Interval::new(0.0, 10.0),
            WeightFamily::TablePotential {
                nodes: vec![0.0, 10.0],
                values: vec![0.0, 1.0],
            },
            WeightScaling::Fixed,
        )
        .unwrap();
        let g = Grid::new(0.0, 10.0, 10).unwrap();
        let k = assemble_kernel(&spec, &g).unwrap();
        assert!(k.excluded().iter().all(|&e| !e));
        assert_eq!(k.truncated, (false, false));

        let sw = EnsembleSpec::new(
            1,
            1.0,
            Interval::HALF_LINE,
            WeightFamily::PowerExp { alpha: 1.0, tau: 1.0 },
            WeightScaling::Fixed,
        )
        .unwrap();
        assert!(assemble_kernel(&sw, &Grid::new(0.0, 4.0, 8).unwrap()).is_ok());
    }

    #[test]
    fn grid_outside_support_is_rejected() {
        let g = Grid::new(-1.0, 1.0, 10).unwrap();
        assert!(matches!(
            assemble_kernel(&flat(1, 0.0, 1.0), &g),
            Err(Error::Config(_))
        ));
    }
}
