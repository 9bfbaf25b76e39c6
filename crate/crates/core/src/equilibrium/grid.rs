use serde::{Deserialize, Serialize};

use crate::ensemble::{EnsembleSpec, Interval};
use crate::error::{Error, Result};
use crate::measure::{AtomicMeasure, ToAtoms};

/// `cells` equal cells covering `[lower, upper]`; nodes are cell midpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lower: f64,
    pub upper: f64,
    pub cells: usize,
}

impl Grid {
    pub fn new(lower: f64, upper: f64, cells: usize) -> Result<Self> {
        if !lower.is_finite() || !upper.is_finite() || !(lower < upper) {
            return Err(Error::Config(format!(
                "grid bounds [{lower}, {upper}] must be finite with lower < upper"
            )));
        }
        if cells == 0 {
            return Err(Error::Config("grid needs at least one cell".into()));
        }
        Ok(Grid {
            lower,
            upper,
            cells,
        })
    }

    pub fn width(&self) -> f64 {
        (self.upper - self.lower) / self.cells as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.lower + self.width() * (i as f64 + 0.5)
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.cells).map(|i| self.node(i)).collect()
    }

    /// Edges of cell `i`.
    pub fn cell(&self, i: usize) -> (f64, f64) {
        let h = self.width();
        (self.lower + h * i as f64, self.lower + h * (i + 1) as f64)
    }

    pub fn interval(&self) -> Interval {
        Interval::new(self.lower, self.upper)
    }
}

/// Probability weights on the nodes of a [`Grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeasure {
    pub grid: Grid,
    pub weights: Vec<f64>,
}

pub const SIMPLEX_TOL: f64 = 1e-12;

impl GridMeasure {
    pub fn new(grid: Grid, weights: Vec<f64>) -> Result<Self> {
        let m = GridMeasure { grid, weights };
        m.check()?;
        Ok(m)
    }

    pub fn uniform(grid: Grid) -> Self {
        GridMeasure {
            grid,
            weights: vec![1.0 / grid.cells as f64; grid.cells],
        }
    }

    /// Simplex invariants: one weight per node, nonnegative, unit mass.
    pub fn check(&self) -> Result<()> {
        if self.weights.len() != self.grid.cells {
            return Err(Error::Contract(format!(
                "{} weights for {} nodes",
                self.weights.len(),
                self.grid.cells
            )));
        }
        if self.weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::Contract("grid weights must be nonnegative".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Contract(format!("grid weights sum to {total}")));
        }
        Ok(())
    }

    pub fn nodes(&self) -> Vec<f64> {
        self.grid.nodes()
    }

    /// Piecewise-constant density `weight / Δ` at each node.
    pub fn densities(&self) -> Vec<f64> {
        let h = self.grid.width();
        self.weights.iter().map(|w| w / h).collect()
    }

    pub fn mean(&self) -> f64 {
        self.nodes().iter().zip(&self.weights).map(|(x, w)| x * w).sum()
    }

    /// First and last nodes carrying more than `threshold` mass.
    pub fn support_endpoints(&self, threshold: f64) -> Option<(f64, f64)> {
        let first = self.weights.iter().position(|&w| w > threshold)?;
        let last = self.weights.iter().rposition(|&w| w > threshold)?;
        Some((self.grid.node(first), self.grid.node(last)))
    }

    /// Mass in the outermost `fraction` of cells on each side.
    pub fn edge_masses(&self, fraction: f64) -> (f64, f64) {
        let k = ((self.grid.cells as f64 * fraction).ceil() as usize).max(1);
        let left = self.weights[..k].iter().sum();
        let right = self.weights[self.grid.cells - k..].iter().sum();
        (left, right)
    }
}

impl ToAtoms for GridMeasure {
    fn to_atoms(&self) -> AtomicMeasure {
        AtomicMeasure::new(self.nodes(), self.weights.clone()).expect("grid weights are valid")
    }
}

/// Rise of the effective potential demanded at a truncation point.
pub const TRUNCATION_RISE: f64 = 20.0;

/// Truncates an unbounded support where the effective potential
/// `κ·(−log w(x)) − κ²(θ + 1)·log(1 + |x|)` has risen `TRUNCATION_RISE` above
/// its minimum. Finite ends of the support are kept.
pub fn truncate_support(spec: &EnsembleSpec) -> Result<Interval> {
    let kappa = spec.kappa;
    let growth = kappa * kappa * (spec.theta as f64 + 1.0);
    truncate_by(spec.support, TRUNCATION_RISE, |x| {
        -kappa * spec.weight.log_weight(x) - growth * (1.0 + x.abs()).ln()
    })
}

/// Cuts each infinite end of `sigma` at the first point, outward from the
/// minimum, where `phi` exceeds its minimum by `rise`.
pub fn truncate_by(sigma: Interval, rise: f64, phi: impl Fn(f64) -> f64) -> Result<Interval> {
    if sigma.is_bounded() {
        return Ok(sigma);
    }
    let origin = if sigma.lower.is_finite() {
        sigma.lower
    } else if sigma.upper.is_finite() {
        sigma.upper
    } else {
        0.0
    };
    // Geometric offsets from the finite end (or the origin), out to 1e6.
    let offsets: Vec<f64> = (0..=4000).map(|k| 1e-4 * 10f64.powf(k as f64 / 400.0)).collect();
    let mut sides: Vec<(i8, Vec<(f64, f64)>)> = Vec::new();
    for dir in [1i8, -1] {
        let open = if dir > 0 {
            sigma.upper.is_infinite()
        } else {
            sigma.lower.is_infinite()
        };
        if !open {
            continue;
        }
        let samples = offsets
            .iter()
            .map(|&d| {
                let x = origin + dir as f64 * d;
                (x, phi(x))
            })
            .filter(|(_, v)| v.is_finite())
            .collect();
        sides.push((dir, samples));
    }
    let mut floor = sides
        .iter()
        .flat_map(|(_, s)| s.iter().map(|p| p.1))
        .fold(f64::INFINITY, f64::min);
    if sigma.contains(origin) && phi(origin).is_finite() {
        floor = floor.min(phi(origin));
    }
    let mut out = sigma;
    for (dir, samples) in sides {
        let argmin = samples
            .iter()
            .enumerate()
            .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .map(|(k, _)| k)
            .unwrap_or(0);
        let edge = samples
            .get(argmin..)
            .unwrap_or(&[])
            .iter()
            .find(|(_, v)| *v >= floor + rise)
            .map(|p| p.0)
            .ok_or_else(|| {
                Error::Config("the weight does not confine: cannot truncate the support".into())
            })?;
        if dir > 0 {
            out.upper = edge;
        } else {
            out.lower = edge;
        }
    }
    Ok(out)
}
