use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::grid::{Grid, GridMeasure};
use super::kernel::InteractionKernel;
use super::qp::{polish, SimplexProblem};
use crate::error::{Error, Result};

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
/// Outermost fraction of cells watched for truncation leakage.
pub const EDGE_FRACTION: f64 = 0.02;
pub const EDGE_MASS_LIMIT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Duality-gap target.
    pub tolerance: f64,
    /// Defaults to `200·m`.
    pub max_iterations: Option<usize>,
    /// Finish with an active-set KKT solve on the identified support.
    pub polish: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: None,
            polish: true,
        }
    }
}

impl SolverOptions {
    pub fn with_tolerance(tolerance: f64) -> Self {
        SolverOptions {
            tolerance,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) || !self.tolerance.is_finite() {
            return Err(Error::Config(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// One measure per species.
    pub minimizer: Vec<GridMeasure>,
    pub energy_value: f64,
    pub c_constant: f64,
    pub iterations: usize,
    pub final_duality_gap: f64,
    pub polished: bool,
    /// Minimizer puts visible mass next to a truncated end of the grid.
    pub edge_mass_warning: bool,
    /// Energy after every accepted step; nonincreasing.
    #[serde(skip)]
    pub energy_trace: Vec<f64>,
}

impl RateReport {
    pub fn measure(&self) -> &GridMeasure {
        &self.minimizer[0]
    }
}

/// `(κ²/2)·wᵀKw + κ·Uᵀw`, `+∞` if mass sits on an excluded node.
pub fn energy(kernel: &InteractionKernel, measure: &GridMeasure, kappa: f64) -> Result<f64> {
    let w = &measure.weights;
    if w.len() != kernel.size() {
        return Err(Error::Contract(format!(
            "measure has {} weights, kernel has {} nodes",
            w.len(),
            kernel.size()
        )));
    }
    Ok(energy_of(kernel, w, kappa))
}

pub(crate) fn energy_of(kernel: &InteractionKernel, w: &[f64], kappa: f64) -> f64 {
    let mut quad = 0.0;
    let mut lin = 0.0;
    for (i, &wi) in w.iter().enumerate() {
        if wi == 0.0 {
            continue;
        }
        let kw: f64 = kernel.row(i).iter().zip(w).map(|(a, b)| a * b).sum();
        quad += wi * kw;
        lin += wi * kernel.field()[i];
    }
    0.5 * kappa * kappa * quad + kappa * lin
}

fn linear_term(kernel: &InteractionKernel, kappa: f64, tilt: Option<(&[f64], f64)>) -> Vec<f64> {
    kernel
        .field()
        .iter()
        .zip(kernel.excluded())
        .enumerate()
        .map(|(i, (&u, &ex))| {
            if ex {
                0.0
            } else {
                kappa * u - tilt.map_or(0.0, |(g, mu)| kappa * mu * g[i])
            }
        })
        .collect()
}

pub(crate) fn edge_warning(kernel: &InteractionKernel, measure: &GridMeasure) -> bool {
    let (left, right) = measure.edge_masses(EDGE_FRACTION);
    let flagged =
        (kernel.truncated.0 && left > EDGE_MASS_LIMIT) || (kernel.truncated.1 && right > EDGE_MASS_LIMIT);
    if flagged {
        warn!(
            "minimizer leaves mass ({left:.2e}, {right:.2e}) in the outer {}% of a truncated grid",
            EDGE_FRACTION * 100.0
        );
    }
    flagged
}

struct Solved {
    w: Vec<f64>,
    gap: f64,
    iterations: usize,
    trace: Vec<f64>,
    polished: bool,
}

/// Minimizes `½κ²wᵀKw + linearᵀw` over the simplex.
fn solve_simplex(
    kernel: &InteractionKernel,
    kappa: f64,
    linear: Vec<f64>,
    init: Option<&[f64]>,
    opts: &SolverOptions,
) -> Result<Solved> {
    let m = kernel.size();
    let problem = SimplexProblem {
        k: kernel.matrix(),
        m,
        scale: kappa * kappa,
        linear,
        excluded: kernel.excluded(),
    };
    let cap = opts.max_iterations.unwrap_or(200 * m);
    let fw = problem.frank_wolfe(init, opts.tolerance, cap)?;
    debug!("frank-wolfe: {} iterations, gap {:.3e}", fw.iterations, fw.gap);
    let mut out = Solved {
        w: fw.w,
        gap: fw.gap,
        iterations: fw.iterations,
        trace: fw.trace,
        polished: false,
    };
    if opts.polish {
        let scale = kappa * kappa;
        let k = kernel.matrix();
        let q = |i: usize, j: usize| scale * k[i * m + j];
        if let Some(w) = polish(&q, &problem.linear, &[0..m], kernel.excluded(), &out.w) {
            let value = problem.value(&w);
            let gap = problem.gap(&w);
            let before = *out.trace.last().expect("trace is never empty");
            if gap <= out.gap.max(opts.tolerance) && value <= before + 1e-12 * (1.0 + before.abs()) {
                out.trace.push(value.min(before));
                out.w = w;
                out.gap = gap;
                out.polished = true;
            }
        }
    }
    Ok(out)
}

/// Equilibrium measure on the kernel's grid.
pub fn minimize(kernel: &InteractionKernel, kappa: f64, tolerance: f64) -> Result<RateReport> {
    minimize_with(kernel, kappa, &SolverOptions::with_tolerance(tolerance))
}

pub fn minimize_with(
    kernel: &InteractionKernel,
    kappa: f64,
    opts: &SolverOptions,
) -> Result<RateReport> {
    opts.validate()?;
    check_kappa(kappa)?;
    let solved = solve_simplex(kernel, kappa, linear_term(kernel, kappa, None), None, opts)?;
    report(kernel, kappa, solved)
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::Config(format!("κ must be positive, got {kappa}")));
    }
    Ok(())
}

fn report(kernel: &InteractionKernel, kappa: f64, solved: Solved) -> Result<RateReport> {
    let measure = GridMeasure::new(kernel.grid, solved.w)?;
    let energy_value = energy_of(kernel, &measure.weights, kappa);
    if !energy_value.is_finite() {
        return Err(Error::numerical("minimum energy is not finite"));
    }
    let edge_mass_warning = edge_warning(kernel, &measure);
    Ok(RateReport {
        minimizer: vec![measure],
        energy_value,
        c_constant: -energy_value,
        iterations: solved.iterations,
        final_duality_gap: solved.gap,
        polished: solved.polished,
        edge_mass_warning,
        energy_trace: solved.trace,
    })
}

/// Per-node first-order certificate: `∇E(w)_i − ∇E(w)ᵀw` for every admissible
/// node. All entries are `≥ −gap` at an approximate minimizer.
pub fn directional_derivatives(kernel: &InteractionKernel, measure: &GridMeasure, kappa: f64) -> Vec<f64> {
    let w = &measure.weights;
    let g: Vec<f64> = (0..kernel.size())
        .map(|i| {
            let kw: f64 = kernel.row(i).iter().zip(w).map(|(a, b)| a * b).sum();
            kappa * kappa * kw + kappa * kernel.field()[i]
        })
        .collect();
    let gtw: f64 = g.iter().zip(w).filter(|(_, &wi)| wi > 0.0).map(|(a, b)| a * b).sum();
    g.iter()
        .zip(kernel.excluded())
        .map(|(gi, &ex)| if ex { f64::INFINITY } else { gi - gtw })
        .collect()
}

/// Duality gap of `measure` for the unconstrained problem.
pub fn duality_gap(kernel: &InteractionKernel, measure: &GridMeasure, kappa: f64) -> f64 {
    let d = directional_derivatives(kernel, measure, kappa);
    let low = d.iter().cloned().fold(f64::INFINITY, f64::min);
    (-low).max(0.0)
}

/// Minimizes the energy subject to `Σ g_i w_i ≥ t`.
///
/// Solved through the Lagrangian dual: for a multiplier `μ ≥ 0` the tilted
/// problem with field `κ(U − μg)` is minimized over the simplex, and `μ` is
/// bisected until the constraint is tight. The returned minimizer is the
/// primal-feasible end of the final bracket.
pub fn constrained_minimize(
    kernel: &InteractionKernel,
    kappa: f64,
    g: &[f64],
    t: f64,
    tolerance: f64,
) -> Result<RateReport> {
    let opts = SolverOptions::with_tolerance(tolerance);
    opts.validate()?;
    check_kappa(kappa)?;
    let m = kernel.size();
    if g.len() != m {
        return Err(Error::Contract(format!("constraint has {} values for {m} nodes", g.len())));
    }
    if g.iter().any(|v| !v.is_finite()) || !t.is_finite() {
        return Err(Error::Config("constraint values must be finite".into()));
    }
    let admissible = |i: usize| !kernel.excluded()[i];
    let g_max = (0..m).filter(|&i| admissible(i)).map(|i| g[i]).fold(f64::NEG_INFINITY, f64::max);
    let slack = 1e-12 * (1.0 + g_max.abs());
    if t > g_max + slack {
        return Err(Error::Config(format!(
            "constraint ∫g ≥ {t} is infeasible on the grid (max g = {g_max})"
        )));
    }
    let dot = |w: &[f64]| -> f64 { w.iter().zip(g).map(|(a, b)| a * b).sum() };

    let free = solve_simplex(kernel, kappa, linear_term(kernel, kappa, None), None, &opts)?;
    if dot(&free.w) >= t {
        return report(kernel, kappa, free);
    }
    if t >= g_max - slack {
        // Only nodes attaining max g are feasible.
        let u: Vec<f64> = (0..m)
            .map(|i| {
                if admissible(i) && g[i] >= g_max - slack {
                    kernel.field()[i]
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        let restricted = InteractionKernel::from_parts(kernel.grid, kernel.matrix().to_vec(), u)?;
        let mut solved =
            solve_simplex(&restricted, kappa, linear_term(&restricted, kappa, None), None, &opts)?;
        solved.trace.clear();
        return report(kernel, kappa, solved);
    }

    let solve_at = |mu: f64, init: &[f64]| {
        solve_simplex(kernel, kappa, linear_term(kernel, kappa, Some((g, mu))), Some(init), &opts)
    };
    let mut lo = (0.0, free);
    let mut hi_mu = 1.0;
    let mut hi = solve_at(hi_mu, &lo.1.w)?;
    let mut doublings = 0;
    while dot(&hi.w) < t {
        lo = (hi_mu, hi);
        hi_mu *= 2.0;
        doublings += 1;
        if doublings > 80 {
            return Err(Error::Convergence {
                iterations: doublings,
                gap: t - dot(&lo.1.w),
                tolerance,
            });
        }
        hi = solve_at(hi_mu, &lo.1.w)?;
    }
    let mut iterations = lo.1.iterations + hi.iterations;
    for _ in 0..200 {
        if hi_mu - lo.0 <= 1e-13 * hi_mu || dot(&hi.w) - t <= 1e-11 * (1.0 + t.abs()) {
            break;
        }
        let mid = 0.5 * (lo.0 + hi_mu);
        let s = solve_at(mid, &hi.w)?;
        iterations += s.iterations;
        if dot(&s.w) >= t {
            hi_mu = mid;
            hi = s;
        } else {
            lo = (mid, s);
        }
    }
    // Lagrangian lower bound from the infeasible end.
    let dual = |mu: f64, w: &[f64]| energy_of(kernel, w, kappa) - kappa * mu * (dot(w) - t);
    let primal = energy_of(kernel, &hi.w, kappa);
    let bound = dual(lo.0, &lo.1.w).max(dual(hi_mu, &hi.w)) - lo.1.gap.max(hi.gap);
    let gap = (primal - bound).max(0.0);
    debug!("constrained solve: μ = {hi_mu:.6e}, primal {primal:.12}, gap {gap:.3e}");
    let mut out = report(
        kernel,
        kappa,
        Solved {
            w: hi.w,
            gap,
            iterations,
            trace: Vec::new(),
            polished: hi.polished,
        },
    )?;
    out.final_duality_gap = gap;
    Ok(out)
}

/// Point-mass energy `(κ²/2)K_ii + κU_i`.
pub fn point_mass_energy(kernel: &InteractionKernel, i: usize, kappa: f64) -> f64 {
    0.5 * kappa * kappa * kernel.k(i, i) + kappa * kernel.field()[i]
}

/// Weights of a reference density, by exact cell masses from its CDF.
pub fn discretize_cdf(grid: &Grid, cdf: impl Fn(f64) -> f64) -> Result<GridMeasure> {
    let mut w: Vec<f64> = (0..grid.cells)
        .map(|i| {
            let (a, b) = grid.cell(i);
            (cdf(b) - cdf(a)).max(0.0)
        })
        .collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Config("reference law puts no mass on the grid".into()));
    }
    w.iter_mut().for_each(|x| *x /= total);
    GridMeasure::new(*grid, w)
}
