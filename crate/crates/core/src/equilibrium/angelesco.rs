use std::ops::Range;

use log::debug;

use super::grid::{Grid, GridMeasure};
use super::kernel::{cell_log_average, rect_log_average};
use super::qp::{polish, simplex_gap, SimplexProblem};
use super::solver::{RateReport, SolverOptions};
use crate::ensemble::AngelescoSpec;
use crate::error::{Error, Result};

pub const MAX_CYCLES: usize = 500;

/// Discretized Angelesco functional: `r_j² wⱼᵀLⱼwⱼ` self terms,
/// `r_j r_k wⱼᵀC_{jk}w_k` cross terms and `r_j Vⱼᵀwⱼ` fields, where
/// `L` and `C` are cell averages of `−log|x − y|`.
#[derive(Debug, Clone)]
pub struct AngelescoKernel {
    pub grids: Vec<Grid>,
    pub ratios: Vec<f64>,
    self_terms: Vec<Vec<f64>>,
    /// `cross[j][k]` for `j < k`, row-major `m_j × m_k`.
    cross: Vec<Vec<Vec<f64>>>,
    fields: Vec<Vec<f64>>,
    excluded: Vec<Vec<bool>>,
}

impl AngelescoKernel {
    pub fn new(spec: &AngelescoSpec, grids: &[Grid]) -> Result<Self> {
        spec.validate()?;
        let p = spec.species();
        if grids.len() != p {
            return Err(Error::Config(format!("{} grids for {p} species", grids.len())));
        }
        for (j, g) in grids.iter().enumerate() {
            if !spec.intervals[j].contains_interval(&g.interval()) {
                return Err(Error::Config(format!("grid {j} leaves its interval")));
            }
            for (k, h) in grids.iter().enumerate().skip(j + 1) {
                if g.lower < h.upper && h.lower < g.upper {
                    return Err(Error::Config(format!("grids {j} and {k} overlap")));
                }
            }
        }
        let self_terms = grids
            .iter()
            .map(|g| {
                let m = g.cells;
                let h = g.width();
                let offsets: Vec<f64> = (0..m).map(|k| -cell_log_average(k, h)).collect();
                let mut l = vec![0.0; m * m];
                for a in 0..m {
                    for b in 0..m {
                        l[a * m + b] = offsets[a.abs_diff(b)];
                    }
                }
                l
            })
            .collect();
        let cross = (0..p)
            .map(|j| {
                (0..p)
                    .map(|k| {
                        if k <= j {
                            return Vec::new();
                        }
                        let (gj, gk) = (grids[j], grids[k]);
                        let mut c = vec![0.0; gj.cells * gk.cells];
                        for a in 0..gj.cells {
                            let (a1, b1) = gj.cell(a);
                            for b in 0..gk.cells {
                                let (a2, b2) = gk.cell(b);
                                c[a * gk.cells + b] = -rect_log_average(a1, b1, a2, b2);
                            }
                        }
                        c
                    })
                    .collect()
            })
            .collect();
        let mut fields = Vec::with_capacity(p);
        let mut excluded = Vec::with_capacity(p);
        for (j, g) in grids.iter().enumerate() {
            let v: Vec<f64> = g.nodes().iter().map(|&x| spec.potential(j, x)).collect();
            if v.iter().any(|x| x.is_nan() || *x == f64::NEG_INFINITY) {
                return Err(Error::Config(format!("potential {j} diverges to −∞ on its grid")));
            }
            let ex: Vec<bool> = v.iter().map(|&x| x == f64::INFINITY).collect();
            if ex.iter().all(|&e| e) {
                return Err(Error::Config(format!("weight {j} vanishes on its whole grid")));
            }
            fields.push(v);
            excluded.push(ex);
        }
        Ok(AngelescoKernel {
            grids: grids.to_vec(),
            ratios: spec.ratios.clone(),
            self_terms,
            cross,
            fields,
            excluded,
        })
    }

    pub fn species(&self) -> usize {
        self.grids.len()
    }

    /// `C_{jk}[a][b]` for any ordered pair `j ≠ k`.
    pub fn cross(&self, j: usize, k: usize, a: usize, b: usize) -> f64 {
        if j < k {
            self.cross[j][k][a * self.grids[k].cells + b]
        } else {
            self.cross[k][j][b * self.grids[j].cells + a]
        }
    }

    pub fn self_term(&self, j: usize, a: usize, b: usize) -> f64 {
        self.self_terms[j][a * self.grids[j].cells + b]
    }

    pub fn field(&self, j: usize) -> &[f64] {
        &self.fields[j]
    }

    /// `Σ_k r_k C_{jk} w_k` over `k ≠ j`, per node of species `j`.
    fn cross_field(&self, j: usize, weights: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.grids[j].cells];
        for k in 0..self.species() {
            if k == j {
                continue;
            }
            let rk = self.ratios[k];
            for (a, o) in out.iter_mut().enumerate() {
                let mut s = 0.0;
                for (b, &wb) in weights[k].iter().enumerate() {
                    if wb != 0.0 {
                        s += self.cross(j, k, a, b) * wb;
                    }
                }
                *o += rk * s;
            }
        }
        out
    }

    /// Total energy without the constant.
    pub fn energy(&self, weights: &[Vec<f64>]) -> f64 {
        let p = self.species();
        let mut total = 0.0;
        for j in 0..p {
            let rj = self.ratios[j];
            let m = self.grids[j].cells;
            let w = &weights[j];
            let mut quad = 0.0;
            let mut lin = 0.0;
            for a in 0..m {
                if w[a] == 0.0 {
                    continue;
                }
                let row = &self.self_terms[j][a * m..(a + 1) * m];
                quad += w[a] * row.iter().zip(w).map(|(x, y)| x * y).sum::<f64>();
                lin += w[a] * self.fields[j][a];
            }
            total += rj * rj * quad + rj * lin;
            for k in j + 1..p {
                let mk = self.grids[k].cells;
                let c = &self.cross[j][k];
                let mut s = 0.0;
                for a in 0..m {
                    if w[a] == 0.0 {
                        continue;
                    }
                    let row = &c[a * mk..(a + 1) * mk];
                    s += w[a] * row.iter().zip(&weights[k]).map(|(x, y)| x * y).sum::<f64>();
                }
                total += rj * self.ratios[k] * s;
            }
        }
        total
    }

    /// Gradient blocks of [`AngelescoKernel::energy`].
    pub fn gradient(&self, weights: &[Vec<f64>]) -> Vec<Vec<f64>> {
        (0..self.species())
            .map(|j| {
                let rj = self.ratios[j];
                let m = self.grids[j].cells;
                let cf = self.cross_field(j, weights);
                (0..m)
                    .map(|a| {
                        let row = &self.self_terms[j][a * m..(a + 1) * m];
                        let lw: f64 = row.iter().zip(&weights[j]).map(|(x, y)| x * y).sum();
                        if self.excluded[j][a] {
                            f64::INFINITY
                        } else {
                            2.0 * rj * rj * lw + rj * (self.fields[j][a] + cf[a])
                        }
                    })
                    .collect()
            })
            .collect()
    }

    pub fn duality_gap(&self, weights: &[Vec<f64>]) -> f64 {
        self.gradient(weights)
            .iter()
            .enumerate()
            .map(|(j, g)| simplex_gap(g, &weights[j], &self.excluded[j], 0..g.len()))
            .sum()
    }
}

/// Block-coordinate descent over the species, each block solved by the
/// single-species Frank–Wolfe, followed by a joint KKT polish.
pub fn minimize_angelesco(spec: &AngelescoSpec, grids: &[Grid], tolerance: f64) -> Result<RateReport> {
    let kernel = AngelescoKernel::new(spec, grids)?;
    minimize_angelesco_kernel(&kernel, &SolverOptions::with_tolerance(tolerance))
}

pub fn minimize_angelesco_kernel(kernel: &AngelescoKernel, opts: &SolverOptions) -> Result<RateReport> {
    if !(opts.tolerance > 0.0) {
        return Err(Error::Config("tolerance must be positive".into()));
    }
    let p = kernel.species();
    let mut weights: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            let ex = &kernel.excluded[j];
            let free = ex.iter().filter(|&&e| !e).count() as f64;
            ex.iter().map(|&e| if e { 0.0 } else { 1.0 / free }).collect()
        })
        .collect();
    let mut value = kernel.energy(&weights);
    let mut trace = vec![value];
    let mut iterations = 0;
    let mut cycles = 0;
    loop {
        let start = value;
        for j in 0..p {
            let rj = kernel.ratios[j];
            let m = kernel.grids[j].cells;
            let cf = kernel.cross_field(j, &weights);
            let linear: Vec<f64> = (0..m)
                .map(|a| {
                    if kernel.excluded[j][a] {
                        0.0
                    } else {
                        rj * (kernel.fields[j][a] + cf[a])
                    }
                })
                .collect();
            let problem = SimplexProblem {
                k: &kernel.self_terms[j],
                m,
                scale: 2.0 * rj * rj,
                linear,
                excluded: &kernel.excluded[j],
            };
            let cap = opts.max_iterations.unwrap_or(200 * m);
            let fw = problem.frank_wolfe(Some(&weights[j]), opts.tolerance, cap)?;
            iterations += fw.iterations;
            weights[j] = fw.w;
            let next = kernel.energy(&weights);
            if next > value + 1e-12 * (1.0 + value.abs()) {
                return Err(Error::numerical(format!(
                    "block update raised the energy from {value} to {next}"
                )));
            }
            value = next.min(value);
            trace.push(value);
        }
        cycles += 1;
        if start - value < opts.tolerance {
            break;
        }
        if cycles >= MAX_CYCLES {
            return Err(Error::Convergence {
                iterations: cycles,
                gap: start - value,
                tolerance: opts.tolerance,
            });
        }
    }
    debug!("angelesco: {cycles} cycles, {iterations} inner iterations");

    let mut gap = kernel.duality_gap(&weights);
    let mut polished = false;
    if opts.polish {
        let offsets: Vec<usize> = std::iter::once(0)
            .chain(kernel.grids.iter().scan(0, |acc, g| {
                *acc += g.cells;
                Some(*acc)
            }))
            .collect();
        let blocks: Vec<Range<usize>> = (0..p).map(|j| offsets[j]..offsets[j + 1]).collect();
        let locate = |i: usize| {
            let j = offsets.partition_point(|&o| o <= i) - 1;
            (j, i - offsets[j])
        };
        let q = |i: usize, l: usize| {
            let (j, a) = locate(i);
            let (k, b) = locate(l);
            if j == k {
                2.0 * kernel.ratios[j] * kernel.ratios[j] * kernel.self_term(j, a, b)
            } else {
                kernel.ratios[j] * kernel.ratios[k] * kernel.cross(j, k, a, b)
            }
        };
        let mut c = Vec::new();
        let mut excluded = Vec::new();
        let mut flat = Vec::new();
        for j in 0..p {
            for a in 0..kernel.grids[j].cells {
                let ex = kernel.excluded[j][a];
                c.push(if ex { 0.0 } else { kernel.ratios[j] * kernel.fields[j][a] });
                excluded.push(ex);
                flat.push(weights[j][a]);
            }
        }
        if let Some(w) = polish(&q, &c, &blocks, &excluded, &flat) {
            let candidate: Vec<Vec<f64>> = blocks.iter().map(|r| w[r.clone()].to_vec()).collect();
            let e = kernel.energy(&candidate);
            let g = kernel.duality_gap(&candidate);
            if g <= gap.max(opts.tolerance) && e <= value + 1e-12 * (1.0 + value.abs()) {
                weights = candidate;
                value = e.min(value);
                gap = g;
                trace.push(value);
                polished = true;
            }
        }
    }
    let minimizer = weights
        .into_iter()
        .zip(&kernel.grids)
        .map(|(w, g)| GridMeasure::new(*g, w))
        .collect::<Result<Vec<_>>>()?;
    let energy_value = kernel.energy(&minimizer.iter().map(|m| m.weights.clone()).collect::<Vec<_>>());
    Ok(RateReport {
        minimizer,
        energy_value,
        c_constant: -energy_value,
        iterations,
        final_duality_gap: gap,
        polished,
        edge_mass_warning: false,
        energy_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{EnsembleSpec, Interval, WeightFamily, WeightScaling};
    use crate::equilibrium::kernel::assemble_kernel;
    use crate::equilibrium::solver::minimize;
    use crate::measure::ToAtoms;

    fn table(points: &[(f64, f64)]) -> WeightFamily {
        WeightFamily::TablePotential {
            nodes: points.iter().map(|p| p.0).collect(),
            values: points.iter().map(|p| p.1).collect(),
        }
    }

    pub(crate) fn mirrored() -> (AngelescoSpec, Vec<Grid>) {
        let spec = AngelescoSpec::new(
            vec![Interval::new(-3.0, 0.0), Interval::new(0.0, 3.0)],
            vec![0.5, 0.5],
            vec![
                table(&[(-3.0, 1.5), (0.0, 0.0)]),
                table(&[(0.0, 0.0), (3.0, 1.5)]),
            ],
        )
        .unwrap();
        let grids = vec![Grid::new(-3.0, 0.0, 120).unwrap(), Grid::new(0.0, 3.0, 120).unwrap()];
        (spec, grids)
    }

    #[test]
    fn mirrored_species_are_mirror_images() {
        let (spec, grids) = mirrored();
        let r = minimize_angelesco(&spec, &grids, 1e-9).unwrap();
        assert!(r.polished);
        let (a, b) = (&r.minimizer[0].weights, &r.minimizer[1].weights);
        for i in 0..a.len() {
            assert!((a[i] - b[a.len() - 1 - i]).abs() <= 1e-8, "node {i}: {} vs {}", a[i], b[b.len() - 1 - i]);
        }
        assert!(r.energy_trace.windows(2).all(|t| t[1] <= t[0]));
    }

    #[test]
    fn energy_matches_double_loop() {
        let (spec, grids) = mirrored();
        let kernel = AngelescoKernel::new(&spec, &grids).unwrap();
        let r = minimize_angelesco_kernel(&kernel, &SolverOptions::with_tolerance(1e-9)).unwrap();
        let mut direct = 0.0;
        for j in 0..2 {
            let (gj, wj) = (grids[j], &r.minimizer[j].weights);
            let rj = spec.ratios[j];
            for a in 0..gj.cells {
                let (a1, b1) = gj.cell(a);
                direct += rj * spec.potential(j, gj.node(a)) * wj[a];
                for k in 0..2 {
                    let (gk, wk) = (grids[k], &r.minimizer[k].weights);
                    let coef = if j == k { rj * rj } else { 0.5 * rj * spec.ratios[k] };
                    for b in 0..gk.cells {
                        let (a2, b2) = gk.cell(b);
                        direct -= coef * rect_log_average(a1, b1, a2, b2) * wj[a] * wk[b];
                    }
                }
            }
        }
        assert!((r.energy_value - direct).abs() <= 1e-10 * direct.abs());
    }

    #[test]
    fn small_second_species_recovers_single_species() {
        let spec = AngelescoSpec::new(
            vec![Interval::new(-3.0, 0.0), Interval::new(0.0, 3.0)],
            vec![1.0 - 1e-3, 1e-3],
            vec![table(&[(-3.0, 1.5), (0.0, 0.0)]), table(&[(0.0, 0.0), (3.0, 1.5)])],
        )
        .unwrap();
        let grids = vec![Grid::new(-3.0, 0.0, 150).unwrap(), Grid::new(0.0, 3.0, 150).unwrap()];
        let r = minimize_angelesco(&spec, &grids, 1e-9).unwrap();

        // Same functional for one species: r₁²·2·(−log)/2 and field r₁V₁ is
        // the θ = 1, κ = r₁ problem with U = V₁.
        let single = EnsembleSpec::new(
            1,
            1.0,
            Interval::new(-3.0, 0.0),
            table(&[(-3.0, 1.5), (0.0, 0.0)]),
            WeightScaling::Fixed,
        )
        .unwrap();
        let k = assemble_kernel(&single, &grids[0]).unwrap();
        let s = minimize(&k, 1.0 - 1e-3, 1e-9).unwrap();
        let w1 = crate::analysis::metrics::wasserstein1(
            &r.minimizer[0].to_atoms(),
            &s.measure().to_atoms(),
        );
        assert!(w1 <= 1e-2, "W1 = {w1}");
    }

    #[test]
    fn overlapping_grids_are_rejected() {
        let (spec, _) = mirrored();
        let grids = vec![Grid::new(-3.0, 0.0, 10).unwrap(), Grid::new(-1.0, 3.0, 10).unwrap()];
        assert!(matches!(minimize_angelesco(&spec, &grids, 1e-8), Err(Error::Config(_))));
    }
}
