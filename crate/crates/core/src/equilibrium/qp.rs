//! Quadratic programs `½ wᵀQw + cᵀw` over a product of simplices.
//!
//! `frank_wolfe` handles one simplex with `Q = scale·K`; `polish` solves the
//! KKT system on a guessed support for any number of blocks and grows or
//! shrinks the support until first-order conditions hold.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub(crate) struct FwOutcome {
    pub w: Vec<f64>,
    pub gap: f64,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

/// One simplex over `m` coordinates, with excluded coordinates pinned at 0.
pub(crate) struct SimplexProblem<'a> {
    pub k: &'a [f64],
    pub m: usize,
    pub scale: f64,
    pub linear: Vec<f64>,
    pub excluded: &'a [bool],
}

impl SimplexProblem<'_> {
    fn row(&self, i: usize) -> &[f64] {
        &self.k[i * self.m..(i + 1) * self.m]
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        let mut quad = 0.0;
        let mut lin = 0.0;
        for (i, &wi) in w.iter().enumerate() {
            if wi == 0.0 {
                continue;
            }
            let kw: f64 = self.row(i).iter().zip(w).map(|(a, b)| a * b).sum();
            quad += wi * kw;
            lin += wi * self.linear[i];
        }
        0.5 * self.scale * quad + lin
    }

    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        (0..self.m)
            .map(|i| {
                let kw: f64 = self.row(i).iter().zip(w).map(|(a, b)| a * b).sum();
                self.scale * kw + self.linear[i]
            })
            .collect()
    }

    /// `gᵀw − min_i g_i` over admissible coordinates.
    pub fn gap(&self, w: &[f64]) -> f64 {
        let g = self.gradient(w);
        simplex_gap(&g, w, self.excluded, 0..self.m)
    }

    fn best_vertex(&self) -> usize {
        let mut best = usize::MAX;
        let mut val = f64::INFINITY;
        for i in 0..self.m {
            if self.excluded[i] {
                continue;
            }
            let v = 0.5 * self.scale * self.k[i * self.m + i] + self.linear[i];
            if v < val {
                val = v;
                best = i;
            }
        }
        best
    }

    /// Away-step Frank–Wolfe with exact line search.
    pub fn frank_wolfe(
        &self,
        init: Option<&[f64]>,
        tolerance: f64,
        max_iterations: usize,
    ) -> Result<FwOutcome> {
        let m = self.m;
        let mut w = vec![0.0; m];
        let warm = init.and_then(|w0| {
            let total: f64 = (0..m).filter(|&i| !self.excluded[i]).map(|i| w0[i].max(0.0)).sum();
            (total > 0.0).then_some((w0, total))
        });
        match warm {
            Some((w0, total)) => {
                for i in 0..m {
                    if !self.excluded[i] {
                        w[i] = w0[i].max(0.0) / total;
                    }
                }
            }
            None => w[self.best_vertex()] = 1.0,
        }
        let mut kw: Vec<f64> = (0..m)
            .map(|i| self.row(i).iter().zip(&w).map(|(a, b)| a * b).sum())
            .collect();
        let mut g = vec![0.0; m];
        let mut value = self.value(&w);
        let mut trace = vec![value];
        let mut iterations = 0;
        loop {
            for i in 0..m {
                g[i] = self.scale * kw[i] + self.linear[i];
            }
            let mut s = usize::MAX;
            let mut v = usize::MAX;
            let mut gtw = 0.0;
            for i in 0..m {
                if self.excluded[i] {
                    continue;
                }
                if s == usize::MAX || g[i] < g[s] {
                    s = i;
                }
                if w[i] > 0.0 {
                    gtw += g[i] * w[i];
                    if v == usize::MAX || g[i] > g[v] {
                        v = i;
                    }
                }
            }
            let gap = (gtw - g[s]).max(0.0);
            if gap <= tolerance {
                return Ok(FwOutcome {
                    w,
                    gap,
                    iterations,
                    trace,
                });
            }
            if iterations >= max_iterations {
                return Err(Error::Convergence {
                    iterations,
                    gap,
                    tolerance,
                });
            }
            iterations += 1;
            let wkw: f64 = w.iter().zip(&kw).map(|(a, b)| a * b).sum();
            let away_gain = g[v] - gtw;
            let (toward, slope, curvature, gamma_max) = if gap >= away_gain {
                let curv = self.scale * (self.k[s * m + s] - 2.0 * kw[s] + wkw);
                (true, -gap, curv, 1.0)
            } else {
                let curv = self.scale * (wkw - 2.0 * kw[v] + self.k[v * m + v]);
                let wv = w[v];
                let cap = if wv < 1.0 { wv / (1.0 - wv) } else { f64::INFINITY };
                (false, -away_gain, curv, cap)
            };
            let mut gamma = if curvature > 0.0 {
                (-slope / curvature).min(gamma_max)
            } else {
                gamma_max
            };
            if !gamma.is_finite() {
                return Err(Error::numerical("unbounded away step"));
            }
            let drop = !toward && gamma >= gamma_max;
            if drop {
                gamma = gamma_max;
            }
            if toward {
                let ks = self.row(s);
                for i in 0..m {
                    w[i] *= 1.0 - gamma;
                    kw[i] += gamma * (ks[i] - kw[i]);
                }
                w[s] += gamma;
            } else {
                let kv = self.row(v);
                for i in 0..m {
                    w[i] *= 1.0 + gamma;
                    kw[i] += gamma * (kw[i] - kv[i]);
                }
                w[v] -= gamma;
                if drop {
                    w[v] = 0.0;
                }
            }
            let total: f64 = w.iter().map(|x| x.max(0.0)).sum();
            for i in 0..m {
                if w[i] < 0.0 {
                    w[i] = 0.0;
                }
                w[i] /= total;
                kw[i] /= total;
            }
            let predicted = value + gamma * slope + 0.5 * gamma * gamma * curvature;
            let next = if iterations % 256 == 0 {
                // Rebuild the incremental state to stop drift.
                for i in 0..m {
                    kw[i] = self.row(i).iter().zip(&w).map(|(a, b)| a * b).sum();
                }
                self.value(&w)
            } else {
                predicted
            };
            if next > value + 1e-12 * (1.0 + value.abs()) {
                return Err(Error::numerical(format!(
                    "energy increased from {value} to {next} at iteration {iterations}"
                )));
            }
            value = next.min(value);
            trace.push(value);
        }
    }
}

pub(crate) fn simplex_gap(g: &[f64], w: &[f64], excluded: &[bool], range: Range<usize>) -> f64 {
    let mut gtw = 0.0;
    let mut low = f64::INFINITY;
    for i in range {
        if excluded[i] {
            continue;
        }
        gtw += g[i] * w[i];
        low = low.min(g[i]);
    }
    (gtw - low).max(0.0)
}

/// Active-set KKT solve for `½ wᵀQw + cᵀw` on a product of simplices, started
/// from the support of `w0`. Returns `None` if the active set does not settle.
pub(crate) fn polish(
    q: &dyn Fn(usize, usize) -> f64,
    c: &[f64],
    blocks: &[Range<usize>],
    excluded: &[bool],
    w0: &[f64],
) -> Option<Vec<f64>> {
    let n = c.len();
    let block_of: Vec<usize> = {
        let mut b = vec![0; n];
        for (k, r) in blocks.iter().enumerate() {
            for i in r.clone() {
                b[i] = k;
            }
        }
        b
    };
    let mut active: Vec<bool> = (0..n).map(|i| w0[i] > 0.0 && !excluded[i]).collect();
    for _round in 0..200 {
        let support: Vec<usize> = (0..n).filter(|&i| active[i]).collect();
        let s = support.len();
        let p = blocks.len();
        let mut a = DMatrix::<f64>::zeros(s + p, s + p);
        let mut rhs = DVector::<f64>::zeros(s + p);
        for (ra, &i) in support.iter().enumerate() {
            for (rb, &j) in support.iter().enumerate() {
                a[(ra, rb)] = q(i, j);
            }
            a[(ra, s + block_of[i])] = -1.0;
            a[(s + block_of[i], ra)] = 1.0;
            rhs[ra] = -c[i];
        }
        for k in 0..p {
            rhs[s + k] = 1.0;
        }
        let x = a.lu().solve(&rhs)?;
        if x.iter().any(|v| !v.is_finite()) {
            return None;
        }
        let negative: Vec<usize> = (0..s).filter(|&ra| x[ra] < 0.0).collect();
        if !negative.is_empty() {
            for ra in negative {
                active[support[ra]] = false;
            }
            for r in blocks {
                if !r.clone().any(|i| active[i]) {
                    return None;
                }
            }
            continue;
        }
        let mut w = vec![0.0; n];
        for (ra, &i) in support.iter().enumerate() {
            w[i] = x[ra];
        }
        let lambda: Vec<f64> = (0..p).map(|k| x[s + k]).collect();
        let mut added = false;
        for i in 0..n {
            if active[i] || excluded[i] {
                continue;
            }
            let gi: f64 = support.iter().map(|&j| q(i, j) * w[j]).sum::<f64>() + c[i];
            let lam = lambda[block_of[i]];
            if gi - lam < -1e-13 * (1.0 + lam.abs()) {
                active[i] = true;
                added = true;
            }
        }
        if !added {
            return Some(w);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_node_closed_form() {
        // ½·(2a² + 2b²) + a + 0·b on a + b = 1: optimum a = 1/4.
        let k = [2.0, 0.0, 0.0, 2.0];
        let ex = [false, false];
        let p = SimplexProblem {
            k: &k,
            m: 2,
            scale: 1.0,
            linear: vec![1.0, 0.0],
            excluded: &ex,
        };
        let out = p.frank_wolfe(None, 1e-14, 1000).unwrap();
        assert_abs_diff_eq!(out.w[0], 0.25, epsilon = 1e-12);
        assert!(out.trace.windows(2).all(|t| t[1] <= t[0]));
        let pol = polish(&|i, j| k[i * 2 + j], &[1.0, 0.0], &[0..2], &ex, &out.w).unwrap();
        assert_abs_diff_eq!(pol[0], 0.25, epsilon = 1e-15);
    }

    #[test]
    fn polish_drops_and_adds_coordinates() {
        // Optimum sits on a vertex; start from a full support.
        let k = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let c = [0.0, 5.0, 5.0];
        let ex = [false; 3];
        let pol = polish(&|i, j| k[i * 3 + j], &c, &[0..3], &ex, &[0.2, 0.4, 0.4]).unwrap();
        assert_eq!(pol, vec![1.0, 0.0, 0.0]);
        let pol = polish(&|i, j| k[i * 3 + j], &[0.0, 0.0, 5.0], &[0..3], &ex, &[0.0, 0.0, 1.0]);
        let pol = pol.unwrap();
        assert_abs_diff_eq!(pol[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(pol[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn excluded_coordinates_stay_empty() {
        let k = [1.0, 0.0, 0.0, 1.0];
        let ex = [true, false];
        let p = SimplexProblem {
            k: &k,
            m: 2,
            scale: 1.0,
            linear: vec![-100.0, 0.0],
            excluded: &ex,
        };
        let out = p.frank_wolfe(Some(&[0.5, 0.5]), 1e-12, 100).unwrap();
        assert_eq!(out.w, vec![0.0, 1.0]);
    }
}
