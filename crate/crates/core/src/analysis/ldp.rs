use log::info;
use serde::{Deserialize, Serialize};

use super::oracle::{quadrature_oracle_with, Event, OracleOptions};
use crate::ensemble::EnsembleSpec;
use crate::equilibrium::{assemble_kernel, constrained_minimize, minimize, truncate_support, Grid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LdpOptions {
    pub grid_cells: usize,
    pub tolerance: f64,
    /// Oracle resolution; per-`n` default when `None`.
    pub resolution: Option<usize>,
}

impl Default for LdpOptions {
    fn default() -> Self {
        LdpOptions {
            grid_cells: 400,
            tolerance: 1e-9,
            resolution: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdpRow {
    pub n: usize,
    pub probability: f64,
    pub probability_error: f64,
    /// `−(1/n²) log Q_n(A)`; `+∞` for an empty event.
    pub exponent: f64,
    /// `inf_A I / 2`, the finite-n bound line.
    pub bound_line: f64,
    /// `exponent < bound_line`; reported, never fatal.
    pub violates_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdpReport {
    pub event: Event,
    /// `inf_A I` from the grid solver; `+∞` when the event misses the grid.
    pub infimum_rate: f64,
    pub unconstrained_energy: f64,
    pub constrained_energy: Option<f64>,
    pub rows: Vec<LdpRow>,
    /// Distances `|exponent − inf_A I|` strictly decrease along `rows`.
    pub approaches_infimum: bool,
}

impl LdpReport {
    pub fn violations(&self) -> Vec<usize> {
        self.rows.iter().filter(|r| r.violates_bound).map(|r| r.n).collect()
    }
}

/// Compares oracle probabilities of `{∫g dL_n ≥ t}` at small `n` against the
/// solver's `inf_A I = E_A − E_*`.
pub fn ldp_probe(spec: &EnsembleSpec, event: Event, ns: &[usize], opts: &LdpOptions) -> Result<LdpReport> {
    if ns.is_empty() {
        return Err(Error::Config("ldp probe needs at least one n".into()));
    }
    let domain = truncate_support(spec)?;
    let grid = Grid::new(domain.lower, domain.upper, opts.grid_cells)?;
    let kernel = assemble_kernel(spec, &grid)?;
    let free = minimize(&kernel, spec.kappa, opts.tolerance)?;
    let g: Vec<f64> = grid.nodes().iter().map(|&x| event.statistic.eval(x)).collect();
    let constrained = match constrained_minimize(&kernel, spec.kappa, &g, event.threshold, opts.tolerance) {
        Ok(r) => Some(r.energy_value),
        Err(Error::Config(msg)) => {
            info!("event is empty on the grid: {msg}");
            None
        }
        Err(e) => return Err(e),
    };
    let infimum_rate = constrained.map_or(f64::INFINITY, |e| (e - free.energy_value).max(0.0));
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let r = quadrature_oracle_with(
            spec,
            n,
            &OracleOptions {
                resolution: opts.resolution,
                events: vec![event],
                ..Default::default()
            },
        )?;
        let ev = &r.events[0];
        let exponent = if ev.probability > 0.0 {
            -ev.probability.ln() / (n * n) as f64
        } else {
            f64::INFINITY
        };
        let bound_line = infimum_rate / 2.0;
        rows.push(LdpRow {
            n,
            probability: ev.probability,
            probability_error: ev.error,
            exponent,
            bound_line,
            violates_bound: exponent < bound_line,
        });
    }
    let approaches_infimum = infimum_rate.is_finite()
        && rows.windows(2).all(|w| {
            (w[1].exponent - infimum_rate).abs() < (w[0].exponent - infimum_rate).abs()
        });
    Ok(LdpReport {
        event,
        infimum_rate,
        unconstrained_energy: free.energy_value,
        constrained_energy: constrained,
        rows,
        approaches_infimum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::oracle::Statistic;
    use crate::ensemble::{Interval, WeightFamily, WeightScaling};

    fn gue() -> EnsembleSpec {
        EnsembleSpec::new(
            1,
            1.0,
            Interval::REAL_LINE,
            WeightFamily::GaussPower { alpha: 0.0, tau: 0.5 },
            WeightScaling::Varying,
        )
        .unwrap()
    }

    fn quick() -> LdpOptions {
        LdpOptions {
            grid_cells: 160,
            tolerance: 1e-9,
            resolution: Some(64),
        }
    }

    #[test]
    fn inactive_event_has_zero_rate() {
        let ev = Event {
            statistic: Statistic::Identity,
            threshold: -8.0,
        };
        let r = ldp_probe(&gue(), ev, &[1, 2], &quick()).unwrap();
        assert!(r.infimum_rate.abs() <= 1e-12);
        for row in &r.rows {
            assert!(row.probability > 1.0 - 1e-9);
            assert!(row.exponent.abs() <= 1e-9);
        }
    }

    #[test]
    fn empty_event_is_reported_consistently() {
        let ev = Event {
            statistic: Statistic::Identity,
            threshold: 50.0,
        };
        let r = ldp_probe(&gue(), ev, &[1, 2], &quick()).unwrap();
        assert!(r.infimum_rate.is_infinite());
        assert!(r.constrained_energy.is_none());
        assert!(r.rows.iter().all(|row| row.probability == 0.0 && row.exponent.is_infinite()));
    }
}
