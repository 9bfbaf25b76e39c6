//! One function per pipeline stage. Each stage writes its artifacts under a
//! subdirectory of the output directory and records headline numbers.

use std::collections::BTreeMap;

use log::warn;
use serde::Serialize;
use sha2::{Digest, Sha256};

use loggas::analysis::{
    bounded_lipschitz, ldp_probe, quadrature_oracle_with, sup_cdf_distance, BlEstimate, LdpOptions, MeasurePair,
    OracleOptions, OracleResult,
};
use loggas::config::{Against, ExperimentConfig, Metric, Source};
use loggas::ensemble::{Ensemble, Interval};
use loggas::equilibrium::{assemble_kernel, minimize, minimize_angelesco, truncate_support, Grid, RateReport};
use loggas::error::Error;
use loggas::matrix_model::draw_batch;
use loggas::measure::{AtomicMeasure, ToAtoms};
use loggas::reference::REFERENCE_CELLS;
use loggas::sampler::{empirical_measure, pool, run_chains, species_measures};

use crate::output::{OutputDir, Table};
use crate::CliError;

/// Points in each CDF plot.
const PLOT_POINTS: usize = 512;

pub struct Stage<'a> {
    pub cfg: &'a ExperimentConfig,
    pub out: &'a mut OutputDir,
    pub headline: BTreeMap<String, f64>,
    pub table: Table,
}

fn missing(section: &str) -> CliError {
    Error::Config(format!("missing [{section}] section")).into()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize)]
struct ChainSummary {
    stream: u64,
    kept: usize,
    acceptance_rate: f64,
    step_size: f64,
    integrated_autocorrelation: f64,
}

#[derive(Serialize)]
struct SampleReport {
    ensemble_id: String,
    spec_hash: String,
    n: usize,
    particles: usize,
    seed: u64,
    chains: Vec<ChainSummary>,
    pooled_kept: usize,
    mean_acceptance_rate: f64,
}

#[derive(Serialize)]
struct BosonMatrixReport {
    n: usize,
    alpha: usize,
    draws: usize,
    seed: u64,
    calibration: f64,
    mean_frequency: f64,
    max_frequency: f64,
}

#[derive(Serialize)]
struct VerifyReport {
    against: Against,
    metric: Metric,
    source: Source,
    wasserstein1: f64,
    ks_distance: f64,
    /// Against the oracle: sup distance to its continuous marginal CDF.
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_cdf_distance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bounded_lipschitz: Option<BlEstimate>,
    value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pass: Option<bool>,
}

fn cdf_plot(measure: &AtomicMeasure) -> Vec<Vec<f64>> {
    let mut rows = Vec::with_capacity(measure.len());
    let mut total = 0.0;
    for (&x, &m) in measure.atoms().iter().zip(measure.masses()) {
        total += m;
        rows.push(vec![x, total]);
    }
    rows
}

impl Stage<'_> {
    fn put(&mut self, key: &str, value: f64) {
        self.headline.insert(key.to_string(), value);
        self.table.num(key, value);
    }

    pub fn sample(&mut self) -> Result<AtomicMeasure, CliError> {
        let s = self.cfg.sampler.as_ref().ok_or_else(|| missing("sampler"))?;
        let chain = s.chain_config(self.cfg.seed);
        let batches = run_chains(&self.cfg.ensemble, &chain, s.chains)?;
        let mut summaries = Vec::with_capacity(batches.len());
        for (k, b) in batches.iter().enumerate() {
            let dim = b.particle_count();
            let mut header = vec!["sample".to_string()];
            header.extend((1..=dim).map(|i| format!("x{i}")));
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            let rows: Vec<Vec<f64>> = b
                .configurations
                .iter()
                .enumerate()
                .map(|(t, c)| std::iter::once(t as f64).chain(c.iter().copied()).collect())
                .collect();
            self.out.write_csv(&format!("sample/chain_{k}.csv"), &header, &rows)?;
            summaries.push(ChainSummary {
                stream: b.streams.first().copied().unwrap_or(k as u64),
                kept: b.len(),
                acceptance_rate: b.acceptance_rate,
                step_size: b.step_size,
                integrated_autocorrelation: b.integrated_autocorrelation(),
            });
        }
        let pooled = pool(&batches)?;
        let measure = empirical_measure(&pooled, true)?[0].to_atoms();
        let rows: Vec<Vec<f64>> = measure
            .atoms()
            .iter()
            .zip(measure.masses())
            .map(|(&x, &m)| vec![x, m])
            .collect();
        self.out.write_csv("sample/empirical.csv", &["atom", "mass"], &rows)?;
        self.out
            .write_plot("sample/empirical_cdf.dat", &["x", "cdf"], &cdf_plot(&measure))?;
        if let Ensemble::Angelesco(_) = &self.cfg.ensemble {
            for (j, m) in species_measures(&pooled)?.iter().enumerate() {
                let m = m.to_atoms();
                let rows: Vec<Vec<f64>> = m.atoms().iter().zip(m.masses()).map(|(&x, &w)| vec![x, w]).collect();
                self.out
                    .write_csv(&format!("sample/species_{j}.csv"), &["atom", "mass"], &rows)?;
            }
        }
        let mean_acceptance =
            summaries.iter().map(|c| c.acceptance_rate).sum::<f64>() / summaries.len() as f64;
        let report = SampleReport {
            ensemble_id: pooled.ensemble_id.clone(),
            spec_hash: sha256_hex(
                serde_json::to_string(&self.cfg.ensemble)
                    .expect("ensemble serializes")
                    .as_bytes(),
            ),
            n: pooled.n,
            particles: pooled.particle_count(),
            seed: self.cfg.seed,
            chains: summaries,
            pooled_kept: pooled.len(),
            mean_acceptance_rate: mean_acceptance,
        };
        self.out.write_json("sample/report.json", &report)?;
        self.put("sample.acceptance_rate", mean_acceptance);
        self.put("sample.kept", pooled.len() as f64);
        Ok(measure)
    }

    pub fn equilibrium(&mut self) -> Result<RateReport, CliError> {
        let e = self.cfg.equilibrium.clone().unwrap_or_default();
        let report = match &self.cfg.ensemble {
            Ensemble::Biorthogonal(spec) => {
                let domain = match e.truncate {
                    Some([a, b]) => Interval::new(a, b),
                    None => truncate_support(spec)?,
                };
                let grid = Grid::new(domain.lower, domain.upper, e.grid)?;
                let kernel = assemble_kernel(spec, &grid)?;
                let report = minimize(&kernel, spec.kappa, e.tolerance)?;
                let mu = report.measure();
                let nodes = mu.nodes();
                let dens = mu.densities();
                let rows: Vec<Vec<f64>> = (0..nodes.len())
                    .map(|i| vec![nodes[i], mu.weights[i], dens[i]])
                    .collect();
                self.out
                    .write_csv("equilibrium/minimizer.csv", &["node", "weight", "density"], &rows)?;
                let law = self.cfg.closed_form();
                let plot: Vec<Vec<f64>> = (0..nodes.len())
                    .map(|i| {
                        let mut r = vec![nodes[i], dens[i]];
                        if let Some(l) = &law {
                            r.push(l.density(nodes[i]));
                        }
                        r
                    })
                    .collect();
                let header: &[&str] = if law.is_some() {
                    &["node", "density", "reference"]
                } else {
                    &["node", "density"]
                };
                self.out.write_plot("equilibrium/density.dat", header, &plot)?;
                report
            }
            Ensemble::Angelesco(spec) => {
                let grids = (0..spec.species())
                    .map(|j| {
                        let iv = match e.truncations.as_ref().and_then(|t| t.get(j)) {
                            Some(&[a, b]) => Interval::new(a, b),
                            None if spec.intervals[j].is_bounded() => spec.intervals[j],
                            None => {
                                return Err(Error::Config(format!(
                                    "species {j} has an unbounded interval; set equilibrium.truncations"
                                )))
                            }
                        };
                        Grid::new(iv.lower, iv.upper, e.grid)
                    })
                    .collect::<Result<Vec<_>, Error>>()?;
                let report = minimize_angelesco(spec, &grids, e.tolerance)?;
                let mut rows = Vec::new();
                for (j, mu) in report.minimizer.iter().enumerate() {
                    let nodes = mu.nodes();
                    let dens = mu.densities();
                    for i in 0..nodes.len() {
                        rows.push(vec![j as f64, nodes[i], mu.weights[i], dens[i]]);
                    }
                }
                self.out.write_csv(
                    "equilibrium/minimizer.csv",
                    &["species", "node", "weight", "density"],
                    &rows,
                )?;
                let plot: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0], r[1], r[3]]).collect();
                self.out
                    .write_plot("equilibrium/density.dat", &["species", "node", "density"], &plot)?;
                report
            }
        };
        if report.edge_mass_warning {
            warn!("more than 1e-6 mass sits in the outer cells of a truncated side; widen the truncation");
        }
        self.out.write_json("equilibrium/rate_report.json", &report)?;
        self.put("equilibrium.energy", report.energy_value);
        self.put("equilibrium.c_constant", report.c_constant);
        self.put("equilibrium.duality_gap", report.final_duality_gap);
        self.put("equilibrium.iterations", report.iterations as f64);
        Ok(report)
    }

    pub fn boson_matrix(&mut self) -> Result<AtomicMeasure, CliError> {
        let m = self.cfg.matrix_model.as_ref().ok_or_else(|| missing("matrix_model"))?;
        let draws = draw_batch(m.n, m.alpha, m.calibration, self.cfg.seed, m.draws)?;
        let mut text = String::from("seed,n,alpha");
        for k in 1..=m.n {
            text.push_str(&format!(",f{k}"));
        }
        text.push('\n');
        let mut all = Vec::with_capacity(m.n * m.draws);
        for d in &draws {
            text.push_str(&format!("{},{},{}", d.seed, d.n, d.alpha));
            for f in &d.frequencies {
                text.push_str(&format!(",{f}"));
            }
            text.push('\n');
            all.extend_from_slice(&d.frequencies);
        }
        self.out.write("boson_matrix/draws.csv", &text)?;
        let measure = AtomicMeasure::uniform(&all)?;
        let rows: Vec<Vec<f64>> = measure
            .atoms()
            .iter()
            .zip(measure.masses())
            .map(|(&x, &w)| vec![x, w])
            .collect();
        self.out.write_csv("boson_matrix/empirical.csv", &["atom", "mass"], &rows)?;
        let report = BosonMatrixReport {
            n: m.n,
            alpha: m.alpha,
            draws: m.draws,
            seed: self.cfg.seed,
            calibration: m.calibration,
            mean_frequency: measure.mean(),
            max_frequency: all.iter().copied().fold(0.0, f64::max),
        };
        self.out.write_json("boson_matrix/report.json", &report)?;
        self.put("boson_matrix.calibration", m.calibration);
        self.put("boson_matrix.mean_frequency", report.mean_frequency);
        Ok(measure)
    }

    /// Runs the oracle at `n`, or at `oracle.n` when `None`.
    pub fn oracle(&mut self, n: Option<usize>) -> Result<OracleResult, CliError> {
        let spec = self.cfg.biorthogonal()?;
        let section = self.cfg.oracle.as_ref();
        let n = n
            .or(section.map(|o| o.n))
            .ok_or_else(|| missing("oracle"))?;
        let opts = OracleOptions {
            resolution: section.and_then(|o| o.resolution),
            truncation: section.and_then(|o| o.truncate).map(|[a, b]| Interval::new(a, b)),
            events: section.map(|o| o.parsed_events()).transpose()?.unwrap_or_default(),
            ..Default::default()
        };
        let result = quadrature_oracle_with(spec, n, &opts)?;
        self.out.write_json("oracle/report.json", &result)?;
        let rows: Vec<Vec<f64>> = result.marginal_cdf.iter().map(|&(x, f)| vec![x, f]).collect();
        self.out.write_plot("oracle/marginal_cdf.dat", &["x", "cdf"], &rows)?;
        self.put("oracle.log_z", result.log_z);
        self.put("oracle.relative_error", result.relative_error);
        for ev in &result.events {
            let key = format!("oracle.P[{},{}]", ev.event.statistic, ev.event.threshold);
            self.put(&key, ev.probability);
        }
        Ok(result)
    }

    pub fn ldp_probe(&mut self) -> Result<(), CliError> {
        let spec = self.cfg.biorthogonal()?;
        let l = self.cfg.ldp.as_ref().ok_or_else(|| missing("ldp"))?;
        let event = l.parsed_event()?;
        let opts = LdpOptions {
            grid_cells: l.grid,
            tolerance: l.tolerance,
            resolution: l.resolution,
        };
        let report = ldp_probe(spec, event, &l.ns, &opts)?;
        self.out.write_json("ldp/report.json", &report)?;
        let rows: Vec<Vec<f64>> = report
            .rows
            .iter()
            .map(|r| vec![r.n as f64, r.exponent, r.bound_line, report.infimum_rate])
            .collect();
        self.out
            .write_plot("ldp/exponents.dat", &["n", "exponent", "bound_line", "infimum"], &rows)?;
        for r in &report.rows {
            self.table.row(
                format!("n = {}", r.n),
                format!(
                    "P = {:e} (± {:e}), exponent {}, bound line {}{}",
                    r.probability,
                    r.probability_error,
                    r.exponent,
                    r.bound_line,
                    if r.violates_bound { "  [below bound]" } else { "" }
                ),
            );
        }
        let violations = report.violations();
        if !violations.is_empty() {
            warn!("finite-n bound violated at n = {violations:?}; reported, not fatal");
        }
        self.put("ldp.infimum_rate", report.infimum_rate);
        self.put("ldp.approaches_infimum", f64::from(u8::from(report.approaches_infimum)));
        Ok(())
    }

    pub fn verify(&mut self) -> Result<(), CliError> {
        let v = self.cfg.verify.clone().ok_or_else(|| missing("verify"))?;
        let (reference, oracle) = match v.against {
            Against::Oracle => {
                let n = match v.source {
                    Source::Sample => self.cfg.sampler.as_ref().map(|s| s.n),
                    _ => None,
                };
                let r = self.oracle(n)?;
                (cdf_table_measure(&r.marginal_cdf)?, Some(r))
            }
            _ => (self.cfg.reference_law()?.discretize(REFERENCE_CELLS), None),
        };
        let source = match v.source {
            Source::Sample => self.sample()?,
            Source::Equilibrium => self.equilibrium()?.measure().to_atoms(),
            Source::MatrixModel => self.boson_matrix()?,
            Source::Reference => reference.clone(),
        };
        let pair = MeasurePair::new(&source, &reference)?;
        let w1 = pair.wasserstein1();
        let ks = pair.ks_distance();
        let bl = match v.metric {
            Metric::Bl => Some(bounded_lipschitz(&pair, v.family_size)?),
            Metric::W1 => None,
        };
        let oracle_cdf_distance = oracle.as_ref().map(|r| sup_cdf_distance(&source, |x| r.cdf(x)));
        let value = match (&bl, v.metric) {
            (Some(b), _) => b.lower,
            _ => w1,
        };
        let pass = v.threshold.map(|t| value <= t);
        let report = VerifyReport {
            against: v.against,
            metric: v.metric,
            source: v.source,
            wasserstein1: w1,
            ks_distance: ks,
            oracle_cdf_distance,
            bounded_lipschitz: bl,
            value,
            threshold: v.threshold,
            pass,
        };
        self.out.write_json("verify/report.json", &report)?;
        let (lo, hi) = span(&source, &reference);
        let rows: Vec<Vec<f64>> = (0..=PLOT_POINTS)
            .map(|k| {
                let x = lo + (hi - lo) * k as f64 / PLOT_POINTS as f64;
                vec![x, source.cdf(x), reference.cdf(x)]
            })
            .collect();
        self.out
            .write_plot("verify/cdf.dat", &["x", "source_cdf", "reference_cdf"], &rows)?;
        self.put("verify.w1", w1);
        self.put("verify.ks", ks);
        if let Some(b) = bl {
            self.put("verify.bl_lower", b.lower);
            self.put("verify.bl_upper", b.upper);
        }
        if let Some(d) = oracle_cdf_distance {
            self.put("verify.oracle_cdf_distance", d);
        }
        if let Some(p) = pass {
            self.table.row("verify.pass", p);
        }
        Ok(())
    }
}

fn span(a: &AtomicMeasure, b: &AtomicMeasure) -> (f64, f64) {
    let (a0, a1) = a.support_bounds().unwrap_or((0.0, 1.0));
    let (b0, b1) = b.support_bounds().unwrap_or((a0, a1));
    let (lo, hi) = (a0.min(b0), a1.max(b1));
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// Atoms at panel midpoints carrying the CDF increments.
fn cdf_table_measure(table: &[(f64, f64)]) -> Result<AtomicMeasure, Error> {
    let mut atoms = Vec::with_capacity(table.len());
    let mut masses = Vec::with_capacity(table.len());
    for w in table.windows(2) {
        atoms.push(0.5 * (w[0].0 + w[1].0));
        masses.push((w[1].1 - w[0].1).max(0.0));
    }
    let total: f64 = masses.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Numerical {
            message: "oracle marginal CDF carries no mass".into(),
            off_norm: f64::NAN,
        });
    }
    masses.iter_mut().for_each(|m| *m /= total);
    AtomicMeasure::new(atoms, masses)
}
