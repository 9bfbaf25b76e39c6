//! Metropolis-within-Gibbs sampling of the joint eigenvalue densities.
//!
//! Each sweep visits every coordinate once and proposes a uniform move in a
//! window of half-width `step_size`. Moves leaving the support, landing on
//! another coordinate or on a zero of the weight have log-density `−∞` and
//! are rejected.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{pair_interaction, AngelescoSpec, Ensemble, EnsembleSpec, Interval};
use crate::error::{Error, Result};
use crate::measure::{AtomicMeasure, ToAtoms};

/// Sweeps per adaptation batch during burn-in.
pub const ADAPT_BATCH: usize = 50;
/// Acceptance band targeted by burn-in adaptation.
pub const TARGET_ACCEPTANCE: (f64, f64) = (0.3, 0.5);

fn default_thinning() -> usize {
    10
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    /// System size; the particle count is `p(n)` or `Σ n_j`.
    pub n: usize,
    pub sweeps: usize,
    /// Defaults to 20% of `sweeps`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    #[serde(default = "default_thinning")]
    pub thinning: usize,
    pub step_size: f64,
    #[serde(default = "default_true")]
    pub adapt: bool,
    #[serde(default)]
    pub seed: u64,
}

impl ChainConfig {
    pub fn new(n: usize, sweeps: usize, step_size: f64, seed: u64) -> Self {
        ChainConfig {
            n,
            sweeps,
            burn_in: None,
            thinning: default_thinning(),
            step_size,
            adapt: true,
            seed,
        }
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.sweeps / 5)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("chain size n must be positive".into()));
        }
        if self.burn_in() >= self.sweeps {
            return Err(Error::Config(format!(
                "burn_in ({}) must be smaller than sweeps ({})",
                self.burn_in(),
                self.sweeps
            )));
        }
        if self.thinning == 0 {
            return Err(Error::Config("thinning must be at least 1".into()));
        }
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::Config(format!(
                "step_size must be positive, got {}",
                self.step_size
            )));
        }
        Ok(())
    }
}

/// Kept configurations of one chain (or several pooled chains).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub ensemble_id: String,
    pub n: usize,
    /// Species block sizes; a single entry `p(n)` for one-species ensembles.
    pub blocks: Vec<usize>,
    pub configurations: Vec<Vec<f64>>,
    pub acceptance_rate: f64,
    pub log_density_trace: Vec<f64>,
    pub step_size: f64,
    pub seeds: Vec<u64>,
    pub streams: Vec<u64>,
}

impl SampleBatch {
    pub fn particle_count(&self) -> usize {
        self.blocks.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.configurations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configurations.is_empty()
    }

    /// Integrated autocorrelation time of the log-density trace, in kept
    /// samples.
    pub fn integrated_autocorrelation(&self) -> f64 {
        integrated_autocorrelation(&self.log_density_trace)
    }
}

/// Merges batches of the same ensemble and size into one.
pub fn pool(batches: &[SampleBatch]) -> Result<SampleBatch> {
    let first = batches
        .first()
        .ok_or_else(|| Error::Contract("nothing to pool".into()))?;
    if batches
        .iter()
        .any(|b| b.blocks != first.blocks || b.ensemble_id != first.ensemble_id)
    {
        return Err(Error::Contract("cannot pool batches of different ensembles".into()));
    }
    let total: usize = batches.iter().map(|b| b.len()).sum();
    let acceptance_rate = if total == 0 {
        0.0
    } else {
        batches
            .iter()
            .map(|b| b.acceptance_rate * b.len() as f64)
            .sum::<f64>()
            / total as f64
    };
    Ok(SampleBatch {
        ensemble_id: first.ensemble_id.clone(),
        n: first.n,
        blocks: first.blocks.clone(),
        configurations: batches.iter().flat_map(|b| b.configurations.clone()).collect(),
        acceptance_rate,
        log_density_trace: batches
            .iter()
            .flat_map(|b| b.log_density_trace.clone())
            .collect(),
        step_size: first.step_size,
        seeds: batches.iter().flat_map(|b| b.seeds.clone()).collect(),
        streams: batches.iter().flat_map(|b| b.streams.clone()).collect(),
    })
}

/// Empirical measure `L_n`: sorted atoms of equal mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub atoms: Vec<f64>,
    pub mass: f64,
}

impl EmpiricalMeasure {
    pub fn from_points(points: &[f64]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Contract("empirical measure of no points".into()));
        }
        let mut atoms = points.to_vec();
        atoms.sort_by(f64::total_cmp);
        Ok(EmpiricalMeasure {
            mass: 1.0 / atoms.len() as f64,
            atoms,
        })
    }

    pub fn total_mass(&self) -> f64 {
        self.mass * self.atoms.len() as f64
    }
}

impl ToAtoms for EmpiricalMeasure {
    fn to_atoms(&self) -> AtomicMeasure {
        AtomicMeasure::new(self.atoms.clone(), vec![self.mass; self.atoms.len()])
            .expect("empirical atoms are finite")
    }
}

/// Per-configuration measures, or a single pooled measure over all kept
/// configurations.
pub fn empirical_measure(batch: &SampleBatch, pooled: bool) -> Result<Vec<EmpiricalMeasure>> {
    if batch.is_empty() {
        return Err(Error::Contract("empty sample batch".into()));
    }
    if pooled {
        let all: Vec<f64> = batch.configurations.iter().flatten().copied().collect();
        Ok(vec![EmpiricalMeasure::from_points(&all)?])
    } else {
        batch
            .configurations
            .iter()
            .map(|c| EmpiricalMeasure::from_points(c))
            .collect()
    }
}

/// Pooled empirical measure of each species of an Angelesco batch.
pub fn species_measures(batch: &SampleBatch) -> Result<Vec<EmpiricalMeasure>> {
    if batch.is_empty() {
        return Err(Error::Contract("empty sample batch".into()));
    }
    let mut offset = 0;
    let mut out = Vec::with_capacity(batch.blocks.len());
    for &size in &batch.blocks {
        let pts: Vec<f64> = batch
            .configurations
            .iter()
            .flat_map(|c| c[offset..offset + size].iter().copied())
            .collect();
        out.push(EmpiricalMeasure::from_points(&pts)?);
        offset += size;
    }
    Ok(out)
}

/// Metropolis rule: accept when `ln u < Δ log-density`. `NaN` rejects.
#[inline]
pub fn metropolis_accept(delta: f64, u: f64) -> bool {
    u.ln() < delta
}

enum Interaction<'a> {
    Biorthogonal(&'a EnsembleSpec),
    Angelesco(&'a AngelescoSpec),
}

/// The density as seen by a single-coordinate update.
struct Target<'a> {
    interaction: Interaction<'a>,
    n: usize,
    species: Vec<usize>,
    supports: Vec<Interval>,
    blocks: Vec<usize>,
}

impl<'a> Target<'a> {
    fn new(ensemble: &'a Ensemble, n: usize) -> Result<Self> {
        ensemble.validate()?;
        match ensemble {
            Ensemble::Biorthogonal(spec) => {
                let p = spec.particle_count(n);
                Ok(Target {
                    interaction: Interaction::Biorthogonal(spec),
                    n,
                    species: vec![0; p],
                    supports: vec![spec.support],
                    blocks: vec![p],
                })
            }
            Ensemble::Angelesco(spec) => {
                let blocks = spec.block_sizes(n);
                let species = blocks
                    .iter()
                    .enumerate()
                    .flat_map(|(j, &s)| std::iter::repeat_n(j, s))
                    .collect();
                Ok(Target {
                    interaction: Interaction::Angelesco(spec),
                    n,
                    species,
                    supports: spec.intervals.clone(),
                    blocks,
                })
            }
        }
    }

    fn dim(&self) -> usize {
        self.species.len()
    }

    fn support(&self, i: usize) -> &Interval {
        &self.supports[self.species[i]]
    }

    #[inline]
    fn one_body(&self, i: usize, x: f64) -> f64 {
        match &self.interaction {
            Interaction::Biorthogonal(s) => s.one_body(x, self.n),
            Interaction::Angelesco(s) => -(self.n as f64) * s.potential(self.species[i], x),
        }
    }

    #[inline]
    fn pair(&self, i: usize, j: usize, x: f64, y: f64) -> f64 {
        match &self.interaction {
            Interaction::Biorthogonal(s) => pair_interaction(s.theta, x, y),
            Interaction::Angelesco(_) => {
                let d = (x - y).abs().ln();
                if self.species[i] == self.species[j] {
                    2.0 * d
                } else {
                    d
                }
            }
        }
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for i in 0..x.len() {
            if !self.support(i).contains(x[i]) {
                return f64::NEG_INFINITY;
            }
            total += self.one_body(i, x[i]);
            for j in (i + 1)..x.len() {
                total += self.pair(i, j, x[i], x[j]);
            }
        }
        if total.is_nan() {
            f64::NEG_INFINITY
        } else {
            total
        }
    }

    /// Change in log-density when coordinate `i` moves to `proposal`.
    fn delta(&self, x: &[f64], i: usize, proposal: f64) -> f64 {
        let old = x[i];
        let mut d = self.one_body(i, proposal) - self.one_body(i, old);
        for (j, &xj) in x.iter().enumerate() {
            if j != i {
                d += self.pair(i, j, proposal, xj) - self.pair(i, j, old, xj);
            }
        }
        d
    }

    fn initial_cores(&self) -> Result<Vec<Interval>> {
        let cores: Vec<Interval> = match &self.interaction {
            Interaction::Biorthogonal(s) => vec![s.initial_core(self.n)],
            Interaction::Angelesco(s) => s
                .intervals
                .iter()
                .zip(&s.potentials)
                .map(|(iv, v)| {
                    let (c, r) = v.scale_hint();
                    let r = if r.is_finite() { 4.0 * r } else { 1.0 };
                    let core = iv.intersect(&Interval::new(c - r, c + r));
                    if core.length() > 0.0 {
                        core
                    } else if iv.lower.is_finite() {
                        iv.intersect(&Interval::new(iv.lower, iv.lower + 1.0))
                    } else {
                        iv.intersect(&Interval::new(iv.upper - 1.0, iv.upper))
                    }
                })
                .collect(),
        };
        for core in &cores {
            if !(core.length() > 0.0) || !core.is_bounded() {
                return Err(Error::Config(format!(
                    "initialisation core [{}, {}] has zero or infinite measure",
                    core.lower, core.upper
                )));
            }
        }
        Ok(cores)
    }
}

/// Runs one chain on ChaCha stream 0 of `cfg.seed`.
pub fn run_chain(ensemble: &Ensemble, cfg: &ChainConfig) -> Result<SampleBatch> {
    run_chain_on_stream(ensemble, cfg, 0)
}

pub fn run_chain_on_stream(ensemble: &Ensemble, cfg: &ChainConfig, stream: u64) -> Result<SampleBatch> {
    cfg.validate()?;
    let target = Target::new(ensemble, cfg.n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);

    let cores = target.initial_cores()?;
    let dim = target.dim();
    let mut x = vec![0.0; dim];
    let mut current = f64::NEG_INFINITY;
    for _ in 0..100 {
        for (i, xi) in x.iter_mut().enumerate() {
            let core = &cores[target.species[i].min(cores.len() - 1)];
            *xi = rng.random_range(core.lower..core.upper);
        }
        current = target.log_density(&x);
        if current.is_finite() {
            break;
        }
    }
    if !current.is_finite() {
        return Err(Error::Config(
            "could not draw an initial state with finite density".into(),
        ));
    }

    let burn_in = cfg.burn_in();
    let mut step = cfg.step_size;
    let mut batch_accepted = 0usize;
    let mut burn_accepted = 0usize;
    let mut kept_accepted = 0usize;
    let mut configurations = Vec::new();
    let mut trace = Vec::new();

    for sweep in 0..cfg.sweeps {
        let mut accepted = 0usize;
        for i in 0..dim {
            let proposal = x[i] + step * (2.0 * rng.random::<f64>() - 1.0);
            let u: f64 = rng.random();
            if !target.support(i).contains(proposal) {
                continue;
            }
            let d = target.delta(&x, i, proposal);
            if metropolis_accept(d, u) {
                x[i] = proposal;
                accepted += 1;
            }
        }
        if sweep < burn_in {
            burn_accepted += accepted;
            batch_accepted += accepted;
            if cfg.adapt && (sweep + 1) % ADAPT_BATCH == 0 {
                let rate = batch_accepted as f64 / (ADAPT_BATCH * dim) as f64;
                if rate > TARGET_ACCEPTANCE.1 {
                    step *= 1.1;
                } else if rate < TARGET_ACCEPTANCE.0 {
                    step *= 0.9;
                }
                batch_accepted = 0;
            }
            if sweep + 1 == burn_in && burn_accepted == 0 {
                return Err(Error::Diagnostic(format!(
                    "no proposal accepted during {burn_in} burn-in sweeps; try a smaller step_size than {}",
                    cfg.step_size
                )));
            }
            continue;
        }
        kept_accepted += accepted;
        if (sweep - burn_in + 1) % cfg.thinning == 0 {
            // Refresh the running value to keep rounding drift out of the trace.
            current = target.log_density(&x);
            assert!(current.is_finite(), "stored configuration has zero density");
            for (i, &xi) in x.iter().enumerate() {
                assert!(target.support(i).contains(xi), "coordinate left its support");
            }
            configurations.push(x.clone());
            trace.push(current);
        }
    }
    let kept_sweeps = cfg.sweeps - burn_in;
    let acceptance_rate = kept_accepted as f64 / (kept_sweeps * dim) as f64;
    if burn_in == 0 && kept_accepted == 0 {
        return Err(Error::Diagnostic(format!(
            "no proposal accepted; try a smaller step_size than {}",
            cfg.step_size
        )));
    }
    Ok(SampleBatch {
        ensemble_id: ensemble.id(),
        n: cfg.n,
        blocks: target.blocks.clone(),
        configurations,
        acceptance_rate,
        log_density_trace: trace,
        step_size: step,
        seeds: vec![cfg.seed],
        streams: vec![stream],
    })
}

/// `chains` independent chains on streams `0..chains`, run in parallel.
pub fn run_chains(ensemble: &Ensemble, cfg: &ChainConfig, chains: usize) -> Result<Vec<SampleBatch>> {
    (0..chains as u64)
        .into_par_iter()
        .map(|s| run_chain_on_stream(ensemble, cfg, s))
        .collect()
}

/// Sokal's windowed estimate `τ = 1 + 2 Σ_{t ≤ M} ρ(t)` with the smallest
/// window `M ≥ 5τ`.
pub fn integrated_autocorrelation(trace: &[f64]) -> f64 {
    let n = trace.len();
    if n < 4 {
        return 1.0;
    }
    let mean = trace.iter().sum::<f64>() / n as f64;
    let var = trace.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if var == 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for lag in 1..n / 2 {
        let c = (0..n - lag)
            .map(|k| (trace[k] - mean) * (trace[k + lag] - mean))
            .sum::<f64>()
            / (n as f64 * var);
        tau += 2.0 * c;
        if lag as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{WeightFamily, WeightScaling};
    use approx::assert_abs_diff_eq;

    fn gauss_one() -> Ensemble {
        Ensemble::Biorthogonal(
            EnsembleSpec::new(
                1,
                1.0,
                Interval::REAL_LINE,
                WeightFamily::GaussPower { alpha: 0.0, tau: 1.0 },
                WeightScaling::Fixed,
            )
            .unwrap(),
        )
    }

    #[test]
    fn config_validation() {
        let mut c = ChainConfig::new(4, 100, 0.5, 1);
        assert_eq!(c.burn_in(), 20);
        c.burn_in = Some(100);
        assert!(c.validate().is_err());
        c.burn_in = None;
        c.thinning = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn single_particle_gaussian_marginal() {
        let mut cfg = ChainConfig::new(1, 110_000, 1.0, 5);
        cfg.burn_in = Some(10_000);
        cfg.thinning = 10;
        let b = run_chain(&gauss_one(), &cfg).unwrap();
        let xs: Vec<f64> = b.configurations.iter().map(|c| c[0]).collect();
        let n = xs.len() as f64;
        assert_eq!(xs.len(), 10_000);
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let tau = b.integrated_autocorrelation();
        assert!(mean.abs() <= 3.0 * (0.5f64 / n * tau).sqrt(), "mean {mean}");
        assert!((var - 0.5).abs() <= 0.05, "variance {var}");
    }

    #[test]
    fn reproducible_bit_for_bit() {
        let cfg = ChainConfig::new(3, 500, 0.5, 42);
        let a = run_chain(&gauss_one(), &ChainConfig { n: 1, ..cfg.clone() }).unwrap();
        let b = run_chain(&gauss_one(), &ChainConfig { n: 1, ..cfg }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn support_is_respected_with_large_steps() {
        let spec = EnsembleSpec::new(
            2,
            1.0,
            Interval::new(0.0, 1.0),
            WeightFamily::Constant,
            WeightScaling::Fixed,
        )
        .unwrap();
        let cfg = ChainConfig::new(5, 400, 3.0, 3);
        let b = run_chain(&Ensemble::Biorthogonal(spec), &cfg).unwrap();
        assert!(b
            .configurations
            .iter()
            .flatten()
            .all(|&x| (0.0..=1.0).contains(&x)));
        assert!(b.log_density_trace.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn angelesco_blocks_stay_in_their_intervals() {
        let spec = AngelescoSpec::new(
            vec![Interval::new(-2.0, -0.5), Interval::new(0.5, 2.0)],
            vec![0.5, 0.5],
            vec![
                WeightFamily::GaussPower { alpha: 0.0, tau: 1.0 },
                WeightFamily::GaussPower { alpha: 0.0, tau: 1.0 },
            ],
        )
        .unwrap();
        let cfg = ChainConfig::new(8, 400, 0.3, 9);
        let b = run_chain(&Ensemble::Angelesco(spec), &cfg).unwrap();
        assert_eq!(b.blocks, vec![4, 4]);
        for c in &b.configurations {
            assert!(c[..4].iter().all(|&x| (-2.0..=-0.5).contains(&x)));
            assert!(c[4..].iter().all(|&x| (0.5..=2.0).contains(&x)));
        }
        let m = species_measures(&b).unwrap();
        assert_eq!(m.len(), 2);
        assert_abs_diff_eq!(m[0].total_mass(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn hopeless_step_size_is_diagnosed() {
        let spec = EnsembleSpec::new(
            1,
            1.0,
            Interval::new(0.0, 1.0),
            WeightFamily::Constant,
            WeightScaling::Fixed,
        )
        .unwrap();
        let mut cfg = ChainConfig::new(3, 100, 1e6, 1);
        cfg.adapt = false;
        let r = run_chain(&Ensemble::Biorthogonal(spec), &cfg);
        assert!(matches!(r, Err(Error::Diagnostic(_))));
    }

    #[test]
    fn unbounded_flat_support_has_no_core() {
        let spec = EnsembleSpec::new(
            1,
            1.0,
            Interval::HALF_LINE,
            WeightFamily::Constant,
            WeightScaling::Fixed,
        )
        .unwrap();
        let r = run_chain(&Ensemble::Biorthogonal(spec), &ChainConfig::new(2, 100, 0.1, 1));
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn empirical_measures() {
        let m = EmpiricalMeasure::from_points(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(m.atoms, vec![1.0, 2.0, 3.0]);
        assert_abs_diff_eq!(m.mass, 1.0 / 3.0, epsilon = 1e-15);

        let batch = SampleBatch {
            ensemble_id: "toy".into(),
            n: 2,
            blocks: vec![2],
            configurations: vec![vec![0.5, 0.1], vec![0.3, 0.9]],
            acceptance_rate: 0.4,
            log_density_trace: vec![0.0, 0.0],
            step_size: 0.1,
            seeds: vec![0],
            streams: vec![0],
        };
        let pooled = empirical_measure(&batch, true).unwrap();
        assert_eq!(pooled.len(), 1);
        assert_eq!(pooled[0].atoms, vec![0.1, 0.3, 0.5, 0.9]);
        assert_abs_diff_eq!(pooled[0].mass, 0.25, epsilon = 1e-15);
        let each = empirical_measure(&batch, false).unwrap();
        assert_eq!(each.len(), 2);
        // Sorting is idempotent, so relabelled coordinates give the same measure.
        let again = EmpiricalMeasure::from_points(&pooled[0].atoms).unwrap();
        assert_eq!(again, pooled[0]);
    }

    #[test]
    fn two_state_detailed_balance() {
        // π = (0.2, 0.8); propose the other state, accept by the Metropolis rule.
        let pi = [0.2f64, 0.8];
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut state = 0usize;
        let mut flows = [[0u64; 2]; 2];
        let steps = 400_000;
        for _ in 0..steps {
            let other = 1 - state;
            let d = pi[other].ln() - pi[state].ln();
            let next = if metropolis_accept(d, rng.random()) { other } else { state };
            flows[state][next] += 1;
            state = next;
        }
        let ab = flows[0][1] as f64 / steps as f64;
        let ba = flows[1][0] as f64 / steps as f64;
        // Stationary flow π(a)P(a→b) = 0.2.
        assert!((ab - ba).abs() <= 2.0 / steps as f64);
        assert!((ab - 0.2).abs() < 0.005);
    }

    #[test]
    fn autocorrelation_of_iid_noise_is_near_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
        let tau = integrated_autocorrelation(&t);
        assert!((0.8..1.3).contains(&tau), "{tau}");
    }
}
