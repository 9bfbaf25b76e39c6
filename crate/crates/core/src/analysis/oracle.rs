//! Brute-force tensor-product quadrature of the joint density for up to
//! three particles.
//!
//! The integrand `∏ w_n ∏ (x_i − x_j)² |q(x_i, x_j)|` is smooth on the
//! truncated box, so Gauss–Legendre converges spectrally; comparing the
//! rule against its half-resolution companion gives the error estimate.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{EnsembleSpec, Interval};
use crate::equilibrium::grid::truncate_by;
use crate::error::{Error, Result};
use crate::quadrature::Rule;

pub const MAX_PARTICLES: usize = 3;
/// Log-density drop that defines the oracle's truncation box.
pub const ORACLE_RISE: f64 = 40.0;
/// Relative disagreement between the two resolutions that is tolerated.
pub const ACCURACY_LIMIT: f64 = 0.01;
pub const CDF_PANELS: usize = 64;
const PANEL_NODES: usize = 16;

pub fn default_resolution(particles: usize) -> usize {
    if particles >= 3 {
        128
    } else {
        256
    }
}

/// Statistic `g` in the half-space event `(1/N) Σ g(x_i) ≥ t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Statistic {
    #[serde(rename = "x")]
    Identity,
    #[serde(rename = "x2")]
    Square,
    #[serde(rename = "abs")]
    Abs,
}

impl Statistic {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Statistic::Identity => x,
            Statistic::Square => x * x,
            Statistic::Abs => x.abs(),
        }
    }

    /// `{x ∈ [a, b] : g(x) ≥ s}` as disjoint intervals.
    pub fn superlevel(self, s: f64, a: f64, b: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(2);
        let mut push = |lo: f64, hi: f64| {
            if lo < hi {
                out.push((lo, hi));
            }
        };
        match self {
            Statistic::Identity => push(a.max(s), b),
            Statistic::Square | Statistic::Abs => {
                let r = match self {
                    Statistic::Square if s > 0.0 => s.sqrt(),
                    Statistic::Abs if s > 0.0 => s,
                    _ => {
                        push(a, b);
                        return out;
                    }
                };
                push(a, b.min(-r));
                push(a.max(r), b);
            }
        }
        out
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Statistic::Identity => "x",
            Statistic::Square => "x2",
            Statistic::Abs => "abs",
        })
    }
}

impl FromStr for Statistic {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "x" => Ok(Statistic::Identity),
            "x2" | "x^2" => Ok(Statistic::Square),
            "abs" | "|x|" => Ok(Statistic::Abs),
            other => Err(Error::Config(format!("unknown statistic {other:?} (use x, x2 or abs)"))),
        }
    }
}

/// The event `∫g dL_N ≥ threshold` for the empirical measure `L_N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub statistic: Statistic,
    pub threshold: f64,
}

impl FromStr for Event {
    type Err = Error;
    /// `"g,t"`, e.g. `"x,1.0"`.
    fn from_str(s: &str) -> Result<Self> {
        let (g, t) = s
            .split_once(',')
            .ok_or_else(|| Error::Config(format!("event {s:?} must look like g,t")))?;
        let threshold = t
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad event threshold {t:?}")))?;
        Ok(Event {
            statistic: g.parse()?,
            threshold,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOptions {
    pub resolution: Option<usize>,
    /// Integration box; by default the support is cut where the one-particle
    /// factor has dropped by `ORACLE_RISE`.
    pub truncation: Option<Interval>,
    /// Nesting order of the coordinates, outermost first.
    pub axis_order: Option<Vec<usize>>,
    pub events: Vec<Event>,
    pub cdf_panels: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            resolution: None,
            truncation: None,
            axis_order: None,
            events: Vec::new(),
            cdf_panels: CDF_PANELS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventProbability {
    pub event: Event,
    pub probability: f64,
    /// `|Q_R − Q_{R/2}|`.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub n: usize,
    pub particles: usize,
    pub domain: Interval,
    pub resolution: usize,
    pub log_z: f64,
    /// `|Z_R − Z_{R/2}| / Z_R`.
    pub relative_error: f64,
    /// `(x, P(x_1 ≤ x))` at panel edges.
    pub marginal_cdf: Vec<(f64, f64)>,
    pub events: Vec<EventProbability>,
}

impl OracleResult {
    pub fn z(&self) -> f64 {
        self.log_z.exp()
    }

    /// Piecewise-linear interpolation of the marginal CDF table.
    pub fn cdf(&self, x: f64) -> f64 {
        let t = &self.marginal_cdf;
        if x <= t[0].0 {
            return 0.0;
        }
        if x >= t[t.len() - 1].0 {
            return 1.0;
        }
        let k = t.partition_point(|p| p.0 <= x);
        let (x0, f0) = t[k - 1];
        let (x1, f1) = t[k];
        f0 + (f1 - f0) * (x - x0) / (x1 - x0)
    }
}

/// Running `log Σ exp(v)`.
#[derive(Debug, Clone, Copy)]
struct LogSum {
    shift: f64,
    sum: f64,
}

impl LogSum {
    const ZERO: LogSum = LogSum {
        shift: f64::NEG_INFINITY,
        sum: 0.0,
    };

    fn add(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v > self.shift {
            self.sum = self.sum * (self.shift - v).exp() + 1.0;
            self.shift = v;
        } else {
            self.sum += (v - self.shift).exp();
        }
    }

    fn merge(self, other: LogSum) -> LogSum {
        if other.sum == 0.0 {
            return self;
        }
        if self.sum == 0.0 {
            return other;
        }
        let shift = self.shift.max(other.shift);
        LogSum {
            shift,
            sum: self.sum * (self.shift - shift).exp() + other.sum * (other.shift - shift).exp(),
        }
    }

    fn ln(self) -> f64 {
        if self.sum == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.shift + self.sum.ln()
        }
    }
}

type Nodes = Vec<(f64, f64)>;

fn rule_nodes(points: usize, a: f64, b: f64) -> Nodes {
    let r = Rule::new(points, a, b);
    r.nodes.into_iter().zip(r.weights).collect()
}

struct Integrand<'a> {
    spec: &'a EnsembleSpec,
    n: usize,
    order: &'a [usize],
}

impl Integrand<'_> {
    /// `log ∫` over a tensor grid: `outer` gives the nodes of every level but
    /// the innermost, whose nodes `inner` derives from the outer values.
    fn log_integral(&self, outer: &[Nodes], inner: &(dyn Fn(&[f64]) -> Nodes + Sync)) -> Result<f64> {
        let dim = self.order.len();
        debug_assert_eq!(outer.len() + 1, dim);
        let run = |prefix: &[(f64, f64)]| -> Result<LogSum> {
            let mut acc = LogSum::ZERO;
            let mut x = vec![0.0; dim];
            let mut values = Vec::with_capacity(dim);
            let mut logw = 0.0;
            for (level, &(v, w)) in prefix.iter().enumerate() {
                x[self.order[level]] = v;
                values.push(v);
                logw += w.ln();
            }
            self.accumulate(outer, inner, prefix.len(), &mut x, &mut values, logw, &mut acc)?;
            Ok(acc)
        };
        let total = if outer.is_empty() {
            run(&[])?
        } else {
            outer[0]
                .par_iter()
                .map(|&p| run(&[p]))
                .try_reduce(|| LogSum::ZERO, |a, b| Ok(a.merge(b)))?
        };
        Ok(total.ln())
    }

    #[allow(clippy::too_many_arguments)]
    fn accumulate(
        &self,
        outer: &[Nodes],
        inner: &(dyn Fn(&[f64]) -> Nodes + Sync),
        level: usize,
        x: &mut Vec<f64>,
        values: &mut Vec<f64>,
        logw: f64,
        acc: &mut LogSum,
    ) -> Result<()> {
        let coord = self.order[level];
        if level == outer.len() {
            for (v, w) in inner(values) {
                x[coord] = v;
                let ld = self.spec.log_joint_density_unnormalized(x, self.n)?;
                acc.add(ld + logw + w.ln());
            }
            return Ok(());
        }
        for &(v, w) in &outer[level] {
            x[coord] = v;
            values.push(v);
            self.accumulate(outer, inner, level + 1, x, values, logw + w.ln(), acc)?;
            values.pop();
        }
        Ok(())
    }
}

/// Box on which the oracle integrates: unbounded ends are cut where
/// `−n·log w_n(x) − (θ + 1)(N − 1)·log(1 + |x|)` has risen `ORACLE_RISE`.
pub fn oracle_truncation(spec: &EnsembleSpec, n: usize) -> Result<Interval> {
    let growth = (spec.theta as f64 + 1.0) * (spec.particle_count(n) as f64 - 1.0);
    truncate_by(spec.support, ORACLE_RISE, |x| {
        -spec.one_body(x, n) - growth * (1.0 + x.abs()).ln()
    })
}

pub fn quadrature_oracle(spec: &EnsembleSpec, n: usize, resolution: usize) -> Result<OracleResult> {
    quadrature_oracle_with(
        spec,
        n,
        &OracleOptions {
            resolution: Some(resolution),
            ..Default::default()
        },
    )
}

pub fn quadrature_oracle_with(spec: &EnsembleSpec, n: usize, opts: &OracleOptions) -> Result<OracleResult> {
    spec.validate()?;
    let particles = spec.particle_count(n);
    if n == 0 || particles > MAX_PARTICLES {
        return Err(Error::Contract(format!(
            "the quadrature oracle handles 1 to {MAX_PARTICLES} particles, got {particles}"
        )));
    }
    let resolution = opts.resolution.unwrap_or_else(|| default_resolution(particles));
    if resolution < 4 {
        return Err(Error::Config("oracle resolution must be at least 4".into()));
    }
    if opts.cdf_panels == 0 {
        return Err(Error::Config("need at least one CDF panel".into()));
    }
    let domain = match opts.truncation {
        Some(b) => {
            if !b.is_bounded() || !(b.lower < b.upper) || !spec.support.contains_interval(&b) {
                return Err(Error::Config("oracle truncation must be a bounded part of the support".into()));
            }
            b
        }
        None => oracle_truncation(spec, n)?,
    };
    let order: Vec<usize> = match &opts.axis_order {
        Some(o) => {
            let mut sorted = o.clone();
            sorted.sort_unstable();
            if sorted != (0..particles).collect::<Vec<_>>() {
                return Err(Error::Contract(format!("axis order {o:?} is not a permutation")));
            }
            o.clone()
        }
        None => (0..particles).collect(),
    };
    let (a, b) = (domain.lower, domain.upper);
    let integrand = Integrand {
        spec,
        n,
        order: &order,
    };
    let outer_for = |r: usize| vec![rule_nodes(r, a, b); particles - 1];

    let log_z_at = |r: usize| {
        let inner_nodes = rule_nodes(r, a, b);
        integrand.log_integral(&outer_for(r), &move |_: &[f64]| inner_nodes.clone())
    };
    let log_z = log_z_at(resolution)?;
    let log_z_half = log_z_at(resolution / 2)?;
    if !log_z.is_finite() {
        return Err(Error::numerical("partition function vanished or overflowed"));
    }
    let relative_error = (log_z_half - log_z).exp_m1().abs();
    if relative_error > ACCURACY_LIMIT {
        return Err(Error::Accuracy {
            estimate: relative_error * log_z.exp(),
            value: log_z.exp(),
        });
    }

    // Marginal of the outermost coordinate, panel by panel.
    let width = (b - a) / opts.cdf_panels as f64;
    let mut panel_logs = Vec::with_capacity(opts.cdf_panels);
    for p in 0..opts.cdf_panels {
        let (pa, pb) = (a + width * p as f64, a + width * (p + 1) as f64);
        let panel = rule_nodes(PANEL_NODES, pa, pb);
        let lz = if particles == 1 {
            integrand.log_integral(&[], &move |_: &[f64]| panel.clone())?
        } else {
            let mut outer = outer_for(resolution);
            outer[0] = panel;
            let inner_nodes = rule_nodes(resolution, a, b);
            integrand.log_integral(&outer, &move |_: &[f64]| inner_nodes.clone())?
        };
        panel_logs.push(lz);
    }
    let peak = panel_logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let masses: Vec<f64> = panel_logs.iter().map(|l| (l - peak).exp()).collect();
    let total: f64 = masses.iter().sum();
    let mut marginal_cdf = vec![(a, 0.0)];
    let mut run = 0.0;
    for (p, m) in masses.iter().enumerate() {
        run += m;
        let x = if p + 1 == opts.cdf_panels { b } else { a + width * (p + 1) as f64 };
        marginal_cdf.push((x, (run / total).min(1.0)));
    }

    let mut events = Vec::with_capacity(opts.events.len());
    for &event in &opts.events {
        let prob_at = |r: usize| -> Result<f64> {
            let g = event.statistic;
            let target = particles as f64 * event.threshold;
            let inner = move |values: &[f64]| -> Nodes {
                let s = target - values.iter().map(|&v| g.eval(v)).sum::<f64>();
                g.superlevel(s, a, b)
                    .into_iter()
                    .flat_map(|(lo, hi)| rule_nodes(r, lo, hi))
                    .collect()
            };
            let lz_event = integrand.log_integral(&outer_for(r), &inner)?;
            let lz_r = if r == resolution { log_z } else { log_z_half };
            Ok((lz_event - lz_r).exp().min(1.0))
        };
        let probability = prob_at(resolution)?;
        let half = prob_at(resolution / 2)?;
        let error = (probability - half).abs();
        if probability > 0.0 && probability <= error {
            return Err(Error::Precision {
                probability,
                floor: error,
            });
        }
        events.push(EventProbability {
            event,
            probability,
            error,
        });
    }

    Ok(OracleResult {
        n,
        particles,
        domain,
        resolution,
        log_z,
        relative_error,
        marginal_cdf,
        events,
    })
}

/// `(n, log Z_n / n²)` for each `n`; the sequence tends to the constant `c`.
pub fn partition_scaling(spec: &EnsembleSpec, ns: &[usize]) -> Result<Vec<(usize, f64)>> {
    ns.iter()
        .map(|&n| {
            let r = quadrature_oracle_with(spec, n, &OracleOptions::default())?;
            Ok((n, r.log_z / (n * n) as f64))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{WeightFamily, WeightScaling};
    use crate::quadrature::adaptive;
    use approx::assert_abs_diff_eq;

    fn flat(theta: u32) -> EnsembleSpec {
        EnsembleSpec::new(
            theta,
            1.0,
            Interval::new(0.0, 1.0),
            WeightFamily::Constant,
            WeightScaling::Fixed,
        )
        .unwrap()
    }

    fn gaussian() -> EnsembleSpec {
        EnsembleSpec::new(
            1,
            1.0,
            Interval::REAL_LINE,
            WeightFamily::GaussPower { alpha: 0.0, tau: 1.0 },
            WeightScaling::Fixed,
        )
        .unwrap()
    }

    #[test]
    fn gaussian_integral() {
        let opts = OracleOptions {
            resolution: Some(128),
            truncation: Some(Interval::new(-8.0, 8.0)),
            ..Default::default()
        };
        let r = quadrature_oracle_with(&gaussian(), 1, &opts).unwrap();
        assert_abs_diff_eq!(r.z(), std::f64::consts::PI.sqrt(), epsilon = 1e-6);
    }

    #[test]
    fn two_particle_flat_partition_functions() {
        for theta in [1, 2] {
            let r = quadrature_oracle(&flat(theta), 2, 256).unwrap();
            assert_abs_diff_eq!(r.z(), 1.0 / 6.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn one_particle_marginal_is_the_weight() {
        let spec = gaussian();
        let r = quadrature_oracle(&spec, 1, 256).unwrap();
        let (a, b) = (r.domain.lower, r.domain.upper);
        let f = |x: f64| (-x * x).exp();
        let (total, _) = adaptive(&f, a, b, 1e-14);
        for &(x, c) in &r.marginal_cdf {
            let (part, _) = adaptive(&f, a, x, 1e-14);
            assert_abs_diff_eq!(c, part / total, epsilon = 1e-8);
        }
    }

    #[test]
    fn axis_order_does_not_matter() {
        let spec = EnsembleSpec::new(
            2,
            1.0,
            Interval::HALF_LINE,
            WeightFamily::PowerExp { alpha: 0.5, tau: 1.0 },
            WeightScaling::Varying,
        )
        .unwrap();
        let event = Event {
            statistic: Statistic::Identity,
            threshold: 1.2,
        };
        let run = |order: Vec<usize>| {
            quadrature_oracle_with(
                &spec,
                3,
                &OracleOptions {
                    resolution: Some(48),
                    axis_order: Some(order),
                    events: vec![event],
                    ..Default::default()
                },
            )
            .unwrap()
        };
        let a = run(vec![0, 1, 2]);
        let b = run(vec![2, 0, 1]);
        assert!((a.log_z - b.log_z).abs() <= 1e-12);
        assert!((a.events[0].probability - b.events[0].probability).abs() <= 1e-12);
        assert!(a.marginal_cdf.windows(2).all(|w| w[1].1 >= w[0].1));
    }

    #[test]
    fn event_probabilities_are_consistent() {
        let spec = EnsembleSpec::new(
            1,
            1.0,
            Interval::REAL_LINE,
            WeightFamily::GaussPower { alpha: 0.0, tau: 0.5 },
            WeightScaling::Varying,
        )
        .unwrap();
        let ev = |g, t| Event {
            statistic: g,
            threshold: t,
        };
        let r = quadrature_oracle_with(
            &spec,
            2,
            &OracleOptions {
                events: vec![
                    ev(Statistic::Identity, 0.0),
                    ev(Statistic::Identity, -100.0),
                    ev(Statistic::Identity, 100.0),
                    ev(Statistic::Square, 0.0),
                    ev(Statistic::Abs, 0.5),
                ],
                ..Default::default()
            },
        )
        .unwrap();
        let p: Vec<f64> = r.events.iter().map(|e| e.probability).collect();
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(p[1], 1.0, epsilon = 1e-9);
        assert_eq!(p[2], 0.0);
        assert_abs_diff_eq!(p[3], 1.0, epsilon = 1e-9);
        assert!(p[4] > 0.0 && p[4] < 1.0);
    }

    #[test]
    fn too_many_particles_is_rejected() {
        assert!(matches!(quadrature_oracle(&flat(1), 4, 16), Err(Error::Contract(_))));
    }

    #[test]
    fn event_parsing() {
        let e: Event = "x,1.0".parse().unwrap();
        assert_eq!(e.statistic, Statistic::Identity);
        assert_eq!(e.threshold, 1.0);
        assert!("y,1".parse::<Event>().is_err());
        assert!("x".parse::<Event>().is_err());
    }
}
