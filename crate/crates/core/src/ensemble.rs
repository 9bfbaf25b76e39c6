//! Ensemble definitions: weight families, one-species biorthogonal ensembles
//! and multi-species Angelesco ensembles, with their unnormalized joint
//! log-densities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Closed interval `[lower, upper]`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    #[serde(default = "neg_inf", skip_serializing_if = "is_neg_inf")]
    pub lower: f64,
    #[serde(default = "pos_inf", skip_serializing_if = "is_pos_inf")]
    pub upper: f64,
}

fn neg_inf() -> f64 {
    f64::NEG_INFINITY
}
fn pos_inf() -> f64 {
    f64::INFINITY
}
fn is_neg_inf(x: &f64) -> bool {
    *x == f64::NEG_INFINITY
}
fn is_pos_inf(x: &f64) -> bool {
    *x == f64::INFINITY
}

impl Interval {
    pub const REAL_LINE: Interval = Interval {
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
    };
    pub const HALF_LINE: Interval = Interval {
        lower: 0.0,
        upper: f64::INFINITY,
    };

    pub fn new(lower: f64, upper: f64) -> Self {
        Interval { lower, upper }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        other.lower >= self.lower && other.upper <= self.upper
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite()
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        Interval::new(self.lower.max(other.lower), self.upper.min(other.upper))
    }

    fn validate(&self, what: &str) -> Result<()> {
        if self.lower.is_nan() || self.upper.is_nan() || self.lower >= self.upper {
            return Err(Error::Config(format!(
                "{what}: interval [{}, {}] is empty or malformed",
                self.lower, self.upper
            )));
        }
        Ok(())
    }
}

/// How the finite-n weight enters the density `prod w_n(x_i)^n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScaling {
    /// Parameters scaled as `w_n = x^{α/n} e^{-τx/n}`: `n·log w_n = log w`
    /// does not depend on n.
    #[default]
    Fixed,
    /// Varying weight `w_n^n = e^{n log w}`: the external field grows with n
    /// and the eigenvalues stay on an O(1) scale.
    Varying,
}

/// Limiting weight `w` of an ensemble, given by its logarithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum WeightFamily {
    /// `log w ≡ 0`.
    Constant,
    /// `log w = α log x − τ x` on `(0, ∞)`.
    PowerExp { alpha: f64, tau: f64 },
    /// `log w = α log|x| − τ x²` on the real line.
    GaussPower {
        alpha: f64,
        #[serde(default = "unit")]
        tau: f64,
    },
    /// `log w = α log x + β log(1 − x)` on `[0, 1]`.
    JacobiPower { alpha: f64, beta: f64 },
    /// Stieltjes-Wigert weight `log w = −c (log x)²` on `(0, ∞)`.
    LogSquare { c: f64 },
    /// Tabulated potential `V = −log w`, linear between strictly increasing
    /// nodes and `+∞` (zero weight) outside the table.
    TablePotential { nodes: Vec<f64>, values: Vec<f64> },
}

fn unit() -> f64 {
    1.0
}

/// `a·log(x)` with the convention `0·log 0 = 0`.
fn scaled_log(a: f64, x: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * x.ln()
    }
}

impl WeightFamily {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match self {
            WeightFamily::Constant => Ok(()),
            WeightFamily::PowerExp { alpha, tau } => {
                if !(*alpha > -1.0) || !(*tau > 0.0) || !tau.is_finite() {
                    return bad(format!("power_exp needs alpha > -1 and tau > 0 (got {alpha}, {tau})"));
                }
                Ok(())
            }
            WeightFamily::GaussPower { alpha, tau } => {
                if !(*alpha > -1.0) || !(*tau > 0.0) || !tau.is_finite() {
                    return bad(format!("gauss_power needs alpha > -1 and tau > 0 (got {alpha}, {tau})"));
                }
                Ok(())
            }
            WeightFamily::JacobiPower { alpha, beta } => {
                if !(*alpha > -1.0) || !(*beta > -1.0) {
                    return bad(format!("jacobi_power needs alpha, beta > -1 (got {alpha}, {beta})"));
                }
                Ok(())
            }
            WeightFamily::LogSquare { c } => {
                if !(*c > 0.0) || !c.is_finite() {
                    return bad(format!("log_square needs c > 0 (got {c})"));
                }
                Ok(())
            }
            WeightFamily::TablePotential { nodes, values } => {
                if nodes.len() < 2 || nodes.len() != values.len() {
                    return bad("table_potential needs at least two nodes and one value per node".into());
                }
                if nodes.windows(2).any(|w| !(w[0] < w[1])) || nodes.iter().any(|x| !x.is_finite()) {
                    return bad("table_potential nodes must be finite and strictly increasing".into());
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return bad("table_potential values must be finite".into());
                }
                Ok(())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            WeightFamily::Constant => "constant",
            WeightFamily::PowerExp { .. } => "power_exp",
            WeightFamily::GaussPower { .. } => "gauss_power",
            WeightFamily::JacobiPower { .. } => "jacobi_power",
            WeightFamily::LogSquare { .. } => "log_square",
            WeightFamily::TablePotential { .. } => "table_potential",
        }
    }

    /// Largest interval on which the family is defined.
    pub fn natural_domain(&self) -> Interval {
        match self {
            WeightFamily::Constant | WeightFamily::GaussPower { .. } => Interval::REAL_LINE,
            WeightFamily::PowerExp { .. } | WeightFamily::LogSquare { .. } => Interval::HALF_LINE,
            WeightFamily::JacobiPower { .. } => Interval::new(0.0, 1.0),
            WeightFamily::TablePotential { nodes, .. } => {
                Interval::new(nodes[0], nodes[nodes.len() - 1])
            }
        }
    }

    /// `log w(x)`; `−∞` at zeros of `w`.
    pub fn log_weight(&self, x: f64) -> f64 {
        match self {
            WeightFamily::Constant => 0.0,
            WeightFamily::PowerExp { alpha, tau } => scaled_log(*alpha, x) - tau * x,
            WeightFamily::GaussPower { alpha, tau } => scaled_log(*alpha, x.abs()) - tau * x * x,
            WeightFamily::JacobiPower { alpha, beta } => {
                scaled_log(*alpha, x) + scaled_log(*beta, 1.0 - x)
            }
            WeightFamily::LogSquare { c } => {
                let l = x.ln();
                -c * l * l
            }
            WeightFamily::TablePotential { nodes, values } => {
                -interpolate(nodes, values, x).unwrap_or(f64::INFINITY)
            }
        }
    }

    /// Zeros of `w` inside `domain` (finite by construction).
    pub fn zeros(&self, domain: &Interval) -> Vec<f64> {
        let mut z = Vec::new();
        match self {
            WeightFamily::PowerExp { alpha, .. } | WeightFamily::GaussPower { alpha, .. } => {
                if *alpha > 0.0 {
                    z.push(0.0);
                }
            }
            WeightFamily::JacobiPower { alpha, beta } => {
                if *alpha > 0.0 {
                    z.push(0.0);
                }
                if *beta > 0.0 {
                    z.push(1.0);
                }
            }
            WeightFamily::LogSquare { .. } => z.push(0.0),
            WeightFamily::Constant | WeightFamily::TablePotential { .. } => {}
        }
        z.retain(|x| domain.contains(*x));
        z
    }

    /// Center and radius of the region where the weight holds most of its
    /// mass, before multiplication by interaction scale factors.
    pub(crate) fn scale_hint(&self) -> (f64, f64) {
        match self {
            WeightFamily::Constant => (0.0, f64::INFINITY),
            WeightFamily::PowerExp { tau, .. } => (0.0, 1.0 / tau),
            WeightFamily::GaussPower { tau, .. } => (0.0, 1.0 / tau.sqrt()),
            WeightFamily::JacobiPower { .. } => (0.5, 0.5),
            WeightFamily::LogSquare { c } => (1.0, (1.0 / c).max(1.0)),
            WeightFamily::TablePotential { nodes, .. } => {
                let (a, b) = (nodes[0], nodes[nodes.len() - 1]);
                (0.5 * (a + b), 0.5 * (b - a))
            }
        }
    }
}

fn interpolate(nodes: &[f64], values: &[f64], x: f64) -> Option<f64> {
    if x < nodes[0] || x > nodes[nodes.len() - 1] {
        return None;
    }
    let k = nodes.partition_point(|&t| t <= x);
    if k == nodes.len() {
        return Some(values[values.len() - 1]);
    }
    let k = k.max(1);
    let (x0, x1) = (nodes[k - 1], nodes[k]);
    let s = (x - x0) / (x1 - x0);
    Some(values[k - 1] * (1.0 - s) + values[k] * s)
}

/// Either kind of ensemble, as it appears in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Ensemble {
    Biorthogonal(EnsembleSpec),
    Angelesco(AngelescoSpec),
}

impl Ensemble {
    pub fn validate(&self) -> Result<()> {
        match self {
            Ensemble::Biorthogonal(s) => s.validate(),
            Ensemble::Angelesco(s) => s.validate(),
        }
    }

    /// Short human-readable identifier.
    pub fn id(&self) -> String {
        match self {
            Ensemble::Biorthogonal(s) => format!(
                "biorthogonal(theta={},kappa={},{})",
                s.theta,
                s.kappa,
                s.weight.name()
            ),
            Ensemble::Angelesco(s) => format!("angelesco(p={})", s.species()),
        }
    }
}

/// One-species biorthogonal ensemble
/// `prod_i w_n(x_i)^n prod_{i<j} |x_i − x_j| |x_i^θ − x_j^θ|` on `Σ^{p(n)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub theta: u32,
    #[serde(default = "unit")]
    pub kappa: f64,
    pub support: Interval,
    pub weight: WeightFamily,
    #[serde(default)]
    pub scaling: WeightScaling,
}

impl EnsembleSpec {
    pub fn new(
        theta: u32,
        kappa: f64,
        support: Interval,
        weight: WeightFamily,
        scaling: WeightScaling,
    ) -> Result<Self> {
        let spec = EnsembleSpec {
            theta,
            kappa,
            support,
            weight,
            scaling,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.theta == 0 {
            return Err(Error::Config("theta must be a positive integer".into()));
        }
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(Error::Config(format!("kappa must be positive, got {}", self.kappa)));
        }
        self.support.validate("support")?;
        if self.theta % 2 == 0 && self.support.lower < 0.0 {
            return Err(Error::Config(format!(
                "theta = {} is even, so the support must lie in [0, inf)",
                self.theta
            )));
        }
        self.weight.validate()?;
        if !self.weight.natural_domain().contains_interval(&self.support) {
            return Err(Error::Config(format!(
                "support [{}, {}] leaves the domain of the weight family",
                self.support.lower, self.support.upper
            )));
        }
        Ok(())
    }

    /// Particle count `p(n) = round(κ n)`, at least one.
    pub fn particle_count(&self, n: usize) -> usize {
        ((self.kappa * n as f64).round() as usize).max(1)
    }

    /// Multiplier turning `log w` into `n·log w_n`.
    pub fn weight_factor(&self, n: usize) -> f64 {
        match self.scaling {
            WeightScaling::Fixed => 1.0,
            WeightScaling::Varying => n as f64,
        }
    }

    /// `n·log w_n(x)`; `−∞` at zeros of the weight.
    pub fn log_weight(&self, x: f64, n: usize) -> Result<f64> {
        if !self.support.contains(x) {
            return Err(Error::Domain(format!(
                "x = {x} lies outside the support [{}, {}]",
                self.support.lower, self.support.upper
            )));
        }
        Ok(self.one_body(x, n))
    }

    /// `n·log w_n(x)` without the support check.
    pub(crate) fn one_body(&self, x: f64, n: usize) -> f64 {
        let lw = self.weight.log_weight(x);
        if lw == 0.0 {
            0.0
        } else {
            self.weight_factor(n) * lw
        }
    }

    pub fn log_joint_density_unnormalized(&self, x: &[f64], n: usize) -> Result<f64> {
        let p = self.particle_count(n);
        if x.len() != p {
            return Err(Error::Contract(format!(
                "configuration has {} coordinates but p({n}) = {p}",
                x.len()
            )));
        }
        if x.iter().any(|&xi| !self.support.contains(xi)) {
            return Ok(f64::NEG_INFINITY);
        }
        let mut total: f64 = x.iter().map(|&xi| self.one_body(xi, n)).sum();
        for i in 0..x.len() {
            for j in (i + 1)..x.len() {
                total += pair_interaction(self.theta, x[i], x[j]);
            }
        }
        Ok(if total.is_nan() { f64::NEG_INFINITY } else { total })
    }

    /// Zeros of the limiting weight on the support.
    pub fn weight_zeros(&self) -> Vec<f64> {
        self.weight.zeros(&self.support)
    }

    /// Bounded core `Σ ∩ [center − R₀, center + R₀]` used to initialise chains.
    pub fn initial_core(&self, n: usize) -> Interval {
        let (center, radius) = self.weight.scale_hint();
        let spread = (self.theta as f64 + 1.0) * self.kappa;
        let r0 = match &self.weight {
            WeightFamily::PowerExp { .. } => 4.0 * spread * radius,
            WeightFamily::GaussPower { .. } => 4.0 * spread.sqrt() * radius,
            _ => 4.0 * radius,
        };
        let r0 = match (&self.weight, self.scaling) {
            (WeightFamily::PowerExp { .. }, WeightScaling::Fixed) => r0 * n as f64,
            (WeightFamily::GaussPower { .. }, WeightScaling::Fixed) => r0 * (n as f64).sqrt(),
            _ => r0,
        };
        self.support
            .intersect(&Interval::new(center - r0, center + r0))
    }
}

/// `log|q(x, y)|` with `q = (x^θ − y^θ)/(x − y) = Σ_k x^k y^{θ−1−k}`.
pub fn log_abs_q(theta: u32, x: f64, y: f64) -> f64 {
    if theta == 1 {
        return 0.0;
    }
    let mut s = 0.0;
    let mut xp = 1.0;
    for k in 0..theta {
        s += xp * y.powi((theta - 1 - k) as i32);
        xp *= x;
    }
    s.abs().ln()
}

/// `log|x − y| + log|x^θ − y^θ|`, evaluated through the factorization of
/// `x^θ − y^θ`. Equals `−∞` when `x = y`.
pub fn pair_interaction(theta: u32, x: f64, y: f64) -> f64 {
    let d = (x - y).abs();
    if d == 0.0 {
        return f64::NEG_INFINITY;
    }
    2.0 * d.ln() + log_abs_q(theta, x, y)
}

/// Outcome of the numerical probe of the tail condition (a2).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailReport {
    /// False when the support is bounded and the condition holds trivially.
    pub applicable: bool,
    pub satisfied: bool,
    /// `(θ + 1)(κ + ε)`.
    pub exponent: f64,
    pub sides: Vec<TailSide>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailSide {
    /// +1 for the right tail, −1 for the left tail.
    pub direction: i8,
    /// `(x, log(|x|^{exponent} w(x)))` along a geometric grid.
    pub log_values: Vec<(f64, f64)>,
    pub decreasing: bool,
    pub boundary_log_value: f64,
}

/// `log` of the largest admissible value of `|x|^{(θ+1)(κ+ε)} w(x)` at the
/// probe radius.
pub const TAIL_LOG_THRESHOLD: f64 = -13.815510557964274; // ln 1e-6

const TAIL_PROBE_POINTS: usize = 64;

/// Probes `|x|^{(θ+1)(κ+ε)} w(x) → 0` along a geometric grid out to
/// `probe_radius`. Diagnostic only: a finite probe cannot prove a limit.
pub fn check_tail_assumption(
    spec: &EnsembleSpec,
    epsilon: f64,
    probe_radius: f64,
) -> Result<TailReport> {
    if !(epsilon > 0.0) {
        return Err(Error::Contract(format!("epsilon must be positive, got {epsilon}")));
    }
    let exponent = (spec.theta as f64 + 1.0) * (spec.kappa + epsilon);
    if spec.support.is_bounded() {
        return Ok(TailReport {
            applicable: false,
            satisfied: true,
            exponent,
            sides: Vec::new(),
        });
    }
    let mut sides = Vec::new();
    for direction in [1i8, -1i8] {
        let edge = if direction > 0 {
            spec.support.upper
        } else {
            spec.support.lower
        };
        if edge.is_finite() {
            continue;
        }
        let other = if direction > 0 {
            spec.support.lower
        } else {
            spec.support.upper
        };
        let start = if other.is_finite() { other.abs().max(1.0) } else { 1.0 };
        if !(probe_radius > start) {
            return Err(Error::Contract(format!(
                "probe radius {probe_radius} must exceed {start}"
            )));
        }
        let ratio = (probe_radius / start).powf(1.0 / (TAIL_PROBE_POINTS - 1) as f64);
        let log_values: Vec<(f64, f64)> = (0..TAIL_PROBE_POINTS)
            .map(|k| {
                let r = if k + 1 == TAIL_PROBE_POINTS {
                    probe_radius
                } else {
                    start * ratio.powi(k as i32)
                };
                let x = direction as f64 * r;
                (x, exponent * r.ln() + spec.weight.log_weight(x))
            })
            .collect();
        let tail = &log_values[TAIL_PROBE_POINTS / 2..];
        let decreasing = tail.windows(2).all(|w| w[1].1 <= w[0].1);
        let boundary_log_value = log_values[TAIL_PROBE_POINTS - 1].1;
        sides.push(TailSide {
            direction,
            log_values,
            decreasing,
            boundary_log_value,
        });
    }
    let satisfied = sides
        .iter()
        .all(|s| s.decreasing && s.boundary_log_value < TAIL_LOG_THRESHOLD);
    Ok(TailReport {
        applicable: true,
        satisfied,
        exponent,
        sides,
    })
}

/// Multi-species Angelesco ensemble with varying weights `w_j = e^{−n V_j}`.
///
/// Potentials are stored as weight families, `V_j = −log w_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngelescoSpec {
    pub intervals: Vec<Interval>,
    pub ratios: Vec<f64>,
    pub potentials: Vec<WeightFamily>,
}

impl AngelescoSpec {
    pub fn new(
        intervals: Vec<Interval>,
        ratios: Vec<f64>,
        potentials: Vec<WeightFamily>,
    ) -> Result<Self> {
        let spec = AngelescoSpec {
            intervals,
            ratios,
            potentials,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn species(&self) -> usize {
        self.intervals.len()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.intervals.len();
        if p < 2 {
            return Err(Error::Config("an Angelesco ensemble needs at least two species".into()));
        }
        if self.ratios.len() != p || self.potentials.len() != p {
            return Err(Error::Config(format!(
                "{p} intervals but {} ratios and {} potentials",
                self.ratios.len(),
                self.potentials.len()
            )));
        }
        for (j, iv) in self.intervals.iter().enumerate() {
            iv.validate(&format!("interval {j}"))?;
        }
        // Closed intervals may share an endpoint; interiors must be disjoint.
        for i in 0..p {
            for j in (i + 1)..p {
                let (a, b) = (&self.intervals[i], &self.intervals[j]);
                if !(a.upper <= b.lower || b.upper <= a.lower) {
                    return Err(Error::Config(format!("intervals {i} and {j} overlap")));
                }
            }
        }
        if self.ratios.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
            return Err(Error::Config("every ratio r_j must lie in (0, 1)".into()));
        }
        let total: f64 = self.ratios.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("ratios sum to {total}, not 1")));
        }
        for (j, (v, iv)) in self.potentials.iter().zip(&self.intervals).enumerate() {
            v.validate()?;
            if !v.natural_domain().contains_interval(iv) {
                return Err(Error::Config(format!(
                    "interval {j} leaves the domain of its potential"
                )));
            }
        }
        Ok(())
    }

    /// Block sizes `n_j ≈ r_j n` by largest remainder, each at least one.
    pub fn block_sizes(&self, n: usize) -> Vec<usize> {
        let p = self.species();
        let exact: Vec<f64> = self.ratios.iter().map(|r| r * n as f64).collect();
        let mut sizes: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
        let mut rest = n.saturating_sub(sizes.iter().sum());
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| {
            let fa = exact[a] - exact[a].floor();
            let fb = exact[b] - exact[b].floor();
            fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
        });
        for &j in order.iter().cycle() {
            if rest == 0 {
                break;
            }
            sizes[j] += 1;
            rest -= 1;
        }
        for j in 0..p {
            if sizes[j] == 0 {
                let donor = (0..p).max_by_key(|&k| (sizes[k], usize::MAX - k)).unwrap();
                if sizes[donor] > 1 {
                    sizes[donor] -= 1;
                }
                sizes[j] = 1;
            }
        }
        sizes
    }

    /// `V_j(x)`.
    pub fn potential(&self, species: usize, x: f64) -> f64 {
        -self.potentials[species].log_weight(x)
    }

    pub fn log_joint_density_angelesco(&self, blocks: &[Vec<f64>], n: usize) -> Result<f64> {
        let sizes = self.block_sizes(n);
        if blocks.len() != sizes.len() {
            return Err(Error::Contract(format!(
                "{} blocks supplied for {} species",
                blocks.len(),
                sizes.len()
            )));
        }
        for (j, (b, &s)) in blocks.iter().zip(&sizes).enumerate() {
            if b.len() != s {
                return Err(Error::Contract(format!(
                    "block {j} has {} coordinates, expected n_{j} = {s}",
                    b.len()
                )));
            }
        }
        for (b, iv) in blocks.iter().zip(&self.intervals) {
            if b.iter().any(|&x| !iv.contains(x)) {
                return Ok(f64::NEG_INFINITY);
            }
        }
        let nf = n as f64;
        let mut total = 0.0;
        for (j, b) in blocks.iter().enumerate() {
            for (k, &x) in b.iter().enumerate() {
                total -= nf * self.potential(j, x);
                for &y in &b[k + 1..] {
                    total += 2.0 * (x - y).abs().ln();
                }
            }
        }
        for i in 0..blocks.len() {
            for j in (i + 1)..blocks.len() {
                for &x in &blocks[i] {
                    for &y in &blocks[j] {
                        total += (x - y).abs().ln();
                    }
                }
            }
        }
        Ok(if total.is_nan() { f64::NEG_INFINITY } else { total })
    }
}
