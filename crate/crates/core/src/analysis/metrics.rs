use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{AtomicMeasure, ToAtoms};

pub const NORMALIZATION_TOL: f64 = 1e-10;

/// Two probability measures reduced to sorted atom lists.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurePair {
    pub first: AtomicMeasure,
    pub second: AtomicMeasure,
}

impl MeasurePair {
    pub fn new(first: &impl ToAtoms, second: &impl ToAtoms) -> Result<Self> {
        let (first, second) = (first.to_atoms(), second.to_atoms());
        for m in [&first, &second] {
            if m.is_empty() || !m.is_normalized(NORMALIZATION_TOL) {
                return Err(Error::Contract(format!(
                    "measure has total mass {}, expected 1",
                    m.total_mass()
                )));
            }
        }
        Ok(MeasurePair { first, second })
    }

    pub fn wasserstein1(&self) -> f64 {
        wasserstein1(&self.first, &self.second)
    }

    pub fn ks_distance(&self) -> f64 {
        ks_distance(&self.first, &self.second)
    }
}

/// Walks the merged atoms and yields `(x, next_x, F_a(x) − F_b(x))`, where the
/// CDF difference holds on `[x, next_x)`; `next_x` is `None` after the last atom.
fn cdf_steps(a: &AtomicMeasure, b: &AtomicMeasure, mut visit: impl FnMut(f64, Option<f64>, f64)) {
    let (xa, ma) = (a.atoms(), a.masses());
    let (xb, mb) = (b.atoms(), b.masses());
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0, 0.0);
    while i < xa.len() || j < xb.len() {
        let x = match (xa.get(i), xb.get(j)) {
            (Some(&p), Some(&q)) => p.min(q),
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            (None, None) => unreachable!(),
        };
        while i < xa.len() && xa[i] == x {
            fa += ma[i];
            i += 1;
        }
        while j < xb.len() && xb[j] == x {
            fb += mb[j];
            j += 1;
        }
        let next = match (xa.get(i), xb.get(j)) {
            (Some(&p), Some(&q)) => Some(p.min(q)),
            (Some(&p), None) => Some(p),
            (None, Some(&q)) => Some(q),
            (None, None) => None,
        };
        visit(x, next, fa - fb);
    }
}

/// Exact `W₁ = ∫|F_a − F_b|` on the line.
pub fn wasserstein1(a: &AtomicMeasure, b: &AtomicMeasure) -> f64 {
    let mut total = 0.0;
    cdf_steps(a, b, |x, next, d| {
        if let Some(y) = next {
            total += d.abs() * (y - x);
        }
    });
    total
}

/// `sup_x |F_a(x) − F_b(x)|`.
pub fn ks_distance(a: &AtomicMeasure, b: &AtomicMeasure) -> f64 {
    let mut sup: f64 = 0.0;
    cdf_steps(a, b, |_, _, d| sup = sup.max(d.abs()));
    sup
}

/// `sup_x |F(x) − G(x)|` for an atomic `a` and a continuous CDF `g`, checked
/// on both sides of every jump of `F`.
pub fn sup_cdf_distance(a: &AtomicMeasure, g: impl Fn(f64) -> f64) -> f64 {
    let mut before = 0.0;
    let mut sup: f64 = 0.0;
    for (&x, &m) in a.atoms().iter().zip(a.masses()) {
        let gx = g(x);
        let after = before + m;
        sup = sup.max((before - gx).abs()).max((after - gx).abs());
        before = after;
    }
    sup
}

/// Scales of the test functions: a fixed geometric ladder, independent of
/// the data so that separations are comparable across pairs.
pub fn bl_scales() -> Vec<f64> {
    (-12..=8).map(|k| 2f64.powi(k)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Profile {
    Tent,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlEstimate {
    /// Best separation found; a certified lower bound on the metric.
    pub lower: f64,
    /// `2W₁/(W₁ + 2)`, an upper bound valid for every admissible function.
    pub upper: f64,
    pub wasserstein1: f64,
    pub witness_center: f64,
    pub witness_scale: f64,
    pub witness_profile: Profile,
}

/// Bounded-Lipschitz distance `sup |∫f dμ − ∫f dν|` over `l_f + ‖f‖∞ ≤ 1`,
/// bracketed from both sides.
///
/// The lower bound searches tents `h·(1 − |x − c|/s)₊` and profiles
/// `h·tanh((x − c)/s)` with `h = s/(1 + s)`, so that each function is exactly
/// admissible. Centers are the atoms and the midpoints between neighbouring
/// atoms, thinned evenly to `family_size`. For the upper bound, any
/// admissible `f` with Lipschitz constant `l` separates by at most
/// `min(l·W₁, 2(1 − l))`, whose maximum over `l` is `2W₁/(W₁ + 2)`.
pub fn bounded_lipschitz(pair: &MeasurePair, family_size: usize) -> Result<BlEstimate> {
    if family_size == 0 {
        return Err(Error::Contract("family_size must be at least 1".into()));
    }
    let (a, b) = (&pair.first, &pair.second);
    let mut points: Vec<f64> = a.atoms().iter().chain(b.atoms()).copied().collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    let mut centers = points.clone();
    centers.extend(points.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    centers.sort_by(f64::total_cmp);
    if centers.len() > family_size {
        let step = centers.len() as f64 / family_size as f64;
        centers = (0..family_size)
            .map(|k| centers[((k as f64 + 0.5) * step) as usize])
            .collect();
    }
    let w1 = wasserstein1(a, b);
    let mut best = BlEstimate {
        lower: 0.0,
        upper: 2.0 * w1 / (w1 + 2.0),
        wasserstein1: w1,
        witness_center: centers[0],
        witness_scale: 1.0,
        witness_profile: Profile::Tent,
    };
    for &c in &centers {
        for s in bl_scales() {
            let h = s / (1.0 + s);
            for profile in [Profile::Tent, Profile::Tanh] {
                let f = |x: f64| match profile {
                    Profile::Tent => h * (1.0 - (x - c).abs() / s).max(0.0),
                    Profile::Tanh => h * ((x - c) / s).tanh(),
                };
                let sep = (a.integrate(f) - b.integrate(f)).abs();
                if sep > best.lower {
                    best.lower = sep;
                    best.witness_center = c;
                    best.witness_scale = s;
                    best.witness_profile = profile;
                }
            }
        }
    }
    // Rounding in the two integrals cannot push the certificate past the bound.
    best.lower = best.lower.min(best.upper);
    Ok(best)
}
