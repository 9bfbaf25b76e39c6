//! Finite atomic probability measures on the line, the common currency of
//! the metrics in [`crate::analysis`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sorted atoms with nonnegative masses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeasure {
    atoms: Vec<f64>,
    masses: Vec<f64>,
}

impl AtomicMeasure {
    /// Builds a measure from unsorted `(atom, mass)` data. Masses must be
    /// nonnegative; normalization is checked separately.
    pub fn new(atoms: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if atoms.len() != masses.len() {
            return Err(Error::Contract(format!(
                "{} atoms but {} masses",
                atoms.len(),
                masses.len()
            )));
        }
        if atoms.iter().any(|x| !x.is_finite()) {
            return Err(Error::Contract("atoms must be finite".into()));
        }
        if masses.iter().any(|&m| !(m >= 0.0) || !m.is_finite()) {
            return Err(Error::Contract("masses must be finite and nonnegative".into()));
        }
        let mut pairs: Vec<(f64, f64)> = atoms.into_iter().zip(masses).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (atoms, masses) = pairs.into_iter().unzip();
        Ok(AtomicMeasure { atoms, masses })
    }

    /// Uniform measure on the given points.
    pub fn uniform(points: &[f64]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Contract("a uniform measure needs at least one atom".into()));
        }
        let m = 1.0 / points.len() as f64;
        AtomicMeasure::new(points.to_vec(), vec![m; points.len()])
    }

    pub fn dirac(x: f64) -> Self {
        AtomicMeasure {
            atoms: vec![x],
            masses: vec![1.0],
        }
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.total_mass() - 1.0).abs() <= tol
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.atoms
            .iter()
            .zip(&self.masses)
            .map(|(&x, &m)| m * f(x))
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.integrate(|x| x)
    }

    /// `μ((−∞, x])`.
    pub fn cdf(&self, x: f64) -> f64 {
        let k = self.atoms.partition_point(|&a| a <= x);
        self.masses[..k].iter().sum()
    }

    /// Smallest and largest atoms carrying positive mass.
    pub fn support_bounds(&self) -> Option<(f64, f64)> {
        let first = self.masses.iter().position(|&m| m > 0.0)?;
        let last = self.masses.iter().rposition(|&m| m > 0.0)?;
        Some((self.atoms[first], self.atoms[last]))
    }
}

/// Anything that reduces to a finite atomic measure.
pub trait ToAtoms {
    fn to_atoms(&self) -> AtomicMeasure;
}

impl ToAtoms for AtomicMeasure {
    fn to_atoms(&self) -> AtomicMeasure {
        self.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorts_atoms_with_masses() {
        let m = AtomicMeasure::new(vec![3.0, 1.0, 2.0], vec![0.5, 0.2, 0.3]).unwrap();
        assert_eq!(m.atoms(), &[1.0, 2.0, 3.0]);
        assert_eq!(m.masses(), &[0.2, 0.3, 0.5]);
        assert_eq!(m.cdf(2.0), 0.5);
        assert_eq!(m.cdf(0.0), 0.0);
        assert!(m.is_normalized(1e-12));
    }

    #[test]
    fn rejects_negative_mass() {
        assert!(AtomicMeasure::new(vec![0.0], vec![-1.0]).is_err());
        assert!(AtomicMeasure::uniform(&[]).is_err());
    }
}
