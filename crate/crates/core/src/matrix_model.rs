//! Direct matrix-model sampler for the disordered-boson ensemble.
//!
//! A stability matrix `h = C Cᵀ` is built from a real Gaussian
//! `2n × (2n + α)` matrix `C`; the characteristic frequencies are the
//! positive eigenvalues of the Hermitian matrix `i h^{1/2} J h^{1/2}`, with
//! `J` the standard symplectic form. With entry variance `1/τ` the
//! frequencies follow `∏ x_i^α e^{−τ x_i} ∏_{i<j} |x_i − x_j| |x_i² − x_j²|`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigensolve, ComplexMatrix, HermitianMatrix};

/// Entry variance is `calibration / n`, i.e. `τ = n / calibration`. A value of
/// one reproduces the `τ = n` bosonic ensemble exactly.
pub const DEFAULT_CALIBRATION: f64 = 1.0;

/// Eigenvalues below `−PSD_TOL · max(1, λ_max)` reject the input as not
/// positive semidefinite.
pub const PSD_TOL: f64 = 1e-10;

/// One draw of the matrix model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BosonMatrixDraw {
    pub n: usize,
    pub alpha: usize,
    /// Sorted ascending, all nonnegative.
    pub frequencies: Vec<f64>,
    pub seed: u64,
    pub draw_index: u64,
}

/// Per-draw generator: the ChaCha stream index separates draws that share a
/// seed.
pub fn draw_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// `h = C Cᵀ` with `C` a real `2n × (2n + α)` Gaussian matrix of entry
/// variance `variance`.
pub fn sample_wishart_with_rng<R: Rng + ?Sized>(
    n: usize,
    alpha: usize,
    variance: f64,
    rng: &mut R,
) -> Result<HermitianMatrix> {
    if n == 0 {
        return Err(Error::Contract("matrix model needs n >= 1".into()));
    }
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(Error::Contract(format!("variance must be positive, got {variance}")));
    }
    let rows = 2 * n;
    let cols = 2 * n + alpha;
    let sd = variance.sqrt();
    let c: Vec<f64> = (0..rows * cols)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut h = vec![Complex64::new(0.0, 0.0); rows * rows];
    for i in 0..rows {
        let ri = &c[i * cols..(i + 1) * cols];
        for j in i..rows {
            let rj = &c[j * cols..(j + 1) * cols];
            let v: f64 = ri.iter().zip(rj).map(|(a, b)| a * b).sum();
            h[i * rows + j] = Complex64::new(v, 0.0);
            h[j * rows + i] = Complex64::new(v, 0.0);
        }
    }
    HermitianMatrix::from_row_major(rows, h)
}

pub fn sample_wishart(n: usize, alpha: usize, variance: f64, seed: u64) -> Result<HermitianMatrix> {
    sample_wishart_with_rng(n, alpha, variance, &mut draw_rng(seed, 0))
}

/// Full spectrum of `i h^{1/2} J h^{1/2}`, ascending.
pub fn symplectic_spectrum(h: &HermitianMatrix) -> Result<Vec<f64>> {
    let d = h.dim();
    if d == 0 || d % 2 != 0 {
        return Err(Error::Contract(format!(
            "the symplectic form needs an even dimension, got {d}"
        )));
    }
    let n = d / 2;
    let eig = hermitian_eigensolve(h)?;
    let top = eig.values.last().copied().unwrap_or(0.0).max(1.0);
    if let Some(&low) = eig.values.first() {
        if low < -PSD_TOL * top {
            return Err(Error::numerical(format!(
                "h is not positive semidefinite (smallest eigenvalue {low:e})"
            )));
        }
    }
    // h^{1/2} = V diag(√λ) V†
    let v = &eig.vectors;
    let mut vs = v.clone();
    for (j, &lam) in eig.values.iter().enumerate() {
        let r = lam.max(0.0).sqrt();
        for i in 0..d {
            vs.set(i, j, v.get(i, j) * r);
        }
    }
    let sqrt_h = vs.mul(&v.adjoint());
    // (S J) columns: b < n → −S[:, b+n], b ≥ n → S[:, b−n]
    let mut sj = ComplexMatrix::zeros(d, d);
    for i in 0..d {
        for b in 0..d {
            let val = if b < n {
                -sqrt_h.get(i, b + n)
            } else {
                sqrt_h.get(i, b - n)
            };
            sj.set(i, b, val);
        }
    }
    let mut m = sj.mul(&sqrt_h);
    let scale = m.data.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    for z in m.data.iter_mut() {
        *z *= Complex64::new(0.0, 1.0);
    }
    // Rounding leaves the product Hermitian only to ~ε·scale; symmetrize
    // explicitly after checking that the defect is rounding-sized.
    for i in 0..d {
        for j in i..d {
            let a = m.get(i, j);
            let b = m.get(j, i).conj();
            if (a - b).norm() > 1e-9 * scale {
                return Err(Error::numerical(format!(
                    "i h^(1/2) J h^(1/2) is not Hermitian at ({i},{j})"
                )));
            }
            let avg = 0.5 * (a + b);
            m.set(i, j, avg);
            m.set(j, i, avg.conj());
        }
    }
    let herm = HermitianMatrix::from_row_major(d, m.data)?;
    Ok(hermitian_eigensolve(&herm)?.values)
}

/// The `n` nonnegative characteristic frequencies, ascending.
pub fn characteristic_frequencies(h: &HermitianMatrix) -> Result<Vec<f64>> {
    let spectrum = symplectic_spectrum(h)?;
    let n = spectrum.len() / 2;
    Ok(spectrum[n..].iter().map(|&x| x.max(0.0)).collect())
}

/// One matrix-model draw with entry variance `calibration / n`.
pub fn draw_frequencies(
    n: usize,
    alpha: usize,
    calibration: f64,
    seed: u64,
    draw_index: u64,
) -> Result<BosonMatrixDraw> {
    let mut rng = draw_rng(seed, draw_index);
    let h = sample_wishart_with_rng(n, alpha, calibration / n as f64, &mut rng)?;
    let frequencies = characteristic_frequencies(&h)?;
    Ok(BosonMatrixDraw {
        n,
        alpha,
        frequencies,
        seed,
        draw_index,
    })
}

/// `draws` independent draws, computed in parallel and returned in index
/// order.
pub fn draw_batch(
    n: usize,
    alpha: usize,
    calibration: f64,
    seed: u64,
    draws: usize,
) -> Result<Vec<BosonMatrixDraw>> {
    (0..draws as u64)
        .into_par_iter()
        .map(|k| draw_frequencies(n, alpha, calibration, seed, k))
        .collect()
}
