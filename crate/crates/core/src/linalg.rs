//! Dense complex Hermitian matrices and a cyclic Jacobi eigensolver.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Tolerance on `|m_ij − conj(m_ji)|` accepted at construction.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Dense row-major Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl HermitianMatrix {
    /// Checks hermiticity and then symmetrizes exactly.
    pub fn from_row_major(dim: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::Contract(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                data.len()
            )));
        }
        let mut m = HermitianMatrix { dim, data };
        for i in 0..dim {
            for j in i..dim {
                let a = m.get(i, j);
                let b = m.get(j, i).conj();
                if (a - b).norm() > HERMITIAN_TOL {
                    return Err(Error::Contract(format!(
                        "entry ({i},{j}) differs from the conjugate of ({j},{i}) by {:e}",
                        (a - b).norm()
                    )));
                }
                let avg = 0.5 * (a + b);
                let avg = if i == j { Complex64::new(avg.re, 0.0) } else { avg };
                m.set(i, j, avg);
                m.set(j, i, avg.conj());
            }
        }
        Ok(m)
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> Complex64) -> Result<Self> {
        let data = (0..dim * dim).map(|k| f(k / dim, k % dim)).collect();
        Self::from_row_major(dim, data)
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let dim = diag.len();
        let mut data = vec![Complex64::new(0.0, 0.0); dim * dim];
        for (i, &d) in diag.iter().enumerate() {
            data[i * dim + i] = Complex64::new(d, 0.0);
        }
        HermitianMatrix { dim, data }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_real_diagonal(&vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.dim + j] = v;
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i).re).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }
}

/// Dense row-major complex matrix, used for eigenvectors and products.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn mul(&self, other: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.cols, other.rows, "dimension mismatch in product");
        let mut out = ComplexMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let row = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn adjoint(&self) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j).conj());
            }
        }
        out
    }
}

impl From<&HermitianMatrix> for ComplexMatrix {
    fn from(h: &HermitianMatrix) -> Self {
        ComplexMatrix {
            rows: h.dim,
            cols: h.dim,
            data: h.data.clone(),
        }
    }
}

/// Eigenvalues ascending, eigenvectors as the matching columns of `vectors`.
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

pub const DEFAULT_SWEEP_CAP: usize = 64;

/// Cyclic Jacobi eigensolver for Hermitian matrices.
///
/// Each rotation first removes the phase of `a_pq` with a diagonal unitary
/// and then applies the real symmetric Jacobi rotation.
pub fn hermitian_eigensolve(m: &HermitianMatrix) -> Result<Eigen> {
    hermitian_eigensolve_with_cap(m, DEFAULT_SWEEP_CAP)
}

pub fn hermitian_eigensolve_with_cap(m: &HermitianMatrix, sweep_cap: usize) -> Result<Eigen> {
    let n = m.dim;
    let mut a = ComplexMatrix::from(m);
    let mut v = ComplexMatrix::identity(n);
    let scale = m.frobenius_norm();
    if n <= 1 || scale == 0.0 {
        return Ok(Eigen {
            values: (0..n).map(|i| a.get(i, i).re).collect(),
            vectors: v,
        });
    }
    let target = 1e-15 * scale;
    let mut off = off_diagonal_norm(&a);
    let mut sweeps = 0;
    while off > target {
        if sweeps == sweep_cap {
            return Err(Error::Numerical {
                message: format!("Jacobi eigensolver did not converge in {sweep_cap} sweeps"),
                off_norm: off,
            });
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                rotate(&mut a, &mut v, p, q, target / n as f64);
            }
        }
        sweeps += 1;
        off = off_diagonal_norm(&a);
    }
    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| a.get(i, i).re).collect();
    order.sort_by(|&i, &j| diag[i].total_cmp(&diag[j]));
    let values = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = ComplexMatrix::zeros(n, n);
    for (new, &old) in order.iter().enumerate() {
        for r in 0..n {
            vectors.set(r, new, v.get(r, old));
        }
    }
    Ok(Eigen { values, vectors })
}

fn off_diagonal_norm(a: &ComplexMatrix) -> f64 {
    let mut s = 0.0;
    for i in 0..a.rows {
        for j in 0..a.cols {
            if i != j {
                s += a.get(i, j).norm_sqr();
            }
        }
    }
    s.sqrt()
}

fn rotate(a: &mut ComplexMatrix, v: &mut ComplexMatrix, p: usize, q: usize, skip_below: f64) {
    let apq = a.get(p, q);
    let r = apq.norm();
    if r <= skip_below {
        return;
    }
    let phase = apq / r; // e^{iφ}
    let app = a.get(p, p).re;
    let aqq = a.get(q, q).re;
    let theta = (aqq - app) / (2.0 * r);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let t = if theta == 0.0 { 1.0 } else { t };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    // G = [[c, s], [−s·e^{−iφ}, c·e^{−iφ}]] on the (p, q) plane.
    let g_qp = -s * phase.conj();
    let g_qq = c * phase.conj();
    let n = a.rows;
    // A ← A G
    for k in 0..n {
        let akp = a.get(k, p);
        let akq = a.get(k, q);
        a.set(k, p, akp * c + akq * g_qp);
        a.set(k, q, akp * s + akq * g_qq);
    }
    // A ← G† A
    for k in 0..n {
        let apk = a.get(p, k);
        let aqk = a.get(q, k);
        a.set(p, k, apk * c + aqk * g_qp.conj());
        a.set(q, k, apk * s + aqk * g_qq.conj());
    }
    a.set(p, q, Complex64::new(0.0, 0.0));
    a.set(q, p, Complex64::new(0.0, 0.0));
    let dp = a.get(p, p).re;
    let dq = a.get(q, q).re;
    a.set(p, p, Complex64::new(dp, 0.0));
    a.set(q, q, Complex64::new(dq, 0.0));
    // V ← V G
    for k in 0..n {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, vkp * c + vkq * g_qp);
        v.set(k, q, vkp * s + vkq * g_qq);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_hermitian(n: usize, seed: u64) -> HermitianMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = vec![c(0.0, 0.0); n * n];
        for i in 0..n {
            data[i * n + i] = c(rng.random_range(-1.0..1.0), 0.0);
            for j in i + 1..n {
                let z = c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                data[i * n + j] = z;
                data[j * n + i] = z.conj();
            }
        }
        HermitianMatrix::from_row_major(n, data).unwrap()
    }

    fn residuals(m: &HermitianMatrix, e: &Eigen) -> (f64, f64) {
        let n = m.dim();
        let v = &e.vectors;
        let mut lam = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            lam.set(i, i, c(e.values[i], 0.0));
        }
        let rec = v.mul(&lam).mul(&v.adjoint());
        let rec_err: f64 = (0..n * n)
            .map(|k| (rec.data[k] - m.as_slice()[k]).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let vv = v.adjoint().mul(v);
        let id = ComplexMatrix::identity(n);
        let orth: f64 = (0..n * n)
            .map(|k| (vv.data[k] - id.data[k]).norm_sqr())
            .sum::<f64>()
            .sqrt();
        (rec_err, orth)
    }

    #[test]
    fn diagonal_matrix_is_sorted() {
        let m = HermitianMatrix::from_real_diagonal(&[3.0, 1.0, 2.0]);
        let e = hermitian_eigensolve(&m).unwrap();
        assert_eq!(e.values, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn pauli_x() {
        let m = HermitianMatrix::from_row_major(2, vec![c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
            .unwrap();
        let e = hermitian_eigensolve(&m).unwrap();
        assert_abs_diff_eq!(e.values[0], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.values[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn complex_two_by_two() {
        // [[1, i], [−i, 1]] has eigenvalues 0 and 2.
        let m = HermitianMatrix::from_row_major(2, vec![c(1.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(1.0, 0.0)])
            .unwrap();
        let e = hermitian_eigensolve(&m).unwrap();
        assert_abs_diff_eq!(e.values[0], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e.values[1], 2.0, epsilon = 1e-14);
    }

    #[test]
    fn reconstruction_and_unitarity() {
        for (n, seed) in [(5, 1), (16, 2), (40, 3)] {
            let m = random_hermitian(n, seed);
            let e = hermitian_eigensolve(&m).unwrap();
            let (rec, orth) = residuals(&m, &e);
            assert!(rec <= 1e-9 * m.frobenius_norm(), "reconstruction {rec}");
            assert!(orth <= 1e-9, "unitarity {orth}");
            assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn rejects_non_hermitian_input() {
        let r = HermitianMatrix::from_row_major(2, vec![c(1.0, 0.0), c(1.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn sweep_cap_reports_off_norm() {
        let m = random_hermitian(12, 9);
        match hermitian_eigensolve_with_cap(&m, 0) {
            Err(Error::Numerical { off_norm, .. }) => assert!(off_norm > 0.0),
            other => panic!("expected a numerical error, got {other:?}"),
        }
    }
}
