//! Small dense complex matrices.
//!
//! Everything here is sized by the antenna count of one access point (two in
//! the reference scenario), so matrices are stored row-major in a flat `Vec`
//! and factorized with a plain Cholesky decomposition.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative jitter added to the diagonal before inverting a near-singular
/// Hermitian matrix, scaled by `trace / n`.
pub const PD_JITTER: f64 = 1e-12;

/// Square complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    n: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_real_diagonal(&vec![1.0; n])
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(d, 0.0);
        }
        m
    }

    /// Builds a matrix from row-major entries.
    pub fn from_rows(n: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: data.len(),
            });
        }
        Ok(Self { n, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn diagonal_re(&self) -> Vec<f64> {
        (0..self.n).map(|i| self[(i, i)].re).collect()
    }

    pub fn trace_re(&self) -> f64 {
        (0..self.n).map(|i| self[(i, i)].re).sum()
    }

    /// `self += alpha * v v^H`
    pub fn add_outer(&mut self, alpha: f64, v: &[Complex64]) {
        debug_assert_eq!(v.len(), self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                self.data[i * self.n + j] += v[i] * v[j].conj() * alpha;
            }
        }
    }

    /// `self += diag(d)`
    pub fn add_real_diagonal(&mut self, d: &[f64]) {
        debug_assert_eq!(d.len(), self.n);
        for (i, &x) in d.iter().enumerate() {
            self.data[i * self.n + i].re += x;
        }
    }

    pub fn add_scaled(&mut self, alpha: f64, other: &CMatrix) {
        debug_assert_eq!(other.n, self.n);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * alpha;
        }
    }

    pub fn scaled(&self, alpha: f64) -> CMatrix {
        CMatrix {
            n: self.n,
            data: self.data.iter().map(|x| x * alpha).collect(),
        }
    }

    pub fn matvec(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..self.n)
            .map(|i| {
                self.data[i * self.n..(i + 1) * self.n]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        let n = self.n;
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn sub(&self, other: &CMatrix) -> CMatrix {
        CMatrix {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn add(&self, other: &CMatrix) -> CMatrix {
        CMatrix {
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    /// Replaces the matrix by its Hermitian part.
    pub fn hermitize(&mut self) {
        let n = self.n;
        for i in 0..n {
            self.data[i * n + i].im = 0.0;
            for j in (i + 1)..n {
                let avg = (self.data[i * n + j] + self.data[j * n + i].conj()) * 0.5;
                self.data[i * n + j] = avg;
                self.data[j * n + i] = avg.conj();
            }
        }
    }

    pub fn is_hermitian(&self, rel_tol: f64) -> bool {
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        let n = self.n;
        (0..n).all(|i| {
            (i..n).all(|j| {
                (self.data[i * n + j] - self.data[j * n + i].conj()).norm() <= rel_tol * scale
            })
        })
    }

    /// Cholesky factor of a Hermitian positive-definite matrix.
    ///
    /// If a pivot falls below `PD_JITTER * trace / n` the factorization is
    /// retried once on `self + jitter * I`.
    pub fn cholesky(&self) -> Result<Cholesky> {
        let jitter = PD_JITTER * (self.trace_re() / self.n as f64).abs();
        match factor(self, jitter) {
            Some(l) => Ok(l),
            None => {
                let mut reg = self.clone();
                reg.add_real_diagonal(&vec![jitter; self.n]);
                factor(&reg, 0.0).ok_or(Error::NotPositiveDefinite)
            }
        }
    }

    /// Cholesky factor without regularization; near-singular input is an error.
    pub fn cholesky_strict(&self) -> Result<Cholesky> {
        let tol = 1e-14 * (self.trace_re() / self.n as f64).abs();
        factor(self, tol).ok_or(Error::NotPositiveDefinite)
    }

    /// Inverse of a Hermitian positive-definite matrix.
    pub fn hpd_inverse(&self) -> Result<CMatrix> {
        Ok(self.cholesky()?.inverse())
    }
}

fn factor(a: &CMatrix, min_pivot: f64) -> Option<Cholesky> {
    let n = a.n;
    let mut l = CMatrix::zeros(n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > min_pivot) || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = Complex64::new(d, 0.0);
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / d;
        }
    }
    Some(Cholesky { l })
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.n + j]
    }
}

/// Lower-triangular factor `L` with `A = L L^H`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: CMatrix,
}

impl Cholesky {
    pub fn ln_det(&self) -> f64 {
        (0..self.l.n).map(|i| self.l[(i, i)].re.ln()).sum::<f64>() * 2.0
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.l.n;
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                let lik = self.l[(i, k)];
                let yk = y[k];
                y[i] -= lik * yk;
            }
            y[i] /= self.l[(i, i)].re;
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let lki = self.l[(k, i)].conj();
                let yk = y[k];
                y[i] -= lki * yk;
            }
            y[i] /= self.l[(i, i)].re;
        }
        y
    }

    /// `b^H A^{-1} b`
    pub fn quad_form(&self, b: &[Complex64]) -> f64 {
        let n = self.l.n;
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                let lik = self.l[(i, k)];
                let yk = y[k];
                y[i] -= lik * yk;
            }
            y[i] /= self.l[(i, i)].re;
        }
        y.iter().map(|v| v.norm_sqr()).sum()
    }

    pub fn inverse(&self) -> CMatrix {
        let n = self.l.n;
        let mut inv = CMatrix::zeros(n);
        let mut e = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
            e[j] = Complex64::new(1.0, 0.0);
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv.hermitize();
        inv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sample() -> CMatrix {
        CMatrix::from_rows(2, vec![c(3.0, 0.0), c(1.0, -0.5), c(1.0, 0.5), c(2.0, 0.0)]).unwrap()
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let a = sample();
        let inv = a.hpd_inverse().unwrap();
        let prod = a.matmul(&inv);
        assert!(prod.sub(&CMatrix::identity(2)).max_abs() < 1e-14);
    }

    #[test]
    fn log_det_matches_closed_form() {
        let a = sample();
        // det = 3*2 - |1-0.5i|^2 = 4.75
        assert!((a.cholesky().unwrap().ln_det() - 4.75f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn quad_form_matches_solve() {
        let a = sample();
        let b = vec![c(0.3, -1.0), c(2.0, 0.1)];
        let ch = a.cholesky().unwrap();
        let x = ch.solve(&b);
        let direct: Complex64 = b.iter().zip(&x).map(|(bi, xi)| bi.conj() * xi).sum();
        assert!((direct.re - ch.quad_form(&b)).abs() < 1e-13);
        assert!(direct.im.abs() < 1e-13);
    }

    #[test]
    fn singular_matrix_gets_jitter() {
        // rank one: v v^H
        let mut a = CMatrix::zeros(2);
        a.add_outer(1.0, &[c(1.0, 0.0), c(1.0, 0.0)]);
        assert!(a.cholesky().is_ok());
    }

    #[test]
    fn indefinite_matrix_rejected() {
        let a = CMatrix::from_real_diagonal(&[1.0, -1.0]);
        assert!(matches!(a.cholesky(), Err(Error::NotPositiveDefinite)));
    }

    #[test]
    fn zero_matrix_rejected() {
        assert!(CMatrix::zeros(2).cholesky().is_err());
    }
}
