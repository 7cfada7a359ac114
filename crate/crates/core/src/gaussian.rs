//! Complex-Gaussian and categorical message algebra.
//!
//! Gaussian messages over channel vectors live in natural parameters
//! (diagonal precision and precision-weighted mean) so that a non-informative
//! message is exactly representable as zero precision and message products
//! reduce to additions. Categorical messages over data symbols are normalized
//! pmfs over a shared [`Constellation`].

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMatrix;

/// Default precision floor applied when a Gaussian division yields a
/// non-positive precision, expressed relative to the unit-observation
/// precision `sigma_x^2 / sigma_v^2`.
pub const DEFAULT_PRECISION_FLOOR: f64 = 1e-8;

const NORMALIZATION_TOL: f64 = 1e-12;

/// Largest log-ratio kept between two finite categorical weights.
const LOG_WEIGHT_SPAN: f64 = 700.0;

/// Ordered set of transmit symbols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constellation(Arc<[Complex64]>);

impl Constellation {
    /// Rejects empty sets and any point at the origin, since the conditional
    /// channel posterior divides by the symbol value.
    pub fn new(points: Vec<Complex64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("empty constellation".into()));
        }
        if let Some(p) = points.iter().find(|p| p.norm() == 0.0 || !p.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "constellation point {p} is zero or not finite"
            )));
        }
        Ok(Self(points.into()))
    }

    /// Square M-QAM scaled to average symbol power `power`.
    pub fn square_qam(order: usize, power: f64) -> Result<Self> {
        let side = (order as f64).sqrt().round() as usize;
        if side < 2 || side * side != order {
            return Err(Error::InvalidArgument(format!(
                "{order}-QAM is not a square constellation"
            )));
        }
        let levels: Vec<f64> = (0..side).map(|i| 2.0 * i as f64 - (side - 1) as f64).collect();
        let mut points = Vec::with_capacity(order);
        for &q in levels.iter().rev() {
            for &i in &levels {
                points.push(Complex64::new(i, q));
            }
        }
        let avg: f64 = points.iter().map(|p| p.norm_sqr()).sum::<f64>() / order as f64;
        let scale = (power / avg).sqrt();
        Self::new(points.into_iter().map(|p| p * scale).collect())
    }

    pub fn points(&self) -> &[Complex64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn average_power(&self) -> f64 {
        self.0.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.0.len() as f64
    }

    /// True when every point has the same modulus (PSK, 4QAM).
    pub fn is_constant_modulus(&self) -> bool {
        let r0 = self.0[0].norm_sqr();
        self.0.iter().all(|p| (p.norm_sqr() - r0).abs() <= 1e-12 * r0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|p| p * factor).collect())
    }
}

/// Complex Gaussian with diagonal covariance, in natural parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagGaussianMsg {
    prec: Vec<f64>,
    prec_mean: Vec<Complex64>,
}

impl DiagGaussianMsg {
    /// Zero precision in every component.
    pub fn non_informative(dim: usize) -> Self {
        Self {
            prec: vec![0.0; dim],
            prec_mean: vec![Complex64::new(0.0, 0.0); dim],
        }
    }

    pub fn from_natural(prec: Vec<f64>, prec_mean: Vec<Complex64>) -> Result<Self> {
        if prec.len() != prec_mean.len() {
            return Err(Error::DimensionMismatch {
                expected: prec.len(),
                found: prec_mean.len(),
            });
        }
        if prec.iter().any(|p| !(*p >= 0.0) || !p.is_finite())
            || prec_mean.iter().any(|m| !m.is_finite())
        {
            return Err(Error::InvalidArgument(
                "natural parameters must be finite with nonnegative precision".into(),
            ));
        }
        let prec_mean = prec
            .iter()
            .zip(prec_mean)
            .map(|(&p, m)| if p == 0.0 { Complex64::new(0.0, 0.0) } else { m })
            .collect();
        Ok(Self { prec, prec_mean })
    }

    /// Builds from mean and per-component variance; an infinite variance is a
    /// non-informative component.
    pub fn from_moments(mean: &[Complex64], var: &[f64]) -> Result<Self> {
        if mean.len() != var.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                found: var.len(),
            });
        }
        if var.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidArgument(
                "variance must be strictly positive".into(),
            ));
        }
        let prec: Vec<f64> = var.iter().map(|v| v.recip()).collect();
        let prec_mean = mean.iter().zip(&prec).map(|(m, p)| m * p).collect();
        Self::from_natural(prec, prec_mean)
    }

    /// `N(mean, var * I)`.
    pub fn isotropic(mean: &[Complex64], var: f64) -> Result<Self> {
        Self::from_moments(mean, &vec![var; mean.len()])
    }

    pub fn dim(&self) -> usize {
        self.prec.len()
    }

    pub fn prec(&self) -> &[f64] {
        &self.prec
    }

    pub fn prec_mean(&self) -> &[Complex64] {
        &self.prec_mean
    }

    /// Mean, with zero in non-informative components.
    pub fn mean(&self) -> Vec<Complex64> {
        self.prec
            .iter()
            .zip(&self.prec_mean)
            .map(|(&p, &m)| if p > 0.0 { m / p } else { Complex64::new(0.0, 0.0) })
            .collect()
    }

    /// Per-component variance; infinite where the precision is zero.
    pub fn variance(&self) -> Vec<f64> {
        self.prec.iter().map(|p| p.recip()).collect()
    }

    pub fn is_non_informative(&self) -> bool {
        self.prec.iter().all(|&p| p == 0.0)
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }

    /// Product of two Gaussian messages: natural parameters add.
    pub fn product(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self {
            prec: self.prec.iter().zip(&other.prec).map(|(a, b)| a + b).collect(),
            prec_mean: self
                .prec_mean
                .iter()
                .zip(&other.prec_mean)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    /// In-place product, for accumulating many messages.
    pub fn absorb(&mut self, other: &Self) {
        debug_assert_eq!(self.dim(), other.dim());
        for (a, b) in self.prec.iter_mut().zip(&other.prec) {
            *a += b;
        }
        for (a, b) in self.prec_mean.iter_mut().zip(&other.prec_mean) {
            *a += b;
        }
    }

    /// Quotient `self / den`, without any clamping. Used for leave-one-out
    /// products where the result is known to stay a valid message.
    pub fn remove(&self, den: &Self) -> Result<Self> {
        self.check_dim(den)?;
        Ok(Self {
            prec: self
                .prec
                .iter()
                .zip(&den.prec)
                .map(|(a, b)| (a - b).max(0.0))
                .collect(),
            prec_mean: self
                .prec_mean
                .iter()
                .zip(&den.prec_mean)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// Gaussian quotient `num / den` with precision clamping.
    ///
    /// Components whose precision difference falls below `floor` are set to
    /// precision `floor` and keep the mean of `num`. Returns the quotient and
    /// the number of clamped components.
    pub fn divide(num: &Self, den: &Self, floor: f64) -> Result<(Self, usize)> {
        num.check_dim(den)?;
        if !(floor > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "precision floor must be positive, got {floor}"
            )));
        }
        let mut clamped = 0;
        let mut prec = Vec::with_capacity(num.dim());
        let mut prec_mean = Vec::with_capacity(num.dim());
        for i in 0..num.dim() {
            let p = num.prec[i] - den.prec[i];
            if p >= floor {
                prec.push(p);
                prec_mean.push(num.prec_mean[i] - den.prec_mean[i]);
            } else {
                clamped += 1;
                let m = if num.prec[i] > 0.0 {
                    num.prec_mean[i] / num.prec[i]
                } else {
                    Complex64::new(0.0, 0.0)
                };
                prec.push(floor);
                prec_mean.push(m * floor);
            }
        }
        Ok((Self { prec, prec_mean }, clamped))
    }

    /// Convex combination of natural parameters: `beta * self + (1 - beta) * old`.
    pub fn damped(&self, old: &Self, beta: f64) -> Self {
        if beta >= 1.0 {
            return self.clone();
        }
        Self {
            prec: self
                .prec
                .iter()
                .zip(&old.prec)
                .map(|(n, o)| beta * n + (1.0 - beta) * o)
                .collect(),
            prec_mean: self
                .prec_mean
                .iter()
                .zip(&old.prec_mean)
                .map(|(n, o)| n * beta + o * (1.0 - beta))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.prec.iter().all(|p| p.is_finite()) && self.prec_mean.iter().all(|m| m.is_finite())
    }
}

/// Complex Gaussian with full Hermitian covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct FullGaussian {
    pub mean: Vec<Complex64>,
    pub cov: CMatrix,
}

impl FullGaussian {
    pub fn new(mean: Vec<Complex64>, cov: CMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::DimensionMismatch {
                expected: cov.dim(),
                found: mean.len(),
            });
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Normalized pmf over a constellation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalMsg {
    constellation: Constellation,
    pmf: Vec<f64>,
}

impl CategoricalMsg {
    pub fn uniform(constellation: &Constellation) -> Self {
        let n = constellation.len();
        Self {
            constellation: constellation.clone(),
            pmf: vec![1.0 / n as f64; n],
        }
    }

    pub fn point_mass(constellation: &Constellation, index: usize) -> Self {
        let mut pmf = vec![0.0; constellation.len()];
        pmf[index] = 1.0;
        Self {
            constellation: constellation.clone(),
            pmf,
        }
    }

    /// Validates an already-normalized pmf.
    pub fn new(constellation: &Constellation, pmf: Vec<f64>) -> Result<Self> {
        if pmf.len() != constellation.len() {
            return Err(Error::DimensionMismatch {
                expected: constellation.len(),
                found: pmf.len(),
            });
        }
        if pmf.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::InvalidArgument("negative probability".into()));
        }
        let sum: f64 = pmf.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::NotNormalized(sum));
        }
        Ok(Self {
            constellation: constellation.clone(),
            pmf,
        })
    }

    /// Normalizes unnormalized log-weights with max subtraction.
    ///
    /// Returns `None` when no weight is finite.
    pub fn from_log_weights(constellation: &Constellation, logw: &[f64]) -> Option<Self> {
        debug_assert_eq!(logw.len(), constellation.len());
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return None;
        }
        // Finite weights are kept above the normal range so that a very
        // unlikely symbol is never confused with an impossible one.
        let mut pmf: Vec<f64> = logw
            .iter()
            .map(|&w| {
                if w.is_finite() {
                    (w - max).max(-LOG_WEIGHT_SPAN).exp()
                } else {
                    0.0
                }
            })
            .collect();
        let sum: f64 = pmf.iter().sum();
        pmf.iter_mut().for_each(|p| *p /= sum);
        Some(Self {
            constellation: constellation.clone(),
            pmf,
        })
    }

    /// Normalized product of several pmfs over the same constellation,
    /// accumulated in the log domain.
    pub fn product<'a>(
        constellation: &Constellation,
        factors: impl IntoIterator<Item = &'a CategoricalMsg>,
    ) -> Option<Self> {
        let mut logw = vec![0.0; constellation.len()];
        for f in factors {
            for (acc, p) in logw.iter_mut().zip(&f.pmf) {
                *acc += p.ln();
            }
        }
        Self::from_log_weights(constellation, &logw)
    }

    pub fn constellation(&self) -> &Constellation {
        &self.constellation
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn log_pmf(&self) -> impl Iterator<Item = f64> + '_ {
        self.pmf.iter().map(|p| p.ln())
    }

    /// Most probable index; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.pmf.iter().enumerate() {
            if p > self.pmf[best] {
                best = i;
            }
        }
        best
    }

    pub fn total_variation(&self, other: &Self) -> f64 {
        0.5 * self
            .pmf
            .iter()
            .zip(&other.pmf)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }

    /// Mean, variance and second moment of the symbol under this pmf.
    pub fn moments(&self) -> SymbolMoments {
        categorical_moments(self)
    }
}

/// First two moments of a data symbol under a categorical message.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolMoments {
    pub mean: Complex64,
    pub variance: f64,
    pub second_moment: f64,
}

pub fn categorical_moments(msg: &CategoricalMsg) -> SymbolMoments {
    let mut mean = Complex64::new(0.0, 0.0);
    let mut second_moment = 0.0;
    for (p, s) in msg.pmf.iter().zip(msg.constellation.points()) {
        mean += s * p;
        second_moment += p * s.norm_sqr();
    }
    SymbolMoments {
        mean,
        variance: (second_moment - mean.norm_sqr()).max(0.0),
        second_moment,
    }
}

/// Moment-matches a Gaussian mixture onto a diagonal-covariance Gaussian.
///
/// `components[i]` is the Gaussian attached to constellation point `i`,
/// weighted by `weights.pmf()[i]`. Off-diagonal second moments are dropped.
pub fn project_mixture_to_diag(
    weights: &CategoricalMsg,
    components: &[FullGaussian],
) -> Result<DiagGaussianMsg> {
    if components.len() != weights.pmf.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.pmf.len(),
            found: components.len(),
        });
    }
    let sum: f64 = weights.pmf.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::NotNormalized(sum));
    }
    let n = components[0].dim();
    let mut mean = vec![Complex64::new(0.0, 0.0); n];
    let mut second = vec![0.0; n];
    for (w, c) in weights.pmf.iter().zip(components) {
        if c.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: c.dim(),
            });
        }
        for i in 0..n {
            mean[i] += c.mean[i] * w;
            second[i] += w * (c.cov[(i, i)].re + c.mean[i].norm_sqr());
        }
    }
    let var: Vec<f64> = second
        .iter()
        .zip(&mean)
        .map(|(s, m)| s - m.norm_sqr())
        .collect();
    DiagGaussianMsg::from_moments(&mean, &var)
}

/// Log-density of a circularly-symmetric complex Gaussian,
/// `-(x-m)^H C^{-1} (x-m) - ln det(pi C)`.
pub fn gaussian_log_pdf(obs: &[Complex64], mean: &[Complex64], cov: &CMatrix) -> Result<f64> {
    if obs.len() != mean.len() || obs.len() != cov.dim() {
        return Err(Error::DimensionMismatch {
            expected: cov.dim(),
            found: obs.len().max(mean.len()),
        });
    }
    let chol = cov.cholesky()?;
    let diff: Vec<Complex64> = obs.iter().zip(mean).map(|(a, b)| a - b).collect();
    Ok(-chol.quad_form(&diff) - chol.ln_det() - obs.len() as f64 * PI.ln())
}

/// Maximum relative deviation between `(A^-1 + B^-1)^-1`, `A (A+B)^-1 B` and
/// `B (A+B)^-1 A`.
pub fn matrix_identity_check(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let a_inv = a.cholesky_strict()?.inverse();
    let b_inv = b.cholesky_strict()?.inverse();
    let harmonic = a_inv.add(&b_inv).cholesky_strict()?.inverse();
    let sum_inv = a.add(b).cholesky_strict()?.inverse();
    let left = a.matmul(&sum_inv).matmul(b);
    let right = b.matmul(&sum_inv).matmul(a);
    let scale = harmonic.max_abs();
    Ok(harmonic.sub(&left).max_abs().max(harmonic.sub(&right).max_abs()) / scale)
}
