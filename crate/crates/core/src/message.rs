//! Discrete and Gaussian message types and the algebra used to pass them
//! between the equalizer and the decoder.
//!
//! Scalar Gaussians live in moment form. Vector Gaussians come in two
//! flavours: [`GaussianVec`] (mean, covariance) and [`CanonicalGaussianVec`]
//! (precision, potential). The canonical form is closed under products and
//! can carry rank-deficient factors such as a single scalar observation of a
//! state vector.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Numerical guard rails shared by every message operation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Guards {
    /// Smallest variance a scalar Gaussian may carry.
    pub variance_floor: f64,
    /// Largest variance; a Gaussian at the cap is treated as non-informative.
    pub variance_cap: f64,
    /// Diagonal loading applied before inverting a near-singular matrix.
    pub jitter: f64,
    /// Largest condition number accepted after jitter.
    pub cond_max: f64,
}

impl Default for Guards {
    fn default() -> Self {
        Self {
            variance_floor: 1e-10,
            variance_cap: 1e8,
            jitter: 1e-9,
            cond_max: 1e15,
        }
    }
}

impl Guards {
    pub fn clamp_variance(&self, v: f64) -> f64 {
        v.clamp(self.variance_floor, self.variance_cap)
    }

    pub fn noninformative(&self) -> Gaussian1D {
        Gaussian1D {
            mean: 0.0,
            variance: self.variance_cap,
        }
    }

    /// Precision of `g`, with a Gaussian at the cap mapping to exactly zero.
    pub fn precision(&self, g: &Gaussian1D) -> f64 {
        if g.variance >= self.variance_cap {
            0.0
        } else {
            1.0 / g.variance
        }
    }
}

/// Ordered set of real symbol values.
#[derive(Debug, Clone, PartialEq)]
pub struct Alphabet(Arc<[f64]>);

impl Alphabet {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidAlphabet("empty alphabet".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidAlphabet("non-finite symbol".into()));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidAlphabet(
                "symbols must be strictly increasing".into(),
            ));
        }
        Ok(Self(values.into()))
    }

    pub fn bpsk() -> Self {
        Self(Arc::from(vec![-1.0, 1.0]))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Mean of x² under the uniform distribution on the alphabet.
    pub fn mean_energy(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>() / self.0.len() as f64
    }

    /// Index of the alphabet point closest to `x`.
    pub fn nearest(&self, x: f64) -> usize {
        let mut best = 0;
        for (j, &a) in self.0.iter().enumerate() {
            if (a - x).abs() < (self.0[best] - x).abs() {
                best = j;
            }
        }
        best
    }
}

/// Probability mass function over an [`Alphabet`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteSymbolPmf {
    alphabet: Alphabet,
    weights: Vec<f64>,
}

impl DiscreteSymbolPmf {
    /// Builds a pmf from nonnegative weights, normalizing them.
    pub fn new(alphabet: Alphabet, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != alphabet.len() {
            return Err(Error::DimensionMismatch {
                expected: alphabet.len(),
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Numeric(format!("invalid pmf weights {weights:?}")));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Numeric("pmf weights sum to zero".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { alphabet, weights })
    }

    /// Builds a pmf from unnormalized log-weights.
    pub fn from_log_weights(alphabet: Alphabet, log_weights: &[f64]) -> Result<Self> {
        if log_weights.len() != alphabet.len() {
            return Err(Error::DimensionMismatch {
                expected: alphabet.len(),
                got: log_weights.len(),
            });
        }
        let norm = log_sum_exp(log_weights);
        if !norm.is_finite() {
            return Err(Error::Numeric(format!(
                "log-weights {log_weights:?} cannot be normalized"
            )));
        }
        let weights = log_weights.iter().map(|l| (l - norm).exp()).collect();
        Ok(Self { alphabet, weights })
    }

    pub fn uniform(alphabet: Alphabet) -> Self {
        let n = alphabet.len();
        Self {
            alphabet,
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn point_mass(alphabet: Alphabet, index: usize) -> Self {
        let mut weights = vec![0.0; alphabet.len()];
        weights[index] = 1.0;
        Self { alphabet, weights }
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Index of the most probable symbol; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (j, &w) in self.weights.iter().enumerate() {
            if w > self.weights[best] {
                best = j;
            }
        }
        best
    }
}

/// Scalar Gaussian in moment form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian1D {
    pub mean: f64,
    pub variance: f64,
}

impl Gaussian1D {
    pub fn new(mean: f64, variance: f64) -> Self {
        Self { mean, variance }
    }

    pub fn is_noninformative(&self, guards: &Guards) -> bool {
        self.variance >= guards.variance_cap
    }

    /// Log density up to the normalizing constant.
    pub fn log_kernel(&self, x: f64) -> f64 {
        let d = x - self.mean;
        -0.5 * d * d / self.variance
    }
}

/// Mean and variance of a pmf.
pub fn pmf_moments(p: &DiscreteSymbolPmf) -> (f64, f64) {
    let xs = p.alphabet.values();
    let mean: f64 = xs.iter().zip(&p.weights).map(|(x, w)| w * x).sum();
    // Central form avoids the cancellation in E[x²] - mean².
    let var: f64 = xs
        .iter()
        .zip(&p.weights)
        .map(|(x, w)| w * (x - mean) * (x - mean))
        .sum();
    (mean, var.max(0.0))
}

/// Moment-matching Gaussian projection of a pmf.
pub fn project_to_gaussian(p: &DiscreteSymbolPmf, guards: &Guards) -> Gaussian1D {
    let (mean, var) = pmf_moments(p);
    Gaussian1D::new(mean, guards.clamp_variance(var))
}

/// Result of a Gaussian division.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Division {
    pub gaussian: Gaussian1D,
    /// Set when the quotient had non-positive precision and was replaced by
    /// the non-informative Gaussian.
    pub fallback: bool,
}

/// Divides two scalar Gaussians in the precision domain.
pub fn gaussian_divide(num: &Gaussian1D, den: &Gaussian1D, guards: &Guards) -> Division {
    let p_num = guards.precision(num);
    let p_den = guards.precision(den);
    let prec = p_num - p_den;
    if !(prec > 0.0) {
        return Division {
            gaussian: guards.noninformative(),
            fallback: true,
        };
    }
    let v = 1.0 / prec;
    let m = v * (num.mean * p_num - den.mean * p_den);
    Division {
        gaussian: Gaussian1D::new(m, guards.clamp_variance(v)),
        fallback: false,
    }
}

/// Product of two scalar Gaussians (precision addition).
pub fn gaussian_multiply(a: &Gaussian1D, b: &Gaussian1D, guards: &Guards) -> Gaussian1D {
    let pa = guards.precision(a);
    let pb = guards.precision(b);
    let prec = pa + pb;
    if prec <= 0.0 {
        return guards.noninformative();
    }
    let v = 1.0 / prec;
    Gaussian1D::new(v * (a.mean * pa + b.mean * pb), guards.clamp_variance(v))
}

/// Vector Gaussian in moment form.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianVec {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianVec {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: cov.nrows(),
            });
        }
        Ok(Self { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Scalar marginal of coordinate `j`.
    pub fn coordinate(&self, j: usize) -> Gaussian1D {
        Gaussian1D::new(self.mean[j], self.cov[(j, j)])
    }
}

/// Vector Gaussian in canonical form: density ∝ exp(-½ sᵀWs + ξᵀs).
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalGaussianVec {
    pub precision: DMatrix<f64>,
    pub potential: DVector<f64>,
}

impl CanonicalGaussianVec {
    pub fn new(precision: DMatrix<f64>, potential: DVector<f64>) -> Result<Self> {
        if precision.nrows() != potential.len() || precision.ncols() != potential.len() {
            return Err(Error::DimensionMismatch {
                expected: potential.len(),
                got: precision.nrows(),
            });
        }
        Ok(Self {
            precision,
            potential,
        })
    }

    /// The flat (zero-precision) message of dimension `d`.
    pub fn flat(d: usize) -> Self {
        Self {
            precision: DMatrix::zeros(d, d),
            potential: DVector::zeros(d),
        }
    }

    pub fn dim(&self) -> usize {
        self.potential.len()
    }
}

/// Product of canonical Gaussian factors.
pub fn canonical_combine(factors: &[CanonicalGaussianVec]) -> Result<CanonicalGaussianVec> {
    let first = factors
        .first()
        .ok_or_else(|| Error::Numeric("nothing to combine".into()))?;
    let d = first.dim();
    let mut out = CanonicalGaussianVec::flat(d);
    for f in factors {
        if f.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: f.dim(),
            });
        }
        out.precision += &f.precision;
        out.potential += &f.potential;
    }
    Ok(out)
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for r in 0..n {
        for c in (r + 1)..n {
            let avg = 0.5 * (m[(r, c)] + m[(c, r)]);
            m[(r, c)] = avg;
            m[(c, r)] = avg;
        }
    }
}

/// Inverse of a symmetric PSD matrix. Cholesky is used whenever it succeeds
/// with a pivot spread inside `cond_max`; otherwise the diagonal is loaded
/// with `jitter` when the smallest eigenvalue falls below it.
pub fn invert_psd(m: &DMatrix<f64>, guards: &Guards) -> Result<DMatrix<f64>> {
    let mut sym = m.clone();
    symmetrize(&mut sym);
    if let Some(chol) = sym.clone().cholesky() {
        let l = chol.l_dirty();
        let pivots = (0..l.nrows()).map(|j| l[(j, j)] * l[(j, j)]);
        let (lo, hi) = pivots.fold((f64::INFINITY, 0.0f64), |(lo, hi), p| {
            (lo.min(p), hi.max(p))
        });
        // Scale-free test: a tiny but well-conditioned covariance is exact.
        if lo > 0.0 && hi / lo <= guards.cond_max {
            let mut inv = chol.inverse();
            symmetrize(&mut inv);
            return Ok(inv);
        }
    }
    invert_by_eigen(sym, guards)
}

fn invert_by_eigen(sym: DMatrix<f64>, guards: &Guards) -> Result<DMatrix<f64>> {
    let n = sym.nrows();
    let eig = SymmetricEigen::new(sym);
    let min = eig.eigenvalues.min();
    let shift = if min < guards.jitter {
        guards.jitter
    } else {
        0.0
    };
    let vals = eig.eigenvalues.map(|l| l + shift);
    let lo = vals.min();
    let hi = vals.max();
    let condition = hi / lo;
    if !(lo > 0.0) || !(condition <= guards.cond_max) {
        return Err(Error::NotInvertible { condition });
    }
    let q = &eig.eigenvectors;
    let mut inv = DMatrix::zeros(n, n);
    for k in 0..n {
        let col = q.column(k);
        inv += (col * col.transpose()) / vals[k];
    }
    symmetrize(&mut inv);
    Ok(inv)
}

/// Converts canonical to moment form, with jitter on a near-singular precision.
pub fn canonical_to_moment(c: &CanonicalGaussianVec, guards: &Guards) -> Result<GaussianVec> {
    let mut sym = c.precision.clone();
    symmetrize(&mut sym);
    let cov = invert_by_eigen(sym, guards)?;
    let mean = &cov * &c.potential;
    Ok(GaussianVec { mean, cov })
}

/// Numerically stable `ln Σ exp(xᵢ)`. Returns `-inf` for an empty slice or
/// when every term is `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `ln(e^a + e^b)` without overflow.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}
