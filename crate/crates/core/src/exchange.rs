//! Messages crossing the equalizer / demodulator-decoder boundary.
//!
//! Decoder → equalizer: a discrete symbol pmf becomes a Gaussian either by
//! direct moment matching or by the EP rule (project the belief, then divide
//! out the incoming Gaussian).
//!
//! Equalizer → decoder: either the Gaussian extrinsic restricted to the
//! alphabet (GA), or the partial Gaussian approximation (PGA), which keeps
//! the discrete messages of the strongly interfering neighbours and sums them
//! out against the Gaussian factor left after dividing the window belief by
//! the Gaussian symbol messages.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::message::{
    gaussian_divide, invert_psd, log_add, project_to_gaussian, Alphabet, DiscreteSymbolPmf,
    Division, Gaussian1D, GaussianVec, Guards,
};

/// EP conversion of a discrete message given the Gaussian message arriving
/// at the symbol node from the other side.
pub fn ep_convert(
    discrete: &DiscreteSymbolPmf,
    incoming: &Gaussian1D,
    guards: &Guards,
) -> Division {
    let xs = discrete.alphabet().values();
    let log_w: Vec<f64> = xs
        .iter()
        .zip(discrete.weights())
        .map(|(&x, &b)| {
            if b > 0.0 {
                b.ln() + incoming.log_kernel(x)
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let tilted = DiscreteSymbolPmf::from_log_weights(discrete.alphabet().clone(), &log_w)
        .expect("a normalized pmf has a positive weight");
    let belief = project_to_gaussian(&tilted, guards);
    gaussian_divide(&belief, incoming, guards)
}

/// Direct moment-matching conversion.
pub fn direct_convert(discrete: &DiscreteSymbolPmf, guards: &Guards) -> Gaussian1D {
    project_to_gaussian(discrete, guards)
}

/// Restriction of a Gaussian extrinsic to the alphabet.
pub fn ga_message(extrinsic: &Gaussian1D, alphabet: &Alphabet) -> DiscreteSymbolPmf {
    let log_w: Vec<f64> = alphabet
        .values()
        .iter()
        .map(|&x| extrinsic.log_kernel(x))
        .collect();
    DiscreteSymbolPmf::from_log_weights(alphabet.clone(), &log_w).expect("finite Gaussian kernel")
}

/// Gaussian factor `N(x^D; m_e, V_e)` left after dividing the window belief
/// by the Gaussian symbol messages, kept in precision form because the
/// quotient need not be a proper density.
#[derive(Debug, Clone, PartialEq)]
pub struct PgaFactor {
    /// `W_e = (P V Pᵀ)⁻¹ − V_x⁻¹`.
    pub precision: DMatrix<f64>,
    /// `W_e m_e = (P V Pᵀ)⁻¹ P m − V_x⁻¹ m_x`.
    pub potential: DVector<f64>,
    /// Set when `W_e` is not positive definite.
    pub indefinite: bool,
}

impl PgaFactor {
    pub fn dim(&self) -> usize {
        self.potential.len()
    }

    /// `(m_e, V_e)` when the factor is a proper Gaussian.
    pub fn moments(&self) -> Option<(DVector<f64>, DMatrix<f64>)> {
        if self.indefinite {
            return None;
        }
        let chol = self.precision.clone().cholesky()?;
        let v = chol.inverse();
        let m = &v * &self.potential;
        Some((m, v))
    }

    /// `-½ xᵀ W_e x + ξ_eᵀ x`, the log of the factor up to a constant.
    pub fn log_kernel(&self, x: &DVector<f64>) -> f64 {
        -0.5 * x.dot(&(&self.precision * x)) + self.potential.dot(x)
    }
}

/// Builds the PGA factor from the window marginal `b_{i'}(x_i^D)` and the
/// Gaussian messages of the symbols in the window.
pub fn pga_factor(
    window: &GaussianVec,
    priors: &[Gaussian1D],
    guards: &Guards,
) -> Result<PgaFactor> {
    let m = window.dim();
    if priors.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: priors.len(),
        });
    }
    let window_prec = invert_psd(&window.cov, guards)?;
    let mut potential = &window_prec * &window.mean;
    let mut precision = window_prec;
    for (j, p) in priors.iter().enumerate() {
        let lam = guards.precision(p);
        precision[(j, j)] -= lam;
        potential[j] -= lam * p.mean;
    }
    let indefinite = precision.clone().cholesky().is_none();
    Ok(PgaFactor {
        precision,
        potential,
        indefinite,
    })
}

/// PGA message to the symbol at coordinate `own` of the factor.
///
/// `neighbors` holds the discrete messages of the other coordinates, in
/// factor order with `own` skipped. The sum over the `|X|^(M-1)` neighbour
/// configurations walks a reflected Gray code so each step changes one
/// coordinate and the quadratic form is updated in `O(M)`.
pub fn pga_message(
    factor: &PgaFactor,
    own: usize,
    neighbors: &[&DiscreteSymbolPmf],
    alphabet: &Alphabet,
    guards: &Guards,
) -> Result<DiscreteSymbolPmf> {
    let m = factor.dim();
    if own >= m || neighbors.len() + 1 != m {
        return Err(Error::DimensionMismatch {
            expected: m.saturating_sub(1),
            got: neighbors.len(),
        });
    }
    if m == 1 {
        // Same path as the GA message: a non-positive precision becomes the
        // non-informative Gaussian.
        let w = factor.precision[(0, 0)];
        let ext = if w > 0.0 {
            Gaussian1D::new(factor.potential[0] / w, guards.clamp_variance(1.0 / w))
        } else {
            guards.noninformative()
        };
        return Ok(ga_message(&ext, alphabet));
    }

    let xs = alphabet.values();
    let q = xs.len();
    let others: Vec<usize> = (0..m).filter(|&c| c != own).collect();
    let log_prior: Vec<Vec<f64>> = neighbors
        .iter()
        .map(|p| p.weights().iter().map(|&w| w.max(1e-300).ln()).collect())
        .collect();
    let w = &factor.precision;
    let xi = &factor.potential;

    let mut out = vec![f64::NEG_INFINITY; q];
    let mut digits = vec![0usize; others.len()];
    let mut dirs = vec![1isize; others.len()];
    let mut x = DVector::zeros(m);
    for (slot, &val) in out.iter_mut().zip(xs) {
        digits.fill(0);
        dirs.fill(1);
        x.fill(0.0);
        x[own] = val;
        for &c in &others {
            x[c] = xs[0];
        }
        let mut y = w * &x;
        let mut quad = -0.5 * x.dot(&y) + xi.dot(&x);
        let mut prior: f64 = log_prior.iter().map(|lp| lp[0]).sum();
        *slot = quad + prior;
        while let Some(j) = (0..digits.len()).find(|&j| {
            let next = digits[j] as isize + dirs[j];
            next >= 0 && next < q as isize
        }) {
            for d in dirs.iter_mut().take(j) {
                *d = -*d;
            }
            let from = digits[j];
            let to = (from as isize + dirs[j]) as usize;
            digits[j] = to;
            let c = others[j];
            let delta = xs[to] - xs[from];
            quad += -delta * y[c] - 0.5 * w[(c, c)] * delta * delta + xi[c] * delta;
            for r in 0..m {
                y[r] += delta * w[(r, c)];
            }
            x[c] = xs[to];
            prior += log_prior[j][to] - log_prior[j][from];
            *slot = log_add(*slot, quad + prior);
        }
    }
    DiscreteSymbolPmf::from_log_weights(alphabet.clone(), &out)
}
