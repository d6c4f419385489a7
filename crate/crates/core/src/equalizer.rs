//! Gaussian message passing along the channel-state chain.
//!
//! The state `s_i = [x_{i-L+1}, ..., x_i]` evolves as `s_i = G s_{i-1} + e x_i`
//! with `G` the upward shift and `e` the last unit vector, and is observed
//! through `r_i = hᵀ s_i + n_i`. With Gaussian symbol messages the chain is a
//! linear-Gaussian state-space model, so BP on it is exact:
//!
//! * forward: Kalman filtering in moment form. The predictive density of
//!   `s_i` is the message from `f_{T_i}`; after the scalar update with `r_i`
//!   it also carries the observation message.
//! * backward: canonical form. `G` is singular, so the message sent back to
//!   `s_{i-1}` only exists as a (rank-deficient) precision.
//! * belief: filtered moments times the backward canonical message,
//!   `V = (I + P W)⁻¹ P`, `m = μ + V (ξ − W μ)`. This needs no inverse of `P`,
//!   which is singular whenever the window covers the zero padding.
//!
//! Dense `L×L` blocks are stored row-major in flat `Vec<f64>`s.

use nalgebra::{DMatrix, DVector};

use crate::channel::ChannelSpec;
use crate::error::{Error, Result};
use crate::message::{CanonicalGaussianVec, Gaussian1D, GaussianVec, Guards};

/// Likelihood `N(r_i; hᵀ s, σ²)` of the state as a canonical factor.
pub fn observation_message(r_i: f64, spec: &ChannelSpec) -> CanonicalGaussianVec {
    let h = DVector::from_column_slice(spec.h());
    let s2 = spec.sigma2();
    CanonicalGaussianVec {
        precision: &h * h.transpose() / s2,
        potential: h * (r_i / s2),
    }
}

/// Shift operators of the state transition.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionOperators {
    pub g: DMatrix<f64>,
    pub e: DVector<f64>,
}

impl TransitionOperators {
    pub fn new(len: usize) -> Self {
        let mut g = DMatrix::zeros(len, len);
        for l in 0..len.saturating_sub(1) {
            g[(l, l + 1)] = 1.0;
        }
        let mut e = DVector::zeros(len);
        e[len - 1] = 1.0;
        Self { g, e }
    }
}

/// Forward and backward messages of one frame.
#[derive(Debug, Clone)]
pub struct StateChain {
    len: usize,
    n: usize,
    sigma2: f64,
    h: Vec<f64>,
    /// Gaussian messages into the chain, `x_1..x_{N+L-1}` (padding included).
    priors: Vec<Gaussian1D>,
    /// Filtered means/covariances of `s_i`, `i = 0..=N+L-1`.
    filt_mean: Vec<f64>,
    filt_cov: Vec<f64>,
    /// Backward canonical messages to `s_i`, `i = 0..=N+L-1`.
    back_prec: Vec<f64>,
    back_pot: Vec<f64>,
}

impl StateChain {
    /// Runs the forward and backward passes for received samples `r`
    /// (length `N+L-1`) and Gaussian symbol messages `priors` (length `N`).
    pub fn run(
        r: &[f64],
        spec: &ChannelSpec,
        priors: &[Gaussian1D],
        guards: &Guards,
    ) -> Result<Self> {
        let mut chain = Self::new(r, spec, priors, guards)?;
        chain.forward_pass(r);
        chain.backward_pass(r);
        Ok(chain)
    }

    fn new(r: &[f64], spec: &ChannelSpec, priors: &[Gaussian1D], guards: &Guards) -> Result<Self> {
        let len = spec.len();
        let n = priors.len();
        if r.len() != n + len - 1 {
            return Err(Error::LengthMismatch {
                context: "received samples",
                expected: n + len - 1,
                got: r.len(),
            });
        }
        let steps = n + len - 1;
        let mut all_priors = priors.to_vec();
        all_priors.resize(steps, Gaussian1D::new(0.0, guards.variance_floor));
        Ok(Self {
            len,
            n,
            sigma2: spec.sigma2(),
            h: spec.h().to_vec(),
            priors: all_priors,
            filt_mean: vec![0.0; (steps + 1) * len],
            filt_cov: vec![0.0; (steps + 1) * len * len],
            back_prec: vec![0.0; (steps + 1) * len * len],
            back_pot: vec![0.0; (steps + 1) * len],
        })
    }

    /// Number of states after `s_0`, i.e. `N+L-1`.
    pub fn steps(&self) -> usize {
        self.n + self.len - 1
    }

    pub fn num_symbols(&self) -> usize {
        self.n
    }

    pub fn memory_len(&self) -> usize {
        self.len
    }

    fn forward_pass(&mut self, r: &[f64]) {
        let len = self.len;
        let ll = len * len;
        let mut pm = vec![0.0; len];
        let mut pc = vec![0.0; ll];
        let mut u = vec![0.0; len];
        for i in 1..=self.steps() {
            let prior = self.priors[i - 1];
            predict(
                &self.filt_mean[(i - 1) * len..i * len],
                &self.filt_cov[(i - 1) * ll..i * ll],
                prior,
                len,
                &mut pm,
                &mut pc,
            );
            // Scalar-innovation update with r_i.
            let h = &self.h;
            for a in 0..len {
                u[a] = (0..len).map(|b| pc[a * len + b] * h[b]).sum();
            }
            let s = (0..len).map(|a| h[a] * u[a]).sum::<f64>() + self.sigma2;
            let innov = r[i - 1] - (0..len).map(|a| h[a] * pm[a]).sum::<f64>();
            let mean = &mut self.filt_mean[i * len..(i + 1) * len];
            for a in 0..len {
                mean[a] = pm[a] + u[a] * innov / s;
            }
            let cov = &mut self.filt_cov[i * ll..(i + 1) * ll];
            for a in 0..len {
                for b in a..len {
                    let v = 0.5 * (pc[a * len + b] + pc[b * len + a]) - u[a] * u[b] / s;
                    cov[a * len + b] = v;
                    cov[b * len + a] = v;
                }
            }
        }
    }

    fn backward_pass(&mut self, r: &[f64]) {
        let len = self.len;
        let ll = len * len;
        let last = len - 1;
        let mut wp = vec![0.0; ll];
        let mut xp = vec![0.0; len];
        let mut w = vec![0.0; len];
        // back_*[steps] stays zero: nothing is observed after the last state.
        for i in (0..self.steps()).rev() {
            // Combine the message at s_{i+1} with the observation r_{i+1}.
            let h = &self.h;
            let obs = r[i] / self.sigma2;
            for a in 0..len {
                for b in 0..len {
                    wp[a * len + b] =
                        self.back_prec[(i + 1) * ll + a * len + b] + h[a] * h[b] / self.sigma2;
                }
                xp[a] = self.back_pot[(i + 1) * len + a] + h[a] * obs;
            }
            // Marginalize x_{i+1}, which enters s_{i+1} through e.
            let prior = self.priors[i];
            let p = 1.0 / prior.variance;
            let alpha = wp[last * len + last] + p;
            if alpha > 0.0 {
                for a in 0..len {
                    w[a] = wp[a * len + last];
                }
                let coeff = (xp[last] + prior.mean * p) / alpha;
                for a in 0..len {
                    for b in 0..len {
                        wp[a * len + b] -= w[a] * w[b] / alpha;
                    }
                    xp[a] -= w[a] * coeff;
                }
            }
            // Pull back through s_{i+1} = G s_i + e x_{i+1}: coordinate a of
            // G s_i is coordinate a+1 of s_i.
            let prec = &mut self.back_prec[i * ll..(i + 1) * ll];
            let pot = &mut self.back_pot[i * len..(i + 1) * len];
            prec.fill(0.0);
            pot.fill(0.0);
            for a in 0..last {
                for b in a..last {
                    let v = 0.5 * (wp[a * len + b] + wp[b * len + a]);
                    prec[(a + 1) * len + b + 1] = v;
                    prec[(b + 1) * len + a + 1] = v;
                }
                pot[a + 1] = xp[a];
            }
        }
    }

    /// Predictive moments of `s_i` before `r_i`: the message from `f_{T_i}`.
    pub fn forward_message(&self, i: usize) -> GaussianVec {
        assert!((1..=self.steps()).contains(&i));
        let len = self.len;
        let ll = len * len;
        let mut pm = vec![0.0; len];
        let mut pc = vec![0.0; ll];
        predict(
            &self.filt_mean[(i - 1) * len..i * len],
            &self.filt_cov[(i - 1) * ll..i * ll],
            self.priors[i - 1],
            len,
            &mut pm,
            &mut pc,
        );
        to_gaussian(len, &pm, &pc)
    }

    /// Moments of `s_i` given `r_1..r_i`.
    pub fn filtered(&self, i: usize) -> GaussianVec {
        let len = self.len;
        let ll = len * len;
        to_gaussian(
            len,
            &self.filt_mean[i * len..(i + 1) * len],
            &self.filt_cov[i * ll..(i + 1) * ll],
        )
    }

    /// Message from `f_{T_{i+1}}` to `s_i`, summarizing `r_{i+1}..`.
    pub fn backward_message(&self, i: usize) -> CanonicalGaussianVec {
        let len = self.len;
        let ll = len * len;
        CanonicalGaussianVec {
            precision: DMatrix::from_row_slice(len, len, &self.back_prec[i * ll..(i + 1) * ll]),
            potential: DVector::from_column_slice(&self.back_pot[i * len..(i + 1) * len]),
        }
    }

    /// Belief `b^G(s_i)` for `i = 1..=N+L-1`.
    pub fn belief(&self, i: usize) -> Result<GaussianVec> {
        let mut ws = BeliefWorkspace::new(self.len);
        self.belief_into(i, &mut ws)?;
        Ok(to_gaussian(self.len, &ws.mean, &ws.cov))
    }

    /// Beliefs for `i = 1..=N`.
    pub fn compute_beliefs(&self) -> Result<Vec<GaussianVec>> {
        (1..=self.n).map(|i| self.belief(i)).collect()
    }

    /// Belief of `s_i` into `ws.mean` / `ws.cov` (row-major).
    pub fn belief_into(&self, i: usize, ws: &mut BeliefWorkspace) -> Result<()> {
        if !(1..=self.steps()).contains(&i) {
            return Err(Error::LengthMismatch {
                context: "belief index",
                expected: self.steps(),
                got: i,
            });
        }
        let len = self.len;
        let ll = len * len;
        let p = &self.filt_cov[i * ll..(i + 1) * ll];
        let mu = &self.filt_mean[i * len..(i + 1) * len];
        let w = &self.back_prec[i * ll..(i + 1) * ll];
        let xi = &self.back_pot[i * len..(i + 1) * len];

        // a = I + P W; solve a V = P.
        for r in 0..len {
            for c in 0..len {
                let mut acc = if r == c { 1.0 } else { 0.0 };
                for k in 0..len {
                    acc += p[r * len + k] * w[k * len + c];
                }
                ws.a[r * len + c] = acc;
            }
        }
        ws.cov.copy_from_slice(p);
        solve_in_place(&mut ws.a, &mut ws.cov, len, len)
            .ok_or_else(|| Error::Numeric(format!("belief system at state {i} is singular")))?;
        for r in 0..len {
            for c in (r + 1)..len {
                let v = 0.5 * (ws.cov[r * len + c] + ws.cov[c * len + r]);
                ws.cov[r * len + c] = v;
                ws.cov[c * len + r] = v;
            }
        }
        // m = μ + V (ξ − W μ)
        for r in 0..len {
            ws.tmp[r] = xi[r] - (0..len).map(|k| w[r * len + k] * mu[k]).sum::<f64>();
        }
        for r in 0..len {
            ws.mean[r] = mu[r]
                + (0..len)
                    .map(|k| ws.cov[r * len + k] * ws.tmp[k])
                    .sum::<f64>();
        }
        Ok(())
    }
}

/// Scratch buffers for [`StateChain::belief_into`].
#[derive(Debug, Clone)]
pub struct BeliefWorkspace {
    pub mean: Vec<f64>,
    pub cov: Vec<f64>,
    a: Vec<f64>,
    tmp: Vec<f64>,
}

impl BeliefWorkspace {
    pub fn new(len: usize) -> Self {
        Self {
            mean: vec![0.0; len],
            cov: vec![0.0; len * len],
            a: vec![0.0; len * len],
            tmp: vec![0.0; len],
        }
    }
}

/// Gaussian marginal of the coordinates selected by the rows of `p`.
pub fn window_marginal(belief: &GaussianVec, p: &DMatrix<f64>) -> Result<GaussianVec> {
    if p.ncols() != belief.dim() {
        return Err(Error::DimensionMismatch {
            expected: belief.dim(),
            got: p.ncols(),
        });
    }
    GaussianVec::new(p * &belief.mean, p * &belief.cov * p.transpose())
}

/// Coordinate-selection form of [`window_marginal`].
pub fn select_coordinates(belief: &GaussianVec, cols: &[usize]) -> GaussianVec {
    let m = cols.len();
    GaussianVec {
        mean: DVector::from_iterator(m, cols.iter().map(|&c| belief.mean[c])),
        cov: DMatrix::from_fn(m, m, |r, c| belief.cov[(cols[r], cols[c])]),
    }
}

fn predict(
    mean: &[f64],
    cov: &[f64],
    prior: Gaussian1D,
    len: usize,
    pm: &mut [f64],
    pc: &mut [f64],
) {
    let last = len - 1;
    for a in 0..last {
        pm[a] = mean[a + 1];
        for b in 0..last {
            pc[a * len + b] = cov[(a + 1) * len + b + 1];
        }
        pc[a * len + last] = 0.0;
        pc[last * len + a] = 0.0;
    }
    pm[last] = prior.mean;
    pc[last * len + last] = prior.variance;
}

fn to_gaussian(len: usize, mean: &[f64], cov: &[f64]) -> GaussianVec {
    GaussianVec {
        mean: DVector::from_column_slice(mean),
        cov: DMatrix::from_row_slice(len, len, cov),
    }
}

/// Gaussian elimination with partial pivoting; overwrites `rhs` (row-major,
/// `n × k`) with `a⁻¹ rhs`. Returns `None` for a singular `a`.
fn solve_in_place(a: &mut [f64], rhs: &mut [f64], n: usize, k: usize) -> Option<()> {
    for col in 0..n {
        let mut piv = col;
        for r in (col + 1)..n {
            if a[r * n + col].abs() > a[piv * n + col].abs() {
                piv = r;
            }
        }
        let d = a[piv * n + col];
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        if piv != col {
            for c in 0..n {
                a.swap(col * n + c, piv * n + c);
            }
            for c in 0..k {
                rhs.swap(col * k + c, piv * k + c);
            }
        }
        for r in (col + 1)..n {
            let f = a[r * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[r * n + c] -= f * a[col * n + c];
            }
            for c in 0..k {
                rhs[r * k + c] -= f * rhs[col * k + c];
            }
        }
    }
    for col in (0..n).rev() {
        let d = a[col * n + col];
        for c in 0..k {
            let mut v = rhs[col * k + c];
            for j in (col + 1)..n {
                v -= a[col * n + j] * rhs[j * k + c];
            }
            rhs[col * k + c] = v / d;
        }
    }
    Some(())
}
