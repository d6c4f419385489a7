//! Random instances checked against the oracles in the parent module.
//! Shared by the integration tests and the acceptance target.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use turbo_pga::channel::{convolve, ChannelSpec};
use turbo_pga::decoder::{bcjr, Trellis};
use turbo_pga::equalizer::StateChain;
use turbo_pga::exchange::pga_factor;
use turbo_pga::message::{Gaussian1D, GaussianVec, Guards};
use turbo_pga::tx::ConvCode;

use super::*;

pub struct Instance {
    pub h: Vec<f64>,
    pub sigma2: f64,
    pub means: Vec<f64>,
    pub vars: Vec<f64>,
    pub r: Vec<f64>,
}

impl Instance {
    pub fn priors(&self) -> Vec<Gaussian1D> {
        self.means
            .iter()
            .zip(&self.vars)
            .map(|(&m, &v)| Gaussian1D::new(m, v))
            .collect()
    }

    pub fn chain(&self) -> StateChain {
        let spec = ChannelSpec::new(self.h.clone(), self.sigma2).unwrap();
        StateChain::run(&self.r, &spec, &self.priors(), &Guards::default()).unwrap()
    }
}

/// Random channel, priors and observation with `N ≤ max_n`, `L ≤ max_len`.
pub fn random_instance<R: Rng>(rng: &mut R, max_n: usize, max_len: usize) -> Instance {
    let len = rng.random_range(1..=max_len);
    let n = rng.random_range(1..=max_n);
    let h: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let sigma2: f64 = rng.random_range(0.05..1.0);
    let means: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let vars: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..2.0)).collect();
    let x: Vec<f64> = (0..n)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    let mut r = convolve(&x, &h);
    for v in &mut r {
        *v += sigma2.sqrt() * rng.random_range(-1.5..1.5);
    }
    Instance {
        h,
        sigma2,
        means,
        vars,
        r,
    }
}

/// Worst relative error of belief means and covariances against the dense
/// posterior, over every state of the instance.
pub fn equalizer_error(inst: &Instance) -> (f64, f64) {
    let chain = inst.chain();
    let (pm, pc) = dense_posterior(&inst.h, inst.sigma2, &inst.means, &inst.vars, &inst.r);
    let len = inst.h.len();
    let mut worst = (0.0f64, 0.0f64);
    for i in 1..=chain.steps() {
        let b = chain.belief(i).unwrap();
        let (om, oc) = window_posterior(&pm, &pc, len, i);
        worst.0 = worst.0.max(rel_err_vec(&b.mean, &om));
        worst.1 = worst.1.max(rel_err_mat(&b.cov, &oc));
    }
    worst
}

/// Worst absolute difference between BCJR extrinsics and exhaustive
/// enumeration for random soft inputs, `k` information bits.
pub fn bcjr_error<R: Rng>(rng: &mut R, k: usize) -> f64 {
    let code = ConvCode::standard_23_35();
    let trellis = Trellis::new(&code, k);
    let inputs: Vec<[f64; 2]> = (0..trellis.coded_len())
        .map(|_| {
            let p = rng.random_range(0.02..0.98);
            [p, 1.0 - p]
        })
        .collect();
    let oracle_in: Vec<(f64, f64)> = inputs.iter().map(|p| (p[0], p[1])).collect();
    let oracle = brute_force_extrinsics(k, |u| code.encode(u), &oracle_in);
    let out = bcjr(&trellis, &inputs).unwrap();
    out.extrinsic
        .iter()
        .zip(&oracle)
        .map(|(a, b)| (a[0] - b.0).abs().max((a[1] - b.1).abs()))
        .fold(0.0, f64::max)
}

/// Relative spread of `N(x; m_e, V_e) ∏ N(x_κ; m_κ, v_κ) / N(x; m_b, V_b)`
/// over 10 random points for a random `m`-dimensional instance.
pub fn density_ratio_spread<R: Rng>(rng: &mut R, m: usize) -> f64 {
    let a = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
    let cov = &a * a.transpose() + DMatrix::identity(m, m) * 0.3;
    let mean = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
    // Prior variances above twice the largest window variance keep V_e PD.
    let lam_max = cov.clone().symmetric_eigenvalues().max();
    let priors: Vec<Gaussian1D> = (0..m)
        .map(|_| {
            Gaussian1D::new(
                rng.random_range(-1.0..1.0),
                lam_max * rng.random_range(2.0..6.0),
            )
        })
        .collect();
    let window = GaussianVec::new(mean.clone(), cov.clone()).unwrap();
    let factor = pga_factor(&window, &priors, &Guards::default()).unwrap();
    let (me, ve) = factor.moments().expect("V_e is PD by construction");
    let logs: Vec<f64> = (0..10)
        .map(|_| {
            let x = DVector::from_fn(m, |_, _| rng.random_range(-2.0..2.0));
            let prior: f64 = priors
                .iter()
                .enumerate()
                .map(|(j, p)| {
                    log_gauss(
                        &DVector::from_element(1, x[j]),
                        &DVector::from_element(1, p.mean),
                        &DMatrix::from_element(1, 1, p.variance),
                    )
                })
                .sum();
            log_gauss(&x, &me, &ve) + prior - log_gauss(&x, &mean, &cov)
        })
        .collect();
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    (hi - lo).exp_m1()
}
