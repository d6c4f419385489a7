//! Independent oracles shared by the integration and acceptance tests.
//! Nothing here calls into the recursions it is used to check.

#![allow(dead_code)]

pub mod cases;

use nalgebra::{DMatrix, DVector};

/// Convolution matrix `H` with `r = H x`, `(N+L-1) × N`, taps stored as
/// `[h_{L-1}, ..., h_0]`.
pub fn convolution_matrix(h: &[f64], n: usize) -> DMatrix<f64> {
    let len = h.len();
    DMatrix::from_fn(n + len - 1, n, |row, col| {
        // r_{row+1} picks x_{col+1} through lag l = row - col.
        if row >= col && row - col < len {
            h[len - 1 - (row - col)]
        } else {
            0.0
        }
    })
}

/// Exact posterior of `x` given `r = Hx + n` with independent Gaussian
/// priors on `x`, by dense linear algebra.
pub fn dense_posterior(
    h: &[f64],
    sigma2: f64,
    prior_mean: &[f64],
    prior_var: &[f64],
    r: &[f64],
) -> (DVector<f64>, DMatrix<f64>) {
    let n = prior_mean.len();
    let hm = convolution_matrix(h, n);
    let mut prec = hm.transpose() * &hm / sigma2;
    let mut rhs = hm.transpose() * DVector::from_column_slice(r) / sigma2;
    for j in 0..n {
        prec[(j, j)] += 1.0 / prior_var[j];
        rhs[j] += prior_mean[j] / prior_var[j];
    }
    let cov = prec
        .cholesky()
        .expect("posterior precision is PD")
        .inverse();
    let mean = &cov * rhs;
    (mean, cov)
}

/// Posterior moments of the window `s_i = [x_{i-L+1}, ..., x_i]`; entries
/// outside `1..=N` are the known zeros.
pub fn window_posterior(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    len: usize,
    i: usize,
) -> (DVector<f64>, DMatrix<f64>) {
    let n = mean.len() as isize;
    let idx: Vec<Option<usize>> = (0..len)
        .map(|c| {
            let j = i as isize - len as isize + 1 + c as isize;
            (1..=n).contains(&j).then(|| (j - 1) as usize)
        })
        .collect();
    let m = DVector::from_iterator(len, idx.iter().map(|j| j.map_or(0.0, |j| mean[j])));
    let v = DMatrix::from_fn(len, len, |a, b| match (idx[a], idx[b]) {
        (Some(p), Some(q)) => cov[(p, q)],
        _ => 0.0,
    });
    (m, v)
}

/// `‖a − b‖_max / max(‖b‖_max, 1)`.
pub fn rel_err_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

pub fn rel_err_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

/// Log density of `N(x; m, V)` including the normalizer.
pub fn log_gauss(x: &DVector<f64>, m: &DVector<f64>, v: &DMatrix<f64>) -> f64 {
    let d = x.len() as f64;
    let chol = v.clone().cholesky().expect("PD covariance");
    let diff = x - m;
    let sol = chol.solve(&diff);
    let logdet: f64 = 2.0 * (0..x.len()).map(|j| chol.l()[(j, j)].ln()).sum::<f64>();
    -0.5 * (diff.dot(&sol) + logdet + d * (2.0 * std::f64::consts::PI).ln())
}

/// Extrinsic bit pmfs of a convolutional code by enumerating every
/// information word. `code_bits(u)` encodes `u`; `inputs[j] = (p0, p1)`.
pub fn brute_force_extrinsics(
    k: usize,
    code_bits: impl Fn(&[u8]) -> Vec<u8>,
    inputs: &[(f64, f64)],
) -> Vec<(f64, f64)> {
    let n = inputs.len();
    let mut acc = vec![(0.0f64, 0.0f64); n];
    for word in 0u32..(1 << k) {
        let u: Vec<u8> = (0..k).map(|b| ((word >> b) & 1) as u8).collect();
        let c = code_bits(&u);
        assert_eq!(c.len(), n);
        let pr = |j: usize| if c[j] == 0 { inputs[j].0 } else { inputs[j].1 };
        for j in 0..n {
            let w: f64 = (0..n).filter(|&t| t != j).map(pr).product();
            if c[j] == 0 {
                acc[j].0 += w;
            } else {
                acc[j].1 += w;
            }
        }
    }
    acc.into_iter()
        .map(|(a, b)| (a / (a + b), b / (a + b)))
        .collect()
}
