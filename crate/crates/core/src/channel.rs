//! Known linear ISI channel with AWGN, and the autocorrelation analysis that
//! picks the strongly interfering symbols for the partial Gaussian
//! approximation.
//!
//! Time indices follow the usual 1-based convention: symbols are
//! `x_1..x_N`, observations `r_1..r_{N+L-1}`, and `x_i = 0` outside `1..=N`.
//! Slices are 0-based, so `r[i - 1]` holds `r_i`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;

/// Impulse response and noise level of the channel.
///
/// `h` is stored as `[h_{L-1}, ..., h_0]` so that `r_i = hᵀ s_i + n_i` with
/// the state window `s_i = [x_{i-L+1}, ..., x_i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    h: Vec<f64>,
    sigma2: f64,
}

impl ChannelSpec {
    pub fn new(h: Vec<f64>, sigma2: f64) -> Result<Self> {
        if h.is_empty() {
            return Err(Error::InvalidChannel("empty impulse response".into()));
        }
        if h.iter().any(|v| !v.is_finite()) || h.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidChannel(
                "impulse response must be finite and nonzero".into(),
            ));
        }
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::InvalidChannel(format!(
                "noise variance {sigma2} must be positive"
            )));
        }
        Ok(Self { h, sigma2 })
    }

    /// The 5-tap Proakis-C test channel.
    pub fn proakis_c(sigma2: f64) -> Result<Self> {
        Self::new(PROAKIS_C.to_vec(), sigma2)
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    /// Channel length `L` (memory + 1).
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn with_sigma2(&self, sigma2: f64) -> Result<Self> {
        Self::new(self.h.clone(), sigma2)
    }

    /// Tap `h_l` for lag `l`; zero outside `0..L`.
    pub fn tap(&self, l: isize) -> f64 {
        let len = self.h.len() as isize;
        if (0..len).contains(&l) {
            self.h[(len - 1 - l) as usize]
        } else {
            0.0
        }
    }

    /// `q_0 = ‖h‖²`.
    pub fn energy(&self) -> f64 {
        self.h.iter().map(|v| v * v).sum()
    }
}

pub const PROAKIS_C: [f64; 5] = [0.227, 0.460, 0.668, 0.460, 0.227];

/// Noise-free channel output `r_i = Σ_l h_l x_{i-l}`, `i = 1..N+L-1`.
pub fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    let len = h.len();
    let n = x.len();
    let mut r = vec![0.0; n + len - 1];
    for (i, ri) in r.iter_mut().enumerate() {
        // h[len-1-l] multiplies x at 0-based index i - l.
        for l in 0..len {
            if l <= i && i - l < n {
                *ri += h[len - 1 - l] * x[i - l];
            }
        }
    }
    r
}

/// Channel output with noise drawn from `rng`.
pub fn apply_channel_with<R: Rng + ?Sized>(x: &[f64], spec: &ChannelSpec, rng: &mut R) -> Vec<f64> {
    let sigma = spec.sigma2.sqrt();
    let mut r = convolve(x, &spec.h);
    for v in &mut r {
        let n: f64 = rng.sample(StandardNormal);
        *v += sigma * n;
    }
    r
}

/// Channel output with noise from the `noise` substream of `noise_seed`.
pub fn apply_channel(x: &[f64], spec: &ChannelSpec, noise_seed: u64) -> Vec<f64> {
    let mut rng = rng::substream(noise_seed, "noise", 0);
    apply_channel_with(x, spec, &mut rng)
}

/// Autocorrelation `q_k = Σ_l h_l h_{l+k}` for `k = 0..L-1`; negative lags
/// follow from `q_{-k} = q_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Autocorrelation(Vec<f64>);

impl Autocorrelation {
    pub fn get(&self, k: isize) -> f64 {
        self.0.get(k.unsigned_abs()).copied().unwrap_or(0.0)
    }

    pub fn q0(&self) -> f64 {
        self.0[0]
    }

    /// `q_k` for `k = 0..L-1`.
    pub fn nonnegative_lags(&self) -> &[f64] {
        &self.0
    }

    /// `|q_k| / q_0` for `k = 0..L-1`.
    pub fn ratios(&self) -> Vec<f64> {
        self.0.iter().map(|q| q.abs() / self.0[0]).collect()
    }
}

pub fn autocorrelation(spec: &ChannelSpec) -> Autocorrelation {
    autocorrelation_of(spec.h())
}

pub fn autocorrelation_of(h: &[f64]) -> Autocorrelation {
    let len = h.len();
    // With the reversed storage, Σ_l h_l h_{l+k} = Σ_j h[j] h[j+k] as well.
    Autocorrelation(
        (0..len)
            .map(|k| (0..len - k).map(|j| h[j] * h[j + k]).sum())
            .collect(),
    )
}

/// The lag set `K_ρ = {k : |q_k| > ρ q_0}` and what follows from it.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceProfile {
    pub q: Autocorrelation,
    pub rho: f64,
    /// Sorted lags in `K_ρ`.
    pub lags: Vec<isize>,
    /// Channel length `L`.
    pub memory_len: usize,
}

impl InterferenceProfile {
    /// `M = |K_ρ|`.
    pub fn m(&self) -> usize {
        self.lags.len()
    }

    /// `k̄ = max K_ρ`.
    pub fn k_bar(&self) -> usize {
        *self.lags.last().expect("K_rho contains 0") as usize
    }

    /// Whether `K_ρ = {-k̄, ..., k̄}`.
    pub fn is_contiguous(&self) -> bool {
        self.lags.len() == 2 * self.k_bar() + 1
    }

    /// Admissible offsets `d = i' - i` with `k̄ ≤ d ≤ L-1-k̄`.
    pub fn window_offsets(&self) -> std::ops::RangeInclusive<usize> {
        self.k_bar()..=(self.memory_len - 1 - self.k_bar())
    }

    /// Position of `lags[r]` inside `x_i^D`, i.e. index of lag 0.
    pub fn own_position(&self) -> usize {
        self.lags
            .iter()
            .position(|&k| k == 0)
            .expect("K_rho contains 0")
    }

    /// Columns of `s_{i'}` holding `x_{i+k}`, `k ∈ K_ρ`, for `i' = i + offset`.
    pub fn selection_columns(&self, offset: usize) -> Result<Vec<usize>> {
        let range = self.window_offsets();
        if !range.contains(&offset) {
            return Err(Error::WindowOutOfRange {
                i: 0,
                i_prime: offset,
                lo: *range.start(),
                hi: *range.end(),
            });
        }
        let last = self.memory_len as isize - 1;
        Ok(self
            .lags
            .iter()
            .map(|&k| (k - offset as isize + last) as usize)
            .collect())
    }
}

/// Strong-interferer analysis for threshold `rho`.
pub fn strong_interferer_set(h: &[f64], rho: f64) -> Result<InterferenceProfile> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Config(format!("rho={rho} outside [0, 1)")));
    }
    if h.is_empty() {
        return Err(Error::InvalidChannel("empty impulse response".into()));
    }
    let q = autocorrelation_of(h);
    let q0 = q.q0();
    let len = h.len() as isize;
    let lags: Vec<isize> = (-(len - 1)..len)
        .filter(|&k| q.get(k).abs() > rho * q0)
        .collect();
    let profile = InterferenceProfile {
        q,
        rho,
        lags,
        memory_len: h.len(),
    };
    let k_bar = profile.k_bar();
    if 1 + 2 * k_bar > h.len() {
        return Err(Error::InvalidRho {
            rho,
            k_bar,
            memory_len: h.len(),
        });
    }
    Ok(profile)
}

/// Picks `ρ` so that `|K_ρ| = target_m`, by bisection over the distinct
/// ratio levels `|q_k|/q_0`. The returned `ρ` lies midway between the
/// level that admits the last wanted lag and the next lower level.
pub fn rho_for_m(h: &[f64], target_m: usize) -> Result<f64> {
    let q = autocorrelation_of(h);
    let mut levels = q.ratios();
    levels.sort_by(|a, b| b.partial_cmp(a).expect("finite ratios"));
    levels.dedup();
    let count_at = |j: usize| -> usize {
        let t = levels[j];
        (-(h.len() as isize - 1)..h.len() as isize)
            .filter(|&k| q.get(k).abs() / q.q0() >= t)
            .count()
    };
    // count_at is nondecreasing in j.
    let (mut lo, mut hi) = (0usize, levels.len());
    while lo < hi {
        let mid = (lo + hi) / 2;
        if count_at(mid) < target_m {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    if lo == levels.len() || count_at(lo) != target_m {
        return Err(Error::UnreachableM(target_m));
    }
    let below = levels.get(lo + 1).copied().unwrap_or(0.0);
    let rho = 0.5 * (levels[lo] + below);
    strong_interferer_set(h, rho)?;
    Ok(rho)
}

/// The `M×L` 0/1 matrix `P` with `x_i^D = P s_{i'}` for `i' = i + offset`.
pub fn selection_matrix(profile: &InterferenceProfile, offset: usize) -> Result<DMatrix<f64>> {
    let cols = profile.selection_columns(offset)?;
    let mut p = DMatrix::zeros(cols.len(), profile.memory_len);
    for (r, &c) in cols.iter().enumerate() {
        p[(r, c)] = 1.0;
    }
    Ok(p)
}
