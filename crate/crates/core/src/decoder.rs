//! Soft-in soft-out decoding: BCJR on the code trellis and the bridge
//! between symbol pmfs and coded-bit pmfs at the mapper.

use crate::error::{Error, Result};
use crate::message::{log_add, DiscreteSymbolPmf};
use crate::tx::{ConvCode, Interleaver, ModulationMap, Termination};

/// `[P(bit = 0), P(bit = 1)]`.
pub type BitPmf = [f64; 2];

pub const UNIFORM_BIT: BitPmf = [0.5, 0.5];

/// Floor applied to probabilities before taking logs.
const LOG_FLOOR: f64 = 1e-300;

#[inline]
fn ln_floor(p: f64) -> f64 {
    p.max(LOG_FLOOR).ln()
}

fn normalize_log_pair(l0: f64, l1: f64) -> BitPmf {
    let m = l0.max(l1);
    let (a, b) = ((l0 - m).exp(), (l1 - m).exp());
    [a / (a + b), b / (a + b)]
}

/// The trellis of a feedforward convolutional code over a frame of
/// `info_len` information bits.
#[derive(Debug, Clone)]
pub struct Trellis {
    num_states: usize,
    n_out: usize,
    info_len: usize,
    steps: usize,
    termination: Termination,
    /// `next[s][u]`.
    next: Vec<[usize; 2]>,
    /// Packed output word of branch `(s, u)`, output 0 in bit 0.
    out: Vec<[u32; 2]>,
}

impl Trellis {
    pub fn new(code: &ConvCode, info_len: usize) -> Self {
        let num_states = code.num_states();
        let mut next = Vec::with_capacity(num_states);
        let mut out = Vec::with_capacity(num_states);
        for s in 0..num_states {
            let (n0, o0) = code.step(s, 0);
            let (n1, o1) = code.step(s, 1);
            next.push([n0, n1]);
            out.push([o0, o1]);
        }
        Self {
            num_states,
            n_out: code.outputs_per_input(),
            info_len,
            steps: code.trellis_len(info_len),
            termination: code.termination(),
            next,
            out,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn info_len(&self) -> usize {
        self.info_len
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn coded_len(&self) -> usize {
        self.steps * self.n_out
    }

    pub fn next_state(&self, s: usize, u: u8) -> usize {
        self.next[s][u as usize]
    }

    /// Output bit `j` on branch `(s, u)`.
    pub fn output_bit(&self, s: usize, u: u8, j: usize) -> u8 {
        ((self.out[s][u as usize] >> j) & 1) as u8
    }

    /// Inputs allowed at step `t`: tail steps force zeros.
    fn inputs_at(&self, t: usize) -> &'static [u8] {
        if t >= self.info_len {
            &[0]
        } else {
            &[0, 1]
        }
    }
}

/// Result of one BCJR pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BcjrOutput {
    /// Extrinsic pmf per coded bit, in code order.
    pub extrinsic: Vec<BitPmf>,
    /// Posterior pmf per information bit.
    pub info_posterior: Vec<BitPmf>,
}

/// Exact log-domain BCJR. `inputs` holds one pmf per coded bit in code
/// order; the extrinsic at a position never reads that position's input.
pub fn bcjr(trellis: &Trellis, inputs: &[BitPmf]) -> Result<BcjrOutput> {
    if inputs.len() != trellis.coded_len() {
        return Err(Error::LengthMismatch {
            context: "decoder input",
            expected: trellis.coded_len(),
            got: inputs.len(),
        });
    }
    let ns = trellis.num_states;
    let n_out = trellis.n_out;
    let steps = trellis.steps;
    let words = 1usize << n_out;
    let log_in: Vec<[f64; 2]> = inputs
        .iter()
        .map(|p| [ln_floor(p[0]), ln_floor(p[1])])
        .collect();

    // Branch metric of each output word at step t, optionally skipping one output.
    let word_metric = |t: usize, word: usize, skip: Option<usize>| -> f64 {
        let mut g = 0.0;
        for j in 0..n_out {
            if Some(j) != skip {
                g += log_in[t * n_out + j][(word >> j) & 1];
            }
        }
        g
    };
    let mut gamma = vec![0.0; words];

    let mut alpha = vec![f64::NEG_INFINITY; (steps + 1) * ns];
    alpha[0] = 0.0;
    for t in 0..steps {
        for (w, g) in gamma.iter_mut().enumerate() {
            *g = word_metric(t, w, None);
        }
        let (cur, nxt) = alpha.split_at_mut((t + 1) * ns);
        let cur = &cur[t * ns..];
        let nxt = &mut nxt[..ns];
        for s in 0..ns {
            if cur[s] == f64::NEG_INFINITY {
                continue;
            }
            for &u in trellis.inputs_at(t) {
                let s2 = trellis.next[s][u as usize];
                let w = trellis.out[s][u as usize] as usize;
                nxt[s2] = log_add(nxt[s2], cur[s] + gamma[w]);
            }
        }
        normalize_log(nxt);
    }

    let mut beta = vec![f64::NEG_INFINITY; (steps + 1) * ns];
    match trellis.termination {
        Termination::TailTerminated => beta[steps * ns] = 0.0,
        Termination::Unterminated => beta[steps * ns..].fill(0.0),
    }
    for t in (0..steps).rev() {
        for (w, g) in gamma.iter_mut().enumerate() {
            *g = word_metric(t, w, None);
        }
        let (cur, nxt) = beta.split_at_mut((t + 1) * ns);
        let cur = &mut cur[t * ns..];
        for (s, slot) in cur.iter_mut().enumerate() {
            for &u in trellis.inputs_at(t) {
                let s2 = trellis.next[s][u as usize];
                let w = trellis.out[s][u as usize] as usize;
                *slot = log_add(*slot, nxt[s2] + gamma[w]);
            }
        }
        normalize_log(cur);
    }

    let mut extrinsic = Vec::with_capacity(steps * n_out);
    let mut info_posterior = Vec::with_capacity(trellis.info_len);
    // Per branch: α_t(s) + β_{t+1}(s'), output word, input.
    let mut base: Vec<(f64, usize, usize)> = Vec::with_capacity(2 * ns);
    let mut terms: Vec<(f64, usize)> = Vec::with_capacity(2 * ns);
    for t in 0..steps {
        let a = &alpha[t * ns..(t + 1) * ns];
        let b = &beta[(t + 1) * ns..(t + 2) * ns];
        base.clear();
        for s in 0..ns {
            for &u in trellis.inputs_at(t) {
                let s2 = trellis.next[s][u as usize];
                base.push((
                    a[s] + b[s2],
                    trellis.out[s][u as usize] as usize,
                    u as usize,
                ));
            }
        }
        for j in 0..n_out {
            for (w, g) in gamma.iter_mut().enumerate() {
                *g = word_metric(t, w, Some(j));
            }
            terms.clear();
            terms.extend(base.iter().map(|&(ab, w, _)| (ab + gamma[w], (w >> j) & 1)));
            extrinsic.push(sum_by_label(&terms));
        }
        if t < trellis.info_len {
            for (w, g) in gamma.iter_mut().enumerate() {
                *g = word_metric(t, w, None);
            }
            terms.clear();
            terms.extend(base.iter().map(|&(ab, w, u)| (ab + gamma[w], u)));
            info_posterior.push(sum_by_label(&terms));
        }
    }
    Ok(BcjrOutput {
        extrinsic,
        info_posterior,
    })
}

/// Normalized `[Σ e^x over label 0, Σ e^x over label 1]` from log terms.
fn sum_by_label(terms: &[(f64, usize)]) -> BitPmf {
    let mut max = [f64::NEG_INFINITY; 2];
    for &(x, v) in terms {
        max[v] = max[v].max(x);
    }
    let mut acc = [0.0f64; 2];
    for &(x, v) in terms {
        if x > f64::NEG_INFINITY {
            acc[v] += (x - max[v]).exp();
        }
    }
    let l0 = if acc[0] > 0.0 {
        max[0] + acc[0].ln()
    } else {
        f64::NEG_INFINITY
    };
    let l1 = if acc[1] > 0.0 {
        max[1] + acc[1].ln()
    } else {
        f64::NEG_INFINITY
    };
    normalize_log_pair(l0, l1)
}

fn normalize_log(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m.is_finite() {
        v.iter_mut().for_each(|x| *x -= m);
    }
}

/// Argmax per bit, ties to 0.
pub fn decide_bits(posteriors: &[BitPmf]) -> Vec<u8> {
    posteriors.iter().map(|p| u8::from(p[1] > p[0])).collect()
}

/// Sum-product at the mapper: symbol pmfs (in symbol order) and bit priors
/// from the decoder (code order) give extrinsic bit pmfs in code order.
pub fn symbols_to_bits(
    symbols: &[DiscreteSymbolPmf],
    bit_priors: &[BitPmf],
    map: &ModulationMap,
    interleaver: &Interleaver,
) -> Result<Vec<BitPmf>> {
    let nb = map.bits_per_symbol();
    let q = map.alphabet().len();
    let priors = interleaver.interleave(bit_priors)?;
    if priors.len() != symbols.len() * nb {
        return Err(Error::LengthMismatch {
            context: "mapper bits",
            expected: symbols.len() * nb,
            got: priors.len(),
        });
    }
    let mut out = Vec::with_capacity(priors.len());
    for (i, sym) in symbols.iter().enumerate() {
        let pr = &priors[i * nb..(i + 1) * nb];
        let w = sym.weights();
        for b in 0..nb {
            let mut acc = [0.0f64; 2];
            for (j, &wj) in w.iter().enumerate().take(q) {
                let mut term = wj;
                for (b2, p) in pr.iter().enumerate() {
                    if b2 != b {
                        term *= p[map.label_bit(j, b2) as usize];
                    }
                }
                acc[map.label_bit(j, b) as usize] += term;
            }
            let s = acc[0] + acc[1];
            out.push(if s > 0.0 {
                [acc[0] / s, acc[1] / s]
            } else {
                UNIFORM_BIT
            });
        }
    }
    interleaver.deinterleave(&out)
}

/// Symbol pmfs as products of the incoming bit messages (code order).
pub fn bits_to_symbols(
    bits: &[BitPmf],
    map: &ModulationMap,
    interleaver: &Interleaver,
) -> Result<Vec<DiscreteSymbolPmf>> {
    let nb = map.bits_per_symbol();
    let permuted = interleaver.interleave(bits)?;
    if permuted.len() % nb != 0 {
        return Err(Error::LengthMismatch {
            context: "mapper bits",
            expected: permuted.len().div_ceil(nb) * nb,
            got: permuted.len(),
        });
    }
    let q = map.alphabet().len();
    let mut log_w = vec![0.0; q];
    permuted
        .chunks(nb)
        .map(|chunk| {
            for (j, lw) in log_w.iter_mut().enumerate() {
                *lw = chunk
                    .iter()
                    .enumerate()
                    .map(|(b, p)| ln_floor(p[map.label_bit(j, b) as usize]))
                    .sum();
            }
            DiscreteSymbolPmf::from_log_weights(map.alphabet().clone(), &log_w)
        })
        .collect()
}
