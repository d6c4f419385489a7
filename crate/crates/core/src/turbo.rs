//! One frame of turbo equalization.
//!
//! Each iteration runs the Gaussian equalizer with the current Gaussian
//! symbol messages, converts its output to discrete messages (GA or PGA),
//! runs BCJR, and converts the decoder's extrinsics back to Gaussian
//! messages (direct or EP).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{rho_for_m, strong_interferer_set, ChannelSpec, InterferenceProfile};
use crate::decoder::{
    bcjr, bits_to_symbols, decide_bits, symbols_to_bits, BitPmf, Trellis, UNIFORM_BIT,
};
use crate::equalizer::{BeliefWorkspace, StateChain};
use crate::error::{Error, Result};
use crate::exchange::{direct_convert, ep_convert, ga_message, pga_factor, pga_message};
use crate::message::{gaussian_divide, DiscreteSymbolPmf, Gaussian1D, GaussianVec, Guards};
use crate::tx::{ConvCode, Interleaver, ModulationMap};

/// Receiver variant: decoder-to-equalizer rule × equalizer-to-decoder rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "BP_GA")]
    BpGa,
    #[serde(rename = "BP_EP")]
    BpEp,
    #[serde(rename = "BP_PGA")]
    BpPga,
    #[serde(rename = "BP_EP_PGA")]
    BpEpPga,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::BpGa,
        Variant::BpEp,
        Variant::BpPga,
        Variant::BpEpPga,
    ];

    /// EP conversion instead of direct moment matching.
    pub fn uses_ep(self) -> bool {
        matches!(self, Variant::BpEp | Variant::BpEpPga)
    }

    /// PGA messages instead of Gaussian restriction.
    pub fn uses_pga(self) -> bool {
        matches!(self, Variant::BpPga | Variant::BpEpPga)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::BpGa => "BP_GA",
            Variant::BpEp => "BP_EP",
            Variant::BpPga => "BP_PGA",
            Variant::BpEpPga => "BP_EP_PGA",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('-', "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == norm)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

/// How the strong-interferer set is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interference {
    Rho(f64),
    TargetM(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurboConfig {
    pub variant: Variant,
    pub iterations: usize,
    pub interference: Interference,
    /// Compute beliefs only on a sparse grid of states and serve every
    /// symbol's window from the nearest grid state ahead of it.
    pub belief_reuse: bool,
    /// `i' - i`; `None` picks `k̄`.
    pub offset: Option<usize>,
    pub guards: Guards,
    /// Stop once the decisions have not changed for this many iterations.
    pub stall_patience: Option<usize>,
    pub record_messages: bool,
}

impl TurboConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            iterations: 30,
            interference: Interference::TargetM(3),
            belief_reuse: false,
            offset: None,
            guards: Guards::default(),
            stall_patience: None,
            record_messages: false,
        }
    }
}

/// Diagnostics of one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationStats {
    /// Information-bit errors against the truth, when given.
    pub bit_errors: Option<usize>,
    /// Equalizer extrinsic divisions that fell back to the flat Gaussian.
    pub extrinsic_fallbacks: usize,
    /// EP divisions that fell back to the flat Gaussian.
    pub ep_fallbacks: usize,
    /// Mean posterior variance of the symbols under the equalizer belief.
    pub mean_belief_variance: f64,
    /// Number of state beliefs evaluated.
    pub belief_computations: usize,
}

/// Messages exchanged in one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageSnapshot {
    /// Equalizer → decoder pmf weights, symbol-major.
    pub to_decoder: Vec<f64>,
    /// Decoder → equalizer Gaussian messages used in the next iteration.
    pub to_equalizer: Vec<Gaussian1D>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameTrace {
    pub iterations: Vec<IterationStats>,
    pub messages: Vec<MessageSnapshot>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub decisions: Vec<u8>,
    pub trace: FrameTrace,
}

/// Everything that stays fixed across frames.
#[derive(Debug, Clone)]
pub struct TurboReceiver {
    spec: ChannelSpec,
    code: ConvCode,
    map: ModulationMap,
    interleaver: Interleaver,
    trellis: Trellis,
    cfg: TurboConfig,
    /// `None` when messages go through the Gaussian restriction.
    profile: Option<InterferenceProfile>,
    /// Selection columns of `s_{i'}` per offset `i' - i`.
    columns: Vec<Vec<usize>>,
    offset: usize,
    k_bar: usize,
    num_symbols: usize,
}

impl TurboReceiver {
    pub fn new(
        spec: ChannelSpec,
        code: ConvCode,
        map: ModulationMap,
        interleaver: Interleaver,
        info_len: usize,
        cfg: TurboConfig,
    ) -> Result<Self> {
        if cfg.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        let coded = code.coded_len(info_len);
        if interleaver.len() != coded {
            return Err(Error::LengthMismatch {
                context: "interleaver",
                expected: coded,
                got: interleaver.len(),
            });
        }
        let nb = map.bits_per_symbol();
        if !coded.is_multiple_of(nb) {
            return Err(Error::Config(format!(
                "{coded} coded bits do not fill {nb}-bit symbols"
            )));
        }
        let len = spec.len();
        let mut profile = None;
        let (mut k_bar, mut offset, mut columns) = (0, 0, Vec::new());
        if cfg.variant.uses_pga() {
            let rho = match cfg.interference {
                Interference::Rho(rho) => rho,
                Interference::TargetM(m) => rho_for_m(spec.h(), m)?,
            };
            let p = strong_interferer_set(spec.h(), rho)?;
            if p.m() > 1 {
                k_bar = p.k_bar();
                offset = cfg.offset.unwrap_or(k_bar);
                p.selection_columns(offset)?;
                columns = (0..len)
                    .map(|d| p.selection_columns(d).unwrap_or_default())
                    .collect();
                if cfg.belief_reuse && !p.is_contiguous() {
                    return Err(Error::Config(format!(
                        "belief reuse needs a contiguous lag set, got {:?}",
                        p.lags
                    )));
                }
                profile = Some(p);
            }
        }
        Ok(Self {
            trellis: Trellis::new(&code, info_len),
            num_symbols: coded / nb,
            spec,
            code,
            map,
            interleaver,
            cfg,
            profile,
            columns,
            offset,
            k_bar,
        })
    }

    pub fn config(&self) -> &TurboConfig {
        &self.cfg
    }

    pub fn spec(&self) -> &ChannelSpec {
        &self.spec
    }

    pub fn code(&self) -> &ConvCode {
        &self.code
    }

    pub fn map(&self) -> &ModulationMap {
        &self.map
    }

    pub fn interleaver(&self) -> &Interleaver {
        &self.interleaver
    }

    pub fn info_len(&self) -> usize {
        self.trellis.info_len()
    }

    pub fn num_symbols(&self) -> usize {
        self.num_symbols
    }

    /// The interference profile in use, `None` on the Gaussian-restriction path.
    pub fn profile(&self) -> Option<&InterferenceProfile> {
        self.profile.as_ref()
    }

    /// State `i'` whose belief serves symbol `i`.
    fn anchor(&self, i: usize) -> usize {
        if !self.cfg.belief_reuse {
            return i + self.offset;
        }
        let len = self.spec.len();
        let m = 2 * self.k_bar + 1;
        let base = self.k_bar + 1;
        let step = len - m + 1;
        base + (i + self.k_bar - base).div_ceil(step) * step
    }

    /// Runs the turbo loop on one received frame.
    pub fn run(&self, r: &[f64], truth: Option<&[u8]>) -> Result<FrameResult> {
        let n = self.num_symbols;
        let len = self.spec.len();
        let expected = n + len - 1;
        if r.len() != expected {
            return Err(Error::LengthMismatch {
                context: "received frame",
                expected,
                got: r.len(),
            });
        }
        let guards = &self.cfg.guards;
        let alphabet = self.map.alphabet();
        let coded = self.trellis.coded_len();

        // S1
        let mut n_d: Vec<DiscreteSymbolPmf> = vec![DiscreteSymbolPmf::uniform(alphabet.clone()); n];
        let mut n_g: Vec<Gaussian1D> = vec![Gaussian1D::new(0.0, 1.0); n];
        let mut dec_ext: Vec<BitPmf> = vec![UNIFORM_BIT; coded];

        let mut to_dec: Vec<DiscreteSymbolPmf> = Vec::with_capacity(n);
        let mut g_ext: Vec<Gaussian1D> = vec![Gaussian1D::new(0.0, 1.0); n];
        let mut ws = BeliefWorkspace::new(len);
        let mut trace = FrameTrace::default();
        let mut decisions = Vec::new();
        let mut stalled = 0usize;

        for it in 0..self.cfg.iterations {
            // S2
            let chain = StateChain::run(r, &self.spec, &n_g, guards)?;

            // S3
            to_dec.clear();
            let mut cached = 0usize;
            let mut belief_computations = 0usize;
            let mut extrinsic_fallbacks = 0usize;
            let mut var_sum = 0.0;
            for i in 1..=n {
                let ip = self.anchor(i);
                if cached != ip {
                    chain.belief_into(ip, &mut ws)?;
                    cached = ip;
                    belief_computations += 1;
                }
                let own_col = i + len - 1 - ip;
                let bx = Gaussian1D::new(ws.mean[own_col], ws.cov[own_col * len + own_col]);
                var_sum += bx.variance;
                let div = gaussian_divide(&bx, &n_g[i - 1], guards);
                extrinsic_fallbacks += usize::from(div.fallback);
                g_ext[i - 1] = div.gaussian;
                let msg = match &self.profile {
                    None => ga_message(&div.gaussian, alphabet),
                    Some(profile) => self.pga_symbol(profile, i, ip, &ws, &n_g, &n_d)?,
                };
                to_dec.push(msg);
            }
            if to_dec
                .iter()
                .any(|p| p.weights().iter().any(|w| !w.is_finite()))
            {
                return Err(Error::Numeric(format!(
                    "non-finite equalizer output in iteration {}",
                    it + 1
                )));
            }

            // S4
            let bits_in = symbols_to_bits(&to_dec, &dec_ext, &self.map, &self.interleaver)?;
            let out = bcjr(&self.trellis, &bits_in)?;
            dec_ext = out.extrinsic;
            let new_decisions = decide_bits(&out.info_posterior);
            stalled = if new_decisions == decisions {
                stalled + 1
            } else {
                0
            };
            decisions = new_decisions;
            let bit_errors =
                truth.map(|t| t.iter().zip(&decisions).filter(|(a, b)| a != b).count());

            // S5, skipped after the final decoding.
            let last = it + 1 == self.cfg.iterations
                || self.cfg.stall_patience.is_some_and(|p| stalled >= p);
            let mut ep_fallbacks = 0usize;
            if !last {
                n_d = bits_to_symbols(&dec_ext, &self.map, &self.interleaver)?;
                for ((g, d), incoming) in n_g.iter_mut().zip(&n_d).zip(&g_ext) {
                    *g = if self.cfg.variant.uses_ep() {
                        let div = ep_convert(d, incoming, guards);
                        ep_fallbacks += usize::from(div.fallback);
                        div.gaussian
                    } else {
                        direct_convert(d, guards)
                    };
                }
                if n_g
                    .iter()
                    .any(|g| !g.mean.is_finite() || !g.variance.is_finite())
                {
                    return Err(Error::Numeric(format!(
                        "non-finite symbol message in iteration {}",
                        it + 1
                    )));
                }
            }

            trace.iterations.push(IterationStats {
                bit_errors,
                extrinsic_fallbacks,
                ep_fallbacks,
                mean_belief_variance: var_sum / n as f64,
                belief_computations,
            });
            if self.cfg.record_messages {
                trace.messages.push(MessageSnapshot {
                    to_decoder: to_dec
                        .iter()
                        .flat_map(|p| p.weights().iter().copied())
                        .collect(),
                    to_equalizer: if last { Vec::new() } else { n_g.clone() },
                });
            }
            if last {
                break;
            }
        }
        Ok(FrameResult { decisions, trace })
    }

    /// PGA message for symbol `i` from the belief of `s_{ip}` held in `ws`.
    fn pga_symbol(
        &self,
        profile: &InterferenceProfile,
        i: usize,
        ip: usize,
        ws: &BeliefWorkspace,
        n_g: &[Gaussian1D],
        n_d: &[DiscreteSymbolPmf],
    ) -> Result<DiscreteSymbolPmf> {
        let len = self.spec.len();
        let n = self.num_symbols;
        let lags = &profile.lags;
        let cols = &self.columns[ip - i];
        // Window entries before the frame or in the zero padding are known
        // and are left out of `x_i^D`.
        let mut keep: Vec<(usize, usize)> = Vec::with_capacity(cols.len());
        for (&k, &c) in lags.iter().zip(cols) {
            let idx = i as isize + k;
            if idx >= 1 && idx <= n as isize {
                keep.push((idx as usize, c));
            }
        }
        let own = keep
            .iter()
            .position(|&(idx, _)| idx == i)
            .expect("own symbol is in range");
        let d = keep.len();
        let window = GaussianVec {
            mean: nalgebra::DVector::from_fn(d, |r, _| ws.mean[keep[r].1]),
            cov: nalgebra::DMatrix::from_fn(d, d, |r, c| ws.cov[keep[r].1 * len + keep[c].1]),
        };
        let priors: Vec<Gaussian1D> = keep.iter().map(|&(idx, _)| n_g[idx - 1]).collect();
        let factor = pga_factor(&window, &priors, &self.cfg.guards)?;
        let neighbors: Vec<&DiscreteSymbolPmf> = keep
            .iter()
            .filter(|&&(idx, _)| idx != i)
            .map(|&(idx, _)| &n_d[idx - 1])
            .collect();
        pga_message(
            &factor,
            own,
            &neighbors,
            self.map.alphabet(),
            &self.cfg.guards,
        )
    }
}

/// One-shot form of [`TurboReceiver::run`].
#[allow(clippy::too_many_arguments)]
pub fn run_turbo(
    r: &[f64],
    spec: &ChannelSpec,
    code: &ConvCode,
    map: &ModulationMap,
    interleaver: &Interleaver,
    info_len: usize,
    cfg: &TurboConfig,
    truth: Option<&[u8]>,
) -> Result<FrameResult> {
    TurboReceiver::new(
        spec.clone(),
        code.clone(),
        map.clone(),
        interleaver.clone(),
        info_len,
        cfg.clone(),
    )?
    .run(r, truth)
}
