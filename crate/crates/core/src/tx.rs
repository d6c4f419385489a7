//! Transmitter: convolutional encoding, interleaving and symbol mapping.

use rand::Rng;

use crate::error::{Error, Result};
use crate::message::Alphabet;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// `constraint_length - 1` zero bits flush the encoder back to state 0.
    TailTerminated,
    Unterminated,
}

/// Feed-forward convolutional code of rate `1/generators.len()`.
///
/// Generator bit `constraint_length - 1` (the MSB) taps the current input,
/// bit 0 taps the oldest input in the register.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvCode {
    generators: Vec<u32>,
    constraint_length: usize,
    termination: Termination,
}

impl ConvCode {
    pub fn new(
        generators: Vec<u32>,
        constraint_length: usize,
        termination: Termination,
    ) -> Result<Self> {
        if generators.is_empty() {
            return Err(Error::InvalidCode("no generator polynomials".into()));
        }
        if !(1..=16).contains(&constraint_length) {
            return Err(Error::InvalidCode(format!(
                "constraint length {constraint_length} outside 1..=16"
            )));
        }
        for &g in &generators {
            if g == 0 || g >= 1 << constraint_length {
                return Err(Error::InvalidCode(format!(
                    "generator {g:o} does not fit constraint length {constraint_length}"
                )));
            }
        }
        Ok(Self {
            generators,
            constraint_length,
            termination,
        })
    }

    /// Parses octal generator strings such as `["23", "35"]`.
    pub fn from_octal(
        generators: &[&str],
        constraint_length: usize,
        termination: Termination,
    ) -> Result<Self> {
        let gens = generators
            .iter()
            .map(|g| {
                u32::from_str_radix(g, 8)
                    .map_err(|e| Error::InvalidCode(format!("generator {g:?} is not octal: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(gens, constraint_length, termination)
    }

    /// The rate-1/2, 16-state (23,35) code.
    pub fn standard_23_35() -> Self {
        Self::new(vec![0o23, 0o35], 5, Termination::TailTerminated).expect("valid code")
    }

    pub fn generators(&self) -> &[u32] {
        &self.generators
    }

    pub fn constraint_length(&self) -> usize {
        self.constraint_length
    }

    pub fn termination(&self) -> Termination {
        self.termination
    }

    pub fn outputs_per_input(&self) -> usize {
        self.generators.len()
    }

    pub fn rate(&self) -> f64 {
        1.0 / self.generators.len() as f64
    }

    pub fn num_states(&self) -> usize {
        1 << (self.constraint_length - 1)
    }

    pub fn tail_bits(&self) -> usize {
        match self.termination {
            Termination::TailTerminated => self.constraint_length - 1,
            Termination::Unterminated => 0,
        }
    }

    /// Number of trellis steps for `k` information bits.
    pub fn trellis_len(&self, k: usize) -> usize {
        k + self.tail_bits()
    }

    pub fn coded_len(&self, k: usize) -> usize {
        self.trellis_len(k) * self.outputs_per_input()
    }

    /// One encoder step: returns the next state and the output bits packed
    /// with output 0 in bit 0.
    #[inline]
    pub fn step(&self, state: usize, input: u8) -> (usize, u32) {
        let register = ((input as u32) << (self.constraint_length - 1)) | state as u32;
        let mut out = 0u32;
        for (j, &g) in self.generators.iter().enumerate() {
            out |= ((g & register).count_ones() & 1) << j;
        }
        ((register >> 1) as usize, out)
    }

    pub fn encode(&self, bits: &[u8]) -> Vec<u8> {
        let n_out = self.outputs_per_input();
        let mut out = Vec::with_capacity(self.coded_len(bits.len()));
        let mut state = 0usize;
        let tail = std::iter::repeat_n(0u8, self.tail_bits());
        for b in bits.iter().copied().chain(tail) {
            let (next, word) = self.step(state, b & 1);
            for j in 0..n_out {
                out.push(((word >> j) & 1) as u8);
            }
            state = next;
        }
        out
    }
}

/// Bijective permutation applied to the coded bit stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interleaver {
    permutation: Vec<usize>,
    seed: Option<u64>,
}

impl Interleaver {
    pub fn identity(len: usize) -> Self {
        Self {
            permutation: (0..len).collect(),
            seed: None,
        }
    }

    /// Fisher–Yates shuffle driven by the `interleaver` substream of `seed`.
    pub fn random(len: usize, seed: u64) -> Self {
        let mut rng = rng::substream(seed, "interleaver", len as u64);
        let mut permutation: Vec<usize> = (0..len).collect();
        for i in (1..len).rev() {
            let j = rng.random_range(0..=i);
            permutation.swap(i, j);
        }
        Self {
            permutation,
            seed: Some(seed),
        }
    }

    pub fn from_permutation(permutation: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; permutation.len()];
        for &p in &permutation {
            if p >= seen.len() || seen[p] {
                return Err(Error::Config("interleaver is not a bijection".into()));
            }
            seen[p] = true;
        }
        Ok(Self {
            permutation,
            seed: None,
        })
    }

    pub fn len(&self) -> usize {
        self.permutation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.permutation.is_empty()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    /// `out[k] = input[π(k)]`.
    pub fn interleave<T: Clone>(&self, input: &[T]) -> Result<Vec<T>> {
        self.check(input.len())?;
        Ok(self.permutation.iter().map(|&p| input[p].clone()).collect())
    }

    pub fn deinterleave<T: Clone>(&self, input: &[T]) -> Result<Vec<T>> {
        self.check(input.len())?;
        let mut out = input.to_vec();
        for (k, &p) in self.permutation.iter().enumerate() {
            out[p] = input[k].clone();
        }
        Ok(out)
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.permutation.len() {
            return Err(Error::LengthMismatch {
                context: "interleaver",
                expected: self.permutation.len(),
                got: len,
            });
        }
        Ok(())
    }
}

/// Bit-label to symbol mapping. `labels[j]` is the label of alphabet point
/// `j`; the first coded bit of a symbol is the label's most significant bit.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationMap {
    bits_per_symbol: usize,
    alphabet: Alphabet,
    labels: Vec<u32>,
    by_label: Vec<usize>,
}

impl ModulationMap {
    pub fn new(alphabet: Alphabet, labels: Vec<u32>) -> Result<Self> {
        let q = alphabet.len();
        if !q.is_power_of_two() || q < 2 {
            return Err(Error::InvalidAlphabet(format!(
                "alphabet size {q} is not a power of two"
            )));
        }
        if labels.len() != q {
            return Err(Error::DimensionMismatch {
                expected: q,
                got: labels.len(),
            });
        }
        let mut by_label = vec![usize::MAX; q];
        for (j, &l) in labels.iter().enumerate() {
            let l = l as usize;
            if l >= q || by_label[l] != usize::MAX {
                return Err(Error::InvalidAlphabet("labeling is not a bijection".into()));
            }
            by_label[l] = j;
        }
        Ok(Self {
            bits_per_symbol: q.trailing_zeros() as usize,
            alphabet,
            labels,
            by_label,
        })
    }

    /// BPSK with 0 → −1 and 1 → +1.
    pub fn bpsk() -> Self {
        Self::new(Alphabet::bpsk(), vec![0, 1]).expect("valid map")
    }

    /// 4-PAM with Gray labels 00 → −3, 01 → −1, 11 → +1, 10 → +3.
    pub fn pam4_gray() -> Self {
        let alphabet = Alphabet::new(vec![-3.0, -1.0, 1.0, 3.0]).expect("valid alphabet");
        Self::new(alphabet, vec![0b00, 0b01, 0b11, 0b10]).expect("valid map")
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn label(&self, symbol_index: usize) -> u32 {
        self.labels[symbol_index]
    }

    /// Bit `b` (0 = first) of the label of alphabet point `symbol_index`.
    #[inline]
    pub fn label_bit(&self, symbol_index: usize, b: usize) -> u8 {
        ((self.labels[symbol_index] >> (self.bits_per_symbol - 1 - b)) & 1) as u8
    }

    pub fn symbol_index(&self, label: u32) -> usize {
        self.by_label[label as usize]
    }
}

/// Interleaves coded bits and maps them to symbols.
pub fn map_symbols(
    coded: &[u8],
    map: &ModulationMap,
    interleaver: &Interleaver,
) -> Result<Vec<f64>> {
    let b = map.bits_per_symbol();
    if !coded.len().is_multiple_of(b) {
        return Err(Error::LengthMismatch {
            context: "symbol mapping",
            expected: coded.len().div_ceil(b) * b,
            got: coded.len(),
        });
    }
    let permuted = interleaver.interleave(coded)?;
    Ok(permuted
        .chunks(b)
        .map(|chunk| {
            let label = chunk
                .iter()
                .fold(0u32, |acc, &bit| (acc << 1) | (bit & 1) as u32);
            map.alphabet().values()[map.symbol_index(label)]
        })
        .collect())
}

/// Nearest-point demapping followed by deinterleaving.
pub fn hard_demap(
    symbols: &[f64],
    map: &ModulationMap,
    interleaver: &Interleaver,
) -> Result<Vec<u8>> {
    let b = map.bits_per_symbol();
    let mut bits = Vec::with_capacity(symbols.len() * b);
    for &x in symbols {
        let j = map.alphabet().nearest(x);
        bits.extend((0..b).map(|k| map.label_bit(j, k)));
    }
    interleaver.deinterleave(&bits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_encodes_to_zero() {
        let code = ConvCode::standard_23_35();
        let out = code.encode(&[0; 12]);
        assert_eq!(out.len(), 2 * (12 + 4));
        assert!(out.iter().all(|&b| b == 0));
    }

    #[test]
    fn impulse_reproduces_generator_taps() {
        let code = ConvCode::standard_23_35();
        let out = code.encode(&[1, 0, 0, 0, 0]);
        // Oracle: walk the shift register by hand.
        let g1 = [1, 0, 0, 1, 1]; // 23 octal, MSB first
        let g2 = [1, 1, 1, 0, 1]; // 35 octal
        let mut expected = Vec::new();
        for t in 0..9 {
            expected.push(if t < 5 { g1[t] } else { 0 });
            expected.push(if t < 5 { g2[t] } else { 0 });
        }
        assert_eq!(out, expected);
    }

    #[test]
    fn tail_returns_encoder_to_zero() {
        let code = ConvCode::standard_23_35();
        let bits = [1, 1, 0, 1, 1, 1, 0, 1];
        let mut state = 0;
        for b in bits.iter().copied().chain(std::iter::repeat_n(0, 4)) {
            state = code.step(state, b).0;
        }
        assert_eq!(state, 0);
    }

    #[test]
    fn paper_frame_length() {
        let code = ConvCode::standard_23_35();
        assert_eq!(code.num_states(), 16);
        assert_eq!(code.coded_len(2048), 4104);
    }

    #[test]
    fn octal_parsing() {
        let c = ConvCode::from_octal(&["23", "35"], 5, Termination::TailTerminated).unwrap();
        assert_eq!(c, ConvCode::standard_23_35());
        assert!(ConvCode::from_octal(&["9"], 5, Termination::TailTerminated).is_err());
        assert!(ConvCode::from_octal(&["77"], 5, Termination::TailTerminated).is_err());
    }

    #[test]
    fn unterminated_has_no_tail() {
        let c = ConvCode::from_octal(&["23", "35"], 5, Termination::Unterminated).unwrap();
        assert_eq!(c.encode(&[1, 0, 1]).len(), 6);
    }

    #[test]
    fn bpsk_labeling() {
        let x = map_symbols(
            &[0, 1, 1],
            &ModulationMap::bpsk(),
            &Interleaver::identity(3),
        )
        .unwrap();
        assert_eq!(x, vec![-1.0, 1.0, 1.0]);
    }

    #[test]
    fn seeded_interleaver_is_reproducible() {
        let a = Interleaver::random(8, 42);
        let b = Interleaver::random(8, 42);
        assert_eq!(a, b);
        assert_ne!(a, Interleaver::random(8, 43));
        let mut sorted = a.permutation().to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn odd_length_rejected_for_pam4() {
        let r = map_symbols(
            &[0, 1, 1],
            &ModulationMap::pam4_gray(),
            &Interleaver::identity(3),
        );
        assert!(matches!(r, Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn pam4_gray_labels() {
        let m = ModulationMap::pam4_gray();
        let x = map_symbols(&[0, 0, 0, 1, 1, 1, 1, 0], &m, &Interleaver::identity(8)).unwrap();
        assert_eq!(x, vec![-3.0, -1.0, 1.0, 3.0]);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn encoder_is_linear(a in prop::collection::vec(0u8..2, 1..40), seed in any::<u64>()) {
                let code = ConvCode::standard_23_35();
                let b: Vec<u8> = a.iter().enumerate().map(|(i, _)| ((seed >> (i % 64)) & 1) as u8).collect();
                let sum: Vec<u8> = a.iter().zip(&b).map(|(x, y)| x ^ y).collect();
                let lhs: Vec<u8> = code.encode(&a).iter().zip(code.encode(&b)).map(|(x, y)| x ^ y).collect();
                prop_assert_eq!(lhs, code.encode(&sum));
            }

            #[test]
            fn map_then_demap_recovers_bits(bits in prop::collection::vec(0u8..2, 1..64), seed in any::<u64>(), pam in any::<bool>()) {
                let map = if pam { ModulationMap::pam4_gray() } else { ModulationMap::bpsk() };
                let len = bits.len() - bits.len() % map.bits_per_symbol();
                prop_assume!(len > 0);
                let bits = &bits[..len];
                let pi = Interleaver::random(len, seed);
                let x = map_symbols(bits, &map, &pi).unwrap();
                prop_assert_eq!(x.len(), len / map.bits_per_symbol());
                prop_assert_eq!(hard_demap(&x, &map, &pi).unwrap(), bits.to_vec());
                prop_assert_eq!(pi.deinterleave(&pi.interleave(bits).unwrap()).unwrap(), bits.to_vec());
            }
        }
    }
}
