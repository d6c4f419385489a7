//! Monte Carlo BER experiments.
//!
//! Frame `f` of every curve uses the same information bits and the same
//! unit-variance noise draws, keyed by `(master_seed, domain, f)`, so curves
//! are paired and results do not depend on how frames are spread over
//! threads. Frames are simulated in fixed-size batches and the stopping rule
//! is checked only between batches.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::channel::{autocorrelation_of, convolve, ChannelSpec, PROAKIS_C};
use crate::decoder::{bcjr, decide_bits, symbols_to_bits, Trellis, UNIFORM_BIT};
use crate::error::{Error, Result};
use crate::exchange::ga_message;
use crate::message::{DiscreteSymbolPmf, Gaussian1D};
use crate::rng::{substream, GENERATOR_NAME};
use crate::turbo::{FrameResult, Interference, TurboConfig, TurboReceiver, Variant};
use crate::tx::{map_symbols, ConvCode, Interleaver, ModulationMap, Termination};

/// Noise variance assumed by the receiver when the channel is noiseless.
pub const NOISELESS_RECEIVER_SIGMA2: f64 = 1e-6;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// One-sided 95% normal quantile.
pub const Z95_ONE_SIDED: f64 = 1.644_853_626_951_472_2;

pub const CSV_COLUMNS: &str = "variant,snr_db,frames,bit_errors,ber,ci_low,ci_high,wall_time_s";

/// Eb/N0 in dB; `+inf` means a noiseless channel. Serialized as a number or
/// the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SnrDb(pub f64);

impl Serialize for SnrDb {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for SnrDb {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(SnrDb(v)),
            Raw::Text(t) if t.eq_ignore_ascii_case("inf") => Ok(SnrDb(f64::INFINITY)),
            Raw::Text(t) => Err(serde::de::Error::custom(format!(
                "snr_db entry `{t}` is neither a number nor \"inf\""
            ))),
        }
    }
}

fn format_snr(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modulation {
    Bpsk,
    Pam4Gray,
}

impl Modulation {
    pub fn map(self) -> ModulationMap {
        match self {
            Modulation::Bpsk => ModulationMap::bpsk(),
            Modulation::Pam4Gray => ModulationMap::pam4_gray(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeConfig {
    /// Octal generator strings, most significant bit on the current input.
    pub generators: Vec<String>,
    pub constraint_length: usize,
    pub termination: Termination,
}

impl Default for CodeConfig {
    fn default() -> Self {
        Self {
            generators: vec!["23".into(), "35".into()],
            constraint_length: 5,
            termination: Termination::TailTerminated,
        }
    }
}

impl CodeConfig {
    pub fn build(&self) -> Result<ConvCode> {
        let gens: Vec<&str> = self.generators.iter().map(String::as_str).collect();
        ConvCode::from_octal(&gens, self.constraint_length, self.termination)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub info_bits: usize,
    pub code: CodeConfig,
    pub modulation: Modulation,
    /// Taps `[h_{L-1}, ..., h_0]`.
    pub channel: Vec<f64>,
    pub snr_db: Vec<SnrDb>,
    pub variants: Vec<Variant>,
    pub iterations: usize,
    pub interference: Interference,
    pub belief_reuse: bool,
    /// Add the coded AWGN curve (`h = [1]`, decoder only).
    pub awgn_reference: bool,
    pub min_frames: u64,
    pub min_bit_errors: u64,
    pub max_frames: u64,
    /// Frames simulated between checks of the stopping rule.
    pub batch_size: u64,
    pub master_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl ExperimentConfig {
    /// 2048 information bits, (23,35) code, BPSK, Proakis-C, 30 iterations,
    /// `M = 3`.
    pub fn paper() -> Self {
        Self {
            info_bits: 2048,
            code: CodeConfig::default(),
            modulation: Modulation::Bpsk,
            channel: PROAKIS_C.to_vec(),
            snr_db: [4.0, 5.0, 6.0, 7.0, 8.0].into_iter().map(SnrDb).collect(),
            variants: Variant::ALL.to_vec(),
            iterations: 30,
            interference: Interference::TargetM(3),
            belief_reuse: false,
            awgn_reference: true,
            min_frames: 50,
            min_bit_errors: 200,
            max_frames: 20_000,
            batch_size: 16,
            master_seed: 1,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_json().as_bytes())
            .iter()
            .fold(String::new(), |mut s, b| {
                let _ = write!(s, "{b:02x}");
                s
            })
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, msg: &str| Err(Error::Config(format!("field `{name}`: {msg}")));
        if self.info_bits == 0 {
            return field("info_bits", "must be positive");
        }
        if self.snr_db.is_empty() {
            return field("snr_db", "must not be empty");
        }
        if self
            .snr_db
            .iter()
            .any(|s| s.0.is_nan() || s.0 == f64::NEG_INFINITY)
        {
            return field("snr_db", "entries must be finite or \"inf\"");
        }
        if self.variants.is_empty() && !self.awgn_reference {
            return field("variants", "nothing to simulate");
        }
        if self.iterations == 0 {
            return field("iterations", "must be at least 1");
        }
        if self.min_bit_errors == 0 {
            return field("min_bit_errors", "must be at least 1");
        }
        if self.max_frames == 0 || self.max_frames < self.min_frames {
            return field("max_frames", "must be positive and at least min_frames");
        }
        if self.batch_size == 0 {
            return field("batch_size", "must be positive");
        }
        if self.channel.is_empty()
            || self.channel.iter().any(|h| !h.is_finite())
            || self.channel.iter().all(|&h| h == 0.0)
        {
            return field("channel", "needs finite taps, not all zero");
        }
        if let Interference::Rho(r) = self.interference {
            if !(0.0..1.0).contains(&r) {
                return field("interference.rho", "must lie in [0, 1)");
            }
        }
        let code = self
            .code
            .build()
            .map_err(|e| Error::Config(format!("field `code`: {e}")))?;
        let bps = self.modulation.map().bits_per_symbol();
        if code.coded_len(self.info_bits) % bps != 0 {
            return field("info_bits", "coded frame does not fill whole symbols");
        }
        Ok(())
    }
}

/// A simulated curve: one turbo variant or the AWGN reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Curve {
    Turbo(Variant),
    Awgn,
}

impl Curve {
    pub fn label(self) -> &'static str {
        match self {
            Curve::Turbo(v) => v.name(),
            Curve::Awgn => "AWGN",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        if s == "AWGN" {
            Ok(Curve::Awgn)
        } else {
            s.parse().map(Curve::Turbo)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerRecord {
    pub curve: Curve,
    pub snr_db: f64,
    pub frames: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub wall_time_s: Option<f64>,
}

impl BerRecord {
    pub fn new(curve: Curve, snr_db: f64, frames: u64, bit_errors: u64, info_bits: usize) -> Self {
        let trials = frames * info_bits as u64;
        let (ci_low, ci_high) = wilson_interval(bit_errors, trials, Z95);
        Self {
            curve,
            snr_db,
            frames,
            bit_errors,
            ber: if trials == 0 {
                0.0
            } else {
                bit_errors as f64 / trials as f64
            },
            ci_low,
            ci_high,
            wall_time_s: None,
        }
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let lo = if successes == 0 {
        0.0
    } else {
        (center - half).max(0.0)
    };
    let hi = if successes == trials {
        1.0
    } else {
        (center + half).min(1.0)
    };
    (lo, hi)
}

/// Fixed parts of an experiment plus per-frame generation.
#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: ExperimentConfig,
    code: ConvCode,
    map: ModulationMap,
    interleaver: Interleaver,
}

/// Transmitted side of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub bits: Vec<u8>,
    pub symbols: Vec<f64>,
}

impl Simulator {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let code = cfg.code.build()?;
        let map = cfg.modulation.map();
        let interleaver = Interleaver::random(code.coded_len(cfg.info_bits), cfg.master_seed);
        Ok(Self {
            cfg,
            code,
            map,
            interleaver,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    /// Information rate including the tail, `K / coded bits`.
    pub fn rate(&self) -> f64 {
        self.cfg.info_bits as f64 / self.code.coded_len(self.cfg.info_bits) as f64
    }

    pub fn symbol_energy(&self) -> f64 {
        self.map.alphabet().mean_energy()
    }

    /// `σ² = q0 Es / (2 R B Eb/N0)`.
    pub fn sigma2_for(&self, snr_db: f64, q0: f64) -> f64 {
        if snr_db.is_infinite() {
            return 0.0;
        }
        let ebn0 = 10f64.powf(snr_db / 10.0);
        q0 * self.symbol_energy() / (2.0 * self.rate() * self.map.bits_per_symbol() as f64 * ebn0)
    }

    pub fn q0(&self) -> f64 {
        autocorrelation_of(&self.cfg.channel).q0()
    }

    pub fn sigma2(&self, snr_db: f64) -> f64 {
        self.sigma2_for(snr_db, self.q0())
    }

    pub fn mapping_description(&self) -> String {
        format!(
            "sigma2 = q0*Es/(2*R*B*EbN0_linear) with q0={} Es={} R={} B={}; AWGN reference uses q0=1",
            self.q0(),
            self.symbol_energy(),
            self.rate(),
            self.map.bits_per_symbol()
        )
    }

    pub fn frame(&self, f: u64) -> Frame {
        let mut rng = substream(self.cfg.master_seed, "bits", f);
        let bits: Vec<u8> = (0..self.cfg.info_bits)
            .map(|_| rng.random_range(0..2u8))
            .collect();
        let coded = self.code.encode(&bits);
        let symbols =
            map_symbols(&coded, &self.map, &self.interleaver).expect("validated frame length");
        Frame { bits, symbols }
    }

    /// `h ∗ x + σ z` with `z` the frame's shared unit-noise draws.
    pub fn receive(&self, symbols: &[f64], h: &[f64], sigma2: f64, f: u64) -> Vec<f64> {
        let mut r = convolve(symbols, h);
        let sigma = sigma2.sqrt();
        let mut rng = substream(self.cfg.master_seed, "noise", f);
        for v in &mut r {
            let z: f64 = rng.sample(StandardNormal);
            *v += sigma * z;
        }
        r
    }

    fn receiver_spec(&self, h: &[f64], sigma2: f64) -> Result<ChannelSpec> {
        ChannelSpec::new(h.to_vec(), sigma2.max(NOISELESS_RECEIVER_SIGMA2))
    }

    pub fn turbo_config(&self, variant: Variant) -> TurboConfig {
        let mut cfg = TurboConfig::new(variant);
        cfg.iterations = self.cfg.iterations;
        cfg.interference = self.cfg.interference;
        cfg.belief_reuse = self.cfg.belief_reuse;
        cfg
    }

    pub fn receiver(&self, turbo: TurboConfig, sigma2: f64) -> Result<TurboReceiver> {
        TurboReceiver::new(
            self.receiver_spec(&self.cfg.channel, sigma2)?,
            self.code.clone(),
            self.map.clone(),
            self.interleaver.clone(),
            self.cfg.info_bits,
            turbo,
        )
    }

    /// Runs frame `f` through a turbo receiver, with the truth attached.
    pub fn run_turbo_frame(
        &self,
        rx: &TurboReceiver,
        f: u64,
        sigma2: f64,
    ) -> Result<(Frame, FrameResult)> {
        let frame = self.frame(f);
        let r = self.receive(&frame.symbols, &self.cfg.channel, sigma2, f);
        let out = rx.run(&r, Some(&frame.bits))?;
        Ok((frame, out))
    }

    /// Bit errors of frame `f` over `h = [1]` with a decoder-only receiver.
    pub fn awgn_frame_errors(&self, f: u64, sigma2: f64) -> Result<u64> {
        let frame = self.frame(f);
        let r = self.receive(&frame.symbols, &[1.0], sigma2, f);
        let s2 = sigma2.max(NOISELESS_RECEIVER_SIGMA2);
        let pmfs: Vec<DiscreteSymbolPmf> = r
            .iter()
            .map(|&y| ga_message(&Gaussian1D::new(y, s2), self.map.alphabet()))
            .collect();
        let coded = self.code.coded_len(self.cfg.info_bits);
        let bits_in = symbols_to_bits(
            &pmfs,
            &vec![UNIFORM_BIT; coded],
            &self.map,
            &self.interleaver,
        )?;
        let out = bcjr(&Trellis::new(&self.code, self.cfg.info_bits), &bits_in)?;
        Ok(count_errors(&decide_bits(&out.info_posterior), &frame.bits))
    }

    /// Bit errors of frame `f` for one curve at noise variance `sigma2`
    /// (the AWGN curve takes its own variance).
    pub fn frame_errors(
        &self,
        curve: Curve,
        rx: Option<&TurboReceiver>,
        f: u64,
        sigma2: f64,
    ) -> Result<u64> {
        match (curve, rx) {
            (Curve::Awgn, _) => self.awgn_frame_errors(f, sigma2),
            (Curve::Turbo(_), Some(rx)) => {
                let (frame, out) = self.run_turbo_frame(rx, f, sigma2)?;
                Ok(count_errors(&out.decisions, &frame.bits))
            }
            (Curve::Turbo(v), None) => Err(Error::Config(format!("no receiver for {v}"))),
        }
    }

    /// Simulates one curve at one SNR until the stopping rule holds.
    pub fn run_point(&self, curve: Curve, snr_db: f64, timing: bool) -> Result<BerRecord> {
        let start = Instant::now();
        let (sigma2, rx) = match curve {
            Curve::Awgn => (self.sigma2_for(snr_db, 1.0), None),
            Curve::Turbo(v) => {
                let s2 = self.sigma2(snr_db);
                (s2, Some(self.receiver(self.turbo_config(v), s2)?))
            }
        };
        let c = &self.cfg;
        let (mut frames, mut errors) = (0u64, 0u64);
        loop {
            let end = (frames + c.batch_size).min(c.max_frames);
            let batch: Vec<Result<u64>> = (frames..end)
                .into_par_iter()
                .map(|f| self.frame_errors(curve, rx.as_ref(), f, sigma2))
                .collect();
            for e in batch {
                errors += e?;
            }
            frames = end;
            if frames >= c.max_frames || (frames >= c.min_frames && errors >= c.min_bit_errors) {
                break;
            }
        }
        let mut rec = BerRecord::new(curve, snr_db, frames, errors, c.info_bits);
        if timing {
            rec.wall_time_s = Some(start.elapsed().as_secs_f64());
        }
        Ok(rec)
    }

    pub fn curves(&self) -> Vec<Curve> {
        let mut curves: Vec<Curve> = self.cfg.variants.iter().map(|&v| Curve::Turbo(v)).collect();
        if self.cfg.awgn_reference {
            curves.push(Curve::Awgn);
        }
        curves.sort();
        curves.dedup();
        curves
    }

    /// All (curve, SNR) points, sorted by curve then SNR.
    pub fn run(&self, timing: bool) -> Result<Vec<BerRecord>> {
        let mut snrs: Vec<f64> = self.cfg.snr_db.iter().map(|s| s.0).collect();
        snrs.sort_by(f64::total_cmp);
        snrs.dedup();
        let mut out = Vec::new();
        for curve in self.curves() {
            for &snr in &snrs {
                out.push(self.run_point(curve, snr, timing)?);
            }
        }
        sort_records(&mut out);
        Ok(out)
    }
}

/// Paired z statistic for `mean(a - b) > 0` over common frames. A zero
/// spread gives `±inf` by the sign of the mean, or 0 when all pairs tie.
pub fn paired_z(a: &[u64], b: &[u64]) -> f64 {
    assert_eq!(a.len(), b.len(), "paired samples");
    let n = a.len() as f64;
    if a.len() < 2 {
        return 0.0;
    }
    let d: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| x as f64 - y as f64)
        .collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return if mean > 0.0 {
            f64::INFINITY
        } else if mean < 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        };
    }
    mean / (var / n).sqrt()
}

pub fn count_errors(a: &[u8], b: &[u8]) -> u64 {
    a.iter().zip(b).filter(|(x, y)| x != y).count() as u64
}

pub fn sort_records(records: &mut [BerRecord]) {
    records.sort_by(|a, b| a.curve.cmp(&b.curve).then(a.snr_db.total_cmp(&b.snr_db)));
}

pub fn run_experiment(cfg: &ExperimentConfig, timing: bool) -> Result<Vec<BerRecord>> {
    Simulator::new(cfg.clone())?.run(timing)
}

/// [`run_experiment`] on a dedicated pool of `threads` workers.
pub fn run_experiment_with_threads(
    cfg: &ExperimentConfig,
    threads: usize,
    timing: bool,
) -> Result<Vec<BerRecord>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_experiment(cfg, timing))
}

/// CSV text: `#` comment header, column row, one row per record.
pub fn render_csv(records: &[BerRecord], cfg: &ExperimentConfig) -> Result<String> {
    if records.is_empty() {
        return Err(Error::Config("no records to write".into()));
    }
    let sim = Simulator::new(cfg.clone())?;
    let mut sorted = records.to_vec();
    sort_records(&mut sorted);
    let mut s = String::new();
    let _ = writeln!(s, "# turbo-pga BER experiment");
    let _ = writeln!(s, "# config_sha256: {}", cfg.hash());
    let _ = writeln!(s, "# master_seed: {}", cfg.master_seed);
    let _ = writeln!(
        s,
        "# rng: {GENERATOR_NAME} substreams keyed by (master_seed, domain, frame)"
    );
    let _ = writeln!(s, "# snr_mapping: {}", sim.mapping_description());
    let _ = writeln!(s, "# config: {}", cfg.to_json());
    let _ = writeln!(s, "{CSV_COLUMNS}");
    for r in &sorted {
        let wall = r
            .wall_time_s
            .map_or_else(|| "NA".to_string(), |w| format!("{w}"));
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.curve.label(),
            format_snr(r.snr_db),
            r.frames,
            r.bit_errors,
            r.ber,
            r.ci_low,
            r.ci_high,
            wall
        );
    }
    Ok(s)
}

pub fn emit_csv(path: &Path, records: &[BerRecord], cfg: &ExperimentConfig) -> Result<()> {
    let text = render_csv(records, cfg)?;
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Inverse of [`render_csv`] for the record rows.
pub fn parse_csv(text: &str) -> Result<Vec<BerRecord>> {
    let mut out = Vec::new();
    let mut seen_header = false;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !seen_header {
            if line != CSV_COLUMNS {
                return Err(Error::Config(format!(
                    "line {}: expected column header",
                    lineno + 1
                )));
            }
            seen_header = true;
            continue;
        }
        let bad = |what: &str| Error::Config(format!("line {}: bad {what}", lineno + 1));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(bad("field count"));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            if s == "inf" {
                Ok(f64::INFINITY)
            } else {
                s.parse().map_err(|_| bad(what))
            }
        };
        out.push(BerRecord {
            curve: Curve::parse(f[0]).map_err(|_| bad("variant"))?,
            snr_db: num(f[1], "snr_db")?,
            frames: f[2].parse().map_err(|_| bad("frames"))?,
            bit_errors: f[3].parse().map_err(|_| bad("bit_errors"))?,
            ber: num(f[4], "ber")?,
            ci_low: num(f[5], "ci_low")?,
            ci_high: num(f[6], "ci_high")?,
            wall_time_s: if f[7] == "NA" {
                None
            } else {
                Some(num(f[7], "wall_time_s")?)
            },
        });
    }
    Ok(out)
}

/// `variant,snr_db,ber` rows for plotting.
pub fn render_curves(records: &[BerRecord]) -> String {
    let mut sorted = records.to_vec();
    sort_records(&mut sorted);
    let mut s = String::from("variant,snr_db,ber\n");
    for r in &sorted {
        let _ = writeln!(s, "{},{},{}", r.curve.label(), format_snr(r.snr_db), r.ber);
    }
    s
}
