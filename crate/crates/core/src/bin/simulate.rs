use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, ValueEnum};
use turbo_pga::sim::{
    emit_csv, render_csv, render_curves, run_experiment_with_threads, ExperimentConfig, SnrDb,
};
use turbo_pga::turbo::{Interference, Variant};
use turbo_pga::Error;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    Paper,
}

/// Monte Carlo BER simulation of turbo equalization over a known ISI channel.
#[derive(Debug, Parser)]
#[command(name = "simulate", version, group(ArgGroup::new("source").required(true).args(["config", "preset"])))]
struct Args {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in config; fields in `--config` are not merged with it.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Receiver variant, repeatable (BP_GA, BP_EP, BP_PGA, BP_EP_PGA).
    #[arg(long = "variant")]
    variants: Vec<String>,
    /// Eb/N0 grid as `start:stop:step` (inclusive) or a comma list; `inf` allowed in lists.
    #[arg(long = "snr-db")]
    snr_db: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Also write `variant,snr_db,ber` rows to this file.
    #[arg(long = "emit-curves")]
    emit_curves: Option<PathBuf>,
    /// Record wall time per row (makes the CSV run-dependent).
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    info_bits: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Target number of strong interferers.
    #[arg(long, conflicts_with = "rho")]
    m: Option<usize>,
    /// Strong-interferer threshold.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    belief_reuse: bool,
    #[arg(long)]
    no_awgn: bool,
    #[arg(long)]
    min_frames: Option<u64>,
    #[arg(long)]
    min_bit_errors: Option<u64>,
    #[arg(long)]
    max_frames: Option<u64>,
}

fn parse_grid(s: &str) -> Result<Vec<SnrDb>, Error> {
    let bad = || {
        Error::Config(format!(
            "--snr-db `{s}`: expected start:stop:step or a comma list"
        ))
    };
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 3 {
        let v: Vec<f64> = parts
            .iter()
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad())?;
        let (a, b, step) = (v[0], v[1], v[2]);
        if !(step > 0.0) || b < a || !a.is_finite() || !b.is_finite() {
            return Err(bad());
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|j| SnrDb(a + j as f64 * step)).collect());
    }
    s.split(',')
        .map(|p| match p.trim() {
            "inf" => Ok(SnrDb(f64::INFINITY)),
            t => t.parse().map(SnrDb).map_err(|_| bad()),
        })
        .collect()
}

fn build_config(args: &Args) -> Result<ExperimentConfig, Error> {
    let mut cfg = match (&args.config, args.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        (None, Some(Preset::Paper)) => ExperimentConfig::paper(),
        (None, None) => unreachable!("clap enforces a source"),
    };
    if !args.variants.is_empty() {
        cfg.variants = args
            .variants
            .iter()
            .map(|v| v.parse::<Variant>())
            .collect::<Result<_, _>>()?;
    }
    if let Some(g) = &args.snr_db {
        cfg.snr_db = parse_grid(g)?;
    }
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(k) = args.info_bits {
        cfg.info_bits = k;
    }
    if let Some(it) = args.iterations {
        cfg.iterations = it;
    }
    if let Some(m) = args.m {
        cfg.interference = Interference::TargetM(m);
    }
    if let Some(rho) = args.rho {
        cfg.interference = Interference::Rho(rho);
    }
    cfg.belief_reuse |= args.belief_reuse;
    if args.no_awgn {
        cfg.awgn_reference = false;
    }
    if let Some(v) = args.min_frames {
        cfg.min_frames = v;
    }
    if let Some(v) = args.min_bit_errors {
        cfg.min_bit_errors = v;
    }
    if let Some(v) = args.max_frames {
        cfg.max_frames = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: &Args) -> Result<(), Error> {
    let cfg = build_config(args)?;
    let threads = args
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let records = run_experiment_with_threads(&cfg, threads, args.timing)?;
    match &args.out {
        Some(path) => emit_csv(path, &records, &cfg)?,
        None => print!("{}", render_csv(&records, &cfg)?),
    }
    if let Some(path) = &args.emit_curves {
        std::fs::write(path, render_curves(&records)).map_err(|e| Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("simulate: {e}");
            ExitCode::from(match e {
                Error::Numeric(_) | Error::NotInvertible { .. } => 3,
                Error::Io { .. } => 1,
                _ => 2,
            })
        }
    }
}
