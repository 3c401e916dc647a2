//! `tbcc`: train gated ensembles and run Monte Carlo decoder comparisons.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use tbcc::channel::{random_bits, substream};
use tbcc::ensemble::{train_ensemble, Ensemble, EnsembleConfig, TrainingMeta};
use tbcc::harness::{
    emit_results, per_state_analysis, run_experiment, state_rows_to_csv, DecoderKind,
    ExperimentConfig, ResultFormat,
};

#[derive(Parser)]
#[command(name = "tbcc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a gated ensemble and write it to a directory.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Run the SNR sweep and write CSV (or JSON for a `.json` path).
    Eval {
        #[command(flatten)]
        common: Common,
        /// Comma-separated decoders: va,cva,lcva,lgva,mld,wcvae,gated-wcvae.
        #[arg(long, value_delimiter = ',')]
        decoders: Option<Vec<DecoderKind>>,
        #[arg(long)]
        min_errors: Option<u64>,
        #[arg(long)]
        max_trials: Option<u64>,
        /// Trained ensemble directory.
        #[arg(long)]
        ensemble: Option<PathBuf>,
    },
    /// Per-termination-state FER of each expert against the unweighted decoder.
    StateAnalysis {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ensemble: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        snr: f64,
        /// Comma-separated states; all states when omitted.
        #[arg(long, value_delimiter = ',')]
        states: Option<Vec<usize>>,
        #[arg(long)]
        min_errors: Option<u64>,
        #[arg(long)]
        max_trials: Option<u64>,
    },
    /// Regenerate CRC and encoder reference vectors.
    Golden {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output = Some(out.clone());
    }
    Ok(cfg)
}

fn train(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let Some(dir) = cfg.output.clone() else {
        bail!("train needs --out <dir> (or `output` in the config)");
    };
    let trellis = cfg.code.trellis()?;
    let crc = cfg.code.crc()?;
    let ens_cfg = EnsembleConfig {
        alpha: cfg.params.alpha,
        reps: cfg.params.reps,
    };
    let ensemble = train_ensemble(&trellis, &crc, &ens_cfg, &cfg.training, cfg.seed)?;
    ensemble.save(
        &dir,
        &TrainingMeta {
            seed: cfg.seed,
            train: cfg.training.clone(),
        },
    )?;
    eprintln!("wrote {} experts to {}", ens_cfg.alpha, dir.display());
    Ok(())
}

fn eval(
    common: &Common,
    decoders: Option<Vec<DecoderKind>>,
    min_errors: Option<u64>,
    max_trials: Option<u64>,
    ensemble: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(d) = decoders {
        cfg.decoders = d;
    }
    if let Some(n) = min_errors {
        cfg.stop.min_errors = n;
    }
    if let Some(n) = max_trials {
        cfg.stop.max_trials = n;
    }
    if ensemble.is_some() {
        cfg.ensemble = ensemble;
    }
    let records = run_experiment(&cfg, None)?;
    for r in &records {
        eprintln!(
            "{:>12} {:>5.1} dB  trials {:>9}  errors {:>6}  FER {:.3e}  VA runs {:.3}{}",
            r.decoder.name(),
            r.snr_db,
            r.trials,
            r.frame_errors,
            r.fer,
            r.mean_va_runs,
            if r.capped { "  (capped)" } else { "" }
        );
    }
    match &cfg.output {
        Some(path) => emit_results(&records, path, ResultFormat::from_path(path))?,
        None => print!("{}", tbcc::harness::records_to_csv(&records)?),
    }
    Ok(())
}

fn state_analysis(
    common: &Common,
    ensemble: Option<PathBuf>,
    snr: f64,
    states: Option<Vec<usize>>,
    min_errors: Option<u64>,
    max_trials: Option<u64>,
) -> Result<()> {
    let mut cfg = load_config(common)?;
    let dir = ensemble
        .or(cfg.ensemble.clone())
        .context("state-analysis needs --ensemble <dir>")?;
    let (ens, _) = Ensemble::load(&dir)?;
    if let Some(n) = min_errors {
        cfg.stop.min_errors = n;
    }
    if let Some(n) = max_trials {
        cfg.stop.max_trials = n;
    }
    let states = states.unwrap_or_else(|| (0..ens.trellis.num_states()).collect());
    let rows = per_state_analysis(&ens, &states, snr, &cfg.stop, cfg.seed)?;
    let csv = state_rows_to_csv(&rows)?;
    match &cfg.output {
        Some(path) => write(path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn golden(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let trellis = cfg.code.trellis()?;
    let crc = cfg.code.crc()?;
    let mut rng = substream(cfg.seed, 0x676f_6c64, 0);
    let mut unit = vec![0u8; crc.msg_len];
    unit[0] = 1;
    let vectors: Vec<_> = (0..4)
        .map(|_| random_bits(crc.msg_len, &mut rng))
        .chain(std::iter::once(unit.clone()))
        .map(|m| Ok(json!({ "message": m, "detection": crc.encode(&m)? })))
        .collect::<Result<_>>()?;
    let unit_word = crc.encode(&unit)?;
    let non_codeword = loop {
        let w = random_bits(crc.word_len(), &mut rng);
        if crc.syndrome(&w)? > 0 {
            break w;
        }
    };
    let detection = crc.encode(&random_bits(crc.msg_len, &mut rng))?;
    let doc = json!({
        "version": 1,
        "crc": {
            "polynomial_hex": format!("{:#x}", crc.spec.polynomial),
            "unit_message_remainder": &unit_word[crc.msg_len..],
            "vectors": vectors,
            "non_codeword_syndrome_weight": crc.syndrome(&non_codeword)?,
            "non_codeword": non_codeword,
        },
        "tbcc": {
            "memory": trellis.memory(),
            "polynomials": cfg.code.polynomials,
            "start_state": trellis.state_of(&detection)?,
            "codeword": trellis.encode(&detection)?,
            "detection": detection,
        },
    });
    let text = serde_json::to_string_pretty(&doc)? + "\n";
    match &cfg.output {
        Some(path) => write(path, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Train { common } => train(&common),
        Command::Eval {
            common,
            decoders,
            min_errors,
            max_trials,
            ensemble,
        } => eval(&common, decoders, min_errors, max_trials, ensemble),
        Command::StateAnalysis {
            common,
            ensemble,
            snr,
            states,
            min_errors,
            max_trials,
        } => state_analysis(&common, ensemble, snr, states, min_errors, max_trials),
        Command::Golden { common } => golden(&common),
    }
}
