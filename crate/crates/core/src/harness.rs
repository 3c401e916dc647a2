//! Monte Carlo frame-error-rate experiments.
//!
//! Every trial at a given `(seed, SNR index, trial index)` draws the same
//! message and noise no matter which decoders run, so decoders are compared on
//! identical words. Trials run in blocks of [`ExperimentConfig::block_size`]; the
//! stop rule is checked only between blocks.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{modulate, random_bits, substream, Awgn};
use crate::crc16::{CrcCode, CrcSpec};
use crate::ensemble::{Ensemble, EnsembleConfig};
use crate::error::{Error, Result};
use crate::trellis::Trellis;
use crate::viterbi::{self, BranchMetrics, Init};
use crate::wcva::TrainConfig;

const NOISE_DOMAIN: u64 = 0x6e6f_6973_6500;
const GATE_DOMAIN: u64 = 0x6761_7465_0000;
const STATE_DOMAIN: u64 = 0x7374_6174_6500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecoderKind {
    /// Single Viterbi run from the known start state.
    Va,
    Cva,
    Lcva,
    Lgva,
    Mld,
    /// Every expert decodes, smallest syndrome wins.
    Wcvae,
    GatedWcvae,
}

impl DecoderKind {
    pub const ALL: [DecoderKind; 7] = [
        DecoderKind::Va,
        DecoderKind::Cva,
        DecoderKind::Lcva,
        DecoderKind::Lgva,
        DecoderKind::Mld,
        DecoderKind::Wcvae,
        DecoderKind::GatedWcvae,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DecoderKind::Va => "va",
            DecoderKind::Cva => "cva",
            DecoderKind::Lcva => "lcva",
            DecoderKind::Lgva => "lgva",
            DecoderKind::Mld => "mld",
            DecoderKind::Wcvae => "wcvae",
            DecoderKind::GatedWcvae => "gated-wcvae",
        }
    }

    pub fn needs_ensemble(self) -> bool {
        matches!(self, DecoderKind::Wcvae | DecoderKind::GatedWcvae)
    }
}

impl fmt::Display for DecoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DecoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DecoderKind::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown decoder {s:?}")))
    }
}

/// Code parameters: `N_u = msg_len + crc_len`, `N_c = V * N_u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodeConfig {
    pub memory: usize,
    /// Octal generator polynomials.
    pub polynomials: Vec<String>,
    pub msg_len: usize,
    pub crc_polynomial: u32,
    pub crc_len: usize,
}

impl Default for CodeConfig {
    fn default() -> Self {
        Self::lte(13)
    }
}

impl CodeConfig {
    /// The LTE code carrying `msg_len` message bits, e.g. 13 for `(87, 29, 13)`.
    pub fn lte(msg_len: usize) -> Self {
        Self {
            memory: crate::trellis::LTE_MEMORY,
            polynomials: crate::trellis::LTE_POLYNOMIALS
                .iter()
                .map(|p| format!("{p:o}"))
                .collect(),
            msg_len,
            crc_polynomial: CrcSpec::LTE_CRC16.polynomial,
            crc_len: CrcSpec::LTE_CRC16.len,
        }
    }

    pub fn trellis(&self) -> Result<Trellis> {
        let polys: Vec<&str> = self.polynomials.iter().map(String::as_str).collect();
        Trellis::from_octal(self.memory, &polys)
    }

    pub fn crc(&self) -> Result<CrcCode> {
        CrcCode::new(
            CrcSpec::new(self.crc_polynomial, self.crc_len)?,
            self.msg_len,
        )
    }

    /// `(N_c, N_u, N_m)`.
    pub fn lengths(&self) -> (usize, usize, usize) {
        let n_u = self.msg_len + self.crc_len;
        (n_u * self.polynomials.len(), n_u, self.msg_len)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderParams {
    pub reps: usize,
    pub list_size: usize,
    pub lam_max: f64,
    pub alpha: usize,
}

impl Default for DecoderParams {
    fn default() -> Self {
        Self {
            reps: 3,
            list_size: 8,
            lam_max: viterbi::DEFAULT_LAM_MAX,
            alpha: 8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StopRule {
    pub min_errors: u64,
    pub max_trials: u64,
    /// Decoders whose error counts must reach `min_errors`; empty means all.
    pub watch: Vec<DecoderKind>,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            min_errors: 100,
            max_trials: 10_000_000,
            watch: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub code: CodeConfig,
    pub decoders: Vec<DecoderKind>,
    pub snr_db: Vec<f64>,
    pub stop: StopRule,
    pub seed: u64,
    pub params: DecoderParams,
    pub training: TrainConfig,
    /// Directory of a trained ensemble, required by the ensemble decoders.
    pub ensemble: Option<PathBuf>,
    pub output: Option<PathBuf>,
    /// Decode noiseless LLRs (`2x / sigma^2`) instead of noisy ones.
    pub noiseless: bool,
    pub block_size: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            code: CodeConfig::default(),
            decoders: vec![
                DecoderKind::Cva,
                DecoderKind::Lcva,
                DecoderKind::Lgva,
                DecoderKind::Wcvae,
                DecoderKind::GatedWcvae,
            ],
            snr_db: vec![-2.0, -1.0, 0.0, 1.0, 2.0],
            stop: StopRule::default(),
            seed: 0,
            params: DecoderParams::default(),
            training: TrainConfig::default(),
            ensemble: None,
            output: None,
            noiseless: false,
            block_size: 500,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let trellis = self.code.trellis()?;
        self.code.crc()?;
        if self.decoders.is_empty() {
            return Err(Error::Config("no decoders selected".into()));
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config(
                "SNR grid must be non-empty and finite".into(),
            ));
        }
        if self.stop.min_errors == 0 {
            return Err(Error::Config("min_errors must be at least 1".into()));
        }
        if self.block_size == 0 {
            return Err(Error::Config("block_size must be at least 1".into()));
        }
        viterbi::check_reps(self.params.reps)?;
        if self.params.list_size == 0 {
            return Err(Error::Config("list_size must be at least 1".into()));
        }
        EnsembleConfig {
            alpha: self.params.alpha,
            reps: self.params.reps,
        }
        .validate(&trellis)?;
        Ok(())
    }

    fn watched(&self) -> Vec<usize> {
        let watch = if self.stop.watch.is_empty() {
            &self.decoders
        } else {
            &self.stop.watch
        };
        (0..self.decoders.len())
            .filter(|&i| watch.contains(&self.decoders[i]))
            .collect()
    }
}

/// Accumulated statistics of one decoder at one SNR.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FerRecord {
    pub decoder: DecoderKind,
    pub snr_db: f64,
    pub trials: u64,
    pub frame_errors: u64,
    pub bit_errors: u64,
    pub fer: f64,
    pub ber: f64,
    pub mean_va_runs: f64,
    /// The trial cap was hit before the stop rule was met.
    pub capped: bool,
}

#[derive(Clone, Debug, Default)]
struct Counter {
    frame_errors: u64,
    bit_errors: u64,
    va_runs: f64,
}

/// Decoders prepared for one experiment.
pub struct DecoderBank {
    pub trellis: Trellis,
    pub crc: CrcCode,
    pub params: DecoderParams,
    pub ensemble: Option<Ensemble>,
}

impl DecoderBank {
    pub fn new(
        code: &CodeConfig,
        params: DecoderParams,
        ensemble: Option<Ensemble>,
    ) -> Result<Self> {
        let trellis = code.trellis()?;
        let crc = code.crc()?;
        if let Some(e) = &ensemble {
            if e.trellis != trellis || e.crc != crc || e.cfg.reps != params.reps {
                return Err(Error::Config(
                    "ensemble was trained for a different code or replication count".into(),
                ));
            }
        }
        Ok(Self {
            trellis,
            crc,
            params,
            ensemble,
        })
    }

    fn ensemble(&self) -> Result<&Ensemble> {
        self.ensemble
            .as_ref()
            .ok_or_else(|| Error::Config("ensemble decoders need a trained ensemble".into()))
    }

    /// Decodes `llr` with `kind`, returning the word and the VA runs spent.
    pub fn decode<R: Rng + ?Sized>(
        &self,
        kind: DecoderKind,
        llr: &[f64],
        true_state: usize,
        rng: &mut R,
    ) -> Result<(Vec<u8>, f64)> {
        let t = &self.trellis;
        let p = &self.params;
        let reps = p.reps as f64;
        Ok(match kind {
            DecoderKind::Va => (viterbi::va_decode(llr, t, true_state, p.lam_max)?, 1.0),
            DecoderKind::Cva => (viterbi::cva_decode(llr, t, p.reps, p.lam_max)?, reps),
            DecoderKind::Lcva => (
                viterbi::lcva_decode(llr, t, p.reps, p.list_size, p.lam_max, &self.crc)?,
                reps,
            ),
            DecoderKind::Lgva => (
                viterbi::lgva_decode(llr, t, true_state, p.list_size, p.lam_max, &self.crc)?,
                1.0,
            ),
            DecoderKind::Mld => (viterbi::mld_decode(llr, t)?, t.num_states() as f64),
            DecoderKind::Wcvae => {
                let out = self.ensemble()?.decode_ungated(llr)?;
                (out.word, out.va_runs)
            }
            DecoderKind::GatedWcvae => {
                let out = self.ensemble()?.decode(llr, rng)?;
                (out.word, out.va_runs)
            }
        })
    }
}

/// One simulated transmission.
#[derive(Clone, Debug)]
pub struct Trial {
    pub word: Vec<u8>,
    pub state: usize,
    pub llr: Vec<f64>,
}

/// Draws the message and noise of trial `index` at SNR index `snr_index`.
pub fn simulate_trial(
    trellis: &Trellis,
    crc: &CrcCode,
    snr_db: f64,
    noiseless: bool,
    seed: u64,
    snr_index: usize,
    index: u64,
) -> Result<Trial> {
    let mut rng = substream(seed, NOISE_DOMAIN + snr_index as u64, index);
    let word = crc.encode(&random_bits(crc.msg_len, &mut rng))?;
    let x = modulate(&trellis.encode(&word)?);
    let ch = Awgn::from_snr_db(snr_db)?;
    let llr = if noiseless {
        ch.noiseless_llr(&x)
    } else {
        ch.llr(&x, &mut rng)?
    };
    let state = trellis.state_of(&word)?;
    Ok(Trial { word, state, llr })
}

fn hamming(a: &[u8], b: &[u8]) -> u64 {
    a.iter().zip(b).filter(|(x, y)| x != y).count() as u64
}

/// Runs the configured SNR sweep. Records are ordered by SNR, then by decoder
/// in configuration order.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    ensemble: Option<Ensemble>,
) -> Result<Vec<FerRecord>> {
    cfg.validate()?;
    let ensemble = match ensemble {
        Some(e) => Some(e),
        None if cfg.decoders.iter().any(|d| d.needs_ensemble()) => {
            let dir = cfg.ensemble.as_ref().ok_or_else(|| {
                Error::Config("ensemble decoders selected but no ensemble directory given".into())
            })?;
            Some(Ensemble::load(dir)?.0)
        }
        None => None,
    };
    let bank = DecoderBank::new(&cfg.code, cfg.params, ensemble)?;
    let watched = cfg.watched();
    let n_u = bank.crc.word_len() as u64;
    let mut records = Vec::new();
    for (j, &snr) in cfg.snr_db.iter().enumerate() {
        let mut counters = vec![Counter::default(); cfg.decoders.len()];
        let mut trials = 0u64;
        let done = |c: &[Counter]| {
            watched
                .iter()
                .all(|&i| c[i].frame_errors >= cfg.stop.min_errors)
        };
        while !done(&counters) && trials < cfg.stop.max_trials {
            let end = (trials + cfg.block_size).min(cfg.stop.max_trials);
            for index in trials..end {
                let trial = simulate_trial(
                    &bank.trellis,
                    &bank.crc,
                    snr,
                    cfg.noiseless,
                    cfg.seed,
                    j,
                    index,
                )?;
                for (c, &kind) in counters.iter_mut().zip(&cfg.decoders) {
                    let mut rng = substream(cfg.seed, GATE_DOMAIN + j as u64, index);
                    let (word, runs) = bank.decode(kind, &trial.llr, trial.state, &mut rng)?;
                    let errs = hamming(&word, &trial.word);
                    c.bit_errors += errs;
                    c.frame_errors += u64::from(errs > 0);
                    c.va_runs += runs;
                }
            }
            trials = end;
        }
        let capped = !done(&counters);
        if capped {
            log::warn!(
                "SNR {snr} dB: stopped at the cap of {} trials before reaching {} errors",
                cfg.stop.max_trials,
                cfg.stop.min_errors
            );
        }
        for (c, &kind) in counters.iter().zip(&cfg.decoders) {
            let t = trials.max(1) as f64;
            records.push(FerRecord {
                decoder: kind,
                snr_db: snr,
                trials,
                frame_errors: c.frame_errors,
                bit_errors: c.bit_errors,
                fer: c.frame_errors as f64 / t,
                ber: c.bit_errors as f64 / (t * n_u as f64),
                mean_va_runs: c.va_runs / t,
                capped,
            });
        }
        log::info!("SNR {snr} dB: {trials} trials");
    }
    Ok(records)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResultFormat {
    Csv,
    Json,
}

impl ResultFormat {
    /// Chosen from the file extension; anything but `.json` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => ResultFormat::Json,
            _ => ResultFormat::Csv,
        }
    }
}

#[derive(Serialize)]
struct CsvRow {
    decoder: DecoderKind,
    snr_db: f64,
    trials: u64,
    frame_errors: u64,
    fer: f64,
    ber: f64,
    mean_va_runs: f64,
}

pub fn records_to_csv(records: &[FerRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(CsvRow {
            decoder: r.decoder,
            snr_db: r.snr_db,
            trials: r.trials,
            frame_errors: r.frame_errors,
            fer: r.fer,
            ber: r.ber,
            mean_va_runs: r.mean_va_runs,
        })
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn records_to_json(records: &[FerRecord]) -> Result<String> {
    Ok(serde_json::to_string_pretty(records)? + "\n")
}

pub fn records_from_json(text: &str) -> Result<Vec<FerRecord>> {
    Ok(serde_json::from_str(text)?)
}

/// Writes `records` to `path` as CSV or JSON.
pub fn emit_results(records: &[FerRecord], path: &Path, format: ResultFormat) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidInput("no records to write".into()));
    }
    let text = match format {
        ResultFormat::Csv => records_to_csv(records)?,
        ResultFormat::Json => records_to_json(records)?,
    };
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Per-termination-state error counts of one decoder.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StateCount {
    pub trials: u64,
    pub frame_errors: u64,
}

impl StateCount {
    pub fn fer(&self) -> f64 {
        self.frame_errors as f64 / self.trials.max(1) as f64
    }
}

/// One row of the per-state comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateRow {
    pub state: usize,
    pub expert: usize,
    /// State the unweighted decoder and `expert_fixed` trace back from.
    pub traceback_state: usize,
    /// Unweighted circular decoder (uniform start) traced back from `traceback_state`.
    pub cva: StateCount,
    /// The expert with its usual trace-back from its best owned state.
    pub expert_best: StateCount,
    /// The expert traced back from `traceback_state`.
    pub expert_fixed: StateCount,
}

/// Draws a message whose detection word has tail-biting state `state`.
pub fn sample_word_in_state<R: Rng + ?Sized>(
    trellis: &Trellis,
    crc: &CrcCode,
    state: usize,
    rng: &mut R,
) -> Result<Vec<u8>> {
    trellis.check_state(state)?;
    loop {
        let word = crc.encode(&random_bits(crc.msg_len, rng))?;
        if trellis.state_of(&word)? == state {
            return Ok(word);
        }
    }
}

/// Simulates words conditioned on each of `states` at `snr_db` and measures the
/// unweighted decoder traced back from the first state of the owning expert's
/// block against that expert. Each state stops once every decoder has
/// `stop.min_errors` errors or after `stop.max_trials` words.
pub fn per_state_analysis(
    ensemble: &Ensemble,
    states: &[usize],
    snr_db: f64,
    stop: &StopRule,
    seed: u64,
) -> Result<Vec<StateRow>> {
    let t = &ensemble.trellis;
    let ch = Awgn::from_snr_db(snr_db)?;
    let reps = ensemble.cfg.reps;
    let n = ensemble.block_len();
    let mut rows = Vec::with_capacity(states.len());
    for &state in states {
        let expert = ensemble.cfg.expert_of_state(t, state);
        let tb = ensemble.cfg.owned_states(t, expert).start;
        let mut rng = substream(seed, STATE_DOMAIN, state as u64);
        let mut row = StateRow {
            state,
            expert,
            traceback_state: tb,
            cva: StateCount::default(),
            expert_best: StateCount::default(),
            expert_fixed: StateCount::default(),
        };
        let counts = |r: &StateRow| {
            [
                r.cva.frame_errors,
                r.expert_best.frame_errors,
                r.expert_fixed.frame_errors,
            ]
        };
        while counts(&row).iter().any(|&e| e < stop.min_errors) && row.cva.trials < stop.max_trials
        {
            let u = sample_word_in_state(t, &ensemble.crc, state, &mut rng)?;
            let llr = ch.llr(&modulate(&t.encode(&u)?), &mut rng)?;
            let bm = BranchMetrics::new(&llr, t)?;
            let pm = viterbi::circular_forward(t, &bm, Init::Uniform, reps)?;
            let cva = viterbi::middle_replication(&pm.traceback(t, tb)?, reps, n).to_vec();
            let best = ensemble.expert_decode(&llr, expert)?;
            let fixed = ensemble.expert_decode_from(&llr, expert, tb)?;
            for (count, word) in [
                (&mut row.cva, cva),
                (&mut row.expert_best, best),
                (&mut row.expert_fixed, fixed),
            ] {
                count.trials += 1;
                count.frame_errors += u64::from(word != u);
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn state_rows_to_csv(rows: &[StateRow]) -> Result<String> {
    #[derive(Serialize)]
    struct Flat {
        state: usize,
        expert: usize,
        traceback_state: usize,
        trials: u64,
        cva_fer: f64,
        expert_fer: f64,
        expert_fixed_fer: f64,
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(Flat {
            state: r.state,
            expert: r.expert,
            traceback_state: r.traceback_state,
            trials: r.cva.trials,
            cva_fer: r.cva.fer(),
            expert_fer: r.expert_best.fer(),
            expert_fixed_fer: r.expert_fixed.fer(),
        })
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(decoder: DecoderKind, snr_db: f64) -> FerRecord {
        FerRecord {
            decoder,
            snr_db,
            trials: 1000,
            frame_errors: 17,
            bit_errors: 40,
            fer: 0.017,
            ber: 40.0 / 29000.0,
            mean_va_runs: 3.0,
            capped: false,
        }
    }

    #[test]
    fn decoder_names_round_trip() {
        for d in DecoderKind::ALL {
            assert_eq!(d.name().parse::<DecoderKind>().unwrap(), d);
        }
        assert!("viterbi".parse::<DecoderKind>().is_err());
    }

    #[test]
    fn code_lengths() {
        assert_eq!(CodeConfig::lte(13).lengths(), (87, 29, 13));
        assert_eq!(CodeConfig::lte(15).lengths(), (93, 31, 15));
        assert_eq!(CodeConfig::lte(30).lengths(), (138, 46, 30));
        assert_eq!(CodeConfig::lte(50).lengths(), (198, 66, 50));
    }

    #[test]
    fn csv_has_one_row_per_decoder_and_snr() {
        let recs: Vec<FerRecord> = [-2.0, -1.0, 0.0, 1.0, 2.0]
            .iter()
            .flat_map(|&s| {
                [
                    record(DecoderKind::Cva, s),
                    record(DecoderKind::GatedWcvae, s),
                ]
            })
            .collect();
        let csv = records_to_csv(&recs).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 11);
        assert_eq!(
            lines[0],
            "decoder,snr_db,trials,frame_errors,fer,ber,mean_va_runs"
        );
        assert!(lines[2].starts_with("gated-wcvae,-2.0,1000,17,"));
    }

    #[test]
    fn json_round_trip() {
        let recs = vec![
            record(DecoderKind::Lgva, 1.0),
            record(DecoderKind::Mld, 2.0),
        ];
        let back = records_from_json(&records_to_json(&recs).unwrap()).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn emit_rejects_empty_and_unwritable() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_results(&[], &dir.path().join("a.csv"), ResultFormat::Csv).is_err());
        let recs = vec![record(DecoderKind::Cva, 0.0)];
        let bad = dir.path().join("missing").join("a.csv");
        assert!(matches!(
            emit_results(&recs, &bad, ResultFormat::Csv),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn config_from_toml() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            decoders = ["cva", "lgva"]
            snr_db = [0.0, 1.0]
            seed = 9
            [code]
            msg_len = 30
            [stop]
            min_errors = 20
            max_trials = 5000
            "#,
        )
        .unwrap();
        assert_eq!(cfg.code.lengths(), (138, 46, 30));
        assert_eq!(cfg.decoders, vec![DecoderKind::Cva, DecoderKind::Lgva]);
        assert_eq!(cfg.stop.min_errors, 20);
        assert_eq!(cfg.params, DecoderParams::default());
    }

    #[test]
    fn config_validation() {
        let bad = |s: &str| ExperimentConfig::from_toml(s).is_err();
        assert!(bad("decoders = []"));
        assert!(bad("[stop]\nmin_errors = 0"));
        assert!(bad("[params]\nreps = 2"));
        assert!(bad("[params]\nalpha = 7"));
        assert!(bad("decoders = [\"bcjr\"]"));
    }

    #[test]
    fn missing_ensemble_is_an_error() {
        let cfg = ExperimentConfig {
            decoders: vec![DecoderKind::GatedWcvae],
            ensemble: Some(PathBuf::from("/nonexistent/ensemble")),
            ..ExperimentConfig::default()
        };
        assert!(run_experiment(&cfg, None).is_err());
        let cfg = ExperimentConfig {
            ensemble: None,
            ..cfg
        };
        assert!(matches!(run_experiment(&cfg, None), Err(Error::Config(_))));
    }

    #[test]
    fn trials_are_paired_across_decoders() {
        let t = Trellis::lte();
        let crc = CrcCode::lte(13).unwrap();
        let a = simulate_trial(&t, &crc, 0.0, false, 3, 1, 17).unwrap();
        let b = simulate_trial(&t, &crc, 0.0, false, 3, 1, 17).unwrap();
        assert_eq!(a.llr, b.llr);
        let c = simulate_trial(&t, &crc, 0.0, false, 3, 1, 18).unwrap();
        assert_ne!(a.llr, c.llr);
    }

    #[test]
    fn sampled_words_have_requested_state() {
        let t = Trellis::lte();
        let crc = CrcCode::lte(13).unwrap();
        let mut rng = substream(1, 2, 3);
        for s in [0, 9, 40, 63] {
            for _ in 0..5 {
                let u = sample_word_in_state(&t, &crc, s, &mut rng).unwrap();
                assert_eq!(t.state_of(&u).unwrap(), s);
                assert!(crc.is_codeword(&u));
            }
        }
    }
}
