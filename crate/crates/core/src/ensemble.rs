//! The gated ensemble of weighted circular Viterbi experts.
//!
//! Expert `i` (zero-based) owns the contiguous block of tail-biting states
//! `[i * q, (i + 1) * q)` with `q = 2^nu / alpha`. At evaluation a cheap gate runs
//! one unweighted circular forward pass from a uniform start, traces back from
//! the middle state of every block and checks the CRC of each candidate. A
//! zero syndrome is emitted directly; otherwise the word goes to the experts
//! whose gate candidates had the smallest syndrome weight.

use std::ops::Range;
use std::path::Path;

use rand::Rng;

use crate::channel::{substream, WordRng};
use crate::crc16::{CrcCode, CrcSpec};
use crate::error::{Error, Result};
use crate::trellis::Trellis;
use crate::viterbi::{
    argmin, check_reps, circular_forward, middle_replication, BranchMetrics, Init,
};
use crate::wcva::{simulate_example, train_expert, wcva_forward, TrainConfig, WeightSet};

/// RNG domain for training data.
const TRAIN_DOMAIN: u64 = 0x74_7261_696e;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EnsembleConfig {
    /// Number of experts.
    pub alpha: usize,
    /// Replications of the gate and of every expert.
    pub reps: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self { alpha: 8, reps: 3 }
    }
}

impl EnsembleConfig {
    pub fn validate(&self, trellis: &Trellis) -> Result<()> {
        check_reps(self.reps)?;
        let ns = trellis.num_states();
        if self.alpha == 0 || !ns.is_multiple_of(self.alpha) {
            return Err(Error::InvalidInput(format!(
                "{} experts do not divide {ns} states",
                self.alpha
            )));
        }
        Ok(())
    }

    pub fn states_per_expert(&self, trellis: &Trellis) -> usize {
        trellis.num_states() / self.alpha
    }

    pub fn expert_of_state(&self, trellis: &Trellis, state: usize) -> usize {
        state / self.states_per_expert(trellis)
    }

    pub fn owned_states(&self, trellis: &Trellis, expert: usize) -> Range<usize> {
        let q = self.states_per_expert(trellis);
        expert * q..(expert + 1) * q
    }

    /// Gate trace-back states, the middle of each expert's block: `q (i - 1/2)` for `i = 1..alpha`.
    pub fn gate_states(&self, trellis: &Trellis) -> Vec<usize> {
        let q = self.states_per_expert(trellis);
        (0..self.alpha).map(|i| i * q + q / 2).collect()
    }
}

/// A received word and the detection word that was sent.
pub type LabelledWord = (Vec<f64>, Vec<u8>);

/// Splits `(llr, u)` pairs by the expert that owns the tail-biting state of `u`.
pub fn partition_dataset<I>(
    stream: I,
    trellis: &Trellis,
    cfg: &EnsembleConfig,
) -> Result<Vec<Vec<LabelledWord>>>
where
    I: IntoIterator<Item = LabelledWord>,
{
    cfg.validate(trellis)?;
    let mut parts = vec![Vec::new(); cfg.alpha];
    for (llr, u) in stream {
        let state = trellis.state_of(&u)?;
        parts[cfg.expert_of_state(trellis, state)].push((llr, u));
    }
    Ok(parts)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GateOutcome {
    /// Gate candidate `index` passed the CRC and is the output.
    Emit { index: usize },
    /// Experts (zero-based) that should decode the word.
    Route(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GatingDecision {
    pub syndromes: Vec<u32>,
    pub candidates: Vec<Vec<u8>>,
    pub outcome: GateOutcome,
}

impl GatingDecision {
    pub fn emitted(&self) -> Option<&[u8]> {
        match self.outcome {
            GateOutcome::Emit { index } => Some(&self.candidates[index]),
            GateOutcome::Route(_) => None,
        }
    }
}

/// Gating decoder: one circular forward pass, `alpha` trace-backs, CRC syndromes.
/// Several zero syndromes are resolved by a uniform draw from `rng`.
pub fn gate<R: Rng + ?Sized>(
    llr: &[f64],
    trellis: &Trellis,
    cfg: &EnsembleConfig,
    crc: &CrcCode,
    rng: &mut R,
) -> Result<GatingDecision> {
    cfg.validate(trellis)?;
    let bm = BranchMetrics::new(llr, trellis)?;
    gate_with_metrics(&bm, trellis, cfg, crc, rng)
}

fn gate_with_metrics<R: Rng + ?Sized>(
    bm: &BranchMetrics,
    trellis: &Trellis,
    cfg: &EnsembleConfig,
    crc: &CrcCode,
    rng: &mut R,
) -> Result<GatingDecision> {
    let n = bm.num_stages();
    crate::error::check_len(crc.word_len(), n)?;
    let pm = circular_forward(trellis, bm, Init::Uniform, cfg.reps)?;
    let candidates = cfg
        .gate_states(trellis)
        .into_iter()
        .map(|s| {
            pm.traceback(trellis, s)
                .map(|bits| middle_replication(&bits, cfg.reps, n).to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    let syndromes: Vec<u32> = candidates
        .iter()
        .map(|c| crc.syndrome_unchecked(c))
        .collect();
    let best = *syndromes.iter().min().expect("at least one expert");
    let winners: Vec<usize> = (0..syndromes.len())
        .filter(|&i| syndromes[i] == best)
        .collect();
    let outcome = if best == 0 {
        let pick = if winners.len() == 1 {
            0
        } else {
            rng.random_range(0..winners.len())
        };
        GateOutcome::Emit {
            index: winners[pick],
        }
    } else {
        GateOutcome::Route(winners)
    };
    Ok(GatingDecision {
        syndromes,
        candidates,
        outcome,
    })
}

/// Result of decoding one word with the ensemble.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleOutput {
    pub word: Vec<u8>,
    /// Full-block forward sweeps spent, counting every replication.
    pub va_runs: f64,
    /// Experts invoked after the gate (empty when the gate emitted).
    pub experts: Vec<usize>,
}

/// Trained experts together with the code they decode.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub trellis: Trellis,
    pub crc: CrcCode,
    pub cfg: EnsembleConfig,
    pub experts: Vec<WeightSet>,
}

impl Ensemble {
    pub fn new(
        trellis: Trellis,
        crc: CrcCode,
        cfg: EnsembleConfig,
        experts: Vec<WeightSet>,
    ) -> Result<Self> {
        cfg.validate(&trellis)?;
        if experts.len() != cfg.alpha {
            return Err(Error::InvalidInput(format!(
                "expected {} experts, got {}",
                cfg.alpha,
                experts.len()
            )));
        }
        for w in &experts {
            w.check_trellis(&trellis)?;
            if w.reps() != cfg.reps || w.block_len() != crc.word_len() {
                return Err(Error::InvalidInput(
                    "expert weights do not match the ensemble configuration".into(),
                ));
            }
        }
        Ok(Self {
            trellis,
            crc,
            cfg,
            experts,
        })
    }

    /// An ensemble whose experts all carry identity weights.
    pub fn untrained(trellis: Trellis, crc: CrcCode, cfg: EnsembleConfig) -> Result<Self> {
        cfg.validate(&trellis)?;
        let w = WeightSet::identity(&trellis, cfg.reps, crc.word_len())?;
        let experts = vec![w; cfg.alpha];
        Self::new(trellis, crc, cfg, experts)
    }

    pub fn block_len(&self) -> usize {
        self.crc.word_len()
    }

    fn expert_with_metrics(
        &self,
        bm: &BranchMetrics,
        expert: usize,
        end: TraceFrom,
    ) -> Result<Vec<u8>> {
        let weights = self.experts.get(expert).ok_or_else(|| {
            Error::InvalidInput(format!(
                "no expert {expert} in an ensemble of {}",
                self.cfg.alpha
            ))
        })?;
        let trace = wcva_forward(&self.trellis, bm, weights, Init::Uniform)?;
        let pm = &trace.metrics;
        let end_state = match end {
            TraceFrom::BestOwned => {
                let owned = self.cfg.owned_states(&self.trellis, expert);
                owned.start + argmin(&pm.last_row()[owned])
            }
            TraceFrom::State(s) => s,
        };
        let bits = pm.traceback(&self.trellis, end_state)?;
        Ok(middle_replication(&bits, self.cfg.reps, self.block_len()).to_vec())
    }

    /// Expert `expert` alone, traced back from its best owned final state.
    pub fn expert_decode(&self, llr: &[f64], expert: usize) -> Result<Vec<u8>> {
        let bm = BranchMetrics::new(llr, &self.trellis)?;
        self.expert_with_metrics(&bm, expert, TraceFrom::BestOwned)
    }

    /// Expert `expert` traced back from an arbitrary final state.
    pub fn expert_decode_from(&self, llr: &[f64], expert: usize, state: usize) -> Result<Vec<u8>> {
        self.trellis.check_state(state)?;
        let bm = BranchMetrics::new(llr, &self.trellis)?;
        self.expert_with_metrics(&bm, expert, TraceFrom::State(state))
    }

    /// Picks the candidate with the smallest syndrome weight, lowest index on ties.
    fn best_by_syndrome(&self, candidates: Vec<Vec<u8>>) -> Vec<u8> {
        let best = argmin_u32(candidates.iter().map(|c| self.crc.syndrome_unchecked(c)));
        candidates.into_iter().nth(best).unwrap_or_default()
    }

    /// Gated decoding. `rng` only breaks ties between several zero-syndrome gate candidates.
    pub fn decode<R: Rng + ?Sized>(&self, llr: &[f64], rng: &mut R) -> Result<EnsembleOutput> {
        let bm = BranchMetrics::new(llr, &self.trellis)?;
        let decision = gate_with_metrics(&bm, &self.trellis, &self.cfg, &self.crc, rng)?;
        let reps = self.cfg.reps as f64;
        match decision.outcome {
            GateOutcome::Emit { index } => Ok(EnsembleOutput {
                word: decision.candidates[index].clone(),
                va_runs: reps,
                experts: Vec::new(),
            }),
            GateOutcome::Route(experts) => {
                let candidates = experts
                    .iter()
                    .map(|&k| self.expert_with_metrics(&bm, k, TraceFrom::BestOwned))
                    .collect::<Result<Vec<_>>>()?;
                Ok(EnsembleOutput {
                    word: self.best_by_syndrome(candidates),
                    va_runs: reps * (1 + experts.len()) as f64,
                    experts,
                })
            }
        }
    }

    /// Every expert decodes; the smallest syndrome weight wins.
    pub fn decode_ungated(&self, llr: &[f64]) -> Result<EnsembleOutput> {
        let bm = BranchMetrics::new(llr, &self.trellis)?;
        let candidates = (0..self.cfg.alpha)
            .map(|k| self.expert_with_metrics(&bm, k, TraceFrom::BestOwned))
            .collect::<Result<Vec<_>>>()?;
        Ok(EnsembleOutput {
            word: self.best_by_syndrome(candidates),
            va_runs: (self.cfg.reps * self.cfg.alpha) as f64,
            experts: (0..self.cfg.alpha).collect(),
        })
    }

    /// Writes `manifest.json` and one weight file per expert into `dir`.
    pub fn save(&self, dir: &Path, meta: &TrainingMeta) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files: Vec<String> = (0..self.cfg.alpha)
            .map(|i| format!("expert_{i}.wts"))
            .collect();
        for (w, f) in self.experts.iter().zip(&files) {
            w.save(&dir.join(f))?;
        }
        let manifest = Manifest {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            memory: self.trellis.memory(),
            polynomials: self
                .trellis
                .polynomials()
                .iter()
                .map(|p| format!("{p:o}"))
                .collect(),
            msg_len: self.crc.msg_len,
            crc: self.crc.spec,
            ensemble: self.cfg,
            seed: meta.seed,
            train: meta.train.clone(),
            experts: files,
        };
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        std::fs::write(&path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(dir: &Path) -> Result<(Self, TrainingMeta)> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: Manifest = serde_json::from_str(&text)?;
        if m.format != MANIFEST_FORMAT || m.version != MANIFEST_VERSION {
            return Err(Error::WeightFormat(format!(
                "unsupported ensemble manifest {} v{}",
                m.format, m.version
            )));
        }
        let polys: Vec<&str> = m.polynomials.iter().map(String::as_str).collect();
        let trellis = Trellis::from_octal(m.memory, &polys)?;
        let spec = CrcSpec::new(m.crc.polynomial, m.crc.len)?;
        let crc = CrcCode::new(spec, m.msg_len)?;
        let experts = m
            .experts
            .iter()
            .map(|f| WeightSet::load(&dir.join(f)))
            .collect::<Result<Vec<_>>>()?;
        let ens = Self::new(trellis, crc, m.ensemble, experts)?;
        Ok((
            ens,
            TrainingMeta {
                seed: m.seed,
                train: m.train,
            },
        ))
    }
}

#[derive(Clone, Copy, Debug)]
enum TraceFrom {
    BestOwned,
    State(usize),
}

fn argmin_u32(xs: impl Iterator<Item = u32>) -> usize {
    let mut best = (u32::MAX, 0);
    for (i, x) in xs.enumerate() {
        if x < best.0 {
            best = (x, i);
        }
    }
    best.1
}

const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_FORMAT: &str = "wcvae-ensemble";
const MANIFEST_VERSION: u32 = 1;

/// How an ensemble was trained; echoed into its manifest.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub train: TrainConfig,
}

#[derive(serde::Serialize, serde::Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    memory: usize,
    polynomials: Vec<String>,
    msg_len: usize,
    crc: CrcSpec,
    ensemble: EnsembleConfig,
    seed: u64,
    train: TrainConfig,
    experts: Vec<String>,
}

/// Endless stream of simulated training words whose state belongs to `expert`.
pub fn expert_stream<'a>(
    trellis: &'a Trellis,
    crc: &'a CrcCode,
    cfg: &'a EnsembleConfig,
    train: &'a TrainConfig,
    expert: usize,
    seed: u64,
) -> impl Iterator<Item = crate::wcva::TrainExample> + 'a {
    let mut rng: WordRng = substream(seed, TRAIN_DOMAIN, expert as u64);
    std::iter::from_fn(move || loop {
        let (ex, _) = simulate_example(trellis, crc, train.snr_range_db, &mut rng)
            .expect("code parameters validated before training");
        if cfg.expert_of_state(trellis, ex.target_state) == expert {
            return Some(ex);
        }
    })
}

/// Simulates, partitions and trains all `alpha` experts.
pub fn train_ensemble(
    trellis: &Trellis,
    crc: &CrcCode,
    cfg: &EnsembleConfig,
    train: &TrainConfig,
    seed: u64,
) -> Result<Ensemble> {
    cfg.validate(trellis)?;
    train.validate()?;
    if train.reps != cfg.reps {
        return Err(Error::Config(format!(
            "training uses {} replications but the ensemble {}",
            train.reps, cfg.reps
        )));
    }
    let mut experts = Vec::with_capacity(cfg.alpha);
    for i in 0..cfg.alpha {
        let stream = expert_stream(trellis, crc, cfg, train, i, seed);
        let (weights, losses) = train_expert(stream, trellis, crc.word_len(), train)?;
        log::info!(
            "expert {i}: loss {:.4} -> {:.4} over {} batches",
            losses.first().copied().unwrap_or(f64::NAN),
            losses.last().copied().unwrap_or(f64::NAN),
            losses.len()
        );
        experts.push(weights);
    }
    Ensemble::new(trellis.clone(), *crc, *cfg, experts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{modulate, random_bits, Awgn};

    fn lte() -> (Trellis, CrcCode, EnsembleConfig) {
        (
            Trellis::lte(),
            CrcCode::lte(13).unwrap(),
            EnsembleConfig::default(),
        )
    }

    #[test]
    fn gate_states_are_block_midpoints() {
        let (t, _, cfg) = lte();
        assert_eq!(cfg.gate_states(&t), vec![4, 12, 20, 28, 36, 44, 52, 60]);
    }

    #[test]
    fn expert_intervals() {
        let (t, _, cfg) = lte();
        assert_eq!(cfg.expert_of_state(&t, 0), 0);
        assert_eq!(cfg.expert_of_state(&t, 63), 7);
        assert_eq!(cfg.expert_of_state(&t, 12), 1);
        assert_eq!(cfg.owned_states(&t, 1), 8..16);
        let mut covered = vec![0; 64];
        for i in 0..8 {
            for s in cfg.owned_states(&t, i) {
                covered[s] += 1;
            }
        }
        assert!(covered.iter().all(|&c| c == 1));
    }

    #[test]
    fn alpha_must_divide_states() {
        let (t, _, _) = lte();
        assert!(EnsembleConfig { alpha: 6, reps: 3 }.validate(&t).is_err());
        assert!(EnsembleConfig { alpha: 8, reps: 2 }.validate(&t).is_err());
        assert!(partition_dataset(Vec::new(), &t, &EnsembleConfig { alpha: 5, reps: 3 }).is_err());
    }

    #[test]
    fn noiseless_word_is_emitted() {
        let (t, crc, cfg) = lte();
        let ens = Ensemble::untrained(t.clone(), crc, cfg).unwrap();
        let mut rng = substream(5, 0, 0);
        for _ in 0..20 {
            let u = crc.encode(&random_bits(13, &mut rng)).unwrap();
            let llr = Awgn::new(1.0)
                .unwrap()
                .noiseless_llr(&modulate(&t.encode(&u).unwrap()));
            let out = ens.decode(&llr, &mut rng).unwrap();
            assert_eq!(out.word, u);
            assert_eq!(out.va_runs, 3.0);
            assert!(out.experts.is_empty());
        }
    }

    #[test]
    fn routed_word_counts_expert_runs() {
        let (t, crc, cfg) = lte();
        let ens = Ensemble::untrained(t.clone(), crc, cfg).unwrap();
        // heavy noise: most words are routed
        let ch = Awgn::from_snr_db(-6.0).unwrap();
        let mut rng = substream(11, 0, 0);
        let mut routed = 0;
        for _ in 0..50 {
            let u = crc.encode(&random_bits(13, &mut rng)).unwrap();
            let llr = ch.llr(&modulate(&t.encode(&u).unwrap()), &mut rng).unwrap();
            let d = gate(&llr, &t, &cfg, &crc, &mut rng.clone()).unwrap();
            let out = ens.decode(&llr, &mut rng).unwrap();
            match d.outcome {
                GateOutcome::Emit { index } => {
                    assert_eq!(d.syndromes[index], 0);
                    assert_eq!(out.va_runs, 3.0);
                }
                GateOutcome::Route(ref set) => {
                    routed += 1;
                    let min = *d.syndromes.iter().min().unwrap();
                    assert!(min > 0);
                    assert!(set.iter().all(|&i| d.syndromes[i] == min));
                    assert_eq!(out.va_runs, 3.0 * (1 + set.len()) as f64);
                    assert_eq!(&out.experts, set);
                }
            }
        }
        assert!(routed > 0);
    }

    #[test]
    fn ensemble_rejects_mismatched_experts() {
        let (t, crc, cfg) = lte();
        let w = WeightSet::identity(&t, 3, 30).unwrap();
        assert!(Ensemble::new(t.clone(), crc, cfg, vec![w; 8]).is_err());
        let w = WeightSet::identity(&t, 3, 29).unwrap();
        assert!(Ensemble::new(t, crc, cfg, vec![w; 7]).is_err());
    }
}
