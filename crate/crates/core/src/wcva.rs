//! Weighted circular Viterbi decoding and training.
//!
//! Only the middle replication is parameterized. For a section `k` inside it,
//!
//! ```text
//! lam_k(s) = min_j  wp[k, 2s+j] * lam_{k-1}(pred(s, j)) + wb[k, 2s+j] * beta_k(2s+j)
//! ```
//!
//! followed by the usual row normalization. Sections outside the middle
//! replication use the plain recursion, so all-ones weights reproduce the
//! unweighted decoder exactly.
//!
//! Training minimizes `-log softmax(-lam_last)[target]` where `lam_last` is the
//! metric row at the end of the middle replication. Gradients pass through the
//! min like max pooling: only the selected edge of each state receives any.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use rand::Rng;

use crate::channel::{modulate, random_bits, Awgn};
use crate::crc16::CrcCode;
use crate::error::{check_len, Error, Result};
use crate::trellis::Trellis;
use crate::viterbi::{argmin, check_reps, BranchMetrics, Init, PathMetrics};

const FORMAT_TAG: &str = "wcva-weights";
const FORMAT_VERSION: u32 = 1;

/// Learnable path and branch weights of one expert, one pair per edge per
/// section of the middle replication.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightSet {
    memory: usize,
    polynomials: Vec<u32>,
    reps: usize,
    block_len: usize,
    num_edges: usize,
    /// `block_len * num_edges` path weights followed by as many branch weights.
    params: Vec<f64>,
}

impl WeightSet {
    /// All-ones weights, equivalent to the unweighted circular decoder.
    pub fn identity(trellis: &Trellis, reps: usize, block_len: usize) -> Result<Self> {
        check_reps(reps)?;
        if block_len == 0 {
            return Err(Error::InvalidInput("empty block".into()));
        }
        let num_edges = trellis.num_edges();
        Ok(Self {
            memory: trellis.memory(),
            polynomials: trellis.polynomials().to_vec(),
            reps,
            block_len,
            num_edges,
            params: vec![1.0; 2 * block_len * num_edges],
        })
    }

    pub fn reps(&self) -> usize {
        self.reps
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    /// Zero-based forward sections that carry weights.
    pub fn stage_range(&self) -> Range<usize> {
        let start = self.reps / 2 * self.block_len;
        start..start + self.block_len
    }

    fn half(&self) -> usize {
        self.block_len * self.num_edges
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Path weights of weighted section `t` (`0..block_len`), one per edge.
    pub fn path(&self, t: usize) -> &[f64] {
        &self.params[t * self.num_edges..(t + 1) * self.num_edges]
    }

    pub fn branch(&self, t: usize) -> &[f64] {
        let h = self.half();
        &self.params[h + t * self.num_edges..h + (t + 1) * self.num_edges]
    }

    pub fn path_index(&self, t: usize, edge: usize) -> usize {
        t * self.num_edges + edge
    }

    pub fn branch_index(&self, t: usize, edge: usize) -> usize {
        self.half() + t * self.num_edges + edge
    }

    pub fn check_trellis(&self, trellis: &Trellis) -> Result<()> {
        if trellis.memory() != self.memory || trellis.polynomials() != self.polynomials.as_slice() {
            return Err(Error::InvalidInput(
                "weights were built for a different code".into(),
            ));
        }
        Ok(())
    }

    /// Versioned plain-text serialization.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let polys: Vec<String> = self.polynomials.iter().map(|p| format!("{p:o}")).collect();
        let r = self.stage_range();
        writeln!(out, "{FORMAT_TAG} {FORMAT_VERSION}").unwrap();
        writeln!(out, "memory {}", self.memory).unwrap();
        writeln!(out, "polynomials {}", polys.join(" ")).unwrap();
        writeln!(out, "replications {}", self.reps).unwrap();
        writeln!(out, "block_len {}", self.block_len).unwrap();
        writeln!(out, "stages {} {}", r.start, r.end).unwrap();
        writeln!(out, "shape {} {}", self.block_len, self.num_edges).unwrap();
        for (name, half) in [("path", 0), ("branch", 1)] {
            writeln!(out, "{name}").unwrap();
            for t in 0..self.block_len {
                let row = if half == 0 {
                    self.path(t)
                } else {
                    self.branch(t)
                };
                let line: Vec<String> = row.iter().map(|w| format!("{w:?}")).collect();
                writeln!(out, "{}", line.join(" ")).unwrap();
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::WeightFormat(msg.to_string());
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        fn next_field<'a>(
            lines: &mut impl Iterator<Item = &'a str>,
            key: &str,
        ) -> Result<Vec<String>> {
            let line = lines
                .next()
                .ok_or_else(|| Error::WeightFormat(format!("missing {key}")))?;
            let mut words = line.split_whitespace();
            if words.next() != Some(key) {
                return Err(Error::WeightFormat(format!(
                    "expected {key:?}, found {line:?}"
                )));
            }
            Ok(words.map(str::to_string).collect())
        }
        let parse_usize = |v: &[String], i: usize| -> Result<usize> {
            v.get(i)
                .and_then(|x| x.parse().ok())
                .ok_or_else(|| bad("expected an unsigned integer"))
        };
        let header = next_field(&mut lines, FORMAT_TAG)?;
        if header.first().map(String::as_str) != Some("1") {
            return Err(bad("unsupported format version"));
        }
        let memory = parse_usize(&next_field(&mut lines, "memory")?, 0)?;
        let polynomials = next_field(&mut lines, "polynomials")?
            .iter()
            .map(|p| u32::from_str_radix(p, 8).map_err(|_| bad("bad octal polynomial")))
            .collect::<Result<Vec<_>>>()?;
        let reps = parse_usize(&next_field(&mut lines, "replications")?, 0)?;
        let block_len = parse_usize(&next_field(&mut lines, "block_len")?, 0)?;
        let stages = next_field(&mut lines, "stages")?;
        let shape = next_field(&mut lines, "shape")?;
        let trellis = Trellis::new(memory, &polynomials)?;
        let mut ws = Self::identity(&trellis, reps, block_len)?;
        let r = ws.stage_range();
        if parse_usize(&stages, 0)? != r.start || parse_usize(&stages, 1)? != r.end {
            return Err(bad(
                "stage range does not match replications and block length",
            ));
        }
        if parse_usize(&shape, 0)? != block_len || parse_usize(&shape, 1)? != ws.num_edges {
            return Err(bad("shape does not match the code"));
        }
        let h = ws.half();
        for (name, offset) in [("path", 0), ("branch", h)] {
            next_field(&mut lines, name)?;
            for t in 0..block_len {
                let line = lines.next().ok_or_else(|| bad("truncated weight rows"))?;
                let row = line
                    .split_whitespace()
                    .map(|x| x.parse::<f64>().map_err(|_| bad("bad weight value")))
                    .collect::<Result<Vec<_>>>()?;
                if row.len() != ws.num_edges || row.iter().any(|w| !w.is_finite()) {
                    return Err(bad("weight row has the wrong length or a non-finite value"));
                }
                let base = offset + t * ws.num_edges;
                ws.params[base..base + ws.num_edges].copy_from_slice(&row);
            }
        }
        if lines.next().is_some() {
            return Err(bad("trailing data"));
        }
        Ok(ws)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// A weighted forward pass together with what the backward pass needs.
#[derive(Clone, Debug)]
pub struct WeightedTrace {
    pub metrics: PathMetrics,
    /// State holding the row minimum before normalization, per weighted section.
    row_argmin: Vec<usize>,
    first_weighted: usize,
}

impl WeightedTrace {
    /// Forward row index of the last weighted section (the training target row).
    pub fn last_weighted_row(&self) -> usize {
        self.first_weighted + self.row_argmin.len()
    }

    pub fn last_weighted_metrics(&self) -> &[f64] {
        self.metrics.row(self.last_weighted_row())
    }
}

/// Weighted circular forward pass over `num_stages` sections (at most
/// `reps * block_len`).
pub fn wcva_forward_stages(
    trellis: &Trellis,
    bm: &BranchMetrics,
    weights: &WeightSet,
    init: Init,
    num_stages: usize,
) -> Result<WeightedTrace> {
    weights.check_trellis(trellis)?;
    check_len(weights.block_len, bm.num_stages())?;
    let total = weights.reps * weights.block_len;
    if num_stages > total {
        return Err(Error::InvalidInput(format!(
            "{num_stages} stages exceed {total} replicated stages"
        )));
    }
    let ns = trellis.num_states();
    let range = weights.stage_range();
    let mut pm = PathMetrics::with_capacity(ns, num_stages, init.metrics(ns)?);
    let mut raw = vec![0.0; ns];
    let mut choice = vec![0u8; ns];
    let mut row_argmin = Vec::with_capacity(weights.block_len);
    for k in 0..num_stages {
        let beta = bm.stage(k);
        let prev = pm.row(k);
        if range.contains(&k) {
            let t = k - range.start;
            let (wp, wb) = (weights.path(t), weights.branch(t));
            for s in 0..ns {
                let p0 = trellis.predecessor(s, 0);
                let (e0, e1) = (2 * s, 2 * s + 1);
                let m0 = wp[e0] * prev[p0] + wb[e0] * beta[e0];
                let m1 = wp[e1] * prev[p0 | 1] + wb[e1] * beta[e1];
                (raw[s], choice[s]) = if m1 < m0 { (m1, 1) } else { (m0, 0) };
            }
            row_argmin.push(argmin(&raw));
        } else {
            for s in 0..ns {
                let p0 = trellis.predecessor(s, 0);
                let m0 = prev[p0] + beta[2 * s];
                let m1 = prev[p0 | 1] + beta[2 * s + 1];
                (raw[s], choice[s]) = if m1 < m0 { (m1, 1) } else { (m0, 0) };
            }
        }
        pm.push_row(&raw, &choice);
    }
    Ok(WeightedTrace {
        metrics: pm,
        row_argmin,
        first_weighted: range.start,
    })
}

/// Full weighted forward pass over all `reps * block_len` sections.
pub fn wcva_forward(
    trellis: &Trellis,
    bm: &BranchMetrics,
    weights: &WeightSet,
    init: Init,
) -> Result<WeightedTrace> {
    wcva_forward_stages(trellis, bm, weights, init, weights.reps * weights.block_len)
}

/// `-log softmax(-lam)[target]` and its gradient with respect to `lam`.
pub fn surrogate_loss(lam_last: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    if target >= lam_last.len() {
        return Err(Error::InvalidState {
            state: target,
            num_states: lam_last.len(),
        });
    }
    let shift = lam_last.iter().copied().fold(f64::INFINITY, f64::min);
    let exps: Vec<f64> = lam_last.iter().map(|&l| (shift - l).exp()).collect();
    let z: f64 = exps.iter().sum();
    let loss = lam_last[target] - shift + z.ln();
    let grad = exps
        .iter()
        .enumerate()
        .map(|(s, &e)| f64::from(u8::from(s == target)) - e / z)
        .collect();
    Ok((loss, grad))
}

/// Accumulates `dL/dweights` into `grad` (same layout as [`WeightSet::params`]),
/// given `dL/dlam` at the last weighted row.
pub fn backward(
    trellis: &Trellis,
    bm: &BranchMetrics,
    weights: &WeightSet,
    trace: &WeightedTrace,
    grad_last: &[f64],
    grad: &mut [f64],
) -> Result<()> {
    let ns = trellis.num_states();
    check_len(ns, grad_last.len())?;
    check_len(weights.params.len(), grad.len())?;
    if trace.row_argmin.len() != weights.block_len
        || trace.metrics.num_stages() < trace.last_weighted_row()
    {
        return Err(Error::InvalidInput(
            "trace does not cover the weighted sections".into(),
        ));
    }
    let mut g = grad_last.to_vec();
    let mut g_prev = vec![0.0; ns];
    for t in (0..weights.block_len).rev() {
        let k = trace.first_weighted + t;
        // through the row normalization: lam~(s) = raw(s) - raw(argmin)
        let total: f64 = g.iter().sum();
        g[trace.row_argmin[t]] -= total;
        let prev = trace.metrics.row(k);
        let beta = bm.stage(k);
        let wp = weights.path(t);
        g_prev.fill(0.0);
        for (s, &gs) in g.iter().enumerate() {
            if gs == 0.0 {
                continue;
            }
            let j = usize::from(trace.metrics.choice(k + 1, s));
            let e = 2 * s + j;
            let p = trellis.predecessor(s, j);
            grad[weights.path_index(t, e)] += gs * prev[p];
            grad[weights.branch_index(t, e)] += gs * beta[e];
            g_prev[p] += gs * wp[e];
        }
        std::mem::swap(&mut g, &mut g_prev);
    }
    Ok(())
}

/// Loss of one example and its accumulated gradient.
pub fn example_loss_and_grad(
    trellis: &Trellis,
    weights: &WeightSet,
    example: &TrainExample,
    grad: &mut [f64],
) -> Result<f64> {
    let bm = BranchMetrics::new(&example.llr, trellis)?;
    let stop = weights.stage_range().end;
    let trace = wcva_forward_stages(trellis, &bm, weights, Init::Uniform, stop)?;
    let (loss, g) = surrogate_loss(trace.last_weighted_metrics(), example.target_state)?;
    backward(trellis, &bm, weights, &trace, &g, grad)?;
    Ok(loss)
}

/// Loss only, for finite-difference checks and monitoring.
pub fn example_loss(trellis: &Trellis, weights: &WeightSet, example: &TrainExample) -> Result<f64> {
    let bm = BranchMetrics::new(&example.llr, trellis)?;
    let stop = weights.stage_range().end;
    let trace = wcva_forward_stages(trellis, &bm, weights, Init::Uniform, stop)?;
    Ok(surrogate_loss(trace.last_weighted_metrics(), example.target_state)?.0)
}

/// One received word labelled with its tail-biting state.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainExample {
    pub llr: Vec<f64>,
    pub target_state: usize,
}

/// Simulates one CRC+TBCC word at an SNR drawn uniformly from `snr_range_db`.
pub fn simulate_example<R: Rng + ?Sized>(
    trellis: &Trellis,
    crc: &CrcCode,
    snr_range_db: (f64, f64),
    rng: &mut R,
) -> Result<(TrainExample, Vec<u8>)> {
    let message = random_bits(crc.msg_len, rng);
    let word = crc.encode(&message)?;
    let (lo, hi) = snr_range_db;
    let snr = if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    };
    let llr = Awgn::from_snr_db(snr)?.llr(&modulate(&trellis.encode(&word)?), rng)?;
    let target_state = trellis.state_of(&word)?;
    Ok((TrainExample { llr, target_state }, word))
}

/// Hyper-parameters of expert training.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub num_batches: usize,
    pub snr_range_db: (f64, f64),
    pub rmsprop_decay: f64,
    pub rmsprop_epsilon: f64,
    pub lam_max: f64,
    pub reps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 450,
            num_batches: 50,
            snr_range_db: (-2.0, 0.0),
            rmsprop_decay: 0.99,
            rmsprop_epsilon: 1e-8,
            lam_max: 20.0,
            reps: 3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check_reps(self.reps)?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.learning_rate.is_nan()
            || self.learning_rate < 0.0
            || !(0.0..1.0).contains(&self.rmsprop_decay)
        {
            return Err(Error::Config("invalid optimizer parameters".into()));
        }
        if self.snr_range_db.0 > self.snr_range_db.1 {
            return Err(Error::Config("empty training SNR range".into()));
        }
        Ok(())
    }
}

/// RMSProp with the squared-gradient average initialized to zero.
#[derive(Clone, Debug)]
pub struct RmsProp {
    lr: f64,
    decay: f64,
    eps: f64,
    mean_sq: Vec<f64>,
}

impl RmsProp {
    pub fn new(lr: f64, decay: f64, eps: f64, num_params: usize) -> Self {
        Self {
            lr,
            decay,
            eps,
            mean_sq: vec![0.0; num_params],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        for ((w, &g), v) in params.iter_mut().zip(grad).zip(&mut self.mean_sq) {
            *v = self.decay * *v + (1.0 - self.decay) * g * g;
            *w -= self.lr * g / (v.sqrt() + self.eps);
        }
    }
}

/// Mini-batch trainer for one expert.
#[derive(Clone, Debug)]
pub struct ExpertTrainer {
    pub weights: WeightSet,
    optimizer: RmsProp,
    grad: Vec<f64>,
}

impl ExpertTrainer {
    pub fn new(trellis: &Trellis, block_len: usize, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let weights = WeightSet::identity(trellis, cfg.reps, block_len)?;
        let n = weights.params.len();
        Ok(Self {
            weights,
            optimizer: RmsProp::new(cfg.learning_rate, cfg.rmsprop_decay, cfg.rmsprop_epsilon, n),
            grad: vec![0.0; n],
        })
    }

    /// One optimizer step on the mean loss of `batch`; returns that mean loss.
    pub fn step(&mut self, trellis: &Trellis, batch: &[TrainExample]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::InvalidInput("empty mini-batch".into()));
        }
        self.grad.fill(0.0);
        let mut loss = 0.0;
        for ex in batch {
            loss += example_loss_and_grad(trellis, &self.weights, ex, &mut self.grad)?;
        }
        let scale = 1.0 / batch.len() as f64;
        self.grad.iter_mut().for_each(|g| *g *= scale);
        self.optimizer.step(&mut self.weights.params, &self.grad);
        Ok(loss * scale)
    }
}

/// Trains one expert on `cfg.num_batches` mini-batches drawn from `examples`.
/// Returns the weights and the mean loss of every batch.
pub fn train_expert<I>(
    examples: I,
    trellis: &Trellis,
    block_len: usize,
    cfg: &TrainConfig,
) -> Result<(WeightSet, Vec<f64>)>
where
    I: IntoIterator<Item = TrainExample>,
{
    let mut trainer = ExpertTrainer::new(trellis, block_len, cfg)?;
    let mut examples = examples.into_iter();
    let mut losses = Vec::with_capacity(cfg.num_batches);
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.num_batches {
        batch.clear();
        batch.extend(examples.by_ref().take(cfg.batch_size));
        if batch.is_empty() {
            if losses.is_empty() {
                return Err(Error::InvalidInput("empty training stream".into()));
            }
            log::warn!("training stream exhausted after {} batches", losses.len());
            break;
        }
        losses.push(trainer.step(trellis, &batch)?);
    }
    Ok((trainer.weights, losses))
}
