//! Unweighted trellis decoding.
//!
//! Metrics are costs: lower is better. The branch metric of an edge with output
//! bits `c_1..c_V` over LLRs `l_1..l_V` is `sum l_v c_v`. For BPSK over AWGN,
//! `-log p(y_v | c_v) = (y_v - 1 + 2c_v)^2 / (2 sigma^2) + const`, and expanding
//! the square leaves `l_v c_v` plus terms that do not depend on the edge.
//!
//! Every forward pass subtracts the row minimum after each stage. The offsets are
//! kept in [`PathMetrics`] so absolute metrics can be recovered; the subtraction
//! never changes a survivor choice.

use crate::crc16::CrcCode;
use crate::error::{check_len, Error, Result};
use crate::trellis::Trellis;

/// LLR clipping parameter used to bias the initial state.
pub const DEFAULT_LAM_MAX: f64 = 20.0;

/// Per-stage, per-edge branch metrics of one received block.
#[derive(Clone, Debug)]
pub struct BranchMetrics {
    num_edges: usize,
    beta: Vec<f64>,
}

impl BranchMetrics {
    pub fn new(llr: &[f64], trellis: &Trellis) -> Result<Self> {
        let v = trellis.outputs_per_stage();
        if llr.is_empty() || !llr.len().is_multiple_of(v) {
            return Err(Error::InvalidInput(format!(
                "LLR length {} is not a positive multiple of {v}",
                llr.len()
            )));
        }
        let num_edges = trellis.num_edges();
        let mut beta = Vec::with_capacity(llr.len() / v * num_edges);
        let mut by_pattern = vec![0.0; 1 << v];
        for chunk in llr.chunks_exact(v) {
            for (pat, slot) in by_pattern.iter_mut().enumerate() {
                *slot = chunk
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| (pat >> (v - 1 - k)) & 1 == 1)
                    .map(|(_, l)| l)
                    .sum();
            }
            beta.extend((0..num_edges).map(|e| by_pattern[usize::from(trellis.edge_pattern(e))]));
        }
        Ok(Self { num_edges, beta })
    }

    pub fn num_stages(&self) -> usize {
        self.beta.len() / self.num_edges
    }

    /// Metrics of stage `stage`, wrapping around the block.
    #[inline]
    pub fn stage(&self, stage: usize) -> &[f64] {
        let k = stage % self.num_stages();
        &self.beta[k * self.num_edges..(k + 1) * self.num_edges]
    }

    #[inline]
    pub fn get(&self, stage: usize, edge: usize) -> f64 {
        self.stage(stage)[edge]
    }
}

/// Initial path metrics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// All states equiprobable.
    Uniform,
    /// `-lam_max` at `state`, zero elsewhere.
    Biased { state: usize, lam_max: f64 },
    /// Only `state` is reachable.
    Forced { state: usize },
}

impl Init {
    pub fn zero_state(lam_max: f64) -> Self {
        Init::Biased { state: 0, lam_max }
    }

    pub fn metrics(&self, num_states: usize) -> Result<Vec<f64>> {
        let state = match *self {
            Init::Uniform => return Ok(vec![0.0; num_states]),
            Init::Biased { state, .. } | Init::Forced { state } => state,
        };
        if state >= num_states {
            return Err(Error::InvalidState { state, num_states });
        }
        Ok(match *self {
            Init::Biased { lam_max, .. } => {
                let mut m = vec![0.0; num_states];
                m[state] = -lam_max;
                m
            }
            _ => {
                let mut m = vec![f64::INFINITY; num_states];
                m[state] = 0.0;
                m
            }
        })
    }
}

/// Path metrics of one forward pass.
#[derive(Clone, Debug)]
pub struct PathMetrics {
    num_states: usize,
    /// `(stages + 1) x states`; row 0 is the initialization.
    lam: Vec<f64>,
    /// `stages x states`; survivor edge `j` into each state.
    choice: Vec<u8>,
    /// Row minimum subtracted after each stage.
    offsets: Vec<f64>,
}

impl PathMetrics {
    pub(crate) fn with_capacity(num_states: usize, stages: usize, init: Vec<f64>) -> Self {
        let mut lam = Vec::with_capacity((stages + 1) * num_states);
        lam.extend(init);
        Self {
            num_states,
            lam,
            choice: Vec::with_capacity(stages * num_states),
            offsets: Vec::with_capacity(stages),
        }
    }

    pub fn num_stages(&self) -> usize {
        self.offsets.len()
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    /// Normalized metrics after `stage` sections (`0` is the initialization).
    pub fn row(&self, stage: usize) -> &[f64] {
        &self.lam[stage * self.num_states..(stage + 1) * self.num_states]
    }

    pub fn last_row(&self) -> &[f64] {
        self.row(self.num_stages())
    }

    /// Un-normalized metric: the stored value plus all subtracted offsets.
    pub fn absolute(&self, stage: usize, state: usize) -> f64 {
        self.row(stage)[state] + self.offsets[..stage].iter().sum::<f64>()
    }

    /// Survivor edge `j` into `state` at `stage` (`1..=num_stages`).
    pub fn choice(&self, stage: usize, state: usize) -> u8 {
        self.choice[(stage - 1) * self.num_states + state]
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub(crate) fn push_row(&mut self, raw: &[f64], choice: &[u8]) -> f64 {
        let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
        self.lam.extend(raw.iter().map(|&x| x - min));
        self.choice.extend_from_slice(choice);
        self.offsets.push(min);
        min
    }

    /// Walks survivors back from `end_state`, returning one input bit per stage.
    pub fn traceback(&self, trellis: &Trellis, end_state: usize) -> Result<Vec<u8>> {
        trellis.check_state(end_state)?;
        let n = self.num_stages();
        let mut bits = vec![0u8; n];
        let mut s = end_state;
        for k in (1..=n).rev() {
            bits[k - 1] = trellis.input_into(s);
            s = trellis.predecessor(s, usize::from(self.choice(k, s)));
        }
        Ok(bits)
    }

    /// Index of the smallest final metric, lowest state on ties.
    pub fn best_final_state(&self) -> usize {
        argmin(self.last_row())
    }
}

pub(crate) fn argmin(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x < xs[best] {
            best = i;
        }
    }
    best
}

/// Forward recursion over `num_stages` sections, reading branch metrics cyclically.
pub(crate) fn forward_cyclic(
    trellis: &Trellis,
    bm: &BranchMetrics,
    init: Vec<f64>,
    num_stages: usize,
) -> PathMetrics {
    let ns = trellis.num_states();
    let mut pm = PathMetrics::with_capacity(ns, num_stages, init);
    let mut raw = vec![0.0; ns];
    let mut choice = vec![0u8; ns];
    for k in 0..num_stages {
        let beta = bm.stage(k);
        let prev = pm.row(k);
        for s in 0..ns {
            let p0 = trellis.predecessor(s, 0);
            let m0 = prev[p0] + beta[2 * s];
            let m1 = prev[p0 | 1] + beta[2 * s + 1];
            // ties go to the lower-numbered predecessor
            if m1 < m0 {
                raw[s] = m1;
                choice[s] = 1;
            } else {
                raw[s] = m0;
                choice[s] = 0;
            }
        }
        pm.push_row(&raw, &choice);
    }
    pm
}

/// Viterbi forward pass over the first `num_stages` sections of a block.
pub fn viterbi_forward(
    trellis: &Trellis,
    bm: &BranchMetrics,
    init: &[f64],
    num_stages: usize,
) -> Result<PathMetrics> {
    check_len(trellis.num_states(), init.len())?;
    if num_stages > bm.num_stages() {
        return Err(Error::InvalidInput(format!(
            "{num_stages} stages requested from a block of {}",
            bm.num_stages()
        )));
    }
    Ok(forward_cyclic(trellis, bm, init.to_vec(), num_stages))
}

/// Forward pass over `reps` concatenated copies of the block.
pub fn circular_forward(
    trellis: &Trellis,
    bm: &BranchMetrics,
    init: Init,
    reps: usize,
) -> Result<PathMetrics> {
    let init = init.metrics(trellis.num_states())?;
    Ok(forward_cyclic(trellis, bm, init, reps * bm.num_stages()))
}

pub(crate) fn check_reps(reps: usize) -> Result<()> {
    if reps % 2 == 1 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "replication count must be odd, got {reps}"
        )))
    }
}

/// The middle replication of a decoded sequence of `reps * block_len` bits.
pub fn middle_replication(bits: &[u8], reps: usize, block_len: usize) -> &[u8] {
    let start = reps / 2 * block_len;
    &bits[start..start + block_len]
}

/// Sum of branch metrics along the path driven by `bits` from `start`.
pub fn path_cost(trellis: &Trellis, bm: &BranchMetrics, start: usize, bits: &[u8]) -> f64 {
    let mut s = start;
    let mut cost = 0.0;
    for (k, &b) in bits.iter().enumerate() {
        cost += bm.get(k, trellis.edge_from(s, b));
        s = trellis.next_state(s, b);
    }
    cost
}

/// Single Viterbi run started (biased) from `state` and traced back from the same state.
pub fn va_decode(llr: &[f64], trellis: &Trellis, state: usize, lam_max: f64) -> Result<Vec<u8>> {
    let bm = BranchMetrics::new(llr, trellis)?;
    let pm = circular_forward(trellis, &bm, Init::Biased { state, lam_max }, 1)?;
    pm.traceback(trellis, state)
}

/// Circular Viterbi: `reps` replications, zero-state start and end, middle replication out.
pub fn cva_decode(llr: &[f64], trellis: &Trellis, reps: usize, lam_max: f64) -> Result<Vec<u8>> {
    check_reps(reps)?;
    let bm = BranchMetrics::new(llr, trellis)?;
    let pm = circular_forward(trellis, &bm, Init::zero_state(lam_max), reps)?;
    let bits = pm.traceback(trellis, 0)?;
    Ok(middle_replication(&bits, reps, bm.num_stages()).to_vec())
}

/// Maximum-likelihood tail-biting decoding: one Viterbi run per start state,
/// each forced to start and end in that state; the smallest end metric wins.
pub fn mld_decode(llr: &[f64], trellis: &Trellis) -> Result<Vec<u8>> {
    let bm = BranchMetrics::new(llr, trellis)?;
    let n = bm.num_stages();
    let mut best: Option<(f64, Vec<u8>)> = None;
    for s in 0..trellis.num_states() {
        let pm = circular_forward(trellis, &bm, Init::Forced { state: s }, 1)?;
        let metric = pm.absolute(n, s);
        if best.as_ref().is_none_or(|(m, _)| metric < *m) {
            best = Some((metric, pm.traceback(trellis, s)?));
        }
    }
    Ok(best.expect("trellis has at least one state").1)
}

/// Parallel list Viterbi state: the `list_size` best paths into every state at every stage.
#[derive(Clone, Debug)]
pub struct ListMetrics {
    num_states: usize,
    list_size: usize,
    /// `stages x states x list_size` back pointers: `(j << 8) | rank`.
    back: Vec<u16>,
    /// Normalized metrics of the last stage, `states x list_size`.
    last: Vec<f64>,
    offsets: Vec<f64>,
}

/// One decoded path of a list decoder.
#[derive(Clone, Debug, PartialEq)]
pub struct ListCandidate {
    /// Absolute path metric, including the initial metric.
    pub metric: f64,
    pub bits: Vec<u8>,
}

impl ListMetrics {
    pub fn num_stages(&self) -> usize {
        self.offsets.len()
    }

    /// Up to `list_size` paths ending in `end_state`, in non-decreasing metric order.
    pub fn candidates(&self, trellis: &Trellis, end_state: usize) -> Result<Vec<ListCandidate>> {
        trellis.check_state(end_state)?;
        let (n, ns, l) = (self.num_stages(), self.num_states, self.list_size);
        let total_offset: f64 = self.offsets.iter().sum();
        let mut out = Vec::with_capacity(l);
        for rank in 0..l {
            let metric = self.last[end_state * l + rank];
            if !metric.is_finite() {
                break;
            }
            let mut bits = vec![0u8; n];
            let (mut s, mut r) = (end_state, rank);
            for k in (0..n).rev() {
                let bp = self.back[(k * ns + s) * l + r];
                bits[k] = trellis.input_into(s);
                s = trellis.predecessor(s, usize::from(bp >> 8));
                r = usize::from(bp & 0xff);
            }
            out.push(ListCandidate {
                metric: metric + total_offset,
                bits,
            });
        }
        Ok(out)
    }
}

/// Parallel list Viterbi forward pass over `reps` copies of the block.
pub fn list_forward(
    trellis: &Trellis,
    bm: &BranchMetrics,
    init: Init,
    reps: usize,
    list_size: usize,
) -> Result<ListMetrics> {
    check_list_size(list_size)?;
    let (ns, l) = (trellis.num_states(), list_size);
    let stages = reps * bm.num_stages();
    // one trailing infinity per state so the merge never reads past a list
    let stride = l + 1;
    let mut prev = vec![f64::INFINITY; ns * stride];
    for (s, m) in init.metrics(ns)?.into_iter().enumerate() {
        prev[s * stride] = m;
    }
    let mut cur = vec![f64::INFINITY; ns * stride];
    let mut back = vec![0u16; stages * ns * l];
    let mut offsets = Vec::with_capacity(stages);
    for k in 0..stages {
        let beta = bm.stage(k);
        let back_row = &mut back[k * ns * l..(k + 1) * ns * l];
        for s in 0..ns {
            let p0 = trellis.predecessor(s, 0);
            let a = &prev[p0 * stride..(p0 + 1) * stride];
            let b = &prev[(p0 | 1) * stride..(p0 + 2) * stride];
            let (ba, bb) = (beta[2 * s], beta[2 * s + 1]);
            let out = &mut cur[s * stride..s * stride + l];
            let bp = &mut back_row[s * l..(s + 1) * l];
            // both lists are sorted; merge, preferring edge 0 on ties
            let (mut ia, mut ib) = (0, 0);
            for r in 0..l {
                let ma = a[ia] + ba;
                let mb = b[ib] + bb;
                if ma.min(mb) == f64::INFINITY {
                    out[r..].fill(f64::INFINITY);
                    break;
                }
                if ma <= mb {
                    out[r] = ma;
                    bp[r] = ia as u16;
                    ia += 1;
                } else {
                    out[r] = mb;
                    bp[r] = 0x100 | ib as u16;
                    ib += 1;
                }
            }
        }
        let min = (0..ns)
            .map(|s| cur[s * stride])
            .fold(f64::INFINITY, f64::min);
        for s in 0..ns {
            cur[s * stride..s * stride + l]
                .iter_mut()
                .for_each(|m| *m -= min);
        }
        offsets.push(min);
        std::mem::swap(&mut prev, &mut cur);
    }
    let last = (0..ns)
        .flat_map(|s| prev[s * stride..s * stride + l].iter().copied())
        .collect();
    Ok(ListMetrics {
        num_states: ns,
        list_size: l,
        back,
        last,
        offsets,
    })
}

/// The first candidate passing the CRC, or the best candidate if none does.
pub fn select_by_crc(candidates: Vec<Vec<u8>>, crc: &CrcCode) -> Vec<u8> {
    match candidates.iter().position(|c| crc.is_codeword(c)) {
        Some(i) => candidates.into_iter().nth(i).expect("index in range"),
        None => candidates.into_iter().next().unwrap_or_default(),
    }
}

fn check_list_size(list_size: usize) -> Result<()> {
    if list_size == 0 || list_size > 256 {
        return Err(Error::InvalidInput(format!(
            "list size must be in 1..=256, got {list_size}"
        )));
    }
    Ok(())
}

/// CRC-aided list decoding of `reps` replications traced back from `end_state`,
/// each candidate reduced to its middle replication. The list is only built
/// when the best path fails the CRC; its first entry is that same path.
fn crc_list_decode(
    bm: &BranchMetrics,
    trellis: &Trellis,
    init: Init,
    reps: usize,
    end_state: usize,
    list_size: usize,
    crc: &CrcCode,
) -> Result<Vec<u8>> {
    check_list_size(list_size)?;
    let n = bm.num_stages();
    check_len(crc.word_len(), n)?;
    let pm = circular_forward(trellis, bm, init, reps)?;
    let best = pm.traceback(trellis, end_state)?;
    let best = middle_replication(&best, reps, n);
    if crc.is_codeword(best) {
        return Ok(best.to_vec());
    }
    let lm = list_forward(trellis, bm, init, reps, list_size)?;
    let cands = lm.candidates(trellis, end_state)?;
    Ok(select_by_crc(
        cands
            .into_iter()
            .map(|c| middle_replication(&c.bits, reps, n).to_vec())
            .collect(),
        crc,
    ))
}

/// CRC-aided list Viterbi over one replication, traced back from `end_state`.
pub fn list_viterbi_decode(
    llr: &[f64],
    trellis: &Trellis,
    init: Init,
    end_state: usize,
    list_size: usize,
    crc: &CrcCode,
) -> Result<Vec<u8>> {
    let bm = BranchMetrics::new(llr, trellis)?;
    crc_list_decode(&bm, trellis, init, 1, end_state, list_size, crc)
}

/// List circular Viterbi: the list decoder run on the replicated block from and
/// to the zero state, each candidate reduced to its middle replication.
pub fn lcva_decode(
    llr: &[f64],
    trellis: &Trellis,
    reps: usize,
    list_size: usize,
    lam_max: f64,
    crc: &CrcCode,
) -> Result<Vec<u8>> {
    check_reps(reps)?;
    let bm = BranchMetrics::new(llr, trellis)?;
    crc_list_decode(
        &bm,
        trellis,
        Init::zero_state(lam_max),
        reps,
        0,
        list_size,
        crc,
    )
}

/// List Viterbi started from and traced back to a known (genie) state.
pub fn lgva_decode(
    llr: &[f64],
    trellis: &Trellis,
    true_state: usize,
    list_size: usize,
    lam_max: f64,
    crc: &CrcCode,
) -> Result<Vec<u8>> {
    trellis.check_state(true_state)?;
    list_viterbi_decode(
        llr,
        trellis,
        Init::Biased {
            state: true_state,
            lam_max,
        },
        true_state,
        list_size,
        crc,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{modulate, Awgn};

    fn noiseless(trellis: &Trellis, u: &[u8]) -> Vec<f64> {
        Awgn::new(1.0)
            .unwrap()
            .noiseless_llr(&modulate(&trellis.encode(u).unwrap()))
    }

    #[test]
    fn zero_output_edge_has_zero_metric() {
        let t = Trellis::lte();
        let bm = BranchMetrics::new(&[1.3, -0.7, 2.2], &t).unwrap();
        // edge 0: state 0 to state 0 with input 0
        assert_eq!(bm.get(0, 0), 0.0);
    }

    #[test]
    fn all_ones_edge_sums_llrs() {
        let t = Trellis::lte();
        let bm = BranchMetrics::new(&[2.0, 2.0, 2.0], &t).unwrap();
        assert_eq!(bm.get(0, t.edge_from(0, 1)), 6.0);
    }

    #[test]
    fn branch_metrics_reject_ragged_llrs() {
        let t = Trellis::lte();
        assert!(BranchMetrics::new(&[1.0, 2.0], &t).is_err());
        assert!(BranchMetrics::new(&[], &t).is_err());
    }

    #[test]
    fn biased_init() {
        let m = Init::Biased {
            state: 0,
            lam_max: 20.0,
        }
        .metrics(64)
        .unwrap();
        assert_eq!(m[0], -20.0);
        assert!(m[1..].iter().all(|&x| x == 0.0));
        assert!(Init::Forced { state: 64 }.metrics(64).is_err());
    }

    #[test]
    fn forward_rejects_mismatches() {
        let t = Trellis::lte();
        let bm = BranchMetrics::new(&[0.0; 30], &t).unwrap();
        assert!(viterbi_forward(&t, &bm, &[0.0; 63], 10).is_err());
        assert!(viterbi_forward(&t, &bm, &[0.0; 64], 11).is_err());
    }

    #[test]
    fn zero_codeword_zero_init() {
        let t = Trellis::lte();
        let llr = noiseless(&t, &[0; 29]);
        assert_eq!(
            va_decode(&llr, &t, 0, DEFAULT_LAM_MAX).unwrap(),
            vec![0; 29]
        );
        assert_eq!(
            cva_decode(&llr, &t, 3, DEFAULT_LAM_MAX).unwrap(),
            vec![0; 29]
        );
    }

    #[test]
    fn normalized_rows_have_zero_minimum() {
        let t = Trellis::lte();
        let llr: Vec<f64> = (0..87)
            .map(|i| ((i * 37 % 11) as f64 - 5.0) / 2.0)
            .collect();
        let bm = BranchMetrics::new(&llr, &t).unwrap();
        let pm = circular_forward(&t, &bm, Init::Uniform, 3).unwrap();
        for k in 1..=pm.num_stages() {
            assert_eq!(pm.row(k).iter().copied().fold(f64::INFINITY, f64::min), 0.0);
        }
    }

    #[test]
    fn traceback_rejects_bad_state() {
        let t = Trellis::lte();
        let bm = BranchMetrics::new(&[0.0; 87], &t).unwrap();
        let pm = circular_forward(&t, &bm, Init::Uniform, 1).unwrap();
        assert!(matches!(
            pm.traceback(&t, 64),
            Err(Error::InvalidState { state: 64, .. })
        ));
    }

    #[test]
    fn even_replications_rejected() {
        let t = Trellis::lte();
        assert!(cva_decode(&[0.0; 87], &t, 2, 20.0).is_err());
        let crc = CrcCode::lte(13).unwrap();
        assert!(lcva_decode(&[0.0; 87], &t, 4, 8, 20.0, &crc).is_err());
    }

    #[test]
    fn list_size_zero_rejected() {
        let t = Trellis::lte();
        let crc = CrcCode::lte(13).unwrap();
        assert!(list_viterbi_decode(&[0.0; 87], &t, Init::Uniform, 0, 0, &crc).is_err());
        assert!(lgva_decode(&[0.0; 87], &t, 99, 8, 20.0, &crc).is_err());
    }

    #[test]
    fn single_replication_cva_is_zero_tail_va() {
        let t = Trellis::lte();
        let llr: Vec<f64> = (0..87)
            .map(|i| ((i * 53 % 17) as f64 - 8.0) / 3.0)
            .collect();
        assert_eq!(
            cva_decode(&llr, &t, 1, 20.0).unwrap(),
            va_decode(&llr, &t, 0, 20.0).unwrap()
        );
    }
}
