//! Trellis construction and tail-biting encoding for feedforward convolutional codes.
//!
//! State convention: with register contents `r_1..r_nu` (`r_1` the most recently
//! shifted-in bit) the state integer is `sum r_k 2^(nu-k)`. Shifting in bit `b`
//! from state `s` therefore lands in `(b << (nu-1)) | (s >> 1)`.
//!
//! Edges are indexed by their target: edge `2*s + j` enters state `s` from the
//! predecessor `((s << 1) & mask) | j`. Both edges entering `s` carry the same
//! input bit, the MSB of `s`.

use crate::error::{Error, Result};

/// Generator polynomials of the LTE rate-1/3 tail-biting code, in octal.
pub const LTE_POLYNOMIALS: [u32; 3] = [0o133, 0o171, 0o165];
pub const LTE_MEMORY: usize = 6;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trellis {
    memory: usize,
    polynomials: Vec<u32>,
    /// Output bits of each edge packed MSB-first: bit `V-1-v` is output `v`.
    edge_output: Vec<u8>,
}

impl Trellis {
    /// Builds the trellis from generator polynomials given as integers whose MSB
    /// (bit `nu`) taps the current input, e.g. `0o133` for `1011011`.
    pub fn new(memory: usize, polynomials: &[u32]) -> Result<Self> {
        if memory == 0 || memory > 16 {
            return Err(Error::InvalidInput(format!("unsupported memory {memory}")));
        }
        if polynomials.is_empty() || polynomials.len() > 8 {
            return Err(Error::InvalidInput(format!(
                "expected 1 to 8 polynomials, got {}",
                polynomials.len()
            )));
        }
        if let Some(p) = polynomials
            .iter()
            .find(|&&p| p == 0 || p >> (memory + 1) != 0)
        {
            return Err(Error::InvalidInput(format!(
                "polynomial {p:o} has degree greater than memory {memory}"
            )));
        }
        let num_states = 1usize << memory;
        let edge_output = (0..2 * num_states)
            .map(|e| {
                let (s, j) = (e >> 1, e & 1);
                let input = s >> (memory - 1);
                let pred = ((s << 1) & (num_states - 1)) | j;
                let window = ((input << memory) | pred) as u32;
                polynomials.iter().fold(0u8, |acc, &g| {
                    (acc << 1) | ((g & window).count_ones() & 1) as u8
                })
            })
            .collect();
        Ok(Self {
            memory,
            polynomials: polynomials.to_vec(),
            edge_output,
        })
    }

    /// Parses octal literals such as `["133", "171", "165"]`.
    pub fn from_octal(memory: usize, polynomials: &[&str]) -> Result<Self> {
        let polys = polynomials
            .iter()
            .map(|p| {
                u32::from_str_radix(p, 8)
                    .map_err(|_| Error::InvalidInput(format!("{p:?} is not an octal polynomial")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(memory, &polys)
    }

    pub fn lte() -> Self {
        Self::new(LTE_MEMORY, &LTE_POLYNOMIALS).expect("LTE code parameters are valid")
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn num_states(&self) -> usize {
        1 << self.memory
    }

    pub fn num_edges(&self) -> usize {
        2 << self.memory
    }

    /// Output bits per stage, `V = 1/R`.
    pub fn outputs_per_stage(&self) -> usize {
        self.polynomials.len()
    }

    pub fn polynomials(&self) -> &[u32] {
        &self.polynomials
    }

    #[inline]
    pub fn next_state(&self, state: usize, input: u8) -> usize {
        (usize::from(input) << (self.memory - 1)) | (state >> 1)
    }

    /// Predecessor reached through edge `j` into `state`.
    #[inline]
    pub fn predecessor(&self, state: usize, j: usize) -> usize {
        ((state << 1) & (self.num_states() - 1)) | j
    }

    /// Input bit carried by every edge into `state`.
    #[inline]
    pub fn input_into(&self, state: usize) -> u8 {
        (state >> (self.memory - 1)) as u8
    }

    /// Packed output pattern of edge `edge` (see [`Trellis::edge_bits`]).
    #[inline]
    pub fn edge_pattern(&self, edge: usize) -> u8 {
        self.edge_output[edge]
    }

    pub fn edge_bits(&self, edge: usize) -> impl Iterator<Item = u8> + '_ {
        let v = self.outputs_per_stage();
        let pat = self.edge_output[edge];
        (0..v).map(move |k| (pat >> (v - 1 - k)) & 1)
    }

    /// Edge index for the transition `state --input-->`.
    #[inline]
    pub fn edge_from(&self, state: usize, input: u8) -> usize {
        2 * self.next_state(state, input) + (state & 1)
    }

    fn check_block(&self, len: usize) -> Result<()> {
        if len < self.memory {
            Err(Error::InvalidInput(format!(
                "block shorter than memory ({len} < {})",
                self.memory
            )))
        } else {
            Ok(())
        }
    }

    /// Tail-biting start state: the register loaded with the last `nu` bits of `u`.
    pub fn state_of(&self, word: &[u8]) -> Result<usize> {
        self.check_block(word.len())?;
        Ok(word[word.len() - self.memory..]
            .iter()
            .fold(0usize, |s, &b| self.next_state(s, b)))
    }

    pub fn check_state(&self, state: usize) -> Result<()> {
        if state < self.num_states() {
            Ok(())
        } else {
            Err(Error::InvalidState {
                state,
                num_states: self.num_states(),
            })
        }
    }

    /// Tail-biting encoding: starts and ends in [`Trellis::state_of`]`(word)`.
    pub fn encode(&self, word: &[u8]) -> Result<Vec<u8>> {
        let mut state = self.state_of(word)?;
        let v = self.outputs_per_stage();
        let mut out = Vec::with_capacity(word.len() * v);
        for &b in word {
            out.extend(self.edge_bits(self.edge_from(state, b)));
            state = self.next_state(state, b);
        }
        Ok(out)
    }
}
