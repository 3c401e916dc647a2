//! Systematic CRC encoding and syndrome checks.
//!
//! Bits are stored one per `u8` (`0` or `1`). The first bit of a word is the
//! coefficient of the highest power of `x`, so a message is clocked into the
//! division register MSB-first.

use crate::error::{check_len, Error, Result};

/// A cyclic redundancy check polynomial.
///
/// `polynomial` holds all `len + 1` coefficients, including the leading
/// `x^len` term, e.g. `0x1_1021` for `x^16 + x^12 + x^5 + 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CrcSpec {
    pub polynomial: u32,
    pub len: usize,
}

impl CrcSpec {
    /// The LTE `gCRC16` polynomial, `x^16 + x^12 + x^5 + 1`.
    pub const LTE_CRC16: CrcSpec = CrcSpec {
        polynomial: 0x1_1021,
        len: 16,
    };

    pub fn new(polynomial: u32, len: usize) -> Result<Self> {
        if len == 0 || len > 31 {
            return Err(Error::InvalidInput(format!("unsupported CRC length {len}")));
        }
        if polynomial >> len != 1 {
            return Err(Error::InvalidInput(format!(
                "polynomial {polynomial:#x} does not have degree {len}"
            )));
        }
        if polynomial & 1 != 1 {
            return Err(Error::InvalidInput(format!(
                "polynomial {polynomial:#x} has no constant term"
            )));
        }
        Ok(Self { polynomial, len })
    }

    /// `message(x) * x^len mod g(x)` via the usual feedback shift register.
    fn parity(&self, message: &[u8]) -> u32 {
        let top = 1u32 << (self.len - 1);
        let mask = (1u32 << self.len) - 1;
        let low = self.polynomial & mask;
        message.iter().fold(0u32, |reg, &bit| {
            let feedback = ((reg & top) != 0) as u8 ^ bit;
            let reg = (reg << 1) & mask;
            if feedback != 0 {
                reg ^ low
            } else {
                reg
            }
        })
    }

    fn parity_bits(&self, message: &[u8]) -> impl Iterator<Item = u8> + '_ {
        let r = self.parity(message);
        (0..self.len).rev().map(move |k| ((r >> k) & 1) as u8)
    }

    /// Plain remainder `word(x) mod g(x)`.
    pub fn syndrome_bits(&self, word: &[u8]) -> u32 {
        let deg = self.len;
        if word.len() <= deg {
            return word.iter().fold(0u32, |acc, &b| (acc << 1) | u32::from(b));
        }
        let mut reg = 0u32;
        let mask = (1u32 << (deg + 1)) - 1;
        for &b in word {
            reg = ((reg << 1) | u32::from(b)) & mask;
            if reg >> deg & 1 == 1 {
                reg ^= self.polynomial;
            }
        }
        reg
    }
}

/// A CRC code with a fixed message length: `N_u = N_m + len`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CrcCode {
    pub spec: CrcSpec,
    pub msg_len: usize,
}

impl CrcCode {
    pub fn new(spec: CrcSpec, msg_len: usize) -> Result<Self> {
        if msg_len == 0 {
            return Err(Error::InvalidInput("degenerate message length".into()));
        }
        Ok(Self { spec, msg_len })
    }

    pub fn lte(msg_len: usize) -> Result<Self> {
        Self::new(CrcSpec::LTE_CRC16, msg_len)
    }

    /// Length of a detection codeword.
    pub fn word_len(&self) -> usize {
        self.msg_len + self.spec.len
    }

    /// Systematic encoding `u = [m | p]`.
    pub fn encode(&self, message: &[u8]) -> Result<Vec<u8>> {
        if message.is_empty() {
            return Err(Error::InvalidInput("degenerate message length".into()));
        }
        check_len(self.msg_len, message.len())?;
        let mut word = Vec::with_capacity(self.word_len());
        word.extend_from_slice(message);
        word.extend(self.spec.parity_bits(message));
        Ok(word)
    }

    /// Hamming weight of the syndrome; zero iff `word` is a CRC codeword.
    pub fn syndrome(&self, word: &[u8]) -> Result<u32> {
        check_len(self.word_len(), word.len())?;
        Ok(self.syndrome_unchecked(word))
    }

    pub(crate) fn syndrome_unchecked(&self, word: &[u8]) -> u32 {
        self.spec.syndrome_bits(word).count_ones()
    }

    pub fn is_codeword(&self, word: &[u8]) -> bool {
        word.len() == self.word_len() && self.syndrome_unchecked(word) == 0
    }
}
