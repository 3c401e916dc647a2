//! Decoders for short tail-biting convolutional codes protected by a CRC.
//!
//! The crate covers the whole chain used to study them:
//!
//! * [`crc16`] systematic CRC encoding and syndrome weights,
//! * [`trellis`] the code trellis and tail-biting encoder,
//! * [`channel`] BPSK over AWGN and LLRs,
//! * [`viterbi`] Viterbi, circular Viterbi, CRC-aided list decoders and an ML decoder,
//! * [`wcva`] the weighted circular Viterbi decoder and its training,
//! * [`ensemble`] the gated ensemble of weighted experts,
//! * [`harness`] Monte Carlo frame-error-rate experiments.
//!
//! ```
//! use tbcc::{channel, crc16::CrcCode, trellis::Trellis, viterbi};
//!
//! let trellis = Trellis::lte();
//! let crc = CrcCode::lte(13)?;
//! let u = crc.encode(&[1, 0, 1, 1, 0, 0, 1, 0, 1, 1, 1, 0, 1])?;
//! let llr = channel::Awgn::new(1.0)?.noiseless_llr(&channel::modulate(&trellis.encode(&u)?));
//! assert_eq!(viterbi::cva_decode(&llr, &trellis, 3, viterbi::DEFAULT_LAM_MAX)?, u);
//! # Ok::<(), tbcc::Error>(())
//! ```

pub mod channel;
pub mod crc16;
pub mod ensemble;
pub mod error;
pub mod harness;
pub mod trellis;
pub mod viterbi;
pub mod wcva;

pub use error::{Error, Result};

// The guide under `book/` is compiled here so its listings run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/codes.md")]
    mod codes {}
    #[doc = include_str!("../../../book/src/viterbi.md")]
    mod viterbi {}
    #[doc = include_str!("../../../book/src/list.md")]
    mod list {}
    #[doc = include_str!("../../../book/src/weighted.md")]
    mod weighted {}
    #[doc = include_str!("../../../book/src/ensemble.md")]
    mod ensemble {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
