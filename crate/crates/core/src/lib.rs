//! Iterative receivers for downlink MIMO-SCMA over frequency-selective
//! Rayleigh channels.
//!
//! The crate is organised bottom-up:
//!
//! * [`codec`] builds sparse codebooks, the LDPC outer code and the bit/LLR
//!   interchange between them.
//! * [`channel`] draws multipath channels and produces received frames.
//! * [`gaussian`] holds the scalar complex Gaussian message algebra and the
//!   expectation-propagation projection of discrete symbol priors.
//! * [`receiver`] runs BP-EP detection on the stretched factor graph, either
//!   with plain sum-product rules or with the convexified rules driven by
//!   [`counting`] numbers.
//! * [`coop`] simulates user cooperation (Metropolis belief consensus and
//!   Bregman ADMM) over a random geometric network.
//! * [`oracle`] provides brute-force references for tiny instances.
//! * [`sim`] draws complete transmitted frames from a seeded scenario.

pub mod channel;
pub mod codec;
pub mod coop;
pub mod counting;
pub mod gaussian;
pub mod oracle;
pub mod receiver;
pub mod rng;
pub mod sim;

pub use num_complex::Complex64;

/// Largest magnitude any bit LLR is allowed to take.
pub const LLR_MAX: f64 = 30.0;

/// Clamps an LLR into `[-LLR_MAX, LLR_MAX]`, mapping NaN to zero.
#[inline]
pub fn clamp_llr(llr: f64) -> f64 {
    if llr.is_nan() {
        0.0
    } else {
        llr.clamp(-LLR_MAX, LLR_MAX)
    }
}
