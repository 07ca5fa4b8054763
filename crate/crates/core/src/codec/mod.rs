//! SCMA codebooks, bit labelling and the LDPC outer code.

mod codebook;
pub mod ldpc;

pub use codebook::{build_codebook, qpsk_constellation, bpsk_constellation, Codebook, IndicatorMatrix};
pub use ldpc::{DecodeOutput, DegreeProfile, LdpcCode};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CodecError {
    #[error("indicator matrix must be a non-empty rectangular 0/1 matrix")]
    MalformedIndicator,
    #[error("indicator column {column} has weight {weight}, expected {expected}")]
    ColumnWeight {
        column: usize,
        weight: usize,
        expected: usize,
    },
    #[error("codebook size {0} is not a power of two >= 2")]
    CodebookSize(usize),
    #[error("seed constellation has {got} points, expected {expected}")]
    SeedSize { got: usize, expected: usize },
    #[error("bit stream of length {len} is not a multiple of {bits_per_symbol}")]
    Misaligned { len: usize, bits_per_symbol: usize },
    #[error("expected {expected} information bits, got {got}")]
    InfoLength { got: usize, expected: usize },
    #[error("parity-check matrix has rank {rank} < {checks}")]
    RankDeficient { rank: usize, checks: usize },
    #[error("degree profile cannot be realised: {0}")]
    Profile(String),
}

/// Gray label of codeword index `m`, most significant bit first.
///
/// Bit `b` of the label (with `b = 0` the first bit of the symbol) is
/// `label_bit(m, b, bits_per_symbol)`.
#[inline]
pub fn label_bit(m: usize, b: usize, bits_per_symbol: usize) -> u8 {
    let gray = m ^ (m >> 1);
    ((gray >> (bits_per_symbol - 1 - b)) & 1) as u8
}

/// Codeword index carrying the given label bits (inverse of [`label_bit`]).
pub fn symbol_from_bits(bits: &[u8]) -> usize {
    let gray = bits.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize);
    let mut m = gray;
    let mut shift = gray >> 1;
    while shift != 0 {
        m ^= shift;
        shift >>= 1;
    }
    m
}

/// Probability of each codeword index given independent bit LLRs
/// (`LLR = ln P(bit = 0) / P(bit = 1)`).
pub fn symbol_priors_from_llrs(llrs: &[f64]) -> Vec<f64> {
    let bps = llrs.len();
    let m_count = 1usize << bps;
    // ln P(0) and ln P(1) per bit, computed without overflow.
    let logp: Vec<[f64; 2]> = llrs
        .iter()
        .map(|&l| {
            let l = crate::clamp_llr(l);
            [-softplus(-l), -softplus(l)]
        })
        .collect();
    let logs: Vec<f64> = (0..m_count)
        .map(|m| {
            (0..bps)
                .map(|b| logp[b][label_bit(m, b, bps) as usize])
                .sum()
        })
        .collect();
    normalize_log_weights(&logs)
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Turns log-weights into a probability vector.
pub(crate) fn normalize_log_weights(logs: &[f64]) -> Vec<f64> {
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// `ln Σ e^x` over a slice.
pub(crate) fn log_sum_exp(xs: impl IntoIterator<Item = f64>) -> f64 {
    let xs: Vec<f64> = xs.into_iter().collect();
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}
