//! Frequency-selective Rayleigh channels and the noisy downlink observation.
//!
//! Variance of a complex Gaussian always means `E|x - m|²`. Received noise has
//! `E|ω|² = 2·N0`, which is also the observation variance used by the
//! receivers.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::Complex64;

/// Exponential power delay profile `q^l ∝ exp(-0.1 l)`, normalised to sum 1.
pub fn exponential_pdp(taps: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..taps).map(|l| (-0.1 * l as f64).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|q| q / total).collect()
}

/// Noise spectral density for a given Eb/N0 (dB), unit symbol energy per user.
pub fn n0_from_ebn0(ebn0_db: f64, rate: f64, bits_per_symbol: usize) -> f64 {
    let lin = 10f64.powf(ebn0_db / 10.0);
    1.0 / (2.0 * rate * bits_per_symbol as f64 * lin)
}

/// One circularly-symmetric complex Gaussian sample with `E|x|² = var`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let sd = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * sd, im * sd)
}

/// Tap gains `h[k][j][l]` from antenna `j` to user `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub h: Vec<Vec<Vec<Complex64>>>,
    pub pdp: Vec<f64>,
}

impl ChannelRealization {
    pub fn users(&self) -> usize {
        self.h.len()
    }

    pub fn resources(&self) -> usize {
        self.h.first().map_or(0, Vec::len)
    }

    pub fn taps(&self) -> usize {
        self.pdp.len()
    }

    /// Taps seen by user `k`, indexed `[j][l]`.
    pub fn user(&self, k: usize) -> &[Vec<Complex64>] {
        &self.h[k]
    }

    /// Writes `k,j,l,re,im` rows with a header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "k,j,l,re,im")?;
        for (k, per_k) in self.h.iter().enumerate() {
            for (j, per_j) in per_k.iter().enumerate() {
                for (l, h) in per_j.iter().enumerate() {
                    writeln!(out, "{k},{j},{l},{},{}", h.re, h.im)?;
                }
            }
        }
        Ok(())
    }
}

/// Draws independent Rayleigh taps with the exponential delay profile.
pub fn draw_channel<R: Rng + ?Sized>(
    users: usize,
    resources: usize,
    taps: usize,
    rng: &mut R,
) -> ChannelRealization {
    assert!(taps >= 1, "need at least one tap");
    let pdp = exponential_pdp(taps);
    let h = (0..users)
        .map(|_| {
            (0..resources)
                .map(|_| pdp.iter().map(|&q| complex_gaussian(rng, q)).collect())
                .collect()
        })
        .collect();
    ChannelRealization { h, pdp }
}

/// Received samples for every user.
#[derive(Debug, Clone, PartialEq)]
pub struct RxFrame {
    /// `y[k][t]` for `t < N + L - 1`.
    pub y: Vec<Vec<Complex64>>,
    pub n0: f64,
}

impl RxFrame {
    /// Variance of each received sample's noise, `2·N0`.
    pub fn noise_var(&self) -> f64 {
        2.0 * self.n0
    }
}

/// Noiseless convolution of the antenna streams `s[j][n]` with user `k`'s taps.
pub fn convolve(s: &[Vec<Complex64>], h_k: &[Vec<Complex64>]) -> Vec<Complex64> {
    let n = s.first().map_or(0, Vec::len);
    let taps = h_k.first().map_or(1, Vec::len);
    let mut y = vec![Complex64::new(0.0, 0.0); n + taps - 1];
    for (sj, hj) in s.iter().zip(h_k) {
        for (m, &x) in sj.iter().enumerate() {
            for (l, &h) in hj.iter().enumerate() {
                y[m + l] += h * x;
            }
        }
    }
    y
}

/// Passes the antenna streams through every user's channel and adds noise.
pub fn transmit<R: Rng + ?Sized>(
    s: &[Vec<Complex64>],
    channel: &ChannelRealization,
    n0: f64,
    rng: &mut R,
) -> RxFrame {
    assert!(n0 >= 0.0);
    let y = channel
        .h
        .iter()
        .map(|h_k| {
            let mut y = convolve(s, h_k);
            if n0 > 0.0 {
                for v in &mut y {
                    *v += complex_gaussian(rng, 2.0 * n0);
                }
            }
            y
        })
        .collect();
    RxFrame { y, n0 }
}
