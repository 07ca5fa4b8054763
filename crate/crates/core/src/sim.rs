//! One transmitted frame: data, coding, mapping, channel and noise.

use rand::Rng;

use crate::channel::{draw_channel, transmit, ChannelRealization, RxFrame};
use crate::codec::{Codebook, LdpcCode};
use crate::rng::{stream_rng, Stream};

/// Static description of the link.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub cb: Codebook,
    /// Outer code; uncoded when absent.
    pub code: Option<LdpcCode>,
    pub taps: usize,
    /// Symbols per frame in uncoded operation. With a code the frame length
    /// follows from the code length.
    pub uncoded_symbols: usize,
}

impl Scenario {
    pub fn symbols(&self) -> usize {
        match &self.code {
            Some(c) => c.len() / self.cb.bits_per_symbol(),
            None => self.uncoded_symbols,
        }
    }

    /// Information bits carried per user and frame.
    pub fn info_len(&self) -> usize {
        match &self.code {
            Some(c) => c.info_len(),
            None => self.uncoded_symbols * self.cb.bits_per_symbol(),
        }
    }

    pub fn rate(&self) -> f64 {
        self.code.as_ref().map_or(1.0, LdpcCode::rate)
    }
}

#[derive(Debug, Clone)]
pub struct TxFrame {
    /// `[k][i]`
    pub info: Vec<Vec<u8>>,
    /// `[k][i]`; equal to `info` when uncoded.
    pub coded: Vec<Vec<u8>>,
    /// `[k][n]`
    pub symbols: Vec<Vec<usize>>,
    pub channel: ChannelRealization,
    pub rx: RxFrame,
}

/// Draws frame `trial` of a run seeded by `master`.
pub fn draw_frame(scn: &Scenario, n0: f64, master: u64, trial: u64) -> TxFrame {
    let users = scn.cb.users();
    let mut data = stream_rng(master, trial, Stream::Data);
    let info: Vec<Vec<u8>> = (0..users)
        .map(|_| (0..scn.info_len()).map(|_| data.random_range(0..2u8)).collect())
        .collect();
    let coded: Vec<Vec<u8>> = match &scn.code {
        Some(code) => info
            .iter()
            .map(|b| code.encode(b).expect("information length matches the code"))
            .collect(),
        None => info.clone(),
    };
    let symbols: Vec<Vec<usize>> = coded
        .iter()
        .map(|b| scn.cb.encode_symbols(b).expect("frame length is a whole number of symbols"))
        .collect();
    let channel = draw_channel(
        users,
        scn.cb.resources(),
        scn.taps,
        &mut stream_rng(master, trial, Stream::Channel),
    );
    let s = scn.cb.superpose_frame(&symbols);
    let rx = transmit(&s, &channel, n0, &mut stream_rng(master, trial, Stream::Noise));
    TxFrame {
        info,
        coded,
        symbols,
        channel,
        rx,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::convolve;

    #[test]
    fn noiseless_frame_is_consistent() {
        let scn = Scenario {
            cb: Codebook::paper_default(),
            code: Some(LdpcCode::paper_default(70, 3).unwrap()),
            taps: 3,
            uncoded_symbols: 0,
        };
        let f = draw_frame(&scn, 0.0, 9, 2);
        assert_eq!(f.symbols[0].len(), 35);
        let code = scn.code.as_ref().unwrap();
        for k in 0..6 {
            assert!(code.syndrome_ok(&f.coded[k]));
            assert_eq!(code.info_bits(&f.coded[k]), f.info[k]);
        }
        let s = scn.cb.superpose_frame(&f.symbols);
        assert_eq!(f.rx.y[2], convolve(&s, f.channel.user(2)));
    }

    #[test]
    fn frames_are_reproducible() {
        let scn = Scenario {
            cb: Codebook::paper_default(),
            code: None,
            taps: 2,
            uncoded_symbols: 8,
        };
        let a = draw_frame(&scn, 0.1, 5, 7);
        let b = draw_frame(&scn, 0.1, 5, 7);
        assert_eq!(a.rx, b.rx);
        assert_eq!(a.info, b.info);
        let c = draw_frame(&scn, 0.1, 5, 8);
        assert_ne!(a.info, c.info);
    }
}
