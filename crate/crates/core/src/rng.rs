//! Deterministic random streams.
//!
//! Every random quantity in a simulation is drawn from a ChaCha stream whose
//! seed is derived from `(master_seed, trial, stream)`. Trials can therefore be
//! run in any order, on any number of workers, and still reproduce bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named sub-streams of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Data = 1,
    Channel = 2,
    Noise = 3,
    Topology = 4,
    Links = 5,
    Code = 6,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one named stream of one trial.
pub fn stream_seed(master: u64, trial: u64, stream: Stream) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ trial) ^ (stream as u64))
}

/// A ChaCha generator for one named stream of one trial.
pub fn stream_rng(master: u64, trial: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(master, trial, stream))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_differ() {
        let a = stream_seed(7, 0, Stream::Data);
        let b = stream_seed(7, 0, Stream::Noise);
        let c = stream_seed(7, 1, Stream::Data);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, stream_seed(7, 0, Stream::Data));
    }
}
