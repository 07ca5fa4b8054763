//! Monte Carlo harness for the MIMO-SCMA receivers.
//!
//! - [`config`]: TOML simulation configuration.
//! - [`montecarlo`]: trial runner, BER sweeps and consensus MSE traces.
//! - [`records`]: CSV record types and I/O.
//! - [`counting_cache`]: on-disk cache of solved counting numbers.
//! - [`selftest`]: quick oracle checks.

pub mod config;
pub mod counting_cache;
pub mod montecarlo;
pub mod records;
pub mod selftest;
