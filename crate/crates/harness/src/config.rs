//! Simulation configuration, read from and written to TOML.

use std::path::{Path, PathBuf};

use scma_core::codec::{bpsk_constellation, build_codebook, qpsk_constellation, Codebook, DegreeProfile, IndicatorMatrix, LdpcCode};
use scma_core::coop::{CoopConfig, LinkModel, Protocol};
use scma_core::receiver::ReceiverKind;
use scma_core::sim::Scenario;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        source: Box<toml::de::Error>,
    },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Constellation {
    Bpsk,
    Qpsk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Indicator matrix, one row per transmit antenna.
    pub indicator: Vec<Vec<u8>>,
    pub constellation: Constellation,
    pub taps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodeConfig {
    pub enabled: bool,
    /// Code length in bits.
    pub length: usize,
    /// Seed of the parity-check construction.
    pub seed: u64,
    pub decoder_iters: usize,
    /// `(degree, fraction of nodes)` pairs.
    pub variable_profile: Vec<(usize, f64)>,
    pub check_profile: Vec<(usize, f64)>,
    /// Frame length when uncoded.
    pub uncoded_symbols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiverSection {
    pub kinds: Vec<ReceiverKind>,
    pub outer_iters: usize,
    /// Count errors at every user's receiver rather than at user 0 only.
    pub all_users: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CooperationConfig {
    pub enabled: bool,
    pub protocols: Vec<Protocol>,
    pub rounds: usize,
    /// Communication range in metres.
    pub range: f64,
    /// Side of the square the users are placed on, in metres.
    pub area: f64,
    /// Redraw placements until the network is connected.
    pub connected: bool,
    /// Absent for noiseless links.
    pub link_snr_db: Option<f64>,
    pub failure_prob: f64,
    pub vanishing: bool,
    pub penalty: f64,
    pub adaptive_penalty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub ebn0_db: Vec<f64>,
    pub trials: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceConfig {
    /// Operating point at which the local messages are produced.
    pub ebn0_db: f64,
    pub link_snr_db: Vec<f64>,
    pub rounds: usize,
    pub topologies: u64,
    /// Initial ADMM penalty; noisy links call for a smaller value than
    /// `cooperation.penalty`.
    pub penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub system: SystemConfig,
    pub code: CodeConfig,
    pub receiver: ReceiverSection,
    pub cooperation: CooperationConfig,
    pub sweep: SweepConfig,
    pub trace: TraceConfig,
    pub output: OutputConfig,
}

/// Annotated default configuration.
pub const DEFAULT_TOML: &str = include_str!("../default.toml");

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig::from_toml(DEFAULT_TOML).expect("shipped default parses")
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: PathBuf::from("<string>"),
            source: Box::new(e),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let cfg: SimConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_owned(),
            source: Box::new(e),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        IndicatorMatrix::new(self.system.indicator.clone()).map_err(|e| invalid("system.indicator", e.to_string()))?;
        if self.system.taps == 0 {
            return Err(invalid("system.taps", "must be positive"));
        }
        if self.code.enabled {
            if self.code.length == 0 || self.code.length % self.bits_per_symbol() != 0 {
                return Err(invalid("code.length", "must be a positive multiple of the bits per symbol"));
            }
            if self.code.decoder_iters == 0 {
                return Err(invalid("code.decoder_iters", "must be positive"));
            }
            for (field, p) in [
                ("code.variable_profile", &self.code.variable_profile),
                ("code.check_profile", &self.code.check_profile),
            ] {
                if p.is_empty() || p.iter().any(|&(d, f)| d == 0 || !(f >= 0.0)) {
                    return Err(invalid(field, "needs positive degrees and nonnegative fractions"));
                }
            }
        } else if self.code.uncoded_symbols == 0 {
            return Err(invalid("code.uncoded_symbols", "must be positive when uncoded"));
        }
        if self.receiver.kinds.is_empty() {
            return Err(invalid("receiver.kinds", "must name at least one receiver"));
        }
        if self.receiver.outer_iters == 0 {
            return Err(invalid("receiver.outer_iters", "must be positive"));
        }
        let c = &self.cooperation;
        if c.enabled && c.protocols.is_empty() {
            return Err(invalid("cooperation.protocols", "must be nonempty when cooperation is on"));
        }
        if c.rounds == 0 {
            return Err(invalid("cooperation.rounds", "must be positive"));
        }
        if !(c.range >= 0.0) || !(c.area > 0.0) {
            return Err(invalid("cooperation.range", "range must be nonnegative and area positive"));
        }
        if !(0.0..=1.0).contains(&c.failure_prob) {
            return Err(invalid("cooperation.failure_prob", "must lie in [0, 1]"));
        }
        if !(c.penalty > 0.0) {
            return Err(invalid("cooperation.penalty", "must be positive"));
        }
        if self.sweep.ebn0_db.is_empty() {
            return Err(invalid("sweep.ebn0_db", "must be nonempty"));
        }
        if self.sweep.trials == 0 {
            return Err(invalid("sweep.trials", "must be positive"));
        }
        if self.trace.rounds == 0 || self.trace.topologies == 0 {
            return Err(invalid("trace", "rounds and topologies must be positive"));
        }
        if !(self.trace.penalty > 0.0) {
            return Err(invalid("trace.penalty", "must be positive"));
        }
        Ok(())
    }

    pub fn bits_per_symbol(&self) -> usize {
        match self.system.constellation {
            Constellation::Bpsk => 1,
            Constellation::Qpsk => 2,
        }
    }

    pub fn codebook(&self) -> Result<Codebook, ConfigError> {
        let f = IndicatorMatrix::new(self.system.indicator.clone()).map_err(|e| invalid("system.indicator", e.to_string()))?;
        let (size, seed) = match self.system.constellation {
            Constellation::Bpsk => (2, bpsk_constellation()),
            Constellation::Qpsk => (4, qpsk_constellation()),
        };
        build_codebook(f, size, &seed).map_err(|e| invalid("system.indicator", e.to_string()))
    }

    pub fn ldpc(&self) -> Result<Option<LdpcCode>, ConfigError> {
        if !self.code.enabled {
            return Ok(None);
        }
        let var = DegreeProfile {
            fractions: self.code.variable_profile.clone(),
        };
        let chk = DegreeProfile {
            fractions: self.code.check_profile.clone(),
        };
        let code = if var == DegreeProfile::paper_variable() && chk == DegreeProfile::paper_check() {
            LdpcCode::paper_default(self.code.length, self.code.seed)
        } else {
            let mean = |p: &DegreeProfile| {
                let total: f64 = p.fractions.iter().map(|f| f.1).sum();
                p.fractions.iter().map(|&(d, f)| d as f64 * f).sum::<f64>() / total
            };
            let m = (self.code.length as f64 * mean(&var) / mean(&chk)).round() as usize;
            (0..16u64)
                .map(|a| LdpcCode::peg(self.code.length, m, &var, &chk, self.code.seed.wrapping_add(a)))
                .find(Result::is_ok)
                .unwrap_or_else(|| LdpcCode::peg(self.code.length, m, &var, &chk, self.code.seed))
        };
        code.map(Some).map_err(|e| invalid("code", e.to_string()))
    }

    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        Ok(Scenario {
            cb: self.codebook()?,
            code: self.ldpc()?,
            taps: self.system.taps,
            uncoded_symbols: self.code.uncoded_symbols,
        })
    }

    /// Cooperation settings for one protocol.
    pub fn coop(&self, protocol: Protocol) -> CoopConfig {
        let c = &self.cooperation;
        CoopConfig {
            protocol,
            rounds: c.rounds,
            links: LinkModel {
                snr_db: c.link_snr_db,
                failure_prob: c.failure_prob,
            },
            vanishing: c.vanishing,
            initial_penalty: c.penalty,
            adaptive_penalty: c.adaptive_penalty,
        }
    }
}
