//! Monte Carlo trials, BER sweeps and consensus traces.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use scma_core::channel::n0_from_ebn0;
use scma_core::coop::{consensus_mse, fuse_messages, network_average, run_protocol, to_theta, CoopConfig, LinkModel, Protocol, Topology};
use scma_core::counting::CountingNumbers;
use scma_core::receiver::{Detector, ReceiverConfig, ReceiverError, ReceiverKind, StretchedGraph};
use scma_core::rng::{stream_rng, Stream};
use scma_core::sim::{draw_frame, Scenario, TxFrame};
use thiserror::Error;

use crate::config::{ConfigError, SimConfig};
use crate::counting_cache::{load_or_solve, CacheError};
use crate::records::{append_csv, read_csv, write_csv, BerRecord, IterationRecord, MseRecord};

pub const BER_CSV: &str = "ber.csv";
pub const ITERATION_CSV: &str = "ber_iterations.csv";
pub const MSE_CSV: &str = "mse.csv";

/// Placement attempts before settling for a disconnected network.
const TOPOLOGY_TRIES: usize = 10_000;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Receiver(#[from] ReceiverError),
    #[error(transparent)]
    Counting(#[from] CacheError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("output directory {path}: {source}")]
    Output {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

/// How the users of one trial combine their information.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    /// Every user detects on its own.
    Local,
    Coop(Protocol),
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Local => "none",
            Scheme::Coop(p) => p.name(),
        }
    }
}

/// Errors of one trial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialOutcome {
    /// Information-bit errors after each outer iteration.
    pub iter_errors: Vec<u64>,
    pub bits: u64,
    /// Convexified messages that fell back to the plain rule.
    pub fallbacks: usize,
}

impl TrialOutcome {
    pub fn errors(&self) -> u64 {
        self.iter_errors.last().copied().unwrap_or(0)
    }
}

/// Aggregate over a set of trials.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointSummary {
    pub trials: u64,
    pub iter_errors: Vec<u64>,
    pub bits: u64,
}

/// Sums trial outcomes in order.
pub fn summarize(outcomes: &[TrialOutcome]) -> PointSummary {
    let iters = outcomes.first().map_or(0, |o| o.iter_errors.len());
    let mut iter_errors = vec![0; iters];
    let mut bits = 0;
    for o in outcomes {
        for (acc, e) in iter_errors.iter_mut().zip(&o.iter_errors) {
            *acc += e;
        }
        bits += o.bits;
    }
    PointSummary {
        trials: outcomes.len() as u64,
        iter_errors,
        bits,
    }
}

/// Read-only state shared by all trials: scenario and one detector template
/// per receiver.
#[derive(Debug, Clone)]
pub struct Bench {
    pub cfg: SimConfig,
    pub scn: Scenario,
    templates: BTreeMap<ReceiverKind, Detector>,
}

impl Bench {
    /// Counting numbers for the convexified receiver come from `cache_dir`
    /// when given and are solved in memory otherwise.
    pub fn new(cfg: &SimConfig, cache_dir: Option<&Path>) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let scn = cfg.scenario()?;
        let kinds: BTreeSet<ReceiverKind> = cfg.receiver.kinds.iter().copied().collect();
        let mut counting: Option<CountingNumbers> = None;
        let mut templates = BTreeMap::new();
        for kind in kinds {
            let rcfg = ReceiverConfig {
                outer_iters: cfg.receiver.outer_iters,
                ldpc_iters: cfg.code.decoder_iters,
                prior_mode: kind.prior_mode(),
            };
            let cn = if kind == ReceiverKind::ConvBpEp {
                if counting.is_none() {
                    let shape = StretchedGraph::new(&scn.cb, scn.taps, scn.symbols()).shape();
                    counting = Some(match cache_dir {
                        Some(dir) => load_or_solve(&shape, dir)?.0,
                        None => scma_core::counting::solve_counting_numbers(&shape).map_err(CacheError::from)?,
                    });
                }
                counting.as_ref()
            } else {
                None
            };
            templates.insert(kind, Detector::new(&scn.cb, scn.taps, scn.symbols(), rcfg, cn)?);
        }
        Ok(Bench {
            cfg: cfg.clone(),
            scn,
            templates,
        })
    }

    pub fn template(&self, kind: ReceiverKind) -> &Detector {
        &self.templates[&kind]
    }

    pub fn n0(&self, ebn0_db: f64) -> f64 {
        n0_from_ebn0(ebn0_db, self.scn.rate(), self.scn.cb.bits_per_symbol())
    }

    pub fn frame(&self, ebn0_db: f64, trial: u64) -> TxFrame {
        draw_frame(&self.scn, self.n0(ebn0_db), self.cfg.seed, trial)
    }

    /// Network of trial `trial`.
    pub fn topology(&self, trial: u64) -> Topology {
        let c = &self.cfg.cooperation;
        let users = self.scn.cb.users();
        let mut rng = stream_rng(self.cfg.seed, trial, Stream::Topology);
        if c.connected {
            if let Some(t) = Topology::random_connected(users, c.area, c.range, TOPOLOGY_TRIES, &mut rng) {
                return t;
            }
            warn!("trial {trial}: no connected placement found, using a disconnected one");
        }
        Topology::random(users, c.area, c.range, &mut rng)
    }

    fn counted_users(&self) -> Vec<usize> {
        if self.cfg.receiver.all_users {
            (0..self.scn.cb.users()).collect()
        } else {
            vec![0]
        }
    }

    fn decoded_errors(&self, det: &Detector, decoded: Option<&Vec<Vec<u8>>>, frame: &TxFrame, k: usize) -> u64 {
        let bits: Vec<u8> = match decoded {
            Some(info) => info[k].clone(),
            None => det.symbol_decisions()[k]
                .iter()
                .flat_map(|&m| self.scn.cb.symbol_bits(m))
                .collect(),
        };
        bits.iter().zip(&frame.info[k]).filter(|(a, b)| a != b).count() as u64
    }

    /// Runs one trial. The frame depends only on the trial index, so
    /// receivers and schemes are compared on identical realisations.
    pub fn run_trial(&self, kind: ReceiverKind, scheme: Scheme, ebn0_db: f64, trial: u64) -> Result<TrialOutcome, HarnessError> {
        let n0 = self.n0(ebn0_db);
        let frame = self.frame(ebn0_db, trial);
        let counted = self.counted_users();
        let receivers: Vec<usize> = match scheme {
            Scheme::Local => counted.clone(),
            Scheme::Coop(_) => (0..self.scn.cb.users()).collect(),
        };
        let mut dets = Vec::with_capacity(receivers.len());
        for &k in &receivers {
            let mut d = self.templates[&kind].clone();
            d.load(frame.channel.user(k), &frame.rx.y[k], n0)?;
            dets.push(d);
        }
        let code = self.scn.code.as_ref();
        let coop = match scheme {
            Scheme::Local => None,
            Scheme::Coop(p) => Some((self.topology(trial), self.cfg.coop(p))),
        };
        let mut links = stream_rng(self.cfg.seed, trial, Stream::Links);
        let mut iter_errors = Vec::with_capacity(self.cfg.receiver.outer_iters);
        for _ in 0..self.cfg.receiver.outer_iters {
            let outs = match &coop {
                None => dets.iter_mut().map(|d| d.iterate(code)).collect::<Vec<_>>(),
                Some((topo, ccfg)) => {
                    dets.iter_mut().for_each(Detector::front_half);
                    let locals: Vec<_> = dets.iter().map(Detector::local_messages).collect();
                    let fused = fuse_messages(&locals, topo, ccfg, &mut links);
                    dets.iter_mut()
                        .zip(&fused)
                        .map(|(d, f)| d.finish_iteration(Some(f), code))
                        .collect()
                }
            };
            let errors = receivers
                .iter()
                .zip(&dets)
                .zip(&outs)
                .filter(|((k, _), _)| counted.contains(k))
                .map(|((&k, d), o)| self.decoded_errors(d, o.info_bits.as_ref(), &frame, k))
                .sum();
            iter_errors.push(errors);
        }
        Ok(TrialOutcome {
            iter_errors,
            bits: (counted.len() * self.scn.info_len()) as u64,
            fallbacks: dets.iter().map(Detector::fallbacks).sum(),
        })
    }

    /// Runs trials in parallel; outcomes are returned in trial order.
    pub fn run_point(
        &self,
        kind: ReceiverKind,
        scheme: Scheme,
        ebn0_db: f64,
        trials: Range<u64>,
    ) -> Result<Vec<TrialOutcome>, HarnessError> {
        trials
            .into_par_iter()
            .map(|t| self.run_trial(kind, scheme, ebn0_db, t))
            .collect()
    }

    /// Schemes evaluated by a sweep.
    pub fn schemes(&self) -> Vec<Scheme> {
        let mut v = vec![Scheme::Local];
        if self.cfg.cooperation.enabled {
            v.extend(self.cfg.cooperation.protocols.iter().map(|&p| Scheme::Coop(p)));
        }
        v
    }
}

fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Output {
        path: dir.to_owned(),
        source,
    })
}

/// Runs every (receiver, scheme, Eb/N0) point not already present in the
/// output CSV and returns the records of all configured points.
pub fn run_ber_sweep(cfg: &SimConfig, out_dir: &Path) -> Result<Vec<BerRecord>, HarnessError> {
    ensure_dir(out_dir)?;
    let bench = Bench::new(cfg, Some(out_dir))?;
    let ber_path = out_dir.join(BER_CSV);
    let existing: BTreeMap<_, BerRecord> = read_csv::<BerRecord>(&ber_path)?
        .into_iter()
        .map(|r| (r.key(), r))
        .collect();
    let mut all = Vec::new();
    for &kind in &cfg.receiver.kinds {
        for scheme in bench.schemes() {
            for &ebn0 in &cfg.sweep.ebn0_db {
                let key = (kind.name().to_owned(), scheme.name().to_owned(), ebn0.to_bits());
                if let Some(r) = existing.get(&key) {
                    info!("skipping completed point {} / {} / {ebn0} dB", kind.name(), scheme.name());
                    all.push(r.clone());
                    continue;
                }
                let start = Instant::now();
                let outcomes = bench.run_point(kind, scheme, ebn0, 0..cfg.sweep.trials)?;
                let s = summarize(&outcomes);
                let rec = BerRecord::new(
                    kind.name(),
                    scheme.name(),
                    ebn0,
                    s.trials,
                    s.iter_errors.last().copied().unwrap_or(0),
                    s.bits,
                    start.elapsed().as_secs_f64(),
                );
                info!("{} / {} / {ebn0} dB: BER {:.3e}", kind.name(), scheme.name(), rec.ber);
                let iters: Vec<IterationRecord> = s
                    .iter_errors
                    .iter()
                    .enumerate()
                    .map(|(i, &e)| IterationRecord {
                        receiver: kind.name().to_owned(),
                        coop: scheme.name().to_owned(),
                        ebn0_db: ebn0,
                        iteration: i + 1,
                        trials: s.trials,
                        bit_errors: e,
                        bits: s.bits,
                        ber: e as f64 / s.bits.max(1) as f64,
                    })
                    .collect();
                append_csv(&out_dir.join(ITERATION_CSV), &iters)?;
                append_csv(&ber_path, std::slice::from_ref(&rec))?;
                all.push(rec);
            }
        }
    }
    Ok(all)
}

/// Protocol variants compared in a consensus trace: label, protocol and
/// vanishing step.
pub const TRACE_VARIANTS: [(&str, Protocol, bool); 3] = [
    ("consensus", Protocol::Consensus, false),
    ("consensus-vanishing", Protocol::Consensus, true),
    ("admm", Protocol::Admm, false),
];

/// Initial parameters of every user for trace draw `t`: each user's local
/// messages after one detector pass.
pub fn trace_initial(bench: &Bench, t: u64) -> Result<Vec<Vec<f64>>, HarnessError> {
    let ebn0 = bench.cfg.trace.ebn0_db;
    let n0 = bench.n0(ebn0);
    let frame = bench.frame(ebn0, t);
    let template = bench
        .templates
        .get(&ReceiverKind::StretchBpEp)
        .or_else(|| bench.templates.values().next())
        .expect("at least one receiver");
    (0..bench.scn.cb.users())
        .map(|k| {
            let mut d = template.clone();
            d.load(frame.channel.user(k), &frame.rx.y[k], n0)?;
            d.front_half();
            Ok(to_theta(&d.local_messages()))
        })
        .collect()
}

/// MSE per round against the initial network average, for one protocol
/// variant, link SNR and draw.
pub fn trace_mse(bench: &Bench, initial: &[Vec<f64>], t: u64, variant: (Protocol, bool), link_snr_db: Option<f64>) -> Vec<f64> {
    let topo = bench.topology(t);
    let c = &bench.cfg.cooperation;
    let cfg = CoopConfig {
        protocol: variant.0,
        rounds: bench.cfg.trace.rounds,
        links: LinkModel {
            snr_db: link_snr_db,
            failure_prob: c.failure_prob,
        },
        vanishing: variant.1,
        initial_penalty: bench.cfg.trace.penalty,
        adaptive_penalty: c.adaptive_penalty,
    };
    let target = network_average(initial);
    let rng = stream_rng(bench.cfg.seed, t, Stream::Links);
    run_protocol(initial.to_vec(), &topo, &cfg, rng)
        .iter()
        .map(|states| consensus_mse(states, &target))
        .collect()
}

/// MSE traces averaged over the configured number of draws, for noiseless
/// links and every configured link SNR.
pub fn run_consensus_trace(cfg: &SimConfig) -> Result<Vec<MseRecord>, HarnessError> {
    let mut tcfg = cfg.clone();
    tcfg.receiver.kinds = vec![ReceiverKind::StretchBpEp];
    let bench = Bench::new(&tcfg, None)?;
    let draws = cfg.trace.topologies;
    let initials: Vec<Vec<Vec<f64>>> = (0..draws)
        .into_par_iter()
        .map(|t| trace_initial(&bench, t))
        .collect::<Result<_, _>>()?;
    let snrs: Vec<Option<f64>> = std::iter::once(None).chain(cfg.trace.link_snr_db.iter().map(|&s| Some(s))).collect();
    let mut records = Vec::new();
    for (label, protocol, vanishing) in TRACE_VARIANTS {
        for &snr in &snrs {
            let traces: Vec<Vec<f64>> = (0..draws)
                .into_par_iter()
                .map(|t| trace_mse(&bench, &initials[t as usize], t, (protocol, vanishing), snr))
                .collect();
            for round in 0..=cfg.trace.rounds {
                let mse = traces.iter().map(|tr| tr[round]).sum::<f64>() / draws as f64;
                records.push(MseRecord {
                    protocol: label.to_owned(),
                    link_snr_db: snr,
                    round,
                    mse,
                });
            }
        }
    }
    Ok(records)
}

/// Runs the consensus trace and writes it to the output directory.
pub fn write_consensus_trace(cfg: &SimConfig, out_dir: &Path) -> Result<Vec<MseRecord>, HarnessError> {
    ensure_dir(out_dir)?;
    let records = run_consensus_trace(cfg)?;
    write_csv(&out_dir.join(MSE_CSV), &records)?;
    Ok(records)
}
