use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use scma_core::receiver::{ReceiverKind, StretchedGraph};
use scma_harness::config::SimConfig;
use scma_harness::counting_cache::{load_or_solve, CacheOutcome};
use scma_harness::montecarlo::{run_ber_sweep, write_consensus_trace};
use scma_harness::selftest::run_selftest;

#[derive(Debug, Parser)]
#[command(name = "scma-sim", about = "MIMO-SCMA receiver simulations", version)]
struct Cli {
    /// TOML configuration; the built-in default when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Restricts the sweep to one receiver.
    #[arg(long, global = true)]
    receiver: Option<ReceiverKind>,
    /// Overrides the trials per point.
    #[arg(long, global = true)]
    trials: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// BER versus Eb/N0 sweep.
    Ber,
    /// MSE of the cooperation protocols per round.
    Consensus,
    /// Solves and caches the counting numbers of the configured system.
    Counting,
    /// Quick oracle checks.
    Selftest,
    /// Prints the annotated default configuration.
    DefaultConfig,
}

fn load_config(cli: &Cli) -> Result<SimConfig> {
    let mut cfg = match &cli.config {
        Some(p) => SimConfig::load(p)?,
        None => SimConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output.dir = o.clone();
    }
    if let Some(r) = cli.receiver {
        cfg.receiver.kinds = vec![r];
    }
    if let Some(t) = cli.trials {
        cfg.sweep.trials = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if let Command::DefaultConfig = cli.command {
        print!("{}", scma_harness::config::DEFAULT_TOML);
        return Ok(());
    }
    let cfg = load_config(&cli)?;
    let out = cfg.output.dir.clone();
    match cli.command {
        Command::Ber => {
            for r in run_ber_sweep(&cfg, &out)? {
                println!("{:<16} {:<12} {:>6.2} dB  BER {:.4e}  ({} / {})", r.receiver, r.coop, r.ebn0_db, r.ber, r.bit_errors, r.bits);
            }
        }
        Command::Consensus => {
            let recs = write_consensus_trace(&cfg, &out)?;
            println!("wrote {} rows to {}", recs.len(), out.join(scma_harness::montecarlo::MSE_CSV).display());
        }
        Command::Counting => {
            let scn = cfg.scenario()?;
            let shape = StretchedGraph::new(&scn.cb, scn.taps, scn.symbols()).shape();
            let (cn, outcome) = load_or_solve(&shape, &out).context("counting numbers")?;
            let report = cn.validate();
            println!(
                "{} counting numbers: objective {:.6e}, min decomposition entry {:.3e}",
                if outcome == CacheOutcome::Hit { "cached" } else { "solved" },
                cn.objective,
                report.min_entry
            );
            if !report.valid {
                bail!("counting numbers fail the convexity check");
            }
        }
        Command::Selftest => {
            let checks = run_selftest(cfg.seed);
            for c in &checks {
                println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if checks.iter().any(|c| !c.passed) {
                bail!("selftest failed");
            }
        }
        Command::DefaultConfig => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
