//! Iterative BP-EP detection on the stretched factor graph.
//!
//! One outer iteration runs
//!
//! 1. prior messages (EP projection of the decoder's symbol priors) and
//!    `x → φ`,
//! 2. `φ → s`,
//! 3. a forward then a backward sweep over time through the convolution and
//!    observation factors,
//! 4. `s → φ` (optionally replaced by a cooperatively fused message), `φ → x`
//!    and `x → prior`,
//! 5. bit LLR extraction and LDPC decoding of every user's codeword.
//!
//! The convexified receiver runs the same schedule with non-unit exponents.

mod engine;
mod stretched;

pub use stretched::StretchedGraph;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{normalize_log_weights, symbol_priors_from_llrs, Codebook, LdpcCode};
use crate::counting::{CountingError, CountingNumbers};
use crate::gaussian::{ep_project, gpow, symbol_extrinsic_llr, DiscretePrior, GaussianMsg};
use crate::Complex64;

#[derive(Debug, Error)]
pub enum ReceiverError {
    #[error(transparent)]
    Counting(#[from] CountingError),
    #[error("expected {expected} {what}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Which detector a simulation runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReceiverKind {
    StretchBpEp,
    GaussApproxBp,
    ConvBpEp,
}

impl ReceiverKind {
    pub fn name(self) -> &'static str {
        match self {
            ReceiverKind::StretchBpEp => "stretch-bp-ep",
            ReceiverKind::GaussApproxBp => "gauss-approx-bp",
            ReceiverKind::ConvBpEp => "conv-bp-ep",
        }
    }

    pub fn prior_mode(self) -> PriorMode {
        match self {
            ReceiverKind::GaussApproxBp => PriorMode::GaussApprox,
            _ => PriorMode::Ep,
        }
    }
}

impl std::str::FromStr for ReceiverKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        [
            ReceiverKind::StretchBpEp,
            ReceiverKind::GaussApproxBp,
            ReceiverKind::ConvBpEp,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| format!("unknown receiver `{s}`"))
    }
}

/// How discrete symbol priors become Gaussian messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorMode {
    /// Moment matching of the tilted belief (expectation propagation).
    Ep,
    /// Moment matching of the prior alone.
    GaussApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReceiverConfig {
    pub outer_iters: usize,
    pub ldpc_iters: usize,
    pub prior_mode: PriorMode,
}

impl Default for ReceiverConfig {
    fn default() -> Self {
        ReceiverConfig {
            outer_iters: 10,
            ldpc_iters: 10,
            prior_mode: PriorMode::Ep,
        }
    }
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationDiag {
    pub iteration: usize,
    /// Mean absolute change of the `φ → x` means.
    pub mean_change: f64,
    /// Own-user information BER after decoding, when the truth is known.
    pub ber: Option<f64>,
}

/// Outcome of one outer iteration.
#[derive(Debug, Clone)]
pub struct IterationOutput {
    pub mean_change: f64,
    /// Decoded information bits per user (coded operation only).
    pub info_bits: Option<Vec<Vec<u8>>>,
}

#[derive(Debug, Clone)]
pub struct DetectOutput {
    /// Decoded information bits of every user.
    pub info_bits: Vec<Vec<u8>>,
    pub diagnostics: Vec<IterationDiag>,
}

/// Detector state for one receiving user.
#[derive(Debug, Clone)]
pub struct Detector {
    cb: Codebook,
    graph: StretchedGraph,
    cfg: ReceiverConfig,
    /// Counting numbers of the prior factors, `[x]`.
    prior_power: Vec<f64>,
    /// Symbol probabilities `[k * N + n][m]`.
    priors: Vec<Vec<f64>>,
    /// Fixed Gaussian priors replacing the discrete ones (linear-model mode).
    gaussian_priors: Option<Vec<GaussianMsg>>,
    /// Decoder extrinsic LLRs per user, used as bit priors.
    bit_priors: Vec<Vec<f64>>,
    last_phi_x: Vec<GaussianMsg>,
}

impl Detector {
    pub fn new(
        cb: &Codebook,
        taps: usize,
        symbols: usize,
        cfg: ReceiverConfig,
        counting: Option<&CountingNumbers>,
    ) -> Result<Self, ReceiverError> {
        let mut graph = StretchedGraph::new(cb, taps, symbols);
        if let Some(cn) = counting {
            let asg = cn.assign(&graph.shape())?;
            for (f, &p) in asg.factor_power.iter().enumerate() {
                graph.graph.factors[f].power = p;
            }
            for (e, &(ga, gi)) in asg.edge_gammas.iter().enumerate() {
                graph.graph.edges[e].g_fac = ga;
                graph.graph.edges[e].g_var = gi;
            }
        }
        let prior_power = graph
            .x_prior_edge
            .iter()
            .map(|&e| graph.graph.factors[graph.graph.edges[e].fac].power)
            .collect();
        let users = cb.users();
        let bps = cb.bits_per_symbol();
        let xs = graph.x_var.len();
        Ok(Detector {
            cb: cb.clone(),
            graph,
            cfg,
            prior_power,
            priors: vec![vec![1.0 / cb.size as f64; cb.size]; users * symbols],
            gaussian_priors: None,
            bit_priors: vec![vec![0.0; symbols * bps]; users],
            last_phi_x: vec![GaussianMsg::VACUOUS; xs],
        })
    }

    pub fn config(&self) -> &ReceiverConfig {
        &self.cfg
    }

    pub fn graph(&self) -> &StretchedGraph {
        &self.graph
    }

    pub fn symbols(&self) -> usize {
        self.graph.symbols
    }

    /// Starts a new frame: channel taps `h[j][l]` and samples of the
    /// receiving user, noise spectral density `n0`.
    pub fn load(&mut self, h: &[Vec<Complex64>], y: &[Complex64], n0: f64) -> Result<(), ReceiverError> {
        if y.len() != self.graph.frame_len() {
            return Err(ReceiverError::Dimension {
                what: "received samples",
                expected: self.graph.frame_len(),
                got: y.len(),
            });
        }
        if h.len() != self.graph.resources || h.iter().any(|hj| hj.len() != self.graph.taps) {
            return Err(ReceiverError::Dimension {
                what: "channel taps per resource",
                expected: self.graph.taps,
                got: h.first().map_or(0, Vec::len),
            });
        }
        self.graph.load(h, y, 2.0 * n0);
        let m = self.cb.size;
        for p in &mut self.priors {
            p.iter_mut().for_each(|x| *x = 1.0 / m as f64);
        }
        for b in &mut self.bit_priors {
            b.iter_mut().for_each(|x| *x = 0.0);
        }
        self.last_phi_x.iter_mut().for_each(|m| *m = GaussianMsg::VACUOUS);
        Ok(())
    }

    /// Replaces the discrete symbol priors by fixed Gaussian messages, one per
    /// `x` variable in [`StretchedGraph::x_index`] order.
    pub fn set_gaussian_priors(&mut self, msgs: Vec<GaussianMsg>) {
        assert_eq!(msgs.len(), self.graph.x_var.len());
        self.gaussian_priors = Some(msgs);
    }

    /// Steps 1 to 3 of an outer iteration.
    pub fn front_half(&mut self) {
        let d = self.graph.nonzeros();
        let n_sym = self.graph.symbols;
        // 1. prior messages and x → φ
        for xi in 0..self.graph.x_var.len() {
            let k = xi / (d * n_sym);
            let di = (xi / n_sym) % d;
            let n = xi % n_sym;
            let e = self.graph.x_prior_edge[xi];
            let aux = self.prior_message(xi, k, di, n, self.graph.graph.edges[e].v2f);
            self.graph.graph.set_f2v(e, aux);
            let v = self.graph.x_var[xi];
            self.graph.graph.update_var_edge(v, self.graph.x_phi_edge[xi]);
        }
        // 2. φ → s
        for &f in &self.graph.phi {
            self.graph.graph.update_linear_edge(f, 0);
        }
        // 3. time sweeps
        let t_len = self.graph.frame_len();
        for t in 0..t_len {
            self.sweep_step(t);
        }
        for t in (0..t_len).rev() {
            self.sweep_step(t);
        }
    }

    fn prior_message(&self, xi: usize, k: usize, di: usize, n: usize, cavity: GaussianMsg) -> GaussianMsg {
        let power = self.prior_power[xi];
        if let Some(fixed) = &self.gaussian_priors {
            return gpow(fixed[xi], 1.0 / power).expect("positive exponent");
        }
        let j = self.graph.support[k][di];
        let support: Vec<Complex64> = (0..self.cb.size).map(|m| self.cb.entry(k, m, j)).collect();
        let probs = &self.priors[k * self.graph.symbols + n];
        let probs = if power == 1.0 {
            probs.clone()
        } else {
            let logs: Vec<f64> = probs.iter().map(|p| p.ln() / power).collect();
            normalize_log_weights(&logs)
        };
        let prior = DiscretePrior::new(support, probs);
        match self.cfg.prior_mode {
            PriorMode::Ep => ep_project(&prior, &cavity).expect("priors carry mass").msg,
            PriorMode::GaussApprox => prior.moment_match().expect("priors carry mass"),
        }
    }

    fn sweep_step(&mut self, t: usize) {
        let sg = &mut self.graph;
        let t_len = sg.symbols + sg.taps - 1;
        let n_sym = sg.symbols;
        for j in 0..sg.resources {
            let psi = sg.psi[j * t_len + t];
            for (pos, &l) in sg.psi_taps[j * t_len + t].iter().enumerate() {
                let s = sg.s_var[j * n_sym + t - l];
                let e = sg.graph.factors[psi].edges[pos + 1];
                sg.graph.update_var_edge(s, e);
            }
            sg.graph.update_linear_edge(psi, 0);
            let r = sg.r_var[j * t_len + t];
            let to_obs = sg.graph.vars[r][1];
            sg.graph.update_var_edge(r, to_obs);
        }
        sg.graph.update_linear(sg.obs[t]);
        for j in 0..sg.resources {
            let r = sg.r_var[j * t_len + t];
            let to_psi = sg.graph.vars[r][0];
            sg.graph.update_var_edge(r, to_psi);
            sg.graph.update_linear(sg.psi[j * t_len + t]);
        }
    }

    /// Message each antenna symbol receives from this user's measurement,
    /// `[j * N + n]`: the product of its convolution-factor messages.
    pub fn local_messages(&self) -> Vec<GaussianMsg> {
        let sg = &self.graph;
        sg.s_var
            .iter()
            .zip(&sg.phi_s_edge)
            .map(|(&s, &e)| sg.graph.product_except(s, Some(e)))
            .collect()
    }

    /// Step 4: messages back to the symbols, optionally using fused antenna
    /// messages in place of the local ones.
    pub fn back_half(&mut self, fused: Option<&[GaussianMsg]>) {
        let sg = &mut self.graph;
        for (si, (&s, &e)) in sg.s_var.iter().zip(&sg.phi_s_edge).enumerate() {
            let aux = match fused {
                Some(f) => f[si],
                None => sg.graph.product_except(s, Some(e)),
            };
            sg.graph.set_v2f(e, aux);
        }
        for &f in &sg.phi {
            let deg = sg.graph.factors[f].edges.len();
            for i in 1..deg {
                sg.graph.update_linear_edge(f, i);
            }
        }
        for xi in 0..sg.x_var.len() {
            sg.graph.update_var_edge(sg.x_var[xi], sg.x_prior_edge[xi]);
        }
    }

    /// Messages `φ → x` of user `k` at time `n`, in support order.
    pub fn symbol_messages(&self, k: usize, n: usize) -> Vec<GaussianMsg> {
        (0..self.graph.nonzeros())
            .map(|d| {
                let xi = self.graph.x_index(k, d, n);
                self.graph.graph.edges[self.graph.x_phi_edge[xi]].f2v
            })
            .collect()
    }

    /// Detector extrinsic LLRs of every coded bit of user `k`.
    pub fn extrinsic_llrs(&self, k: usize) -> Vec<f64> {
        let bps = self.cb.bits_per_symbol();
        (0..self.graph.symbols)
            .flat_map(|n| {
                let msgs = self.symbol_messages(k, n);
                let prior = &self.bit_priors[k][n * bps..(n + 1) * bps];
                symbol_extrinsic_llr(&msgs, &self.cb, k, prior)
            })
            .collect()
    }

    /// Posterior symbol probabilities of user `k` at time `n`.
    pub fn symbol_posterior(&self, k: usize, n: usize) -> Vec<f64> {
        let msgs = self.symbol_messages(k, n);
        let support = &self.graph.support[k];
        let prior = &self.priors[k * self.graph.symbols + n];
        let logs: Vec<f64> = (0..self.cb.size)
            .map(|m| {
                prior[m].ln()
                    + msgs
                        .iter()
                        .zip(support)
                        .filter(|(msg, _)| !msg.is_vacuous())
                        .map(|(msg, &j)| -(msg.mean - self.cb.entry(k, m, j)).norm_sqr() / msg.var)
                        .sum::<f64>()
            })
            .collect();
        normalize_log_weights(&logs)
    }

    /// Maximum a posteriori symbol decisions `[k][n]`.
    pub fn symbol_decisions(&self) -> Vec<Vec<usize>> {
        (0..self.cb.users())
            .map(|k| {
                (0..self.graph.symbols)
                    .map(|n| {
                        let p = self.symbol_posterior(k, n);
                        (0..p.len()).fold(0, |best, m| if p[m] > p[best] { m } else { best })
                    })
                    .collect()
            })
            .collect()
    }

    /// Belief of the antenna symbol `s_j^n`.
    pub fn antenna_belief(&self, j: usize, n: usize) -> GaussianMsg {
        self.graph.graph.belief(self.graph.s_var[j * self.graph.symbols + n])
    }

    /// Belief of the `d`-th codeword component of user `k` at time `n`.
    pub fn symbol_belief(&self, k: usize, d: usize, n: usize) -> GaussianMsg {
        self.graph.graph.belief(self.graph.x_var[self.graph.x_index(k, d, n)])
    }

    /// Number of convexified messages that fell back to their plain value.
    pub fn fallbacks(&self) -> usize {
        self.graph.graph.fallbacks
    }

    fn mean_change(&mut self) -> f64 {
        let mut total = 0.0;
        for (xi, last) in self.last_phi_x.iter_mut().enumerate() {
            let now = self.graph.graph.edges[self.graph.x_phi_edge[xi]].f2v;
            let before = if last.is_vacuous() { Complex64::new(0.0, 0.0) } else { last.mean };
            let after = if now.is_vacuous() { Complex64::new(0.0, 0.0) } else { now.mean };
            total += (after - before).norm();
            *last = now;
        }
        total / self.last_phi_x.len() as f64
    }

    /// Step 4 and step 5: finishes the iteration, decodes every user's
    /// codeword when a code is given and refreshes the symbol priors.
    pub fn finish_iteration(&mut self, fused: Option<&[GaussianMsg]>, ldpc: Option<&LdpcCode>) -> IterationOutput {
        self.back_half(fused);
        let mean_change = self.mean_change();
        let Some(code) = ldpc else {
            return IterationOutput {
                mean_change,
                info_bits: None,
            };
        };
        let bps = self.cb.bits_per_symbol();
        let mut info = Vec::with_capacity(self.cb.users());
        for k in 0..self.cb.users() {
            let llrs = self.extrinsic_llrs(k);
            let out = code.decode_bp(&llrs, self.cfg.ldpc_iters);
            info.push(code.info_bits(&out.hard));
            for n in 0..self.graph.symbols {
                let bits = &out.extrinsic[n * bps..(n + 1) * bps];
                self.priors[k * self.graph.symbols + n] = symbol_priors_from_llrs(bits);
            }
            self.bit_priors[k] = out.extrinsic;
        }
        IterationOutput {
            mean_change,
            info_bits: Some(info),
        }
    }

    /// One full outer iteration without cooperation.
    pub fn iterate(&mut self, ldpc: Option<&LdpcCode>) -> IterationOutput {
        self.front_half();
        self.finish_iteration(None, ldpc)
    }
}

/// Fraction of positions where two bit vectors differ.
pub fn bit_error_rate(a: &[u8], b: &[u8]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).filter(|(x, y)| x != y).count() as f64 / a.len().max(1) as f64
}

/// Runs every outer iteration on one frame of user `user`.
///
/// `truth`, when given, is the user's transmitted information and enables the
/// per-iteration BER diagnostic.
#[allow(clippy::too_many_arguments)]
pub fn detect_frame(
    det: &mut Detector,
    user: usize,
    h: &[Vec<Complex64>],
    y: &[Complex64],
    n0: f64,
    ldpc: &LdpcCode,
    truth: Option<&[u8]>,
) -> Result<DetectOutput, ReceiverError> {
    det.load(h, y, n0)?;
    let mut diagnostics = Vec::with_capacity(det.cfg.outer_iters);
    let mut info_bits = Vec::new();
    for it in 0..det.cfg.outer_iters {
        let out = det.iterate(Some(ldpc));
        info_bits = out.info_bits.expect("coded iteration yields bits");
        diagnostics.push(IterationDiag {
            iteration: it + 1,
            mean_change: out.mean_change,
            ber: truth.map(|t| bit_error_rate(&info_bits[user], t)),
        });
    }
    Ok(DetectOutput {
        info_bits,
        diagnostics,
    })
}

/// Uncoded detection: symbol decisions `[k][n]` after all outer iterations.
pub fn detect_symbols(
    det: &mut Detector,
    h: &[Vec<Complex64>],
    y: &[Complex64],
    n0: f64,
) -> Result<Vec<Vec<usize>>, ReceiverError> {
    det.load(h, y, n0)?;
    for _ in 0..det.cfg.outer_iters {
        det.iterate(None);
    }
    Ok(det.symbol_decisions())
}

#[cfg(test)]
mod tests;
