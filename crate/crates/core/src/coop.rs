//! User cooperation over a random geometric network.
//!
//! Every user holds a local Gaussian message about each antenna symbol. The
//! protocols here drive the users' natural parameters towards their network
//! average; scaling the average by the component size recovers the product of
//! all local messages, which is what a central unit would compute.
//!
//! Parameters travel as flat vectors `[Re η, Im η, λ]` per tracked variable.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::complex_gaussian;
use crate::gaussian::{gprod, GaussianMsg, Natural};
use crate::Complex64;

/// Residual ratio that triggers a penalty change.
pub const PENALTY_RATIO: f64 = 10.0;
/// Relative penalty step.
pub const PENALTY_STEP: f64 = 1.0;
/// Relative residual size below which penalties stay fixed.
const RESIDUAL_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub positions: Vec<(f64, f64)>,
    pub range: f64,
    /// Sorted neighbour lists, excluding the user itself.
    pub neighbours: Vec<Vec<usize>>,
}

impl Topology {
    /// Users within `range` of each other are linked.
    pub fn from_positions(positions: Vec<(f64, f64)>, range: f64) -> Self {
        let k = positions.len();
        let neighbours = (0..k)
            .map(|a| {
                (0..k)
                    .filter(|&b| {
                        let (dx, dy) = (positions[a].0 - positions[b].0, positions[a].1 - positions[b].1);
                        b != a && (dx * dx + dy * dy).sqrt() <= range
                    })
                    .collect()
            })
            .collect();
        Topology {
            positions,
            range,
            neighbours,
        }
    }

    /// Users placed uniformly on a `side × side` square.
    pub fn random<R: Rng + ?Sized>(users: usize, side: f64, range: f64, rng: &mut R) -> Self {
        let positions = (0..users)
            .map(|_| (rng.random_range(0.0..side), rng.random_range(0.0..side)))
            .collect();
        Self::from_positions(positions, range)
    }

    /// Redraws until the network is connected; `None` after `tries` draws.
    pub fn random_connected<R: Rng + ?Sized>(
        users: usize,
        side: f64,
        range: f64,
        tries: usize,
        rng: &mut R,
    ) -> Option<Self> {
        (0..tries)
            .map(|_| Self::random(users, side, range, rng))
            .find(Topology::is_connected)
    }

    pub fn fully_connected(users: usize) -> Self {
        Self::from_positions(vec![(0.0, 0.0); users], 0.0)
    }

    pub fn users(&self) -> usize {
        self.positions.len()
    }

    /// Component label of every user.
    pub fn components(&self) -> Vec<usize> {
        let k = self.users();
        let mut label = vec![usize::MAX; k];
        let mut next = 0;
        for start in 0..k {
            if label[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            label[start] = next;
            while let Some(u) = stack.pop() {
                for &v in &self.neighbours[u] {
                    if label[v] == usize::MAX {
                        label[v] = next;
                        stack.push(v);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn is_connected(&self) -> bool {
        self.components().iter().all(|&c| c == 0)
    }

    /// Size of the component containing each user.
    pub fn component_sizes(&self) -> Vec<usize> {
        let comp = self.components();
        comp.iter().map(|&c| comp.iter().filter(|&&x| x == c).count()).collect()
    }

    /// Metropolis weight between `k` and `i`.
    pub fn weight(&self, k: usize, i: usize) -> f64 {
        if k == i {
            1.0 - self.neighbours[k].iter().map(|&j| self.weight(k, j)).sum::<f64>()
        } else if self.neighbours[k].binary_search(&i).is_ok() {
            1.0 / self.neighbours[k].len().max(self.neighbours[i].len()) as f64
        } else {
            0.0
        }
    }

    /// Closed neighbourhood `S_k ∪ {k}` in ascending order.
    pub fn closed(&self, k: usize) -> Vec<usize> {
        let mut v = self.neighbours[k].clone();
        let pos = v.partition_point(|&x| x < k);
        v.insert(pos, k);
        v
    }
}

/// Flattens messages into natural parameters.
pub fn to_theta(msgs: &[GaussianMsg]) -> Vec<f64> {
    msgs.iter()
        .flat_map(|m| {
            let n = m.natural();
            [n.eta.re, n.eta.im, n.lambda]
        })
        .collect()
}

/// Reads natural parameters back as messages after scaling by `scale`;
/// `None` where the precision is not positive.
pub fn from_theta(theta: &[f64], scale: f64) -> Vec<Option<GaussianMsg>> {
    theta
        .chunks_exact(3)
        .map(|c| {
            let n = Natural {
                eta: Complex64::new(c[0], c[1]),
                lambda: c[2],
            }
            .scale(scale);
            if n.lambda > 0.0 && n.lambda.is_finite() && n.eta.re.is_finite() && n.eta.im.is_finite() {
                GaussianMsg::from_natural(n).ok()
            } else {
                None
            }
        })
        .collect()
}

/// Product of all local messages.
pub fn fuse_global(locals: &[GaussianMsg]) -> GaussianMsg {
    gprod(locals.iter().copied())
}

/// Lossy inter-user links.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    /// Link SNR in dB; noiseless when absent.
    pub snr_db: Option<f64>,
    /// Probability that a single transmission is lost.
    pub failure_prob: f64,
}

impl LinkModel {
    pub const PERFECT: LinkModel = LinkModel {
        snr_db: None,
        failure_prob: 0.0,
    };
}

/// Delivers parameter vectors over the links, adding noise and replaying the
/// last successful value after a failure.
#[derive(Debug, Clone)]
pub struct Links<R> {
    model: LinkModel,
    noise_var: f64,
    rng: R,
    cache: BTreeMap<(usize, usize), Vec<f64>>,
}

impl<R: Rng> Links<R> {
    /// Noise power is set relative to the mean squared parameter of the
    /// initial states.
    pub fn new(model: LinkModel, initial: &[Vec<f64>], rng: R) -> Self {
        let noise_var = match model.snr_db {
            Some(db) => {
                let count: usize = initial.iter().map(Vec::len).sum();
                let power = initial.iter().flatten().map(|x| x * x).sum::<f64>() / count.max(1) as f64;
                power / 10f64.powf(db / 10.0)
            }
            None => 0.0,
        };
        Links {
            model,
            noise_var,
            rng,
            cache: BTreeMap::new(),
        }
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn is_noisy(&self) -> bool {
        self.noise_var > 0.0
    }

    /// What `to` receives when `from` sends `value`.
    pub fn deliver(&mut self, from: usize, to: usize, value: &[f64]) -> Vec<f64> {
        if from == to {
            return value.to_vec();
        }
        if self.model.failure_prob > 0.0 && self.rng.random::<f64>() < self.model.failure_prob {
            if let Some(old) = self.cache.get(&(from, to)) {
                return old.clone();
            }
        }
        let mut got = value.to_vec();
        if self.noise_var > 0.0 {
            let sd = self.noise_var.sqrt();
            for x in &mut got {
                // real Gaussian with the configured variance
                *x += sd * complex_gaussian(&mut self.rng, 2.0).re;
            }
        }
        self.cache.insert((from, to), got.clone());
        got
    }
}

fn axpy(acc: &mut [f64], a: f64, x: &[f64]) {
    for (y, v) in acc.iter_mut().zip(x) {
        *y += a * v;
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// One synchronous belief-consensus round.
///
/// Without `vanishing` every user replaces its parameters by the Metropolis
/// average of what it receives. With it the update moves by step `1/p` towards
/// the neighbours, which bounds the accumulated link noise.
pub fn consensus_round<R: Rng>(
    states: &[Vec<f64>],
    topo: &Topology,
    links: &mut Links<R>,
    round: usize,
    vanishing: bool,
) -> Vec<Vec<f64>> {
    assert!(round >= 1);
    let alpha = 1.0 / round as f64;
    (0..states.len())
        .map(|k| {
            let mut out = states[k].clone();
            if vanishing {
                let mut delta = vec![0.0; out.len()];
                for &i in &topo.neighbours[k] {
                    let got = links.deliver(i, k, &states[i]);
                    let w = topo.weight(k, i);
                    axpy(&mut delta, w, &got);
                    axpy(&mut delta, -w, &states[k]);
                }
                axpy(&mut out, alpha, &delta);
            } else {
                out.iter_mut().for_each(|x| *x *= topo.weight(k, k));
                for &i in &topo.neighbours[k] {
                    let got = links.deliver(i, k, &states[i]);
                    axpy(&mut out, topo.weight(k, i), &got);
                }
            }
            out
        })
        .collect()
}

/// Penalty adaptation from the primal residual `eps` and dual residual `iota`.
pub fn adapt_penalty(c: f64, eps: f64, iota: f64) -> f64 {
    if eps > PENALTY_RATIO * iota {
        c * (1.0 + PENALTY_STEP)
    } else if iota > PENALTY_RATIO * eps {
        c / (1.0 + PENALTY_STEP)
    } else {
        c
    }
}

/// Per-user Bregman ADMM state.
///
/// Every user adapts its own penalty; a link uses the mean of its two ends in
/// all three updates, which keeps the iteration a proper ADMM on the
/// per-link constraints.
///
/// Each user keeps two multiplier copies per closed-neighbourhood member `i`:
/// `lam_out[k][i]` enters its own parameter update, `lam_in[k][i]` its
/// auxiliary update. Over noiseless links the copies held by `k` and `i` stay
/// equal.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub anchor: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub pi: Vec<Vec<f64>>,
    pub lam_out: Vec<BTreeMap<usize, Vec<f64>>>,
    pub lam_in: Vec<BTreeMap<usize, Vec<f64>>>,
    pub penalty: Vec<f64>,
    /// Whether penalties adapt between rounds.
    pub adaptive: bool,
    prev_mean: Vec<Option<Vec<f64>>>,
}

impl AdmmState {
    pub fn new(initial: Vec<Vec<f64>>, topo: &Topology, penalty: f64, adaptive: bool) -> Self {
        assert!(penalty > 0.0);
        let k = initial.len();
        let dim = initial.first().map_or(0, Vec::len);
        let zeros = |u: usize| -> BTreeMap<usize, Vec<f64>> {
            topo.closed(u).into_iter().map(|i| (i, vec![0.0; dim])).collect()
        };
        AdmmState {
            theta: initial.clone(),
            pi: initial.clone(),
            anchor: initial,
            lam_out: (0..k).map(zeros).collect(),
            lam_in: (0..k).map(zeros).collect(),
            penalty: vec![penalty; k],
            adaptive,
            prev_mean: vec![None; k],
        }
    }

    /// Penalty shared by both ends of a link.
    pub fn link_penalty(&self, k: usize, i: usize) -> f64 {
        0.5 * (self.penalty[k] + self.penalty[i])
    }

    /// One synchronous round: parameters, auxiliaries, multipliers, then
    /// penalties.
    pub fn round<R: Rng>(&mut self, topo: &Topology, links: &mut Links<R>) {
        let users = self.theta.len();
        let dim = self.theta.first().map_or(0, Vec::len);

        // parameters, from the auxiliaries of the previous round
        let mut theta = Vec::with_capacity(users);
        for k in 0..users {
            let mut num = self.anchor[k].clone();
            let mut den = 1.0;
            for i in topo.closed(k) {
                let c = self.link_penalty(k, i);
                let pi_i = links.deliver(i, k, &self.pi[i]);
                axpy(&mut num, 1.0, &self.lam_out[k][&i]);
                axpy(&mut num, c, &pi_i);
                den += c;
            }
            theta.push(num.into_iter().map(|x| x / den).collect::<Vec<f64>>());
        }
        self.theta = theta;

        // auxiliaries, from the fresh parameters
        let mut received: Vec<BTreeMap<usize, Vec<f64>>> = vec![BTreeMap::new(); users];
        let mut pi = Vec::with_capacity(users);
        for k in 0..users {
            let mut num = vec![0.0; dim];
            let mut den = 0.0;
            for i in topo.closed(k) {
                let c = self.link_penalty(k, i);
                let th = links.deliver(i, k, &self.theta[i]);
                axpy(&mut num, c, &th);
                axpy(&mut num, -1.0, &self.lam_in[k][&i]);
                received[k].insert(i, th);
                den += c;
            }
            pi.push(num.into_iter().map(|x| x / den).collect::<Vec<f64>>());
        }
        self.pi = pi;

        // multipliers with the symmetric link penalty
        for k in 0..users {
            for &i in &topo.closed(k) {
                let c_link = self.link_penalty(k, i);
                let pi_i = links.deliver(i, k, &self.pi[i]);
                let lam = self.lam_out[k].get_mut(&i).expect("closed neighbourhood");
                for d in 0..dim {
                    lam[d] += c_link * (pi_i[d] - self.theta[k][d]);
                }
                let th_i = &received[k][&i];
                let lam = self.lam_in[k].get_mut(&i).expect("closed neighbourhood");
                for d in 0..dim {
                    lam[d] += c_link * (self.pi[k][d] - th_i[d]);
                }
            }
        }

        // penalties from the neighbourhood-mean residuals
        for k in 0..users {
            let closed = topo.closed(k);
            let mut mean = vec![0.0; dim];
            for i in &closed {
                axpy(&mut mean, 1.0 / closed.len() as f64, &received[k][i]);
            }
            if self.adaptive {
                if let Some(prev) = &self.prev_mean[k] {
                    let eps = distance(&self.theta[k], &mean);
                    let iota = distance(&mean, prev);
                    // residuals at roundoff level carry no information
                    let floor = RESIDUAL_FLOOR * (1.0 + mean.iter().map(|x| x * x).sum::<f64>().sqrt());
                    if eps.max(iota) > floor {
                        self.penalty[k] = adapt_penalty(self.penalty[k], eps, iota);
                    }
                }
            }
            self.prev_mean[k] = Some(mean);
        }
    }
}

/// Sum over users of `‖θ_k − reference‖²`.
pub fn consensus_mse(states: &[Vec<f64>], reference: &[f64]) -> f64 {
    states
        .iter()
        .map(|s| s.iter().zip(reference).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .sum()
}

/// Network average of the parameter vectors.
pub fn network_average(states: &[Vec<f64>]) -> Vec<f64> {
    let dim = states.first().map_or(0, Vec::len);
    let mut avg = vec![0.0; dim];
    for s in states {
        axpy(&mut avg, 1.0 / states.len() as f64, s);
    }
    avg
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// Metropolis belief consensus.
    Consensus,
    /// Bregman ADMM.
    Admm,
    /// Exact product over each connected component.
    Centralized,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Consensus => "consensus",
            Protocol::Admm => "admm",
            Protocol::Centralized => "centralized",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        [Protocol::Consensus, Protocol::Admm, Protocol::Centralized]
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown protocol `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoopConfig {
    pub protocol: Protocol,
    pub rounds: usize,
    pub links: LinkModel,
    /// Step `1/p` in consensus rounds.
    pub vanishing: bool,
    pub initial_penalty: f64,
    pub adaptive_penalty: bool,
}

impl Default for CoopConfig {
    fn default() -> Self {
        CoopConfig {
            protocol: Protocol::Admm,
            rounds: 10,
            links: LinkModel::PERFECT,
            vanishing: false,
            initial_penalty: 1.0,
            adaptive_penalty: true,
        }
    }
}

/// Runs a protocol on initial parameters and returns every round's states,
/// the initial ones included.
pub fn run_protocol<R: Rng>(
    initial: Vec<Vec<f64>>,
    topo: &Topology,
    cfg: &CoopConfig,
    rng: R,
) -> Vec<Vec<Vec<f64>>> {
    let mut links = Links::new(cfg.links, &initial, rng);
    let mut trace = vec![initial.clone()];
    match cfg.protocol {
        Protocol::Consensus => {
            let mut states = initial;
            for p in 1..=cfg.rounds {
                states = consensus_round(&states, topo, &mut links, p, cfg.vanishing);
                trace.push(states.clone());
            }
        }
        Protocol::Admm => {
            let mut st = AdmmState::new(initial, topo, cfg.initial_penalty, cfg.adaptive_penalty);
            for _ in 0..cfg.rounds {
                st.round(topo, &mut links);
                trace.push(st.theta.clone());
            }
        }
        Protocol::Centralized => {
            let comp = topo.components();
            let sums: Vec<Vec<f64>> = (0..initial.len())
                .map(|k| {
                    let members: Vec<Vec<f64>> = (0..initial.len())
                        .filter(|&i| comp[i] == comp[k])
                        .map(|i| initial[i].clone())
                        .collect();
                    network_average(&members)
                })
                .collect();
            trace.push(sums);
        }
    }
    trace
}

/// Fuses every user's local messages `[k][var]`. Each result approximates the
/// product of the local messages over the user's component; variables whose
/// fused precision is not positive keep the local message.
pub fn fuse_messages<R: Rng>(
    locals: &[Vec<GaussianMsg>],
    topo: &Topology,
    cfg: &CoopConfig,
    rng: R,
) -> Vec<Vec<GaussianMsg>> {
    let initial: Vec<Vec<f64>> = locals.iter().map(|m| to_theta(m)).collect();
    let trace = run_protocol(initial, topo, cfg, rng);
    let last = trace.last().expect("trace holds the initial states");
    let sizes = topo.component_sizes();
    last.iter()
        .enumerate()
        .map(|(k, theta)| {
            from_theta(theta, sizes[k] as f64)
                .into_iter()
                .zip(&locals[k])
                .map(|(fused, &local)| fused.unwrap_or(local))
                .collect()
        })
        .collect()
}
