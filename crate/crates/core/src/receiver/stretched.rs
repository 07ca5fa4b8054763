//! Layout of the stretched factor graph seen by one receiving user.
//!
//! Variables are the per-user codeword components `x` on occupied resources,
//! the superposed antenna symbols `s`, and the per-antenna channel outputs
//! `r`. Factors are the symbol priors, the superposition constraints
//! `s = Σ x`, the convolution constraints `r^t = Σ_l h^l s^{t-l}` and the
//! observations `y^t = Σ_j r_j^t + noise`.

use super::engine::{FactorKind, Graph};
use crate::codec::Codebook;
use crate::counting::{FactorRole, GraphShape, VarRole};
use crate::Complex64;

#[derive(Debug, Clone)]
pub struct StretchedGraph {
    pub(crate) graph: Graph,
    pub(crate) users: usize,
    pub(crate) resources: usize,
    pub(crate) taps: usize,
    pub(crate) symbols: usize,
    /// `support[k]`: occupied resources of user `k`.
    pub(crate) support: Vec<Vec<usize>>,
    /// `x` variables, indexed by [`StretchedGraph::x_index`].
    pub(crate) x_var: Vec<usize>,
    pub(crate) x_prior_edge: Vec<usize>,
    pub(crate) x_phi_edge: Vec<usize>,
    /// `[j * N + n]`
    pub(crate) s_var: Vec<usize>,
    pub(crate) phi: Vec<usize>,
    pub(crate) phi_s_edge: Vec<usize>,
    /// `[j * T + t]`
    pub(crate) r_var: Vec<usize>,
    pub(crate) psi: Vec<usize>,
    /// Tap index of every `s` edge of each convolution factor, in edge order
    /// after the leading `r` edge.
    pub(crate) psi_taps: Vec<Vec<usize>>,
    /// `[t]`; edges in resource order.
    pub(crate) obs: Vec<usize>,
    pub(crate) factor_roles: Vec<FactorRole>,
    pub(crate) var_roles: Vec<VarRole>,
}

impl StretchedGraph {
    pub fn new(cb: &Codebook, taps: usize, symbols: usize) -> Self {
        assert!(taps >= 1 && symbols >= 1);
        let users = cb.users();
        let resources = cb.resources();
        let t_len = symbols + taps - 1;
        let support: Vec<Vec<usize>> = (0..users).map(|k| cb.indicator.support(k)).collect();
        let d = support[0].len();
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let hard = FactorKind::Linear {
            offset: zero,
            noise_var: 0.0,
        };

        let mut g = Graph::default();
        let mut factor_roles = Vec::new();
        let mut var_roles = Vec::new();
        let mut add_var = |g: &mut Graph, role| {
            var_roles.push(role);
            g.add_var()
        };
        let mut add_factor = |g: &mut Graph, kind, role| {
            factor_roles.push(role);
            g.add_factor(kind)
        };

        let s_var: Vec<usize> = (0..resources * symbols)
            .map(|_| add_var(&mut g, VarRole::Antenna))
            .collect();
        let r_var: Vec<usize> = (0..resources * t_len)
            .map(|_| add_var(&mut g, VarRole::Channel))
            .collect();

        let mut phi = Vec::with_capacity(resources * symbols);
        let mut phi_s_edge = Vec::with_capacity(resources * symbols);
        for si in 0..resources * symbols {
            let f = add_factor(&mut g, hard, FactorRole::Superpose);
            phi_s_edge.push(g.connect(f, s_var[si], one));
            phi.push(f);
        }

        let mut x_var = vec![0; users * d * symbols];
        let mut x_prior_edge = vec![0; users * d * symbols];
        let mut x_phi_edge = vec![0; users * d * symbols];
        for k in 0..users {
            for (di, &j) in support[k].iter().enumerate() {
                for n in 0..symbols {
                    let xi = (k * d + di) * symbols + n;
                    let v = add_var(&mut g, VarRole::Symbol);
                    let prior = add_factor(&mut g, FactorKind::Unary, FactorRole::Prior);
                    x_var[xi] = v;
                    x_prior_edge[xi] = g.connect(prior, v, one);
                    x_phi_edge[xi] = g.connect(phi[j * symbols + n], v, -one);
                }
            }
        }

        let mut psi = Vec::with_capacity(resources * t_len);
        let mut psi_taps = Vec::with_capacity(resources * t_len);
        for j in 0..resources {
            for t in 0..t_len {
                let f = add_factor(&mut g, hard, FactorRole::Convolve);
                g.connect(f, r_var[j * t_len + t], one);
                let mut ls = Vec::new();
                for l in 0..taps {
                    if t >= l && t - l < symbols {
                        g.connect(f, s_var[j * symbols + t - l], zero);
                        ls.push(l);
                    }
                }
                psi.push(f);
                psi_taps.push(ls);
            }
        }

        let obs: Vec<usize> = (0..t_len)
            .map(|t| {
                let f = add_factor(
                    &mut g,
                    FactorKind::Linear {
                        offset: zero,
                        noise_var: 1.0,
                    },
                    FactorRole::Observe,
                );
                for j in 0..resources {
                    g.connect(f, r_var[j * t_len + t], one);
                }
                f
            })
            .collect();

        StretchedGraph {
            graph: g,
            users,
            resources,
            taps,
            symbols,
            support,
            x_var,
            x_prior_edge,
            x_phi_edge,
            s_var,
            phi,
            phi_s_edge,
            r_var,
            psi,
            psi_taps,
            obs,
            factor_roles,
            var_roles,
        }
    }

    pub fn frame_len(&self) -> usize {
        self.symbols + self.taps - 1
    }

    pub fn nonzeros(&self) -> usize {
        self.support[0].len()
    }

    /// Index of `x` for user `k`, `d`-th occupied resource, time `n`.
    pub fn x_index(&self, k: usize, d: usize, n: usize) -> usize {
        (k * self.nonzeros() + d) * self.symbols + n
    }

    /// Installs the receiving user's channel taps `h[j][l]`, its samples and
    /// the observation noise variance.
    pub fn load(&mut self, h: &[Vec<Complex64>], y: &[Complex64], noise_var: f64) {
        assert_eq!(h.len(), self.resources);
        assert_eq!(y.len(), self.frame_len());
        let t_len = self.frame_len();
        for j in 0..self.resources {
            for t in 0..t_len {
                let f = self.psi[j * t_len + t];
                for (pos, &l) in self.psi_taps[j * t_len + t].iter().enumerate() {
                    let e = self.graph.factors[f].edges[pos + 1];
                    self.graph.edges[e].coeff = -h[j][l];
                }
            }
        }
        for (t, &f) in self.obs.iter().enumerate() {
            self.graph.factors[f].kind = FactorKind::Linear {
                offset: y[t],
                noise_var,
            };
        }
        self.graph.reset_messages();
    }

    pub fn factor_degree(&self, f: usize) -> usize {
        self.graph.factors[f].edges.len()
    }

    pub fn var_degree(&self, v: usize) -> usize {
        self.graph.vars[v].len()
    }

    /// Number of directed messages attached to time instant `n` for an
    /// instant away from the frame edges.
    pub fn messages_per_instant(&self) -> usize {
        let x_edges = self.users * self.nonzeros() * 2;
        let phi_s = self.resources;
        let psi = self.resources * (self.taps + 1);
        let obs = self.resources;
        2 * (x_edges + phi_s + psi + obs)
    }

    /// Bipartite structure for the counting-number solver.
    pub fn shape(&self) -> GraphShape {
        GraphShape {
            factors: self.factor_roles.clone(),
            vars: self.var_roles.clone(),
            edges: self.graph.edges.iter().map(|e| (e.fac, e.var)).collect(),
        }
    }
}
