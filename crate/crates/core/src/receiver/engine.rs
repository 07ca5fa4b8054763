//! Scalar Gaussian message passing on a bipartite factor graph whose factors
//! are either linear constraints `Σ a_i x_i = b (+ noise)` or unary priors
//! supplied from outside.
//!
//! Every edge carries the final messages in both directions plus the
//! auxiliary messages of the convexified rules. With unit exponents the
//! combination step is skipped and the engine runs plain sum-product.

use crate::gaussian::{GaussianMsg, Natural};
use crate::Complex64;

#[derive(Debug, Clone)]
pub(crate) struct Edge {
    pub var: usize,
    pub fac: usize,
    pub coeff: Complex64,
    pub f2v: GaussianMsg,
    pub v2f: GaussianMsg,
    pub aux_f2v: GaussianMsg,
    pub aux_v2f: GaussianMsg,
    /// Exponent on the factor-side auxiliary message.
    pub g_fac: f64,
    /// Exponent on the variable-side auxiliary message.
    pub g_var: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum FactorKind {
    /// `Σ coeff·x = offset + n` with `E|n|² = noise_var` (zero for a hard
    /// constraint).
    Linear { offset: Complex64, noise_var: f64 },
    /// Unary factor whose outgoing message is set by the caller.
    Unary,
}

#[derive(Debug, Clone)]
pub(crate) struct Factor {
    pub kind: FactorKind,
    pub edges: Vec<usize>,
    /// Counting number; the factor enters the rules raised to `1 / power`.
    pub power: f64,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Graph {
    pub edges: Vec<Edge>,
    pub factors: Vec<Factor>,
    pub vars: Vec<Vec<usize>>,
    /// Number of final messages that fell back to their auxiliary value.
    pub fallbacks: usize,
}

/// Combination `a^p · b^q` of two messages in natural parameters.
pub(crate) fn combine(a: GaussianMsg, p: f64, b: GaussianMsg, q: f64) -> Option<GaussianMsg> {
    let nat: Natural = a.natural().scale(p) + b.natural().scale(q);
    GaussianMsg::from_natural(nat).ok()
}

impl Graph {
    pub fn add_var(&mut self) -> usize {
        self.vars.push(Vec::new());
        self.vars.len() - 1
    }

    pub fn add_factor(&mut self, kind: FactorKind) -> usize {
        self.factors.push(Factor {
            kind,
            edges: Vec::new(),
            power: 1.0,
        });
        self.factors.len() - 1
    }

    pub fn connect(&mut self, fac: usize, var: usize, coeff: Complex64) -> usize {
        let e = self.edges.len();
        self.edges.push(Edge {
            var,
            fac,
            coeff,
            f2v: GaussianMsg::VACUOUS,
            v2f: GaussianMsg::VACUOUS,
            aux_f2v: GaussianMsg::VACUOUS,
            aux_v2f: GaussianMsg::VACUOUS,
            g_fac: 1.0,
            g_var: 1.0,
        });
        self.factors[fac].edges.push(e);
        self.vars[var].push(e);
        e
    }

    pub fn reset_messages(&mut self) {
        for e in &mut self.edges {
            e.f2v = GaussianMsg::VACUOUS;
            e.v2f = GaussianMsg::VACUOUS;
            e.aux_f2v = GaussianMsg::VACUOUS;
            e.aux_v2f = GaussianMsg::VACUOUS;
        }
        self.fallbacks = 0;
    }

    fn is_plain(e: &Edge) -> bool {
        e.g_fac == 1.0 && e.g_var == 1.0
    }

    /// Stores an auxiliary factor-to-variable message and forms the final one.
    pub fn set_f2v(&mut self, e: usize, aux: GaussianMsg) {
        let edge = &mut self.edges[e];
        edge.aux_f2v = aux;
        if Self::is_plain(edge) {
            edge.f2v = aux;
            return;
        }
        match combine(aux, edge.g_fac, edge.aux_v2f, edge.g_var - 1.0) {
            Some(m) => edge.f2v = m,
            None => {
                edge.f2v = aux;
                self.fallbacks += 1;
            }
        }
    }

    /// Stores an auxiliary variable-to-factor message and forms the final one.
    pub fn set_v2f(&mut self, e: usize, aux: GaussianMsg) {
        let edge = &mut self.edges[e];
        edge.aux_v2f = aux;
        if Self::is_plain(edge) {
            edge.v2f = aux;
            return;
        }
        match combine(edge.aux_f2v, edge.g_fac - 1.0, aux, edge.g_var) {
            Some(m) => edge.v2f = m,
            None => {
                edge.v2f = aux;
                self.fallbacks += 1;
            }
        }
    }

    /// Product of all incoming factor messages at `v` except the one on `skip`.
    pub fn product_except(&self, v: usize, skip: Option<usize>) -> GaussianMsg {
        let nat: Natural = self.vars[v]
            .iter()
            .filter(|&&e| Some(e) != skip)
            .map(|&e| self.edges[e].f2v.natural())
            .sum();
        GaussianMsg::from_natural(nat).unwrap_or(GaussianMsg::VACUOUS)
    }

    pub fn belief(&self, v: usize) -> GaussianMsg {
        self.product_except(v, None)
    }

    /// Recomputes every outgoing message of variable `v`.
    #[cfg(test)]
    pub fn update_var(&mut self, v: usize) {
        let deg = self.vars[v].len();
        if deg <= 2 {
            // one-pass swap for the common degree-2 case
            for i in 0..deg {
                let e = self.vars[v][i];
                let aux = if deg == 1 {
                    GaussianMsg::VACUOUS
                } else {
                    self.edges[self.vars[v][1 - i]].f2v
                };
                self.set_v2f(e, aux);
            }
            return;
        }
        let nats: Vec<Natural> = self.vars[v].iter().map(|&e| self.edges[e].f2v.natural()).collect();
        let mut suffix = vec![Natural::ZERO; deg + 1];
        for i in (0..deg).rev() {
            suffix[i] = suffix[i + 1] + nats[i];
        }
        let mut prefix = Natural::ZERO;
        for i in 0..deg {
            let aux = GaussianMsg::from_natural(prefix + suffix[i + 1]).unwrap_or(GaussianMsg::VACUOUS);
            let e = self.vars[v][i];
            self.set_v2f(e, aux);
            prefix = prefix + nats[i];
        }
    }

    /// Recomputes the outgoing message of variable `v` on edge `e` only.
    pub fn update_var_edge(&mut self, v: usize, e: usize) {
        let aux = self.product_except(v, Some(e));
        self.set_v2f(e, aux);
    }

    /// Message a linear factor sends along its `i`-th edge given the partial
    /// sums of all other contributions.
    fn linear_out(&self, a: usize, i: usize, mean_others: Complex64, var_others: f64) -> GaussianMsg {
        let FactorKind::Linear { offset, noise_var } = self.factors[a].kind else {
            unreachable!("linear update on a unary factor")
        };
        let e = &self.edges[self.factors[a].edges[i]];
        let var = var_others + noise_var * self.factors[a].power;
        if var.is_infinite() {
            return GaussianMsg::VACUOUS;
        }
        let g = e.coeff.norm_sqr();
        if g == 0.0 {
            return GaussianMsg::VACUOUS;
        }
        let mean = (offset - mean_others) / e.coeff;
        // only reachable for a hard constraint with a single edge
        GaussianMsg::new(mean, (var / g).max(f64::MIN_POSITIVE))
    }

    /// Recomputes every outgoing message of linear factor `a`.
    pub fn update_linear(&mut self, a: usize) {
        let deg = self.factors[a].edges.len();
        let terms: Vec<(Complex64, f64)> = self.factors[a]
            .edges
            .iter()
            .map(|&e| {
                let edge = &self.edges[e];
                let m = edge.v2f;
                (edge.coeff * m.mean, edge.coeff.norm_sqr() * m.var)
            })
            .collect();
        let mut suffix = vec![(Complex64::new(0.0, 0.0), 0.0); deg + 1];
        for i in (0..deg).rev() {
            suffix[i] = (suffix[i + 1].0 + terms[i].0, suffix[i + 1].1 + terms[i].1);
        }
        let mut prefix = (Complex64::new(0.0, 0.0), 0.0);
        for i in 0..deg {
            let out = self.linear_out(a, i, prefix.0 + suffix[i + 1].0, prefix.1 + suffix[i + 1].1);
            let e = self.factors[a].edges[i];
            self.set_f2v(e, out);
            prefix = (prefix.0 + terms[i].0, prefix.1 + terms[i].1);
        }
    }

    /// Recomputes the outgoing message of linear factor `a` on its `i`-th edge.
    pub fn update_linear_edge(&mut self, a: usize, i: usize) {
        let mut mean = Complex64::new(0.0, 0.0);
        let mut var = 0.0;
        for (i2, &e) in self.factors[a].edges.iter().enumerate() {
            if i2 != i {
                let edge = &self.edges[e];
                mean += edge.coeff * edge.v2f.mean;
                var += edge.coeff.norm_sqr() * edge.v2f.var;
            }
        }
        let out = self.linear_out(a, i, mean, var);
        let e = self.factors[a].edges[i];
        self.set_f2v(e, out);
    }
}
