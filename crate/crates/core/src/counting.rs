//! Counting numbers for the convexified free energy.
//!
//! Counting numbers are tied by class: factors by `(role, degree)`, variables
//! by `(role, neighbouring factor classes)`, incidences by the pair of classes.
//! The solver picks factor numbers `c_a` as close to one as possible subject
//! to the existence of a nonnegative decomposition
//!
//! ```text
//! c_a = c_aa + Σ_i c_ia,    c_i = c_ii - Σ_a c_ia,    c_i = 1 - Σ_a c_a
//! ```
//!
//! which certifies convexity. The exponents used by the message rules follow
//! from `c_a`, `c_i` and the variable degree.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest factor counting number the solver may return.
pub const C_MIN: f64 = 1e-3;
pub const TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CountingError {
    #[error("counting-number QP did not converge (residual {0:e})")]
    NoConvergence(f64),
    #[error("graph has a {0} class that the stored counting numbers do not cover")]
    UnknownClass(&'static str),
    #[error("exponent denominator is not positive for incidence {0}")]
    Denominator(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FactorRole {
    Prior,
    Superpose,
    Convolve,
    Observe,
    Pair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VarRole {
    Symbol,
    Antenna,
    Channel,
    Node,
}

/// Bipartite structure of a factor graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphShape {
    pub factors: Vec<FactorRole>,
    pub vars: Vec<VarRole>,
    /// `(factor, variable)` per edge.
    pub edges: Vec<(usize, usize)>,
}

impl GraphShape {
    /// Pairwise factors along a path of `n` variables.
    pub fn chain(n: usize) -> Self {
        assert!(n >= 2);
        let edges = (0..n - 1).flat_map(|a| [(a, a), (a, a + 1)]).collect();
        GraphShape {
            factors: vec![FactorRole::Pair; n - 1],
            vars: vec![VarRole::Node; n],
            edges,
        }
    }

    /// Pairwise factors around a cycle of `n` variables.
    pub fn cycle(n: usize) -> Self {
        assert!(n >= 3);
        let edges = (0..n).flat_map(|a| [(a, a), (a, (a + 1) % n)]).collect();
        GraphShape {
            factors: vec![FactorRole::Pair; n],
            vars: vec![VarRole::Node; n],
            edges,
        }
    }

    /// One factor attached to one variable.
    pub fn single() -> Self {
        GraphShape {
            factors: vec![FactorRole::Pair],
            vars: vec![VarRole::Node],
            edges: vec![(0, 0)],
        }
    }

    fn adjacency(&self) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
        let mut fac = vec![Vec::new(); self.factors.len()];
        let mut var = vec![Vec::new(); self.vars.len()];
        for (e, &(a, i)) in self.edges.iter().enumerate() {
            fac[a].push(e);
            var[i].push(e);
        }
        (fac, var)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FactorClassKey {
    pub role: FactorRole,
    pub degree: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarClassKey {
    pub role: VarRole,
    /// Sorted factor-class indices of the neighbours.
    pub neighbours: Vec<usize>,
}

/// Class structure of a graph, the part of a template that counting numbers
/// depend on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStructure {
    pub factor_classes: Vec<FactorClassKey>,
    /// Number of factors in each class.
    pub factor_counts: Vec<usize>,
    pub var_classes: Vec<VarClassKey>,
    /// `(factor class, variable class)`.
    pub incidences: Vec<(usize, usize)>,
    /// Distinct factor neighbourhoods: `(factor class, incidence classes)`.
    pub factor_rows: Vec<(usize, Vec<usize>)>,
}

/// Class memberships of every node and edge of one concrete graph.
struct Labelling {
    classes: ClassStructure,
    factor_class: Vec<usize>,
    edge_class: Vec<usize>,
}

fn index_of<T: Ord + Clone>(map: &mut BTreeMap<T, usize>, list: &mut Vec<T>, key: T) -> usize {
    *map.entry(key.clone()).or_insert_with(|| {
        list.push(key);
        list.len() - 1
    })
}

fn label(shape: &GraphShape) -> Labelling {
    let (fac_adj, var_adj) = shape.adjacency();
    let mut fmap = BTreeMap::new();
    let mut factor_classes = Vec::new();
    let factor_class: Vec<usize> = shape
        .factors
        .iter()
        .zip(&fac_adj)
        .map(|(&role, edges)| {
            let key = FactorClassKey {
                role,
                degree: edges.len(),
            };
            index_of(&mut fmap, &mut factor_classes, key)
        })
        .collect();
    let mut factor_counts = vec![0; factor_classes.len()];
    for &c in &factor_class {
        factor_counts[c] += 1;
    }

    let mut vmap = BTreeMap::new();
    let mut var_classes = Vec::new();
    let var_class: Vec<usize> = shape
        .vars
        .iter()
        .zip(&var_adj)
        .map(|(&role, edges)| {
            let mut neighbours: Vec<usize> =
                edges.iter().map(|&e| factor_class[shape.edges[e].0]).collect();
            neighbours.sort_unstable();
            index_of(&mut vmap, &mut var_classes, VarClassKey { role, neighbours })
        })
        .collect();

    let mut imap = BTreeMap::new();
    let mut incidences = Vec::new();
    let edge_class: Vec<usize> = shape
        .edges
        .iter()
        .map(|&(a, i)| index_of(&mut imap, &mut incidences, (factor_class[a], var_class[i])))
        .collect();

    let mut rmap = BTreeMap::new();
    let mut factor_rows = Vec::new();
    for (a, edges) in fac_adj.iter().enumerate() {
        let mut inc: Vec<usize> = edges.iter().map(|&e| edge_class[e]).collect();
        inc.sort_unstable();
        index_of(&mut rmap, &mut factor_rows, (factor_class[a], inc));
    }

    Labelling {
        classes: ClassStructure {
            factor_classes,
            factor_counts,
            var_classes,
            incidences,
            factor_rows,
        },
        factor_class,
        edge_class,
    }
}

impl ClassStructure {
    pub fn of(shape: &GraphShape) -> Self {
        label(shape).classes
    }

    fn var_degree(&self, v: usize) -> usize {
        self.var_classes[v].neighbours.len()
    }

    /// Incidence classes touching variable class `v`, with multiplicity.
    fn var_incidences(&self, v: usize) -> Vec<usize> {
        let key = &self.var_classes[v];
        let mut out = Vec::new();
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for &a in &key.neighbours {
            *counts.entry(a).or_default() += 1;
        }
        for (a, times) in counts {
            let inc = self
                .incidences
                .iter()
                .position(|&(fa, vi)| fa == a && vi == v)
                .expect("every neighbour class has an incidence class");
            out.extend(std::iter::repeat_n(inc, times));
        }
        out
    }
}

/// Solved counting numbers for one class structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountingNumbers {
    pub classes: ClassStructure,
    /// `c_a` per factor class.
    pub factor: Vec<f64>,
    /// `c_i = 1 - Σ c_a` per variable class.
    pub var: Vec<f64>,
    /// `c_ia` per incidence class.
    pub incidence: Vec<f64>,
    /// `c_aa` per distinct factor neighbourhood.
    pub factor_slack: Vec<f64>,
    /// `c_ii` per variable class.
    pub var_slack: Vec<f64>,
    /// `(γ_ai, γ_ia)` per incidence class.
    pub gammas: Vec<(f64, f64)>,
    pub objective: f64,
    pub kkt_residual: f64,
}

/// Exponents `(γ_ai, γ_ia)` for a variable of the given degree.
pub fn gammas(c_factor: f64, c_var: f64, degree: usize) -> (f64, f64) {
    let d = degree as f64;
    let denom = d * c_factor + c_var + d - 1.0;
    (d * c_factor / denom, d / denom)
}

/// Per-node counting numbers of a concrete graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `c_a` per factor.
    pub factor_power: Vec<f64>,
    /// `(γ_ai, γ_ia)` per edge.
    pub edge_gammas: Vec<(f64, f64)>,
}

impl CountingNumbers {
    fn complete(classes: ClassStructure, factor: Vec<f64>, incidence: Vec<f64>, kkt_residual: f64) -> Self {
        let var: Vec<f64> = classes
            .var_classes
            .iter()
            .map(|key| 1.0 - key.neighbours.iter().map(|&a| factor[a]).sum::<f64>())
            .collect();
        let factor_slack = classes
            .factor_rows
            .iter()
            .map(|(a, inc)| factor[*a] - inc.iter().map(|&c| incidence[c]).sum::<f64>())
            .collect();
        let var_slack = (0..classes.var_classes.len())
            .map(|v| var[v] + classes.var_incidences(v).iter().map(|&c| incidence[c]).sum::<f64>())
            .collect();
        let gammas = classes
            .incidences
            .iter()
            .map(|&(a, v)| gammas(factor[a], var[v], classes.var_degree(v)))
            .collect();
        let objective = classes
            .factor_counts
            .iter()
            .zip(&factor)
            .map(|(&n, &c)| n as f64 * (c - 1.0).powi(2))
            .sum();
        CountingNumbers {
            classes,
            factor,
            var,
            incidence,
            factor_slack,
            var_slack,
            gammas,
            objective,
            kkt_residual,
        }
    }

    /// Standard Bethe numbers: `c_a = 1`, `c_i = 1 - |N(i)|`, unit exponents.
    pub fn bethe(shape: &GraphShape) -> Self {
        let classes = ClassStructure::of(shape);
        let factor = vec![1.0; classes.factor_classes.len()];
        // Any split works for the decomposition report; use an even one.
        let incidence = classes
            .incidences
            .iter()
            .map(|&(a, _)| 1.0 / classes.factor_classes[a].degree as f64)
            .collect();
        Self::complete(classes, factor, incidence, 0.0)
    }

    /// Maps class values onto every factor and edge of `shape`.
    pub fn assign(&self, shape: &GraphShape) -> Result<Assignment, CountingError> {
        let lab = label(shape);
        let fmap: Vec<usize> = lab
            .classes
            .factor_classes
            .iter()
            .map(|k| self.classes.factor_classes.iter().position(|x| x == k))
            .collect::<Option<_>>()
            .ok_or(CountingError::UnknownClass("factor"))?;
        // Variable keys refer to factor-class indices, so translate first.
        let vmap: Vec<usize> = lab
            .classes
            .var_classes
            .iter()
            .map(|k| {
                let mut neighbours: Vec<usize> = k.neighbours.iter().map(|&a| fmap[a]).collect();
                neighbours.sort_unstable();
                let key = VarClassKey {
                    role: k.role,
                    neighbours,
                };
                self.classes.var_classes.iter().position(|x| *x == key)
            })
            .collect::<Option<_>>()
            .ok_or(CountingError::UnknownClass("variable"))?;
        let imap: Vec<usize> = lab
            .classes
            .incidences
            .iter()
            .map(|&(a, v)| {
                self.classes
                    .incidences
                    .iter()
                    .position(|&x| x == (fmap[a], vmap[v]))
            })
            .collect::<Option<_>>()
            .ok_or(CountingError::UnknownClass("incidence"))?;
        Ok(Assignment {
            factor_power: lab.factor_class.iter().map(|&c| self.factor[fmap[c]]).collect(),
            edge_gammas: lab.edge_class.iter().map(|&c| self.gammas[imap[c]]).collect(),
        })
    }

    /// Checks the decomposition and the exponent denominators.
    pub fn validate(&self) -> ConvexityReport {
        let mut min_entry = f64::INFINITY;
        for &x in self
            .incidence
            .iter()
            .chain(&self.factor_slack)
            .chain(&self.var_slack)
        {
            min_entry = min_entry.min(x);
        }
        let mut residual: f64 = 0.0;
        for ((a, inc), slack) in self.classes.factor_rows.iter().zip(&self.factor_slack) {
            let r = self.factor[*a] - slack - inc.iter().map(|&c| self.incidence[c]).sum::<f64>();
            residual = residual.max(r.abs());
        }
        for (v, key) in self.classes.var_classes.iter().enumerate() {
            let sum_ia: f64 = self.classes.var_incidences(v).iter().map(|&c| self.incidence[c]).sum();
            residual = residual.max((self.var[v] - self.var_slack[v] + sum_ia).abs());
            let c_i = 1.0 - key.neighbours.iter().map(|&a| self.factor[a]).sum::<f64>();
            residual = residual.max((self.var[v] - c_i).abs());
        }
        let denominators_positive = self.classes.incidences.iter().all(|&(a, v)| {
            let d = self.classes.var_degree(v) as f64;
            d * self.factor[a] + self.var[v] + d - 1.0 > 0.0
        });
        ConvexityReport {
            valid: min_entry >= -TOLERANCE && residual <= TOLERANCE,
            min_entry,
            max_residual: residual,
            denominators_positive,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("counting numbers serialise")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexityReport {
    pub valid: bool,
    /// Smallest decomposition entry.
    pub min_entry: f64,
    /// Largest violation of the decomposition equalities.
    pub max_residual: f64,
    pub denominators_positive: bool,
}

/// Solves for counting numbers closest to the Bethe values that admit a
/// nonnegative decomposition.
pub fn solve_counting_numbers(shape: &GraphShape) -> Result<CountingNumbers, CountingError> {
    let classes = ClassStructure::of(shape);
    let nf = classes.factor_classes.len();
    let ni = classes.incidences.len();
    let nz = nf + ni;

    // minimise Σ_A n_A (c_A - 1)²  =  ½ zᵀHz + gᵀz + const
    let mut h_mat = DMatrix::zeros(nz, nz);
    let mut g = DVector::zeros(nz);
    for (a, &n) in classes.factor_counts.iter().enumerate() {
        h_mat[(a, a)] = 2.0 * n as f64;
        g[a] = -2.0 * n as f64;
    }

    // Constraint rows G z ≥ h.
    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    for a in 0..nf {
        rows.push((vec![(a, 1.0)], C_MIN));
    }
    for c in 0..ni {
        rows.push((vec![(nf + c, 1.0)], 0.0));
    }
    for (a, inc) in &classes.factor_rows {
        let mut row = vec![(*a, 1.0)];
        row.extend(inc.iter().map(|&c| (nf + c, -1.0)));
        rows.push((row, 0.0));
    }
    for v in 0..classes.var_classes.len() {
        // 1 - Σ c_A + Σ c_IA ≥ 0
        let mut row: Vec<(usize, f64)> = classes.var_classes[v]
            .neighbours
            .iter()
            .map(|&a| (a, -1.0))
            .collect();
        row.extend(classes.var_incidences(v).into_iter().map(|c| (nf + c, 1.0)));
        rows.push((row, -1.0));
    }
    let mut g_mat = DMatrix::zeros(rows.len(), nz);
    let mut h_vec = DVector::zeros(rows.len());
    for (r, (row, rhs)) in rows.iter().enumerate() {
        for &(col, val) in row {
            g_mat[(r, col)] += val;
        }
        h_vec[r] = *rhs;
    }

    let mut z0 = DVector::zeros(nz);
    for a in 0..nf {
        z0[a] = 0.5;
    }
    for c in 0..ni {
        z0[nf + c] = 0.05;
    }
    let (z, residual) = interior_point_qp(&h_mat, &g, &g_mat, &h_vec, z0)?;
    let z = polish_active_set(&h_mat, &g, &g_mat, &h_vec, z);
    let factor: Vec<f64> = (0..nf).map(|a| z[a].max(C_MIN)).collect();
    let incidence: Vec<f64> = (0..ni).map(|c| z[nf + c].max(0.0)).collect();
    Ok(CountingNumbers::complete(classes, factor, incidence, residual))
}

/// Re-solves the QP with the constraints that are active at `z` held as
/// equalities. Interior points stop short of the boundary by roughly the
/// square root of the final barrier weight; this lands exactly on it. Several
/// activity thresholds are tried and the best feasible refinement wins; the
/// original point is kept if none improves on it.
fn polish_active_set(
    h_mat: &DMatrix<f64>,
    g: &DVector<f64>,
    g_mat: &DMatrix<f64>,
    h_vec: &DVector<f64>,
    z: DVector<f64>,
) -> DVector<f64> {
    let objective = |v: &DVector<f64>| 0.5 * v.dot(&(h_mat * v)) + g.dot(v);
    let slack = g_mat * &z - h_vec;
    let mut best_obj = objective(&z) + 1e-12;
    let mut best = z;
    for threshold in [1e-9, 1e-7, 1e-5, 1e-4, 1e-3] {
        let active: Vec<usize> = (0..slack.len()).filter(|&r| slack[r] < threshold).collect();
        let Some(refined) = solve_equality_qp(h_mat, g, g_mat, h_vec, &active) else {
            continue;
        };
        let feasible = (g_mat * &refined - h_vec).iter().all(|&v| v >= -1e-11);
        let obj = objective(&refined);
        if feasible && obj <= best_obj {
            best_obj = obj;
            best = refined;
        }
    }
    best
}

/// Minimiser of the QP with the listed constraint rows held as equalities.
fn solve_equality_qp(
    h_mat: &DMatrix<f64>,
    g: &DVector<f64>,
    g_mat: &DMatrix<f64>,
    h_vec: &DVector<f64>,
    active: &[usize],
) -> Option<DVector<f64>> {
    let nz = g.len();
    let na = active.len();
    let mut kkt = DMatrix::zeros(nz + na, nz + na);
    let mut rhs = DVector::zeros(nz + na);
    kkt.view_mut((0, 0), (nz, nz)).copy_from(h_mat);
    for (i, &r) in active.iter().enumerate() {
        for c in 0..nz {
            kkt[(nz + i, c)] = g_mat[(r, c)];
            kkt[(c, nz + i)] = g_mat[(r, c)];
        }
        rhs[nz + i] = h_vec[r];
    }
    for c in 0..nz {
        rhs[c] = -g[c];
    }
    let sol = kkt.svd(true, true).solve(&rhs, 1e-10).ok()?;
    let z = sol.rows(0, nz).into_owned();
    // a least-squares answer to an inconsistent system is no solution
    let resid = active
        .iter()
        .map(|&r| ((g_mat.row(r) * &z)[0] - h_vec[r]).abs())
        .fold(0.0, f64::max);
    (resid < 1e-9).then_some(z)
}

/// Mehrotra predictor-corrector method for `min ½zᵀHz + gᵀz` s.t. `Gz ≥ h`.
/// Returns the solution and its final KKT residual.
fn interior_point_qp(
    h_mat: &DMatrix<f64>,
    g: &DVector<f64>,
    g_mat: &DMatrix<f64>,
    h_vec: &DVector<f64>,
    z0: DVector<f64>,
) -> Result<(DVector<f64>, f64), CountingError> {
    let m = g_mat.nrows();
    let mut z = z0;
    let mut s = (g_mat * &z - h_vec).map(|v| v.max(1.0));
    let mut lam = DVector::from_element(m, 1.0);
    let gt = g_mat.transpose();
    // The normal equations lose accuracy as the barrier weight vanishes, so
    // the best iterate is kept and the caller polishes it.
    let mut best = (z.clone(), f64::INFINITY);

    for _ in 0..200 {
        let r_d = h_mat * &z + g - &gt * &lam;
        let r_p = g_mat * &z - &s - h_vec;
        let mu = s.dot(&lam) / m as f64;
        let residual = r_d.amax().max(r_p.amax()).max(mu);
        if residual < best.1 {
            best = (z.clone(), residual);
        }
        if residual < 1e-13 || mu < 1e-14 {
            break;
        }

        let w = lam.component_div(&s);
        let mut kkt = h_mat + &gt * DMatrix::from_diagonal(&w) * g_mat;
        for i in 0..kkt.nrows() {
            kkt[(i, i)] += 1e-14;
        }
        let Some(chol) = kkt.cholesky() else {
            break;
        };

        let solve = |r_c: &DVector<f64>| {
            // Δz from the reduced system, then Δs and Δλ
            let rhs = -&r_d - &gt * (r_c + lam.component_mul(&r_p)).component_div(&s);
            let dz = chol.solve(&rhs);
            let ds = g_mat * &dz + &r_p;
            let dl = -(r_c + lam.component_mul(&ds)).component_div(&s);
            (dz, ds, dl)
        };
        let step = |v: &DVector<f64>, dv: &DVector<f64>| {
            v.iter()
                .zip(dv.iter())
                .filter(|(_, &d)| d < 0.0)
                .map(|(&x, &d)| -x / d)
                .fold(1.0f64, f64::min)
        };

        let r_aff = s.component_mul(&lam);
        let (_, ds_a, dl_a) = solve(&r_aff);
        let alpha_aff = step(&s, &ds_a).min(step(&lam, &dl_a));
        let mu_aff = (&s + &ds_a * alpha_aff).dot(&(&lam + &dl_a * alpha_aff)) / m as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);
        let r_c = s.component_mul(&lam) + ds_a.component_mul(&dl_a) - DVector::from_element(m, sigma * mu);
        let (dz, ds, dl) = solve(&r_c);
        let alpha = (0.99 * step(&s, &ds).min(step(&lam, &dl))).min(1.0);
        z += &dz * alpha;
        s += &ds * alpha;
        lam += &dl * alpha;
    }
    if best.1 < 1e-6 {
        Ok(best)
    } else {
        Err(CountingError::NoConvergence(best.1))
    }
}

/// Whether per-node numbers `c_a`, `c_i` admit a nonnegative decomposition.
///
/// Feasibility is a transportation problem: each factor can hand out at most
/// `c_a` to its variables and each variable with `c_i < 0` needs at least
/// `-c_i`. It is solved as a max-flow.
pub fn convexity_feasible(shape: &GraphShape, c_factor: &[f64], c_var: &[f64]) -> bool {
    let nf = shape.factors.len();
    let nv = shape.vars.len();
    if c_factor.iter().any(|&c| c < -TOLERANCE) {
        return false;
    }
    let source = nf + nv;
    let sink = source + 1;
    let mut net = FlowNetwork::new(sink + 1);
    for (a, &c) in c_factor.iter().enumerate() {
        net.add(source, a, c.max(0.0));
    }
    for &(a, i) in &shape.edges {
        net.add(a, nf + i, f64::INFINITY);
    }
    let mut demand = 0.0;
    for (i, &c) in c_var.iter().enumerate() {
        if c < 0.0 {
            net.add(nf + i, sink, -c);
            demand += -c;
        }
    }
    let flow = net.max_flow(source, sink);
    flow >= demand - TOLERANCE * (1.0 + demand)
}

/// Dinic max-flow over real capacities.
struct FlowNetwork {
    adj: Vec<Vec<usize>>,
    to: Vec<usize>,
    cap: Vec<f64>,
}

impl FlowNetwork {
    fn new(n: usize) -> Self {
        FlowNetwork {
            adj: vec![Vec::new(); n],
            to: Vec::new(),
            cap: Vec::new(),
        }
    }

    fn add(&mut self, u: usize, v: usize, c: f64) {
        self.adj[u].push(self.to.len());
        self.to.push(v);
        self.cap.push(c);
        self.adj[v].push(self.to.len());
        self.to.push(u);
        self.cap.push(0.0);
    }

    fn max_flow(&mut self, s: usize, t: usize) -> f64 {
        const EPS: f64 = 1e-15;
        let n = self.adj.len();
        let mut total = 0.0;
        loop {
            let mut level = vec![usize::MAX; n];
            level[s] = 0;
            let mut queue = std::collections::VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for &e in &self.adj[u] {
                    if self.cap[e] > EPS && level[self.to[e]] == usize::MAX {
                        level[self.to[e]] = level[u] + 1;
                        queue.push_back(self.to[e]);
                    }
                }
            }
            if level[t] == usize::MAX {
                return total;
            }
            let mut next = vec![0; n];
            loop {
                let pushed = self.push(s, t, f64::INFINITY, &level, &mut next);
                if pushed <= EPS {
                    break;
                }
                total += pushed;
            }
        }
    }

    fn push(&mut self, u: usize, t: usize, limit: f64, level: &[usize], next: &mut [usize]) -> f64 {
        if u == t {
            return limit;
        }
        while next[u] < self.adj[u].len() {
            let e = self.adj[u][next[u]];
            let v = self.to[e];
            if self.cap[e] > 1e-15 && level[v] == level[u] + 1 {
                let got = self.push(v, t, limit.min(self.cap[e]), level, next);
                if got > 1e-15 {
                    self.cap[e] -= got;
                    self.cap[e ^ 1] += got;
                    return got;
                }
            }
            next[u] += 1;
        }
        0.0
    }
}
