//! Exact references for tiny instances.
//!
//! Exhaustive enumeration of every codeword sequence, and closed-form
//! conditioning of jointly Gaussian linear models. Test and acceptance use
//! only.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::channel::convolve;
use crate::codec::{normalize_log_weights, Codebook};
use crate::gaussian::GaussianMsg;
use crate::Complex64;

/// Largest hypothesis count the enumerator accepts.
pub const MAX_HYPOTHESES: usize = 1 << 20;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("instance has {0} hypotheses, above the enumeration bound")]
    TooLarge(u128),
    #[error("posterior precision is singular")]
    Singular,
    #[error("expected {expected} {what}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

/// A small detection problem seen by one receiver.
#[derive(Debug, Clone)]
pub struct TinyInstance {
    pub cb: Codebook,
    /// Receiver's channel taps `h[j][l]`.
    pub h: Vec<Vec<Complex64>>,
    /// Received samples, length `N + L - 1`.
    pub y: Vec<Complex64>,
    pub noise_var: f64,
    /// Symbol priors `[k][n][m]`.
    pub priors: Vec<Vec<Vec<f64>>>,
}

impl TinyInstance {
    pub fn symbols(&self) -> usize {
        self.priors.first().map_or(0, Vec::len)
    }

    pub fn hypotheses(&self) -> u128 {
        (self.cb.size as u128).pow((self.cb.users() * self.symbols()) as u32)
    }

    /// Log prior times likelihood of one symbol assignment `[k][n]`.
    pub fn log_weight(&self, symbols: &[Vec<usize>]) -> f64 {
        let s = self.cb.superpose_frame(symbols);
        let clean = convolve(&s, &self.h);
        let dist: f64 = clean.iter().zip(&self.y).map(|(c, y)| (y - c).norm_sqr()).sum();
        let prior: f64 = symbols
            .iter()
            .enumerate()
            .flat_map(|(k, seq)| seq.iter().enumerate().map(move |(n, &m)| (k, n, m)))
            .map(|(k, n, m)| self.priors[k][n][m].ln())
            .sum();
        prior - dist / self.noise_var
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapResult {
    /// Posterior symbol probabilities `[k][n][m]`.
    pub marginals: Vec<Vec<Vec<f64>>>,
    /// Jointly most probable assignment `[k][n]`.
    pub map: Vec<Vec<usize>>,
}

impl MapResult {
    /// Per-symbol maximisers of the marginals.
    pub fn marginal_decisions(&self) -> Vec<Vec<usize>> {
        self.marginals
            .iter()
            .map(|user| {
                user.iter()
                    .map(|p| (0..p.len()).fold(0, |b, m| if p[m] > p[b] { m } else { b }))
                    .collect()
            })
            .collect()
    }
}

/// Decodes hypothesis `index` into an assignment `[k][n]`; user 0, time 0
/// is the fastest digit.
fn digits(index: usize, users: usize, symbols: usize, size: usize, out: &mut [Vec<usize>]) {
    let mut rest = index;
    for n in 0..symbols {
        for row in out.iter_mut().take(users) {
            row[n] = rest % size;
            rest /= size;
        }
    }
}

/// Posterior marginals and the MAP sequence by enumeration.
pub fn map_marginals_bruteforce(inst: &TinyInstance) -> Result<MapResult, OracleError> {
    let count = inst.hypotheses();
    if count > MAX_HYPOTHESES as u128 {
        return Err(OracleError::TooLarge(count));
    }
    let expected = inst.symbols() + inst.h.first().map_or(1, Vec::len) - 1;
    if inst.y.len() != expected {
        return Err(OracleError::Dimension {
            what: "received samples",
            expected,
            got: inst.y.len(),
        });
    }
    let users = inst.cb.users();
    let symbols = inst.symbols();
    let size = inst.cb.size;
    let mut assign = vec![vec![0; symbols]; users];
    let logs: Vec<f64> = (0..count as usize)
        .map(|i| {
            digits(i, users, symbols, size, &mut assign);
            inst.log_weight(&assign)
        })
        .collect();
    let best = (0..logs.len()).fold(0, |b, i| if logs[i] > logs[b] { i } else { b });
    let weights = normalize_log_weights(&logs);
    let mut marginals = vec![vec![vec![0.0; size]; symbols]; users];
    for (i, w) in weights.iter().enumerate() {
        digits(i, users, symbols, size, &mut assign);
        for k in 0..users {
            for n in 0..symbols {
                marginals[k][n][assign[k][n]] += w;
            }
        }
    }
    let mut map = vec![vec![0; symbols]; users];
    digits(best, users, symbols, size, &mut map);
    Ok(MapResult { marginals, map })
}

/// `y = A x + noise` with independent Gaussian priors on `x`.
#[derive(Debug, Clone)]
pub struct LinearModel {
    pub a: DMatrix<Complex64>,
    pub y: DVector<Complex64>,
    pub noise_var: f64,
    pub prior: Vec<GaussianMsg>,
}

#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    pub mean: DVector<Complex64>,
    pub cov: DMatrix<Complex64>,
}

impl GaussianPosterior {
    pub fn marginal(&self, i: usize) -> GaussianMsg {
        GaussianMsg::new(self.mean[i], self.cov[(i, i)].re)
    }

    /// Distribution of `wᵀ x`.
    pub fn combination(&self, w: &DVector<Complex64>) -> GaussianMsg {
        let mean = w.dot(&self.mean);
        let var = (w.transpose() * &self.cov * w.conjugate())[(0, 0)].re;
        GaussianMsg::new(mean, var)
    }
}

/// Closed-form conditioning of a jointly Gaussian linear model.
pub fn gaussian_posterior_exact(model: &LinearModel) -> Result<GaussianPosterior, OracleError> {
    let nx = model.a.ncols();
    if model.prior.len() != nx {
        return Err(OracleError::Dimension {
            what: "prior entries",
            expected: nx,
            got: model.prior.len(),
        });
    }
    let ah = model.a.adjoint();
    let mut precision = &ah * &model.a / Complex64::new(model.noise_var, 0.0);
    let mut info = &ah * &model.y / Complex64::new(model.noise_var, 0.0);
    for (i, p) in model.prior.iter().enumerate() {
        if !p.is_vacuous() {
            precision[(i, i)] += Complex64::new(1.0 / p.var, 0.0);
            info[i] += p.mean / p.var;
        }
    }
    let chol = precision.cholesky().ok_or(OracleError::Singular)?;
    let cov = chol.inverse();
    let mean = &cov * info;
    Ok(GaussianPosterior { mean, cov })
}

/// The linear model a receiver solves once every codeword component is
/// treated as Gaussian: unknowns are the `x` variables in receiver index
/// order `(k·D + d)·N + n`.
///
/// Returns the model and the matrix mapping `x` onto the antenna symbols
/// `s[j·N + n]`.
pub fn stretched_linear_model(
    cb: &Codebook,
    h: &[Vec<Complex64>],
    y: &[Complex64],
    noise_var: f64,
    prior: Vec<GaussianMsg>,
) -> (LinearModel, DMatrix<Complex64>) {
    let users = cb.users();
    let resources = cb.resources();
    let taps = h[0].len();
    let t_len = y.len();
    let symbols = t_len + 1 - taps;
    let d = cb.nonzeros;
    let nx = users * d * symbols;
    let mut s_map = DMatrix::zeros(resources * symbols, nx);
    for k in 0..users {
        for (di, j) in cb.indicator.support(k).into_iter().enumerate() {
            for n in 0..symbols {
                s_map[(j * symbols + n, (k * d + di) * symbols + n)] = Complex64::new(1.0, 0.0);
            }
        }
    }
    let mut conv = DMatrix::zeros(t_len, resources * symbols);
    for j in 0..resources {
        for n in 0..symbols {
            for l in 0..taps {
                conv[(n + l, j * symbols + n)] = h[j][l];
            }
        }
    }
    let model = LinearModel {
        a: conv * &s_map,
        y: DVector::from_column_slice(y),
        noise_var,
        prior,
    };
    (model, s_map)
}
