//! Scalar complex Gaussian messages and the EP projection of discrete priors.
//!
//! A message `(m, v)` stands for `exp(-|x - m|² / v)`. An infinite variance is
//! the vacuous (flat) message. Products and powers are taken in natural
//! parameters `η = m / v`, `λ = 1 / v`, where a vacuous message is `(0, 0)`.

use thiserror::Error;

use crate::codec::{label_bit, log_sum_exp, softplus, Codebook};
use crate::Complex64;

/// Smallest variance a projected message may carry.
pub const VAR_FLOOR: f64 = 1e-8;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum GaussError {
    #[error("message has non-positive precision {lambda}")]
    Indefinite { lambda: f64 },
    #[error("prior has no mass")]
    EmptyPrior,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMsg {
    pub mean: Complex64,
    pub var: f64,
}

/// Natural parameters; may be indefinite while intermediate powers are formed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Natural {
    pub eta: Complex64,
    pub lambda: f64,
}

impl Natural {
    pub const ZERO: Natural = Natural {
        eta: Complex64::new(0.0, 0.0),
        lambda: 0.0,
    };

    pub fn scale(self, gamma: f64) -> Natural {
        Natural {
            eta: self.eta * gamma,
            lambda: self.lambda * gamma,
        }
    }

    pub fn to_msg(self) -> Result<GaussianMsg, GaussError> {
        GaussianMsg::from_natural(self)
    }
}

impl std::ops::Add for Natural {
    type Output = Natural;
    fn add(self, o: Natural) -> Natural {
        Natural {
            eta: self.eta + o.eta,
            lambda: self.lambda + o.lambda,
        }
    }
}

impl std::ops::Sub for Natural {
    type Output = Natural;
    fn sub(self, o: Natural) -> Natural {
        Natural {
            eta: self.eta - o.eta,
            lambda: self.lambda - o.lambda,
        }
    }
}

impl std::iter::Sum for Natural {
    fn sum<I: Iterator<Item = Natural>>(iter: I) -> Natural {
        iter.fold(Natural::ZERO, |a, b| a + b)
    }
}

impl GaussianMsg {
    pub const VACUOUS: GaussianMsg = GaussianMsg {
        mean: Complex64::new(0.0, 0.0),
        var: f64::INFINITY,
    };

    pub fn new(mean: Complex64, var: f64) -> Self {
        debug_assert!(var > 0.0, "variance must be positive, got {var}");
        GaussianMsg { mean, var }
    }

    pub fn real(mean: f64, var: f64) -> Self {
        GaussianMsg::new(Complex64::new(mean, 0.0), var)
    }

    pub fn is_vacuous(&self) -> bool {
        self.var.is_infinite()
    }

    pub fn precision(&self) -> f64 {
        if self.is_vacuous() {
            0.0
        } else {
            1.0 / self.var
        }
    }

    pub fn natural(&self) -> Natural {
        if self.is_vacuous() {
            Natural::ZERO
        } else {
            Natural {
                eta: self.mean / self.var,
                lambda: 1.0 / self.var,
            }
        }
    }

    pub fn from_natural(n: Natural) -> Result<Self, GaussError> {
        if n.lambda > 0.0 {
            Ok(GaussianMsg {
                mean: n.eta / n.lambda,
                var: 1.0 / n.lambda,
            })
        } else if n.lambda == 0.0 && n.eta == Complex64::new(0.0, 0.0) {
            Ok(GaussianMsg::VACUOUS)
        } else {
            Err(GaussError::Indefinite { lambda: n.lambda })
        }
    }

    /// Distribution of the sum of two independent variables.
    pub fn plus(&self, o: &GaussianMsg) -> GaussianMsg {
        let var = self.var + o.var;
        if var.is_infinite() {
            GaussianMsg::VACUOUS
        } else {
            GaussianMsg::new(self.mean + o.mean, var)
        }
    }

    /// Distribution of `h · x`.
    pub fn scaled(&self, h: Complex64) -> GaussianMsg {
        if self.is_vacuous() {
            GaussianMsg::VACUOUS
        } else {
            GaussianMsg::new(self.mean * h, self.var * h.norm_sqr())
        }
    }

    /// Distribution of `x` given `h · x` follows `self`; vacuous when `h = 0`.
    pub fn unscaled(&self, h: Complex64) -> GaussianMsg {
        let g = h.norm_sqr();
        if self.is_vacuous() || g == 0.0 {
            GaussianMsg::VACUOUS
        } else {
            GaussianMsg::new(self.mean / h, self.var / g)
        }
    }

    /// `exp(-|x - m|²/v)` up to the normaliser, as a log value.
    pub fn log_density(&self, x: Complex64) -> f64 {
        if self.is_vacuous() {
            0.0
        } else {
            -(x - self.mean).norm_sqr() / self.var - self.var.ln()
        }
    }
}

/// Product of two messages.
pub fn gmul(a: GaussianMsg, b: GaussianMsg) -> GaussianMsg {
    if a.is_vacuous() {
        return b;
    }
    if b.is_vacuous() {
        return a;
    }
    GaussianMsg::from_natural(a.natural() + b.natural()).expect("product of proper messages")
}

/// Quotient `a / b`, flagging a non-positive result precision.
pub fn gdiv(a: GaussianMsg, b: GaussianMsg) -> Result<GaussianMsg, GaussError> {
    if b.is_vacuous() {
        return Ok(a);
    }
    GaussianMsg::from_natural(a.natural() - b.natural())
}

/// Power `a^γ`: same mean, variance divided by `γ`.
pub fn gpow(a: GaussianMsg, gamma: f64) -> Result<GaussianMsg, GaussError> {
    if gamma == 1.0 {
        return Ok(a);
    }
    if gamma == 0.0 || a.is_vacuous() {
        return Ok(GaussianMsg::VACUOUS);
    }
    GaussianMsg::from_natural(a.natural().scale(gamma))
}

/// Product of many messages.
pub fn gprod<I: IntoIterator<Item = GaussianMsg>>(msgs: I) -> GaussianMsg {
    let nat: Natural = msgs.into_iter().map(|m| m.natural()).sum();
    GaussianMsg::from_natural(nat).expect("product of proper messages")
}

/// Probability mass on a finite set of complex points.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePrior {
    pub support: Vec<Complex64>,
    pub probs: Vec<f64>,
}

impl DiscretePrior {
    pub fn new(support: Vec<Complex64>, probs: Vec<f64>) -> Self {
        assert_eq!(support.len(), probs.len());
        DiscretePrior { support, probs }
    }

    pub fn uniform(support: Vec<Complex64>) -> Self {
        let p = 1.0 / support.len() as f64;
        let probs = vec![p; support.len()];
        DiscretePrior { support, probs }
    }

    /// Mean and variance of the prior itself.
    pub fn moments(&self) -> Result<(Complex64, f64), GaussError> {
        let total: f64 = self.probs.iter().sum();
        if !(total > 0.0) {
            return Err(GaussError::EmptyPrior);
        }
        let mean: Complex64 = self
            .support
            .iter()
            .zip(&self.probs)
            .map(|(x, p)| x * (p / total))
            .sum();
        let var = self
            .support
            .iter()
            .zip(&self.probs)
            .map(|(x, p)| (x - mean).norm_sqr() * p / total)
            .sum();
        Ok((mean, var))
    }

    /// Gaussian with the prior's own moments, variance floored.
    pub fn moment_match(&self) -> Result<GaussianMsg, GaussError> {
        let (mean, var) = self.moments()?;
        Ok(GaussianMsg::new(mean, var.max(VAR_FLOOR)))
    }

    /// Moments of `prior(x) · cavity(x)`, normalised.
    pub fn tilted_moments(&self, cavity: &GaussianMsg) -> Result<(Complex64, f64), GaussError> {
        if cavity.is_vacuous() {
            return self.moments();
        }
        let logs: Vec<f64> = self
            .support
            .iter()
            .zip(&self.probs)
            .map(|(x, &p)| {
                if p > 0.0 {
                    p.ln() - (cavity.mean - x).norm_sqr() / cavity.var
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        let z = log_sum_exp(logs.iter().copied());
        if z == f64::NEG_INFINITY {
            return Err(GaussError::EmptyPrior);
        }
        let w: Vec<f64> = logs.iter().map(|l| (l - z).exp()).collect();
        let mean: Complex64 = self.support.iter().zip(&w).map(|(x, w)| x * *w).sum();
        let var = self
            .support
            .iter()
            .zip(&w)
            .map(|(x, w)| (x - mean).norm_sqr() * w)
            .sum();
        Ok((mean, var))
    }
}

/// Result of projecting a discrete prior against a cavity message.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub msg: GaussianMsg,
    /// The belief-over-cavity quotient was not proper and was replaced.
    pub safeguarded: bool,
}

/// EP message from a discrete prior towards a variable with the given cavity.
///
/// The tilted belief `prior · cavity` is moment matched and divided by the
/// cavity. A degenerate belief or a non-positive quotient precision yields the
/// belief itself with its variance floored.
pub fn ep_project(prior: &DiscretePrior, cavity: &GaussianMsg) -> Result<Projection, GaussError> {
    if cavity.is_vacuous() {
        return Ok(Projection {
            msg: prior.moment_match()?,
            safeguarded: false,
        });
    }
    let (mean, var) = prior.tilted_moments(cavity)?;
    let fallback = Projection {
        msg: GaussianMsg::new(mean, var.max(VAR_FLOOR)),
        safeguarded: true,
    };
    if var <= VAR_FLOOR {
        return Ok(fallback);
    }
    let belief = GaussianMsg::new(mean, var);
    match gdiv(belief, *cavity) {
        Ok(msg) if !msg.is_vacuous() => Ok(Projection {
            msg,
            safeguarded: false,
        }),
        _ => Ok(fallback),
    }
}

/// Extrinsic bit LLRs of user `k`'s symbol from messages on its occupied
/// resources (in support order) and the decoder's prior bit LLRs.
pub fn symbol_extrinsic_llr(
    msgs: &[GaussianMsg],
    cb: &Codebook,
    k: usize,
    prior_llrs: &[f64],
) -> Vec<f64> {
    let support = cb.indicator.support(k);
    assert_eq!(msgs.len(), support.len());
    let bps = cb.bits_per_symbol();
    assert_eq!(prior_llrs.len(), bps);
    let loglik: Vec<f64> = (0..cb.size)
        .map(|m| {
            msgs.iter()
                .zip(&support)
                .filter(|(msg, _)| !msg.is_vacuous())
                .map(|(msg, &j)| -(msg.mean - cb.entry(k, m, j)).norm_sqr() / msg.var)
                .sum()
        })
        .collect();
    let log_bit = |b: usize, v: u8| {
        let l = crate::clamp_llr(prior_llrs[b]);
        if v == 0 {
            -softplus(-l)
        } else {
            -softplus(l)
        }
    };
    (0..bps)
        .map(|b| {
            let score = |m: usize| {
                loglik[m]
                    + (0..bps)
                        .filter(|&b2| b2 != b)
                        .map(|b2| log_bit(b2, label_bit(m, b2, bps)))
                        .sum::<f64>()
            };
            let zero = log_sum_exp((0..cb.size).filter(|&m| label_bit(m, b, bps) == 0).map(score));
            let one = log_sum_exp((0..cb.size).filter(|&m| label_bit(m, b, bps) == 1).map(score));
            crate::clamp_llr(zero - one)
        })
        .collect()
}
