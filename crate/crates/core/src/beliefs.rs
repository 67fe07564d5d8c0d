//! Public beliefs about the remaining supply and about the state.
//!
//! [`update_survival`] is the count-level Bayesian update of `F^k` after one round in which
//! the agent works with probability `gamma`, discovers a signal with probability `lambda`
//! when the supply is nonempty, and reports according to one of three message
//! distributions (after shirking, after a discovery, after finding nothing).
//!
//! All terms are unconditional probabilities: `alpha(m) = (1 - gamma) * shirk(m)` is the
//! probability of shirking and sending `m`; the working terms carry an explicit `gamma`.

use crate::scalar::Scalar;
use crate::supply::{Signal, SupplyKind, SupplySpec};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BeliefError {
    #[error("message {0} has probability zero under the current belief and strategy")]
    OffPath(usize),
    #[error("survival vector must start at or below one and be nonincreasing")]
    NotMonotone,
    #[error("strategy distribution `{0}` does not sum to one")]
    BadDistribution(&'static str),
    #[error("work probability outside [0,1]")]
    BadGamma,
    #[error("strategy covers {got} messages, expected {expected}")]
    MessageCount { expected: usize, got: usize },
}

/// Behaviour of the survival function beyond the explicit head.
#[derive(Debug, Clone, PartialEq)]
pub enum Tail<S> {
    /// `F^k = 0` past the head.
    Zero,
    /// `F^{n+j} = F^n * ratio^j` past a head of length `n`.
    Geometric(S),
}

/// `(F^1, F^2, ...)`: probabilities that at least `k` signals remain.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalBelief<S> {
    head: Vec<S>,
    tail: Tail<S>,
}

impl<S: Scalar> SurvivalBelief<S> {
    pub fn new(head: Vec<S>, tail: Tail<S>) -> Result<Self, BeliefError> {
        let mut prev = S::one();
        for f in &head {
            if *f > prev || *f < S::zero() {
                return Err(BeliefError::NotMonotone);
            }
            prev = f.clone();
        }
        if head.is_empty() {
            return Err(BeliefError::NotMonotone);
        }
        if let Tail::Geometric(r) = &tail {
            if *r < S::zero() || *r > S::one() {
                return Err(BeliefError::NotMonotone);
            }
        }
        Ok(Self { head, tail })
    }

    pub fn from_supply(spec: &SupplySpec<S>) -> Self {
        match spec.kind() {
            SupplyKind::Pmf(w) => {
                let head: Vec<S> = (1..w.len().max(2))
                    .map(|k| spec.survival(k).expect("k >= 1"))
                    .collect();
                Self { head, tail: Tail::Zero }
            }
            SupplyKind::Geometric { f1, rho } => Self { head: vec![f1.clone()], tail: Tail::Geometric(rho.clone()) },
            SupplyKind::Unlimited => Self { head: vec![S::one()], tail: Tail::Geometric(S::one()) },
        }
    }

    /// `F^k`, with `F^0 = 1`.
    pub fn f(&self, k: usize) -> S {
        if k == 0 {
            return S::one();
        }
        let n = self.head.len();
        if k <= n {
            return self.head[k - 1].clone();
        }
        match &self.tail {
            Tail::Zero => S::zero(),
            Tail::Geometric(r) => self.head[n - 1].clone() * r.powi((k - n) as u32),
        }
    }

    /// Probability that the supply is exhausted.
    pub fn f0(&self) -> S {
        S::one() - self.f(1)
    }

    pub fn head(&self) -> &[S] {
        &self.head
    }

    pub fn tail(&self) -> &Tail<S> {
        &self.tail
    }

    /// Distribution of the remaining count for bounded beliefs: `[Pr(n = 0), ..., Pr(n = Kmax)]`.
    pub fn remaining_pmf(&self) -> Option<Vec<S>> {
        match self.tail {
            Tail::Zero => Some((0..=self.head.len()).map(|k| self.f(k) - self.f(k + 1)).collect()),
            Tail::Geometric(_) => None,
        }
    }

    /// Belief after a signal is surely discovered (a witness round).
    pub fn after_sure_discovery(&self) -> Option<Self> {
        let f1 = self.f(1);
        if f1.is_zero() {
            return None;
        }
        let head = (1..=self.head.len()).map(|k| self.f(k + 1) / f1.clone()).collect();
        Some(Self { head, tail: self.tail.clone() })
    }
}

/// Posterior probability that the state is `H`.
#[derive(Debug, Clone, PartialEq, PartialOrd)]
pub struct StateBelief<S>(pub S);

/// One round of behaviour over a finite message space `0..m`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RoundStrategy<S> {
    pub gamma: S,
    pub shirk_report: Vec<S>,
    pub found_report: Vec<S>,
    pub empty_report: Vec<S>,
}

impl<S: Scalar> RoundStrategy<S> {
    pub fn validate(&self, messages: usize) -> Result<(), BeliefError> {
        if !self.gamma.is_probability() {
            return Err(BeliefError::BadGamma);
        }
        for (name, dist) in [("shirk", &self.shirk_report), ("found", &self.found_report), ("empty", &self.empty_report)] {
            if dist.len() != messages {
                return Err(BeliefError::MessageCount { expected: messages, got: dist.len() });
            }
            let total = dist.iter().fold(S::zero(), |a, x| a + x.clone());
            if !total.near(&S::one()) || dist.iter().any(|x| *x < S::zero()) {
                return Err(BeliefError::BadDistribution(name));
            }
        }
        Ok(())
    }

    /// Always shirk and send `message`.
    pub fn shirk(messages: usize, message: usize) -> Self {
        let point = point_mass(messages, message);
        Self { gamma: S::zero(), shirk_report: point.clone(), found_report: point.clone(), empty_report: point }
    }

    /// Always work; report `found` after a discovery and `empty` otherwise.
    pub fn work(messages: usize, found: usize, empty: usize) -> Self {
        Self {
            gamma: S::one(),
            shirk_report: point_mass(messages, empty),
            found_report: point_mass(messages, found),
            empty_report: point_mass(messages, empty),
        }
    }

    pub fn is_pure(&self) -> bool {
        let pure = |d: &[S]| d.iter().all(|x| x.is_zero() || x.is_one());
        (self.gamma.is_zero() || self.gamma.is_one())
            && pure(&self.shirk_report)
            && pure(&self.found_report)
            && pure(&self.empty_report)
    }

    pub fn messages(&self) -> usize {
        self.shirk_report.len()
    }
}

pub fn point_mass<S: Scalar>(messages: usize, message: usize) -> Vec<S> {
    (0..messages).map(|m| if m == message { S::one() } else { S::zero() }).collect()
}

/// Components of the update for one message; all probabilities are unconditional.
struct MessageTerms<S> {
    /// Weight multiplying `F^k` in the numerator.
    keep: S,
    /// Weight multiplying `F^{k+1}` in the numerator.
    shift: S,
    /// Probability of the message.
    total: S,
}

fn message_terms<S: Scalar>(b: &SurvivalBelief<S>, strat: &RoundStrategy<S>, message: usize, lambda: &S) -> MessageTerms<S> {
    let one = S::one();
    let gamma = strat.gamma.clone();
    let alpha = (one.clone() - gamma.clone()) * strat.shirk_report[message].clone();
    let delta = strat.empty_report[message].clone();
    let sigma = strat.found_report[message].clone();
    let f1 = b.f(1);
    let miss = one.clone() - lambda.clone();
    let keep = alpha.clone() + gamma.clone() * miss.clone() * delta.clone();
    let shift = gamma.clone() * lambda.clone() * sigma.clone();
    let beta = shift.clone() * f1.clone();
    let total = alpha + gamma * ((one - f1.clone()) + f1 * miss) * delta + beta;
    MessageTerms { keep, shift, total }
}

/// Probability that `message` is sent under belief `b` and strategy `strat`.
pub fn message_probability<S: Scalar>(b: &SurvivalBelief<S>, strat: &RoundStrategy<S>, message: usize, lambda: &S) -> S {
    message_terms(b, strat, message, lambda).total
}

/// Probability that the agent discovers a signal this round.
pub fn discovery_probability<S: Scalar>(b: &SurvivalBelief<S>, strat: &RoundStrategy<S>, lambda: &S) -> S {
    strat.gamma.clone() * lambda.clone() * b.f(1)
}

/// Bayesian update of the survival belief after observing `message`.
///
/// `F^k' = [F^k (alpha + gamma (1 - lambda) delta) + gamma lambda F^{k+1} sigma] / Pr(message)`.
/// A geometric tail keeps its ratio, since every `F^k'` is the same linear combination of
/// `F^k` and `F^{k+1}`.
pub fn update_survival<S: Scalar>(
    b: &SurvivalBelief<S>,
    strat: &RoundStrategy<S>,
    message: usize,
    lambda: &S,
) -> Result<SurvivalBelief<S>, BeliefError> {
    let terms = message_terms(b, strat, message, lambda);
    if terms.total.is_zero() {
        return Err(BeliefError::OffPath(message));
    }
    let head = (1..=b.head.len())
        .map(|k| (b.f(k) * terms.keep.clone() + b.f(k + 1) * terms.shift.clone()) / terms.total.clone())
        .collect();
    Ok(SurvivalBelief { head, tail: b.tail.clone() })
}

/// Message-weighted average of the updated `F^k` over all on-path messages.
pub fn expected_next_survival<S: Scalar>(b: &SurvivalBelief<S>, strat: &RoundStrategy<S>, lambda: &S, k: usize) -> S {
    (0..strat.messages())
        .filter_map(|m| {
            let p = message_probability(b, strat, m, lambda);
            update_survival(b, strat, m, lambda).ok().map(|next| p * next.f(k))
        })
        .fold(S::zero(), |a, x| a + x)
}

pub fn update_state_belief<S: Scalar>(p: &StateBelief<S>, observed: Signal, precision: &S) -> StateBelief<S> {
    let one = S::one();
    let (like_h, like_l) = match observed {
        Signal::H => (precision.clone(), one.clone() - precision.clone()),
        Signal::L => (one.clone() - precision.clone(), precision.clone()),
    };
    let num = p.0.clone() * like_h;
    let den = num.clone() + (one - p.0.clone()) * like_l;
    StateBelief(num / den)
}

/// Posterior after `high` signals `H` and `low` signals `L`; depends only on `high - low`.
pub fn posterior_after_counts<S: Scalar>(prior: &StateBelief<S>, high: usize, low: usize, precision: &S) -> StateBelief<S> {
    let one = S::one();
    let ratio = precision.clone() / (one.clone() - precision.clone());
    let p = prior.0.clone();
    if high >= low {
        let w = ratio.powi((high - low) as u32);
        let num = p.clone() * w;
        StateBelief(num.clone() / (num + (one - p)))
    } else {
        let w = ratio.powi((low - high) as u32);
        StateBelief(p.clone() / (p + (one - prior.0.clone()) * w))
    }
}
