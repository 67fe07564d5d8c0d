//! The stochastic supply of signals: its law, hazard-rate classification and sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::{bernoulli, StreamId};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SupplyError {
    #[error("survival is defined for k >= 1")]
    ZeroIndex,
    #[error("pmf weights must be nonnegative and sum to one (sum = {0})")]
    BadPmf(String),
    #[error("geometric supply needs F1 in [0,1] and rho in (0,1]")]
    BadGeometric,
    #[error("signal precision must lie strictly between 1/2 and 1 (got {0})")]
    BadPrecision(String),
    #[error("prior must lie in [0,1] (got {0})")]
    BadPrior(String),
    #[error("conditioning event Pr(K >= {0}) has probability zero")]
    NullConditioning(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Signal {
    H,
    L,
}

impl Signal {
    pub fn flip(self) -> Self {
        match self {
            Signal::H => Signal::L,
            Signal::L => Signal::H,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Signal::H => "H",
            Signal::L => "L",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SupplyKind<S> {
    /// `weights[k] = Pr(K = k)` for `k = 0..=Kmax`.
    Pmf(Vec<S>),
    /// `Pr(K >= k) = rho^(k-1) * f1` for `k >= 1`.
    Geometric { f1: S, rho: S },
    /// Infinitely many signals; never materialized.
    Unlimited,
}

/// Law of the total number of signals `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupplySpec<S> {
    kind: SupplyKind<S>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Count {
    Finite(usize),
    Unbounded,
}

impl Count {
    pub fn at_least(self, k: usize) -> bool {
        match self {
            Count::Finite(n) => n >= k,
            Count::Unbounded => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IhrReport {
    pub holds: bool,
    pub first_violation: Option<usize>,
}

impl<S: Scalar> SupplySpec<S> {
    pub fn pmf(weights: Vec<S>) -> Result<Self, SupplyError> {
        let total = weights.iter().fold(S::zero(), |acc, w| acc + w.clone());
        if weights.is_empty() || weights.iter().any(|w| *w < S::zero()) || !total.near(&S::one()) {
            return Err(SupplyError::BadPmf(total.to_string()));
        }
        let mut weights = weights;
        while weights.len() > 1 && weights.last().is_some_and(|w| w.is_zero()) {
            weights.pop();
        }
        Ok(Self { kind: SupplyKind::Pmf(weights) })
    }

    pub fn geometric(f1: S, rho: S) -> Result<Self, SupplyError> {
        if !f1.is_probability() || rho <= S::zero() || rho > S::one() {
            return Err(SupplyError::BadGeometric);
        }
        Ok(Self { kind: SupplyKind::Geometric { f1, rho } })
    }

    pub fn unlimited() -> Self {
        Self { kind: SupplyKind::Unlimited }
    }

    /// Degenerate law with exactly `n` signals.
    pub fn certain(n: usize) -> Self {
        let mut weights = vec![S::zero(); n + 1];
        weights[n] = S::one();
        Self { kind: SupplyKind::Pmf(weights) }
    }

    pub fn kind(&self) -> &SupplyKind<S> {
        &self.kind
    }

    /// Largest possible count, `None` when the support is unbounded.
    pub fn max_support(&self) -> Option<usize> {
        match &self.kind {
            SupplyKind::Pmf(w) => Some(w.len() - 1),
            SupplyKind::Geometric { f1, .. } if f1.is_zero() => Some(0),
            _ => None,
        }
    }

    /// `Pr(K >= k)` for `k >= 0` (with `k = 0` giving one).
    fn tail(&self, k: usize) -> S {
        if k == 0 {
            return S::one();
        }
        match &self.kind {
            SupplyKind::Pmf(w) => w.iter().skip(k).fold(S::zero(), |acc, x| acc + x.clone()),
            SupplyKind::Geometric { f1, rho } => rho.powi((k - 1) as u32) * f1.clone(),
            SupplyKind::Unlimited => S::one(),
        }
    }

    /// `F^k = Pr(K >= k)`.
    pub fn survival(&self, k: usize) -> Result<S, SupplyError> {
        if k == 0 {
            return Err(SupplyError::ZeroIndex);
        }
        Ok(self.tail(k))
    }

    /// `Pr(K = k)`.
    pub fn point_mass(&self, k: usize) -> S {
        self.tail(k) - self.tail(k + 1)
    }

    /// `Pr(K >= k + q | K >= q)`.
    pub fn conditional_survival(&self, q: usize, k: usize) -> Result<S, SupplyError> {
        let base = self.tail(q);
        if base.is_zero() {
            return Err(SupplyError::NullConditioning(q));
        }
        Ok(self.tail(q + k) / base)
    }

    /// Hazard `Pr(K = k) / Pr(K >= k)`, `None` outside the support.
    pub fn hazard(&self, k: usize) -> Option<S> {
        let tail = self.tail(k);
        if tail.is_zero() {
            None
        } else {
            Some(self.point_mass(k) / tail)
        }
    }

    /// Checks that the hazard rate is nondecreasing (strictly increasing when `strict`)
    /// over the support. Geometric hazards are constant from `k = 1` on, so the scan of the
    /// first two indices after the head decides the whole tail.
    pub fn check_ihr(&self, strict: bool) -> IhrReport {
        let horizon = match &self.kind {
            SupplyKind::Unlimited => return IhrReport { holds: true, first_violation: None },
            SupplyKind::Pmf(w) => w.len(),
            SupplyKind::Geometric { .. } => 3,
        };
        let mut previous: Option<S> = None;
        for k in 0..horizon {
            let Some(h) = self.hazard(k) else { break };
            if let Some(prev) = &previous {
                let bad = if strict { h <= *prev } else { h < *prev };
                if bad {
                    return IhrReport { holds: false, first_violation: Some(k) };
                }
            }
            previous = Some(h);
        }
        IhrReport { holds: true, first_violation: None }
    }

    pub fn sample_count<R: Rng + ?Sized>(&self, rng: &mut R) -> Count {
        match &self.kind {
            SupplyKind::Pmf(w) => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (k, p) in w.iter().enumerate() {
                    acc += p.to_f64();
                    if u < acc {
                        return Count::Finite(k);
                    }
                }
                Count::Finite(w.len() - 1)
            }
            SupplyKind::Geometric { f1, rho } => {
                if !bernoulli(rng, f1) {
                    return Count::Finite(0);
                }
                if rho.is_one() {
                    return Count::Unbounded;
                }
                let mut n = 1;
                while bernoulli(rng, rho) {
                    n += 1;
                }
                Count::Finite(n)
            }
            SupplyKind::Unlimited => Count::Unbounded,
        }
    }
}

/// Prior on the state and precision of each binary signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalModel<S> {
    pub prior: S,
    pub precision: S,
}

impl<S: Scalar> SignalModel<S> {
    pub fn new(prior: S, precision: S) -> Result<Self, SupplyError> {
        if !prior.is_probability() {
            return Err(SupplyError::BadPrior(prior.to_string()));
        }
        if precision <= S::half() || precision >= S::one() {
            return Err(SupplyError::BadPrecision(precision.to_string()));
        }
        Ok(Self { prior, precision })
    }

    /// Accepts the degenerate perfect-precision case `pi = 1`, used by tests and sims.
    pub fn with_perfect_precision(prior: S) -> Self {
        Self { prior, precision: S::one() }
    }
}

/// One realized supply: the state, the count, and the signals in discovery order.
///
/// Finite sequences are materialized up front; an unbounded sequence extends lazily as
/// signals are requested.
#[derive(Debug, Clone)]
pub struct SignalSequence {
    pub omega: Signal,
    pub count: Count,
    signals: Vec<Signal>,
    precision: f64,
    rng: rand_chacha::ChaCha8Rng,
}

impl SignalSequence {
    /// Signal at position `idx` (0-based), or `None` past the end of the supply.
    pub fn get(&mut self, idx: usize) -> Option<Signal> {
        if !self.count.at_least(idx + 1) {
            return None;
        }
        while self.signals.len() <= idx {
            let s = draw_signal(&mut self.rng, self.omega, self.precision);
            self.signals.push(s);
        }
        Some(self.signals[idx])
    }

    pub fn materialized(&self) -> &[Signal] {
        &self.signals
    }
}

fn draw_signal<R: Rng + ?Sized>(rng: &mut R, omega: Signal, precision: f64) -> Signal {
    if precision >= 1.0 || rng.gen::<f64>() < precision {
        omega
    } else {
        omega.flip()
    }
}

pub fn sample_sequence<S: Scalar>(spec: &SupplySpec<S>, model: &SignalModel<S>, id: StreamId) -> SignalSequence {
    let mut rng = id.rng();
    let omega = if bernoulli(&mut rng, &model.prior) { Signal::H } else { Signal::L };
    let count = spec.sample_count(&mut rng);
    let precision = model.precision.to_f64();
    let mut seq = SignalSequence { omega, count, signals: Vec::new(), precision, rng: id.child(1).rng() };
    if let Count::Finite(n) = count {
        if n > 0 {
            seq.get(n - 1);
        }
    }
    seq
}
