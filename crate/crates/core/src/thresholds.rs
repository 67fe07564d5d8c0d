//! Closed-form constants of the impossibility argument and attrition certificates.

use std::cmp::Ordering;

use num_traits::Float;
use serde::Serialize;

use crate::scalar::{literal, Scalar};
use crate::supply::{SupplyKind, SupplySpec};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParamError {
    #[error("cost must be positive")]
    NonPositiveCost,
    #[error("maximal reward must exceed the cost")]
    RewardBelowCost,
    #[error("punishment magnitude must be nonnegative")]
    NegativePunishment,
    #[error("discovery probability must lie in (0,1]")]
    BadLambda,
    #[error("witness threshold needs |M| >= 2, fbar > 0 and R > 0")]
    BadWitnessInput,
}

/// Payoff box `[-P, R]`, effort cost and discovery probability.
#[derive(Debug, Clone, PartialEq)]
pub struct GameParams<S> {
    pub reward: S,
    pub punishment: S,
    pub cost: S,
    pub lambda: S,
}

impl<S: Scalar> GameParams<S> {
    pub fn new(reward: S, punishment: S, cost: S, lambda: S) -> Result<Self, ParamError> {
        if cost <= S::zero() {
            return Err(ParamError::NonPositiveCost);
        }
        if reward <= cost {
            return Err(ParamError::RewardBelowCost);
        }
        if punishment < S::zero() {
            return Err(ParamError::NegativePunishment);
        }
        if lambda <= S::zero() || lambda > S::one() {
            return Err(ParamError::BadLambda);
        }
        Ok(Self { reward, punishment, cost, lambda })
    }

    pub fn lemma1_bound(&self) -> S {
        lemma1_bound(&self.reward, &self.cost)
    }

    pub fn c_lambda(&self) -> S {
        c_lambda(&self.reward, &self.cost, &self.lambda)
    }
}

/// Lower bound on `F^1` below which nobody works: `c / R`.
pub fn lemma1_bound<S: Scalar>(reward: &S, cost: &S) -> S {
    cost.clone() / reward.clone()
}

/// `2R / (c lambda (1 - lambda))` for `lambda < 1`, and `2R / c` at `lambda = 1`.
pub fn c_lambda<S: Scalar>(reward: &S, cost: &S, lambda: &S) -> S {
    let two_r = S::from_ratio(2, 1) * reward.clone();
    if lambda.is_one() {
        two_r / cost.clone()
    } else {
        two_r / (cost.clone() * lambda.clone() * (S::one() - lambda.clone()))
    }
}

/// Constants closing the induction step, and the four right-hand terms of the final
/// "working is strictly suboptimal" inequality `c/R > 1/(2 eta G^2) + 3/sqrt(G) + 2 B eta + B/sqrt(G)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProofConstants<S> {
    pub c: S,
    pub g: S,
    pub b: S,
    pub sqrt_g: S,
    pub g_big: S,
    pub eta: S,
    /// `[1/(2 eta G^2), 3/sqrt(G), 2 B eta, B/sqrt(G)]`.
    pub terms: [S; 4],
    /// `c / (4R)`.
    pub quarter_target: S,
    /// Comparison of each term against `c / (4R)`.
    pub term_vs_target: [Ordering; 4],
    /// Whether `c/R` strictly exceeds the sum of the four terms.
    pub inequality_holds: bool,
}

pub fn proof_constants<S: Scalar>(params: &GameParams<S>) -> ProofConstants<S> {
    let (r, c, lambda) = (&params.reward, &params.cost, &params.lambda);
    let one = S::one();
    let big_c = c_lambda(r, c, lambda);
    let g = r.clone() / (lambda.clone() * c.clone());
    let b = S::from_ratio(8, 1) * big_c.clone() * g.clone();
    let ratio_cubed = (r.clone() / c.clone()).powi(3);
    let sqrt_g = if lambda.is_one() {
        S::from_ratio(128, 1) * ratio_cubed
    } else {
        S::from_ratio(128, 1) * ratio_cubed / (lambda.clone() * lambda.clone() * (one.clone() - lambda.clone()))
    };
    let g_big = sqrt_g.clone() * sqrt_g.clone();
    let eta = one.clone() / sqrt_g.clone();
    let terms = [
        one.clone() / (S::from_ratio(2, 1) * eta.clone() * g_big.clone() * g_big.clone()),
        S::from_ratio(3, 1) / sqrt_g.clone(),
        S::from_ratio(2, 1) * b.clone() * eta.clone(),
        b.clone() / sqrt_g.clone(),
    ];
    let quarter_target = c.clone() / (S::from_ratio(4, 1) * r.clone());
    let term_vs_target = std::array::from_fn(|i| {
        terms[i].partial_cmp(&quarter_target).unwrap_or(Ordering::Greater)
    });
    let total = terms.iter().fold(S::zero(), |a, t| a + t.clone());
    let inequality_holds = c.clone() / r.clone() > total;
    ProofConstants { c: big_c, g, b, sqrt_g, g_big, eta, terms, quarter_target, term_vs_target, inequality_holds }
}

/// Largest supply probability `F` for which a witness-only continuation is certifiably
/// uninformative: the root in `(0,1)` of `2F/(1-F)^2 = 1/(|M|^2 fbar R)`, found by
/// bisection (the left side increases strictly from zero).
pub fn witness_threshold<F: Float>(messages: usize, fbar: F, reward: F) -> Result<F, ParamError> {
    if messages < 2 || fbar <= F::zero() || reward <= F::zero() {
        return Err(ParamError::BadWitnessInput);
    }
    let m = F::from(messages).expect("message count fits a float");
    let target = F::one() / (m * m * fbar * reward);
    let two = F::one() + F::one();
    let lhs = |x: F| two * x / ((F::one() - x) * (F::one() - x));
    let (mut lo, mut hi) = (F::zero(), F::one());
    for _ in 0..400 {
        let mid = (lo + hi) / two;
        if mid <= lo || mid >= hi {
            break;
        }
        if lhs(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (rl, rh) = ((lhs(lo) - target).abs(), (lhs(hi) - target).abs());
    Ok(if rl <= rh { lo } else { hi })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict")]
pub enum AttritionCertificate {
    /// `F^K = 0` for some `K`: no informative equilibrium for any parameters.
    #[serde(rename = "IMPOSSIBLE-bounded-support")]
    BoundedSupport { first_zero: usize },
    /// `F^1 < c/R`: nobody ever works.
    #[serde(rename = "IMPOSSIBLE-lemma1")]
    BelowWorkThreshold { f1: String, bound: String },
    /// Some `F^k > C(lambda) F^{k+1}`; `every_k` when the ratio condition holds along the
    /// whole geometric tail.
    #[serde(rename = "DIAGNOSTIC")]
    FastDecay { k: usize, every_k: bool },
    #[serde(rename = "INCONCLUSIVE")]
    Inconclusive,
}

impl AttritionCertificate {
    pub fn is_impossible(&self) -> bool {
        matches!(self, Self::BoundedSupport { .. } | Self::BelowWorkThreshold { .. })
    }
}

pub fn attrition_certificate<S: Scalar>(spec: &SupplySpec<S>, params: &GameParams<S>) -> AttritionCertificate {
    if let Some(kmax) = spec.max_support() {
        return AttritionCertificate::BoundedSupport { first_zero: kmax + 1 };
    }
    let f1 = spec.survival(1).expect("k >= 1");
    let bound = params.lemma1_bound();
    if f1 < bound {
        return AttritionCertificate::BelowWorkThreshold { f1: literal(&f1), bound: literal(&bound) };
    }
    let big_c = params.c_lambda();
    match spec.kind() {
        // the ratio F^{k+1}/F^k equals rho for every k
        SupplyKind::Geometric { rho, .. } if big_c.clone() * rho.clone() < S::one() => {
            AttritionCertificate::FastDecay { k: 1, every_k: true }
        }
        _ => AttritionCertificate::Inconclusive,
    }
}
