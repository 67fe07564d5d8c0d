//! The lattice of public posteriors reachable under truthful work, and exit probabilities
//! of the belief walk on it.

use crate::beliefs::{posterior_after_counts, StateBelief};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("grid bounds must satisfy 0 < p_lo < p0 < p_hi < 1")]
    BadBounds,
    #[error("precision must lie strictly between 1/2 and 1")]
    BadPrecision,
    #[error("continuation probability must lie in (0,1]")]
    BadKappa,
    #[error("grid index {0} is not an interior point")]
    NotInterior(usize),
    #[error("grid would exceed {0} points")]
    TooLarge(usize),
}

const MAX_POINTS: usize = 4096;

/// `q^0 <= p_lo < q^1 < ... < q^N < p_hi <= q^{N+1}`, one log-odds step apart.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefGrid<S> {
    points: Vec<S>,
    precision: S,
    prior_index: usize,
}

impl<S: Scalar> BeliefGrid<S> {
    /// Reachable posteriors equal to a bound are treated as absorbing boundary points.
    pub fn build(p0: S, p_lo: S, p_hi: S, precision: S) -> Result<Self, GridError> {
        if !(p_lo > S::zero() && p_lo < p0 && p0 < p_hi && p_hi < S::one()) {
            return Err(GridError::BadBounds);
        }
        if precision <= S::half() || precision >= S::one() {
            return Err(GridError::BadPrecision);
        }
        let prior = StateBelief(p0.clone());
        let mut below = 0usize;
        loop {
            below += 1;
            if below > MAX_POINTS {
                return Err(GridError::TooLarge(MAX_POINTS));
            }
            if posterior_after_counts(&prior, 0, below, &precision).0 <= p_lo {
                break;
            }
        }
        let mut above = 0usize;
        loop {
            above += 1;
            if below + above > MAX_POINTS {
                return Err(GridError::TooLarge(MAX_POINTS));
            }
            if posterior_after_counts(&prior, above, 0, &precision).0 >= p_hi {
                break;
            }
        }
        let mut points: Vec<S> = (1..=below)
            .rev()
            .map(|j| posterior_after_counts(&prior, 0, j, &precision).0)
            .collect();
        points.push(p0);
        points.extend((1..=above).map(|j| posterior_after_counts(&prior, j, 0, &precision).0));
        Ok(Self { points, precision, prior_index: below })
    }

    /// Symmetric grid around `p0` with exactly `interior` points strictly inside.
    pub fn with_interior(p0: S, interior: usize, precision: S) -> Result<Self, GridError> {
        if interior == 0 || !(p0 > S::zero() && p0 < S::one()) {
            return Err(GridError::BadBounds);
        }
        let prior = StateBelief(p0);
        let below = (interior - 1) / 2 + 1;
        let above = interior + 1 - below;
        let lo = posterior_after_counts(&prior, 0, below, &precision).0;
        let hi = posterior_after_counts(&prior, above, 0, &precision).0;
        Self::build(prior.0, lo, hi, precision)
    }

    /// All points `q^0 ..= q^{N+1}`.
    pub fn points(&self) -> &[S] {
        &self.points
    }

    pub fn point(&self, k: usize) -> &S {
        &self.points[k]
    }

    /// Number of interior points `N`.
    pub fn interior(&self) -> usize {
        self.points.len() - 2
    }

    /// Index of `q^{N+1}`.
    pub fn top(&self) -> usize {
        self.points.len() - 1
    }

    pub fn precision(&self) -> &S {
        &self.precision
    }

    pub fn prior_index(&self) -> usize {
        self.prior_index
    }

    pub fn is_interior(&self, k: usize) -> bool {
        k >= 1 && k <= self.interior()
    }

    pub fn check_interior(&self, k: usize) -> Result<(), GridError> {
        if self.is_interior(k) {
            Ok(())
        } else {
            Err(GridError::NotInterior(k))
        }
    }

    /// Probability that the next signal is `H` given public belief `q^k`.
    pub fn prob_high_signal(&self, k: usize) -> S {
        let q = self.points[k].clone();
        let pi = self.precision.clone();
        q.clone() * pi.clone() + (S::one() - q) * (S::one() - pi)
    }
}

/// Hitting probabilities of the walk started at each grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitProbabilities<S> {
    /// Probability of absorbing at `q^{N+1}` given `omega = H`.
    pub high: Vec<S>,
    /// Same given `omega = L`.
    pub low: Vec<S>,
    /// Probability of leaving `(p_lo, p_hi)` at all given `omega = H` (one when `kappa = 1`).
    pub exit_high: Vec<S>,
    pub exit_low: Vec<S>,
    pub kappa: S,
}

impl<S: Scalar> ExitProbabilities<S> {
    /// `pi(p, q^k)`: probability of absorbing at the top under private belief `p`.
    pub fn pi_mixed(&self, p: &S, k: usize) -> S {
        p.clone() * self.high[k].clone() + (S::one() - p.clone()) * self.low[k].clone()
    }

    /// `pi_rho(p, q^k)`: probability of leaving `(p_lo, p_hi)` through either side.
    pub fn exit_mixed(&self, p: &S, k: usize) -> S {
        p.clone() * self.exit_high[k].clone() + (S::one() - p.clone()) * self.exit_low[k].clone()
    }

    /// Probability of absorbing at the bottom under private belief `p`.
    pub fn bottom_mixed(&self, p: &S, k: usize) -> S {
        self.exit_mixed(p, k) - self.pi_mixed(p, k)
    }
}

/// Solves `x_i = up x_{i+1} + down x_{i-1}` on interior points with fixed boundary values,
/// by forward elimination and back substitution on the tridiagonal system.
fn solve_walk<S: Scalar>(n: usize, up: &S, down: &S, bottom: S, top: S) -> Vec<S> {
    // x_i = c_i x_{i+1} + d_i after eliminating x_{i-1}
    let mut c = Vec::with_capacity(n + 1);
    let mut d = Vec::with_capacity(n + 1);
    c.push(S::zero());
    d.push(bottom.clone());
    for i in 1..=n {
        let denom = S::one() - down.clone() * c[i - 1].clone();
        c.push(up.clone() / denom.clone());
        d.push(down.clone() * d[i - 1].clone() / denom);
    }
    let mut x = vec![S::zero(); n + 2];
    x[0] = bottom;
    x[n + 1] = top;
    for i in (1..=n).rev() {
        x[i] = c[i].clone() * x[i + 1].clone() + d[i].clone();
    }
    x
}

pub fn exit_probabilities<S: Scalar>(grid: &BeliefGrid<S>) -> ExitProbabilities<S> {
    exit_probabilities_kappa(grid, S::one()).expect("kappa = 1 is valid")
}

/// Each round the walk moves with probability `kappa` and otherwise stops for good
/// (payoff-zero absorbing state).
pub fn exit_probabilities_kappa<S: Scalar>(grid: &BeliefGrid<S>, kappa: S) -> Result<ExitProbabilities<S>, GridError> {
    if kappa <= S::zero() || kappa > S::one() {
        return Err(GridError::BadKappa);
    }
    let n = grid.interior();
    let pi = grid.precision().clone();
    let one = S::one();
    let walk = |z: S, bottom: S| {
        let up = kappa.clone() * z.clone();
        let down = kappa.clone() * (one.clone() - z);
        solve_walk(n, &up, &down, bottom, one.clone())
    };
    let high = walk(pi.clone(), S::zero());
    let low = walk(one.clone() - pi.clone(), S::zero());
    let (exit_high, exit_low) = if kappa.is_one() {
        (vec![one.clone(); n + 2], vec![one.clone(); n + 2])
    } else {
        (walk(pi.clone(), one.clone()), walk(one.clone() - pi, one.clone()))
    };
    Ok(ExitProbabilities { high, low, exit_high, exit_low, kappa })
}

/// Strict monotonicity of the cheating comparisons at interior point `k`:
/// `(pi(q^{k+1}, q^{k+1}) - pi(q^k, q^{k+1}), pi(q^k, q^{k-1}) - pi(q^{k-1}, q^{k-1}))`.
pub fn cheat_gaps<S: Scalar>(grid: &BeliefGrid<S>, ep: &ExitProbabilities<S>, k: usize) -> (S, S) {
    let up = ep.pi_mixed(grid.point(k + 1), k + 1) - ep.pi_mixed(grid.point(k), k + 1);
    let down = ep.pi_mixed(grid.point(k), k - 1) - ep.pi_mixed(grid.point(k - 1), k - 1);
    (up, down)
}
