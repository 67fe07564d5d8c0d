//! Witnesses: agents who receive a signal for free but carry private preference shocks
//! over messages.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::beliefs::{update_survival, RoundStrategy, SurvivalBelief};
use crate::rng::StreamId;
use crate::scalar::Scalar;
use crate::sim::Estimate;
use crate::supply::{SupplyError, SupplyKind, SupplySpec};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WitnessError {
    #[error(transparent)]
    Supply(#[from] SupplyError),
    #[error("a witness needs a signal to exist")]
    EmptySupply,
    #[error("invalid shock density: {0}")]
    BadDensity(&'static str),
    #[error("need one shock density and one continuation value per message, with at least two messages")]
    Shape,
}

/// `Pr(K >= k + q | K >= q)`: survival after `q` sure discoveries.
pub fn hat_survival<S: Scalar>(spec: &SupplySpec<S>, q: usize, k: usize) -> Result<S, WitnessError> {
    Ok(spec.conditional_survival(q, k)?)
}

/// A round in an enumerated history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TreeStep {
    /// A witness surely discovers a signal.
    Witness,
    /// An investigator following the pooled strategy sends message `0` or `1`.
    Investigator(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IhrViolation {
    pub history: Vec<TreeStep>,
    pub q: usize,
    pub k: usize,
    pub lhs: String,
    pub rhs: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IhrMonotonicityReport {
    /// Public survival never exceeds hat-survival at the number of sure discoveries.
    pub part_i: bool,
    pub part_i_violation: Option<IhrViolation>,
    /// Hat-survival is nonincreasing in the number of sure discoveries.
    pub part_ii: bool,
    pub part_ii_violation: Option<IhrViolation>,
    /// Part ii holds with equality from the first sure discovery on (memoryless supply;
    /// the step from no discovery differs unless `F^1` equals the ratio).
    pub part_ii_equality: bool,
    pub histories_checked: usize,
}

/// Investigator strategy used in the enumerated trees: works half the time and sends a
/// message correlated with, but not revealing, the outcome.
fn pooled_investigator<S: Scalar>() -> RoundStrategy<S> {
    let q = |n, d| S::from_ratio(n, d);
    RoundStrategy {
        gamma: q(1, 2),
        shirk_report: vec![q(1, 2), q(1, 2)],
        found_report: vec![q(3, 4), q(1, 4)],
        empty_report: vec![q(1, 4), q(3, 4)],
    }
}

/// Checks both monotonicity claims on every history of up to `depth` rounds mixing witness
/// discoveries and pooled investigator messages, for `k = 1..=depth`.
pub fn ihr_monotonicity_check<S: Scalar>(spec: &SupplySpec<S>, lambda: &S, depth: usize) -> IhrMonotonicityReport {
    let kmax = match spec.kind() {
        SupplyKind::Pmf(w) => w.len() - 1,
        _ => depth,
    };
    let mut report = IhrMonotonicityReport {
        part_i: true,
        part_i_violation: None,
        part_ii: true,
        part_ii_violation: None,
        part_ii_equality: true,
        histories_checked: 0,
    };
    for k in 1..=depth.max(1) {
        for q in 0..kmax {
            let (Ok(a), Ok(b)) = (hat_survival(spec, q, k), hat_survival(spec, q + 1, k)) else { continue };
            if q >= 1 && b != a {
                report.part_ii_equality = false;
            }
            if b > a && report.part_ii {
                report.part_ii = false;
                report.part_ii_violation = Some(IhrViolation { history: Vec::new(), q: q + 1, k, lhs: b.to_string(), rhs: a.to_string() });
            }
        }
    }
    let strat = pooled_investigator::<S>();
    let mut stack: Vec<(Vec<TreeStep>, SurvivalBelief<S>, usize)> = vec![(Vec::new(), SurvivalBelief::from_supply(spec), 0)];
    while let Some((history, belief, q)) = stack.pop() {
        report.histories_checked += 1;
        for k in 1..=depth.max(1) {
            let Ok(hat) = hat_survival(spec, q, k) else { continue };
            let f = belief.f(k);
            if f > hat && report.part_i {
                report.part_i = false;
                report.part_i_violation = Some(IhrViolation { history: history.clone(), q, k, lhs: f.to_string(), rhs: hat.to_string() });
            }
        }
        if history.len() == depth {
            continue;
        }
        if let Some(next) = belief.after_sure_discovery() {
            let mut h = history.clone();
            h.push(TreeStep::Witness);
            stack.push((h, next, q + 1));
        }
        for m in 0..2 {
            if let Ok(next) = update_survival(&belief, &strat, m, lambda) {
                let mut h = history.clone();
                h.push(TreeStep::Investigator(m));
                stack.push((h, next, q));
            }
        }
    }
    report
}

/// Probability bound on some two of `l` shocks landing within `eps` of each other.
pub fn order_stat_bound(l: usize, fbar: f64, eps: f64) -> f64 {
    (l * (l - 1)) as f64 * fbar * eps
}

/// Exact probability that some two of `l` independent uniforms on `[0,1]` lie within `eps`.
pub fn uniform_collision_probability(l: usize, eps: f64) -> f64 {
    let spread = (l - 1) as f64 * eps;
    if spread >= 1.0 {
        1.0
    } else {
        1.0 - (1.0 - spread).powi(l as i32)
    }
}

/// `2 |M|^2 fbar R F / (1 - F)^2`; below one, no witness behaviour can be informative.
pub fn contraction_coefficient(f: f64, messages: usize, fbar: f64, reward: f64) -> f64 {
    let m = messages as f64;
    2.0 * m * m * fbar * reward * f / ((1.0 - f) * (1.0 - f))
}

/// Shock densities with an analytically known upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ShockDensity {
    Uniform { lo: f64, hi: f64 },
    Triangular { lo: f64, mode: f64, hi: f64 },
    /// Normal density restricted to `[lo, hi]` and renormalized.
    ClippedGaussian { mean: f64, sd: f64, lo: f64, hi: f64 },
}

impl ShockDensity {
    pub fn validate(&self) -> Result<(), WitnessError> {
        let ok = match *self {
            ShockDensity::Uniform { lo, hi } => lo < hi,
            ShockDensity::Triangular { lo, mode, hi } => lo < hi && lo <= mode && mode <= hi,
            ShockDensity::ClippedGaussian { sd, lo, hi, .. } => sd > 0.0 && lo < hi,
        };
        if ok && [self.support().0, self.support().1].iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(WitnessError::BadDensity("support must be a finite nonempty interval"))
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            ShockDensity::Uniform { lo, hi } | ShockDensity::Triangular { lo, hi, .. } | ShockDensity::ClippedGaussian { lo, hi, .. } => (lo, hi),
        }
    }

    fn normal(mean: f64, sd: f64) -> Normal {
        Normal::new(mean, sd).expect("validated standard deviation")
    }

    pub fn density(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x < lo || x > hi {
            return 0.0;
        }
        match *self {
            ShockDensity::Uniform { .. } => 1.0 / (hi - lo),
            ShockDensity::Triangular { mode, .. } => {
                let peak = 2.0 / (hi - lo);
                if x < mode {
                    peak * (x - lo) / (mode - lo)
                } else if x > mode {
                    peak * (hi - x) / (hi - mode)
                } else {
                    peak
                }
            }
            ShockDensity::ClippedGaussian { mean, sd, .. } => {
                let n = Self::normal(mean, sd);
                n.pdf(x) / (n.cdf(hi) - n.cdf(lo))
            }
        }
    }

    /// Supremum of the density.
    pub fn fbar(&self) -> f64 {
        match *self {
            ShockDensity::Uniform { lo, hi } => 1.0 / (hi - lo),
            ShockDensity::Triangular { lo, hi, .. } => 2.0 / (hi - lo),
            ShockDensity::ClippedGaussian { mean, lo, hi, .. } => self.density(mean.clamp(lo, hi)),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.gen();
        match *self {
            ShockDensity::Uniform { lo, hi } => lo + u * (hi - lo),
            ShockDensity::Triangular { lo, mode, hi } => {
                let cut = (mode - lo) / (hi - lo);
                if u < cut {
                    lo + (u * (hi - lo) * (mode - lo)).sqrt()
                } else {
                    hi - ((1.0 - u) * (hi - lo) * (hi - mode)).sqrt()
                }
            }
            ShockDensity::ClippedGaussian { mean, sd, lo, hi } => {
                let n = Self::normal(mean, sd);
                let (a, b) = (n.cdf(lo), n.cdf(hi));
                n.inverse_cdf(a + u * (b - a)).clamp(lo, hi)
            }
        }
    }
}

/// Monte Carlo frequency of some two of `l` shocks landing within `eps`.
pub fn collision_frequency(density: &ShockDensity, l: usize, eps: f64, n: usize, seed: u64) -> Estimate {
    let hits: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = StreamId::new(seed, i as u64).rng();
            let mut xs: Vec<f64> = (0..l).map(|_| density.sample(&mut rng)).collect();
            xs.sort_by(f64::total_cmp);
            let hit = xs.windows(2).any(|w| w[1] - w[0] <= eps);
            if hit { 1.0 } else { 0.0 }
        })
        .collect();
    Estimate::from_samples(&hits)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessSpec {
    /// One independent shock density per message.
    pub shocks: Vec<ShockDensity>,
    /// Probability that a round's agent is a witness when a signal remains.
    pub phi: f64,
}

impl WitnessSpec {
    pub fn new(shocks: Vec<ShockDensity>, phi: f64) -> Result<Self, WitnessError> {
        if shocks.len() < 2 {
            return Err(WitnessError::Shape);
        }
        for s in &shocks {
            s.validate()?;
        }
        if !(0.0..=1.0).contains(&phi) {
            return Err(WitnessError::BadDensity("witness probability must lie in [0,1]"));
        }
        Ok(Self { shocks, phi })
    }

    pub fn messages(&self) -> usize {
        self.shocks.len()
    }

    /// Common density bound across messages.
    pub fn fbar(&self) -> f64 {
        self.shocks.iter().map(ShockDensity::fbar).fold(0.0, f64::max)
    }

    /// Witness arrival probability given the public survival belief: zero when the supply
    /// is surely empty.
    pub fn arrival<S: Scalar>(&self, belief: &SurvivalBelief<S>) -> f64 {
        if belief.f(1).is_zero() {
            0.0
        } else {
            self.phi
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessRound {
    pub shocks: Vec<f64>,
    /// Best message after observing `H` and after observing `L`.
    pub message_high: usize,
    pub message_low: usize,
    pub informative: bool,
}

/// Expected compensation of message `m` given signal `s`: with probability `z(m)` a later
/// informative report settles the case, paying `R` when it agrees with the witness's
/// signal; message 0 agrees with `H` and message 1 with `L`.
fn continuation(m: usize, high: bool, z: &[f64], reward: f64) -> f64 {
    let agrees = (m == 0 && high) || (m == 1 && !high);
    if agrees {
        reward * z[m]
    } else {
        0.0
    }
}

fn best(values: impl Iterator<Item = f64>) -> usize {
    let mut arg = 0;
    let mut top = f64::NEG_INFINITY;
    for (i, v) in values.enumerate() {
        if v > top {
            top = v;
            arg = i;
        }
    }
    arg
}

/// Best response of one witness to realized shocks (or to the given `shocks`).
pub fn witness_round<S: Scalar>(
    wspec: &WitnessSpec,
    belief: &SurvivalBelief<S>,
    z: &[f64],
    reward: f64,
    shocks: Option<Vec<f64>>,
    id: StreamId,
) -> Result<WitnessRound, WitnessError> {
    if belief.f(1).is_zero() {
        return Err(WitnessError::EmptySupply);
    }
    let m = wspec.messages();
    if z.len() != m {
        return Err(WitnessError::Shape);
    }
    let shocks = match shocks {
        Some(s) if s.len() == m => s,
        Some(_) => return Err(WitnessError::Shape),
        None => {
            let mut rng = id.rng();
            wspec.shocks.iter().map(|d| d.sample(&mut rng)).collect()
        }
    };
    let message_high = best((0..m).map(|i| shocks[i] + continuation(i, true, z, reward)));
    let message_low = best((0..m).map(|i| shocks[i] + continuation(i, false, z, reward)));
    Ok(WitnessRound { shocks, message_high, message_low, informative: message_high != message_low })
}

/// `|M|^2 fbar R max_{m != m'} (z(m) + z(m'))`.
pub fn informative_bound(wspec: &WitnessSpec, z: &[f64], reward: f64) -> f64 {
    let m = wspec.messages();
    let mut pair = 0.0f64;
    for a in 0..m {
        for b in 0..m {
            if a != b {
                pair = pair.max(z[a] + z[b]);
            }
        }
    }
    (m * m) as f64 * wspec.fbar() * reward * pair
}

/// Monte Carlo frequency of informative witness behaviour.
pub fn informative_frequency<S: Scalar>(
    wspec: &WitnessSpec,
    belief: &SurvivalBelief<S>,
    z: &[f64],
    reward: f64,
    n: usize,
    seed: u64,
) -> Result<Estimate, WitnessError> {
    let xs: Result<Vec<f64>, WitnessError> = (0..n)
        .into_par_iter()
        .map(|i| witness_round(wspec, belief, z, reward, None, StreamId::new(seed, i as u64)).map(|r| if r.informative { 1.0 } else { 0.0 }))
        .collect();
    Ok(Estimate::from_samples(&xs?))
}
