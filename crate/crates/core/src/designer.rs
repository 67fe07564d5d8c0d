//! Compensation schemes that make truthful work an equilibrium on a belief grid.
//!
//! An agent acting at public belief `q^k` who reports `H` is paid `R_H(k)` if the walk exits
//! through the top and `-Q` if it exits through the bottom (symmetrically for `L`); an
//! empty report, and any report followed by the walk stopping, is paid zero. Rewards are
//! chosen so that a report sent without evidence (belief still `q^k`) is worth exactly zero.

use serde::Serialize;

use crate::grid::{BeliefGrid, ExitProbabilities};
use crate::scalar::{literal, Scalar};
use crate::thresholds::GameParams;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DesignError {
    #[error("grid index {0} is not interior")]
    NotInterior(usize),
    #[error("punishment Q must be positive")]
    NonPositiveQ,
    #[error("exit probability toward {side} from interior point {k} is degenerate")]
    Degenerate { k: usize, side: &'static str },
    #[error("work carries no incentive at grid point {0}")]
    NoIncentive(usize),
    #[error("scheme leaves the payoff box: {0}")]
    Infeasible(BoxViolation),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxViolation {
    /// `"R"` when a reward exceeds the maximal reward, `"P"` when `Q` exceeds the maximal punishment.
    pub bound: &'static str,
    pub required: String,
    pub limit: String,
}

impl std::fmt::Display for BoxViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} needs {} but the bound is {}", self.bound, self.required, self.limit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Report {
    H,
    L,
    Empty,
}

impl Report {
    pub fn as_str(self) -> &'static str {
        match self {
            Report::H => "H",
            Report::L => "L",
            Report::Empty => "-",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Outcome {
    Top,
    Bottom,
    /// Learning stopped inside the grid (no evidence reported), or the run was truncated.
    Stopped,
}

/// Which reading of the work-payoff expression to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WorkReading {
    /// Punishment weighted by the agent's post-discovery belief, like the reward.
    #[default]
    Consistent,
    /// Punishment after an `H` discovery weighted by `1 - pi(q^k, q^{k+1})`.
    AsPrinted,
}

/// Per-round discovery probability of a working agent: `lambda` with unlimited supply,
/// `lambda * rho` when the supply decays geometrically.
pub fn discovery_probability<S: Scalar>(lambda: &S, rho: &S) -> S {
    if rho.is_one() {
        lambda.clone()
    } else {
        lambda.clone() * rho.clone()
    }
}

/// Per-round continuation probability of the public walk. With unlimited supply an unlucky
/// agent is simply followed by the next one; with a decaying supply learning stops at the
/// first empty report.
pub fn continuation_kappa<S: Scalar>(lambda: &S, rho: &S) -> S {
    if rho.is_one() {
        S::one()
    } else {
        lambda.clone() * rho.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompensationScheme<S> {
    pub grid: BeliefGrid<S>,
    pub exits: ExitProbabilities<S>,
    /// `Q`: the punishment is `-Q` on the wrong exit.
    pub punishment: S,
    /// `R_H(k)` for `k = 0..=N+1` (boundary entries unused and zero).
    pub reward_high: Vec<S>,
    pub reward_low: Vec<S>,
    /// Whether the empty report exists (imperfect search or decaying supply).
    pub empty_report: bool,
}

pub fn design_scheme<S: Scalar>(grid: &BeliefGrid<S>, ep: &ExitProbabilities<S>, q: S) -> Result<CompensationScheme<S>, DesignError> {
    if q <= S::zero() {
        return Err(DesignError::NonPositiveQ);
    }
    let top = grid.top();
    let mut reward_high = vec![S::zero(); top + 1];
    let mut reward_low = vec![S::zero(); top + 1];
    for k in 1..top {
        let belief = grid.point(k);
        let up_top = ep.pi_mixed(belief, k + 1);
        let up_bottom = ep.bottom_mixed(belief, k + 1);
        if up_top.is_zero() {
            return Err(DesignError::Degenerate { k, side: "top" });
        }
        reward_high[k] = q.clone() * up_bottom / up_top;
        let down_top = ep.pi_mixed(belief, k - 1);
        let down_bottom = ep.bottom_mixed(belief, k - 1);
        if down_bottom.is_zero() {
            return Err(DesignError::Degenerate { k, side: "bottom" });
        }
        reward_low[k] = q.clone() * down_top / down_bottom;
    }
    Ok(CompensationScheme {
        grid: grid.clone(),
        exits: ep.clone(),
        punishment: q,
        reward_high,
        reward_low,
        empty_report: !ep.kappa.is_one(),
    })
}

impl<S: Scalar> CompensationScheme<S> {
    pub fn with_empty_report(mut self, enabled: bool) -> Self {
        self.empty_report = enabled;
        self
    }

    /// Scheme with every payment multiplied by `factor`.
    pub fn scaled(&self, factor: &S) -> Self {
        let mut out = self.clone();
        out.punishment = out.punishment * factor.clone();
        for r in out.reward_high.iter_mut().chain(out.reward_low.iter_mut()) {
            *r = r.clone() * factor.clone();
        }
        out
    }

    pub fn reports(&self) -> Vec<Report> {
        if self.empty_report {
            vec![Report::H, Report::L, Report::Empty]
        } else {
            vec![Report::H, Report::L]
        }
    }

    /// Realized payment to an agent who sent `report` at grid point `k`.
    pub fn payment(&self, k: usize, report: Report, outcome: Outcome) -> S {
        let q = self.punishment.clone();
        match (report, outcome) {
            (Report::Empty, _) | (_, Outcome::Stopped) => S::zero(),
            (Report::H, Outcome::Top) => self.reward_high[k].clone(),
            (Report::L, Outcome::Bottom) => self.reward_low[k].clone(),
            (Report::H, Outcome::Bottom) | (Report::L, Outcome::Top) => -q,
        }
    }

    /// Expected payment for `report` sent at `q^k` by an agent with private belief `belief`.
    pub fn report_value(&self, k: usize, report: Report, belief: &S) -> S {
        let ep = &self.exits;
        let q = self.punishment.clone();
        match report {
            Report::H => {
                let next = k + 1;
                ep.pi_mixed(belief, next) * self.reward_high[k].clone() - ep.bottom_mixed(belief, next) * q
            }
            Report::L => {
                let next = k - 1;
                ep.bottom_mixed(belief, next) * self.reward_low[k].clone() - ep.pi_mixed(belief, next) * q
            }
            Report::Empty => S::zero(),
        }
    }

    fn interior(&self, k: usize) -> Result<(), DesignError> {
        if self.grid.is_interior(k) {
            Ok(())
        } else {
            Err(DesignError::NotInterior(k))
        }
    }

    /// Gross expected payment of an agent who discovers a signal at `q^k` and reports it.
    pub fn work_payoff(&self, k: usize) -> Result<S, DesignError> {
        self.work_payoff_with(k, WorkReading::Consistent)
    }

    pub fn work_payoff_with(&self, k: usize, reading: WorkReading) -> Result<S, DesignError> {
        self.interior(k)?;
        let z = self.grid.prob_high_signal(k);
        let after_high = self.grid.point(k + 1);
        let after_low = self.grid.point(k - 1);
        let high = match reading {
            WorkReading::Consistent => self.report_value(k, Report::H, after_high),
            WorkReading::AsPrinted => {
                self.exits.pi_mixed(after_high, k + 1) * self.reward_high[k].clone()
                    - self.exits.bottom_mixed(self.grid.point(k), k + 1) * self.punishment.clone()
            }
        };
        let low = self.report_value(k, Report::L, after_low);
        Ok(z.clone() * high + (S::one() - z) * low)
    }

    /// Best payoff from sending a message without evidence.
    pub fn shirk_payoff(&self, k: usize) -> Result<S, DesignError> {
        self.interior(k)?;
        let belief = self.grid.point(k);
        Ok(self
            .reports()
            .into_iter()
            .map(|r| self.report_value(k, r, belief))
            .reduce(S::max_of)
            .expect("at least two reports"))
    }

    pub fn max_reward(&self) -> S {
        self.reward_high
            .iter()
            .chain(self.reward_low.iter())
            .cloned()
            .fold(S::zero(), S::max_of)
    }

    /// First bound of the payoff box `[-P, R]` the scheme violates, if any.
    pub fn box_violation(&self, params: &GameParams<S>) -> Option<BoxViolation> {
        let max_reward = self.max_reward();
        if max_reward > params.reward {
            return Some(BoxViolation { bound: "R", required: literal(&max_reward), limit: literal(&params.reward) });
        }
        if self.punishment > params.punishment {
            return Some(BoxViolation { bound: "P", required: literal(&self.punishment), limit: literal(&params.punishment) });
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimalQ<S> {
    pub q: S,
    /// Grid points where the incentive constraint binds at `q`.
    pub binding: Vec<usize>,
    /// Smallest `Q` that incentivizes work at each interior point (`k = 1..=N`).
    pub required: Vec<S>,
    pub scheme: CompensationScheme<S>,
}

/// Smallest `Q` making truthful work optimal at every interior point, ignoring the payoff box.
///
/// The work-minus-shirk margin is linear in `Q` with zero intercept, so the requirement at
/// each point is `c` divided by the per-unit margin, which already carries the discovery
/// probability and the chance that learning stops before the walk exits.
pub fn required_q<S: Scalar>(grid: &BeliefGrid<S>, ep: &ExitProbabilities<S>, cost: &S, discovery: &S) -> Result<MinimalQ<S>, DesignError> {
    let unit = design_scheme(grid, ep, S::one())?.with_empty_report(!discovery.is_one() || !ep.kappa.is_one());
    let mut required = Vec::with_capacity(grid.interior());
    for k in 1..=grid.interior() {
        let margin = discovery.clone() * unit.work_payoff(k)? - unit.shirk_payoff(k)?;
        if margin <= S::zero() {
            return Err(DesignError::NoIncentive(k));
        }
        required.push(cost.clone() / margin);
    }
    let q = required.iter().cloned().reduce(S::max_of).expect("grid has an interior point");
    let binding = required
        .iter()
        .enumerate()
        .filter(|(_, r)| r.near(&q))
        .map(|(i, _)| i + 1)
        .collect();
    let scheme = unit.scaled(&q);
    Ok(MinimalQ { q, binding, required, scheme })
}

/// [`required_q`] with the payoff-box check applied.
pub fn minimal_q<S: Scalar>(grid: &BeliefGrid<S>, ep: &ExitProbabilities<S>, params: &GameParams<S>, rho: &S) -> Result<MinimalQ<S>, DesignError> {
    let discovery = discovery_probability(&params.lambda, rho);
    let found = required_q(grid, ep, &params.cost, &discovery)?;
    match found.scheme.box_violation(params) {
        Some(v) => Err(DesignError::Infeasible(v)),
        None => Ok(found),
    }
}

/// A one-round alternative to working and reporting truthfully.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Deviation {
    Shirk(Report),
    Work { on_high: Report, on_low: Report, on_empty: Report },
}

impl Deviation {
    pub fn label(&self) -> String {
        match self {
            Deviation::Shirk(r) => format!("shirk+{}", r.as_str()),
            Deviation::Work { on_high, on_low, on_empty } => {
                format!("work(H->{},L->{},none->{})", on_high.as_str(), on_low.as_str(), on_empty.as_str())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationMargin<S> {
    pub deviation: Deviation,
    pub payoff: S,
    /// Truthful-work payoff minus deviation payoff.
    pub margin: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCheck<S> {
    pub k: usize,
    pub truthful: S,
    pub deviations: Vec<DeviationMargin<S>>,
}

impl<S: Scalar> PointCheck<S> {
    pub fn min_margin(&self) -> S {
        self.deviations.iter().map(|d| d.margin.clone()).reduce(S::min_of).expect("deviations are nonempty")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcReport<S> {
    pub points: Vec<PointCheck<S>>,
    pub box_violation: Option<BoxViolation>,
    pub feasible: bool,
}

impl<S: Scalar> IcReport<S> {
    pub fn min_margin(&self) -> S {
        self.points.iter().map(PointCheck::min_margin).reduce(S::min_of).expect("points are nonempty")
    }

    /// Grid points whose smallest margin is exactly zero.
    pub fn binding_points(&self) -> Vec<usize> {
        self.points.iter().filter(|p| p.min_margin().near(&S::zero())).map(|p| p.k).collect()
    }
}

/// Payoff of a working agent at `q^k` who follows reporting rule `(on_high, on_low, on_empty)`.
pub fn work_rule_payoff<S: Scalar>(scheme: &CompensationScheme<S>, k: usize, rule: (Report, Report, Report), discovery: &S, cost: &S) -> S {
    let z = scheme.grid.prob_high_signal(k);
    let found = z.clone() * scheme.report_value(k, rule.0, scheme.grid.point(k + 1))
        + (S::one() - z) * scheme.report_value(k, rule.1, scheme.grid.point(k - 1));
    let empty = scheme.report_value(k, rule.2, scheme.grid.point(k));
    discovery.clone() * found + (S::one() - discovery.clone()) * empty - cost.clone()
}

/// Enumerates every one-round deviation at every interior point and reports exact margins.
pub fn verify_ic<S: Scalar>(scheme: &CompensationScheme<S>, params: &GameParams<S>, discovery: &S) -> IcReport<S> {
    let reports = scheme.reports();
    let truthful_empty = if scheme.empty_report { Report::Empty } else { Report::H };
    let empties: Vec<Report> = if discovery.is_one() { vec![truthful_empty] } else { reports.clone() };
    let mut points = Vec::new();
    for k in 1..=scheme.grid.interior() {
        let truthful = work_rule_payoff(scheme, k, (Report::H, Report::L, truthful_empty), discovery, &params.cost);
        let mut deviations = Vec::new();
        for &r in &reports {
            let payoff = scheme.report_value(k, r, scheme.grid.point(k));
            deviations.push(DeviationMargin { deviation: Deviation::Shirk(r), margin: truthful.clone() - payoff.clone(), payoff });
        }
        for &on_high in &reports {
            for &on_low in &reports {
                for &on_empty in &empties {
                    if (on_high, on_low, on_empty) == (Report::H, Report::L, truthful_empty) {
                        continue;
                    }
                    let payoff = work_rule_payoff(scheme, k, (on_high, on_low, on_empty), discovery, &params.cost);
                    deviations.push(DeviationMargin {
                        deviation: Deviation::Work { on_high, on_low, on_empty },
                        margin: truthful.clone() - payoff.clone(),
                        payoff,
                    });
                }
            }
        }
        points.push(PointCheck { k, truthful, deviations });
    }
    let box_violation = scheme.box_violation(params);
    let feasible = box_violation.is_none() && points.iter().all(|p| p.min_margin() >= S::zero());
    IcReport { points, box_violation, feasible }
}
