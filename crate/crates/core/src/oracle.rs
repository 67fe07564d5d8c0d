//! Exact brute-force analysis of small finite truncations of the game.
//!
//! The oracle works at count level: the state of the world is the number of signals still
//! undiscovered, agents observe the message history, and compensation depends on messages
//! only. Signal content never enters a payoff, so it is not tracked.

use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::beliefs::{expected_next_survival, point_mass, RoundStrategy, SurvivalBelief, Tail};
use crate::rng::StreamId;
use crate::scalar::{literal, Scalar};
use crate::sim::Estimate;

pub const MAX_HORIZON: usize = 3;
pub const MAX_MESSAGES: usize = 4;
pub const MAX_SUPPORT: usize = 4;
/// Largest number of candidate strategies per decision node the enumerator accepts.
pub const MAX_CANDIDATES: usize = 20_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("horizon must be between 1 and {MAX_HORIZON}")]
    Horizon,
    #[error("message space must have between 2 and {MAX_MESSAGES} messages")]
    Messages,
    #[error("supply pmf must have support within 0..={MAX_SUPPORT} and sum to one")]
    Pmf,
    #[error("lambda must lie in (0,1] and cost must be nonnegative")]
    Params,
    #[error("table for agent {agent} must have {expected} entries within [-P, R]")]
    Table { agent: usize, expected: usize },
    #[error("profile has no strategy for agent {agent} at history {history:?}")]
    MissingStrategy { agent: usize, history: Vec<usize> },
    #[error("enumeration is intractable: {0}")]
    Intractable(String),
    #[error("invalid round strategy for agent {0}")]
    BadStrategy(usize),
}

/// Truncated game with message-only compensation tables.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteGame<S> {
    pub horizon: usize,
    pub messages: usize,
    /// `pmf[n] = Pr(n signals exist at round 1)`.
    pub pmf: Vec<S>,
    pub lambda: S,
    pub cost: S,
    pub reward: S,
    pub punishment: S,
    /// `tables[i][profile_index(m)]` is agent `i`'s gross compensation.
    pub tables: Vec<Vec<S>>,
}

impl<S: Scalar> FiniteGame<S> {
    pub fn new(
        horizon: usize,
        messages: usize,
        pmf: Vec<S>,
        lambda: S,
        cost: S,
        reward: S,
        punishment: S,
        tables: Vec<Vec<S>>,
    ) -> Result<Self, OracleError> {
        if horizon == 0 || horizon > MAX_HORIZON {
            return Err(OracleError::Horizon);
        }
        if !(2..=MAX_MESSAGES).contains(&messages) {
            return Err(OracleError::Messages);
        }
        let total = pmf.iter().fold(S::zero(), |a, p| a + p.clone());
        if pmf.is_empty() || pmf.len() > MAX_SUPPORT + 1 || pmf.iter().any(|p| *p < S::zero()) || !total.near(&S::one()) {
            return Err(OracleError::Pmf);
        }
        if lambda <= S::zero() || lambda > S::one() || cost < S::zero() {
            return Err(OracleError::Params);
        }
        let expected = messages.pow(horizon as u32);
        if tables.len() != horizon {
            return Err(OracleError::Table { agent: tables.len(), expected });
        }
        for (agent, t) in tables.iter().enumerate() {
            let lo = -punishment.clone();
            if t.len() != expected || t.iter().any(|v| *v > reward || *v < lo) {
                return Err(OracleError::Table { agent, expected });
            }
        }
        Ok(Self { horizon, messages, pmf, lambda, cost, reward, punishment, tables })
    }

    pub fn max_count(&self) -> usize {
        self.pmf.len() - 1
    }

    pub fn profile_index(&self, history: &[usize]) -> usize {
        history.iter().fold(0, |acc, &m| acc * self.messages + m)
    }

    /// `F^1` at round 1.
    pub fn f1(&self) -> S {
        self.pmf.iter().skip(1).fold(S::zero(), |a, p| a + p.clone())
    }

    /// All histories of length `len`, in lexicographic order.
    pub fn histories(&self, len: usize) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new()];
        for _ in 0..len {
            out = out
                .into_iter()
                .flat_map(|h| {
                    (0..self.messages).map(move |m| {
                        let mut next = h.clone();
                        next.push(m);
                        next
                    })
                })
                .collect();
        }
        out
    }

    /// Same game with agent `agent`'s table shifted by `shift` (box bounds widened to fit).
    pub fn translated(&self, agent: usize, shift: &S) -> Self {
        let mut out = self.clone();
        for v in &mut out.tables[agent] {
            *v = v.clone() + shift.clone();
        }
        if *shift > S::zero() {
            out.reward = out.reward + shift.clone();
        } else {
            out.punishment = out.punishment - shift.clone();
        }
        out
    }

    fn found_prob(&self, n: usize) -> S {
        if n >= 1 {
            self.lambda.clone()
        } else {
            S::zero()
        }
    }
}

/// Strategies for every agent at every history of matching length.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile<S> {
    pub strategies: BTreeMap<(usize, Vec<usize>), RoundStrategy<S>>,
}

impl<S> Default for Profile<S> {
    fn default() -> Self {
        Self { strategies: BTreeMap::new() }
    }
}

impl<S: Scalar> Profile<S> {
    pub fn get(&self, agent: usize, history: &[usize]) -> Result<&RoundStrategy<S>, OracleError> {
        self.strategies
            .get(&(agent, history.to_vec()))
            .ok_or_else(|| OracleError::MissingStrategy { agent, history: history.to_vec() })
    }

    /// Same strategy at every history of each agent.
    pub fn stationary(game: &FiniteGame<S>, per_agent: &[RoundStrategy<S>]) -> Self {
        let mut strategies = BTreeMap::new();
        for (i, s) in per_agent.iter().enumerate() {
            for h in game.histories(i) {
                strategies.insert((i, h), s.clone());
            }
        }
        Self { strategies }
    }

    pub fn all_shirk(game: &FiniteGame<S>, message: usize) -> Self {
        let s = RoundStrategy::shirk(game.messages, message);
        Self::stationary(game, &vec![s; game.horizon])
    }
}

/// Values indexed `[remaining count][agent]` for the subtree rooted at `(agent, history)`.
type Values<S> = Vec<Vec<S>>;

fn leaf_values<S: Scalar>(game: &FiniteGame<S>, history: &[usize]) -> Values<S> {
    let idx = game.profile_index(history);
    let row: Vec<S> = game.tables.iter().map(|t| t[idx].clone()).collect();
    vec![row; game.max_count() + 1]
}

/// Combines one decision node: `children[m]` are the subtree values after message `m`.
fn node_values<S: Scalar>(game: &FiniteGame<S>, agent: usize, strat: &RoundStrategy<S>, children: &[&Values<S>]) -> Values<S> {
    let one = S::one();
    let shirk = one.clone() - strat.gamma.clone();
    (0..=game.max_count())
        .map(|n| {
            let pf = game.found_prob(n);
            (0..game.horizon)
                .map(|j| {
                    let mut v = S::zero();
                    for (m, child) in children.iter().enumerate() {
                        v = v + shirk.clone() * strat.shirk_report[m].clone() * child[n][j].clone();
                        if !strat.gamma.is_zero() {
                            let empty = (one.clone() - pf.clone()) * strat.empty_report[m].clone() * child[n][j].clone();
                            let found = if n >= 1 {
                                pf.clone() * strat.found_report[m].clone() * child[n - 1][j].clone()
                            } else {
                                S::zero()
                            };
                            v = v + strat.gamma.clone() * (found + empty);
                        }
                    }
                    if j == agent {
                        v = v - strat.gamma.clone() * game.cost.clone();
                    }
                    v
                })
                .collect()
        })
        .collect()
}

fn subtree_values<S: Scalar>(game: &FiniteGame<S>, profile: &Profile<S>, agent: usize, history: &mut Vec<usize>) -> Result<Values<S>, OracleError> {
    if agent == game.horizon {
        return Ok(leaf_values(game, history));
    }
    let strat = profile.get(agent, history)?.clone();
    let mut children = Vec::with_capacity(game.messages);
    for m in 0..game.messages {
        history.push(m);
        children.push(subtree_values(game, profile, agent + 1, history)?);
        history.pop();
    }
    let refs: Vec<&Values<S>> = children.iter().collect();
    Ok(node_values(game, agent, &strat, &refs))
}

fn average<S: Scalar>(weights: &[S], values: &Values<S>, agent: usize) -> S {
    weights.iter().zip(values).fold(S::zero(), |a, (w, v)| a + w.clone() * v[agent].clone())
}

/// Expected utility (gross compensation minus expected effort cost) of every agent.
pub fn expected_payoffs<S: Scalar>(game: &FiniteGame<S>, profile: &Profile<S>) -> Result<Vec<S>, OracleError> {
    let values = subtree_values(game, profile, 0, &mut Vec::new())?;
    Ok((0..game.horizon).map(|j| average(&game.pmf, &values, j)).collect())
}

pub fn expected_payoff<S: Scalar>(game: &FiniteGame<S>, profile: &Profile<S>, agent: usize) -> Result<S, OracleError> {
    Ok(expected_payoffs(game, profile)?.swap_remove(agent))
}

/// Probability of message `m` and the unnormalized posterior over the remaining count.
fn message_split<S: Scalar>(game: &FiniteGame<S>, belief: &[S], strat: &RoundStrategy<S>, m: usize) -> (S, Vec<S>) {
    let one = S::one();
    let mut post = vec![S::zero(); belief.len()];
    for (n, b) in belief.iter().enumerate() {
        if b.is_zero() {
            continue;
        }
        let pf = game.found_prob(n);
        let stay = (one.clone() - strat.gamma.clone()) * strat.shirk_report[m].clone()
            + strat.gamma.clone() * (one.clone() - pf.clone()) * strat.empty_report[m].clone();
        post[n] = post[n].clone() + b.clone() * stay;
        if n >= 1 {
            post[n - 1] = post[n - 1].clone() + b.clone() * strat.gamma.clone() * pf * strat.found_report[m].clone();
        }
    }
    let total = post.iter().fold(S::zero(), |a, x| a + x.clone());
    (total, post)
}

/// Public posterior over the remaining count after message `m`, or `None` off path.
pub fn posterior<S: Scalar>(game: &FiniteGame<S>, belief: &[S], strat: &RoundStrategy<S>, m: usize) -> Option<Vec<S>> {
    let (total, post) = message_split(game, belief, strat, m);
    if total.is_zero() {
        return None;
    }
    Some(post.into_iter().map(|x| x / total.clone()).collect())
}

/// Converts a distribution over the remaining count into a survival belief.
pub fn survival_from_counts<S: Scalar>(belief: &[S]) -> SurvivalBelief<S> {
    let kmax = belief.len().saturating_sub(1).max(1);
    let head = (1..=kmax)
        .map(|k| belief.iter().skip(k).fold(S::zero(), |a, x| a + x.clone()))
        .collect();
    SurvivalBelief::new(head, Tail::Zero).expect("count distribution gives a monotone survival vector")
}

/// Off-path belief assigned to a zero-probability message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum OffPath {
    /// Keep the belief held before the message.
    CarryForward,
    /// All mass on `n` remaining signals.
    PointMass(usize),
    /// Any member of the family, chosen against the deviator.
    WorstCase,
}

impl OffPath {
    pub fn family(game_max_count: usize) -> Vec<OffPath> {
        let mut out = vec![OffPath::CarryForward];
        out.extend((0..=game_max_count).map(OffPath::PointMass));
        out.push(OffPath::WorstCase);
        out
    }

    pub fn label(&self) -> String {
        match self {
            OffPath::CarryForward => "carry-forward".into(),
            OffPath::PointMass(n) => format!("point-mass-{n}"),
            OffPath::WorstCase => "worst-case".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnumerationOptions<S> {
    /// Probabilities are multiples of `1/denominator`; `1` means pure strategies only.
    pub denominator: u32,
    pub off_path: OffPath,
    /// Allowed best-response shortfall for mixed profiles (pure profiles use zero).
    pub mixed_tolerance: S,
}

impl<S: Scalar> Default for EnumerationOptions<S> {
    fn default() -> Self {
        Self { denominator: 4, off_path: OffPath::WorstCase, mixed_tolerance: S::from_ratio(1, 1_000_000_000_000) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumCertificate<S> {
    pub strategies: Vec<((usize, Vec<usize>), RoundStrategy<S>)>,
    /// Largest gain from a unilateral one-shot deviation anywhere in the tree.
    pub max_gain: S,
    /// Some agent works with positive probability on the equilibrium path.
    pub informative: bool,
    pub payoffs: Vec<S>,
}

impl<S: Scalar> EquilibriumCertificate<S> {
    pub fn profile(&self) -> Profile<S> {
        Profile { strategies: self.strategies.iter().cloned().collect() }
    }
}

/// Every distribution over `k` messages with probabilities in multiples of `1/d`.
fn simplex<S: Scalar>(k: usize, d: u32) -> Vec<Vec<S>> {
    fn rec(k: usize, left: u32, acc: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if k == 1 {
            acc.push(left);
            out.push(acc.clone());
            acc.pop();
            return;
        }
        for x in (0..=left).rev() {
            acc.push(x);
            rec(k - 1, left - x, acc, out);
            acc.pop();
        }
    }
    let mut raw = Vec::new();
    rec(k, d, &mut Vec::new(), &mut raw);
    raw.into_iter()
        .map(|v| v.into_iter().map(|x| S::from_ratio(x as i64, d as i64)).collect())
        .collect()
}

/// Canonical grid strategies: unused components are fixed to a point mass on message 0.
pub fn candidate_strategies<S: Scalar>(messages: usize, denominator: u32) -> Vec<RoundStrategy<S>> {
    let dists = simplex::<S>(messages, denominator);
    let unused = point_mass::<S>(messages, 0);
    let mut out = Vec::new();
    for g in 0..=denominator {
        let gamma = S::from_ratio(g as i64, denominator as i64);
        let shirks: Vec<&Vec<S>> = if g == denominator { vec![&unused] } else { dists.iter().collect() };
        let works: Vec<&Vec<S>> = if g == 0 { vec![&unused] } else { dists.iter().collect() };
        for s in &shirks {
            for f in &works {
                for e in &works {
                    out.push(RoundStrategy {
                        gamma: gamma.clone(),
                        shirk_report: (*s).clone(),
                        found_report: (*f).clone(),
                        empty_report: (*e).clone(),
                    });
                }
            }
        }
    }
    out
}

#[derive(Clone)]
struct SubEq<S> {
    strategies: Vec<((usize, Vec<usize>), RoundStrategy<S>)>,
    values: Values<S>,
    informative: bool,
    gain: S,
}

/// Odometer step over child combinations; `false` once every combination has been visited.
fn advance(idx: &mut [usize], sizes: &[usize]) -> bool {
    for (i, size) in idx.iter_mut().zip(sizes) {
        *i += 1;
        if *i < *size {
            return true;
        }
        *i = 0;
    }
    false
}

/// Memo key: agent, history, belief literals, and the off-path rule when it can matter below.
type MemoKey = (usize, Vec<usize>, Vec<String>, Option<OffPath>);

struct Solver<'a, S> {
    game: &'a FiniteGame<S>,
    off_path: OffPath,
    mixed_tolerance: S,
    candidates: Rc<Vec<RoundStrategy<S>>>,
    /// `flatten` of each candidate: gamma, then shirk, found and empty reports.
    approx: Vec<Vec<f64>>,
    memo: HashMap<MemoKey, Rc<Vec<SubEq<S>>>>,
}

/// Agent `agent`'s value from each pure action at a node, per message: shirk and send `m`,
/// find and send `m`, search in vain and send `m`.
struct ActionValues<S> {
    shirk: S,
    found: S,
    empty: S,
    /// Float copies used to discard clearly unprofitable candidates before exact arithmetic.
    approx: [f64; 3],
}

/// A candidate's float gain above this is far outside rounding error and the mixed tolerance.
const APPROX_REJECT: f64 = 1e-6;

impl<'a, S: Scalar> Solver<'a, S> {
    fn solve(&mut self, agent: usize, history: &[usize], belief: &[S]) -> Rc<Vec<SubEq<S>>> {
        // the last mover's subgames contain no off-path nodes
        let rule = (agent + 1 < self.game.horizon).then_some(self.off_path);
        let key = (agent, history.to_vec(), belief.iter().map(literal).collect::<Vec<_>>(), rule);
        if let Some(hit) = self.memo.get(&key) {
            return hit.clone();
        }
        let result = Rc::new(self.solve_uncached(agent, history, belief));
        self.memo.insert(key, result.clone());
        result
    }

    fn off_path_sets(&mut self, agent: usize, history: &[usize], belief: &[S]) -> Vec<SubEq<S>> {
        let game = self.game;
        let kmax = game.max_count();
        let members = match self.off_path {
            OffPath::WorstCase => OffPath::family(kmax).into_iter().filter(|o| *o != OffPath::WorstCase).collect(),
            other => vec![other],
        };
        let mut out: Vec<SubEq<S>> = Vec::new();
        for member in members {
            let b = match member {
                OffPath::CarryForward => belief.to_vec(),
                OffPath::PointMass(n) => (0..=kmax).map(|i| if i == n { S::one() } else { S::zero() }).collect(),
                OffPath::WorstCase => unreachable!(),
            };
            for eq in self.solve(agent, history, &b).iter() {
                if !out.iter().any(|o| o.strategies == eq.strategies) {
                    out.push(eq.clone());
                }
            }
        }
        out
    }

    fn action_values(&self, agent: usize, belief: &[S], child: &Values<S>) -> ActionValues<S> {
        let game = self.game;
        let one = S::one();
        let (mut shirk, mut found, mut empty) = (S::zero(), S::zero(), S::zero());
        for (n, b) in belief.iter().enumerate() {
            if b.is_zero() {
                continue;
            }
            let pf = game.found_prob(n);
            shirk = shirk + b.clone() * child[n][agent].clone();
            empty = empty + b.clone() * (one.clone() - pf.clone()) * child[n][agent].clone();
            if n >= 1 {
                found = found + b.clone() * pf * child[n - 1][agent].clone();
            }
        }
        let approx = [shirk.to_f64(), found.to_f64(), empty.to_f64()];
        ActionValues { shirk, found, empty, approx }
    }

    fn solve_uncached(&mut self, agent: usize, history: &[usize], belief: &[S]) -> Vec<SubEq<S>> {
        let game = self.game;
        if agent == game.horizon {
            return vec![SubEq { strategies: Vec::new(), values: leaf_values(game, history), informative: false, gain: S::zero() }];
        }
        let mut out = Vec::new();
        // action values depend only on the child equilibrium, so compute them once per child
        // keyed by address; holding the set keeps the address from being reused
        let mut cache: HashMap<usize, (Rc<Vec<SubEq<S>>>, Rc<Vec<ActionValues<S>>>)> = HashMap::new();
        // the off-path continuation after `m` is the same for every candidate at this node
        let mut off_cache: HashMap<usize, Rc<Vec<SubEq<S>>>> = HashMap::new();
        let leaves: Option<Vec<Rc<Vec<SubEq<S>>>>> = (agent + 1 == game.horizon).then(|| {
            let mut next = history.to_vec();
            (0..game.messages)
                .map(|m| {
                    next.push(m);
                    let set = self.solve(agent + 1, &next, &[]);
                    next.pop();
                    set
                })
                .collect()
        });
        let candidates = Rc::clone(&self.candidates);
        for (ci, strat) in candidates.iter().enumerate() {
            let mut child_sets: Vec<(bool, Rc<Vec<SubEq<S>>>)> = Vec::with_capacity(game.messages);
            let mut next = history.to_vec();
            next.push(0);
            for m in 0..game.messages {
                *next.last_mut().expect("nonempty") = m;
                if let Some(leaves) = &leaves {
                    // leaves do not depend on the belief
                    child_sets.push((true, leaves[m].clone()));
                    continue;
                }
                match posterior(game, belief, strat, m) {
                    Some(post) => child_sets.push((true, self.solve(agent + 1, &next, &post))),
                    None => {
                        let set = match off_cache.get(&m) {
                            Some(hit) => hit.clone(),
                            None => {
                                let set = Rc::new(self.off_path_sets(agent + 1, &next, belief));
                                off_cache.insert(m, set.clone());
                                set
                            }
                        };
                        child_sets.push((false, set));
                    }
                }
            }
            if child_sets.iter().any(|(_, s)| s.is_empty()) {
                continue;
            }
            let actions: Vec<Rc<Vec<ActionValues<S>>>> = child_sets
                .iter()
                .map(|(_, set)| {
                    let id = Rc::as_ptr(set) as usize;
                    if let Some((_, hit)) = cache.get(&id) {
                        return hit.clone();
                    }
                    let v = Rc::new(set.iter().map(|c| self.action_values(agent, belief, &c.values)).collect::<Vec<_>>());
                    cache.insert(id, (set.clone(), v.clone()));
                    v
                })
                .collect();
            let fs = self.approx[ci].clone();
            let mm = game.messages;
            let cost_f = game.cost.to_f64();
            let tolerance = if strat.is_pure() { S::zero() } else { self.mixed_tolerance.clone() };
            let shirk_w = S::one() - strat.gamma.clone();
            let sizes: Vec<usize> = child_sets.iter().map(|(_, s)| s.len()).collect();
            let mut idx = vec![0usize; sizes.len()];
            loop {
                let acts: Vec<&ActionValues<S>> = idx.iter().zip(&actions).map(|(&i, a)| &a[i]).collect();
                let (mut o_s, mut o_w, mut b_s, mut b_f, mut b_e) = (0.0, 0.0, f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
                for (m, a) in acts.iter().enumerate() {
                    let [sh, fo, em] = a.approx;
                    o_s += fs[1 + m] * sh;
                    o_w += fs[1 + mm + m] * fo + fs[1 + 2 * mm + m] * em;
                    b_s = b_s.max(sh);
                    b_f = b_f.max(fo);
                    b_e = b_e.max(em);
                }
                let own_f = (1.0 - fs[0]) * o_s + fs[0] * (o_w - cost_f);
                let clearly_worse = b_s.max(b_f + b_e - cost_f) - own_f > APPROX_REJECT;
                if clearly_worse {
                    if advance(&mut idx, &sizes) {
                        continue;
                    }
                    break;
                }
                let mut own_shirk = S::zero();
                let mut own_work = S::zero();
                let (mut best_shirk, mut best_found, mut best_empty): (Option<S>, Option<S>, Option<S>) = (None, None, None);
                for (m, a) in acts.iter().enumerate() {
                    if !strat.shirk_report[m].is_zero() {
                        own_shirk = own_shirk + strat.shirk_report[m].clone() * a.shirk.clone();
                    }
                    if !strat.gamma.is_zero() {
                        own_work = own_work + strat.found_report[m].clone() * a.found.clone() + strat.empty_report[m].clone() * a.empty.clone();
                    }
                    best_shirk = Some(best_shirk.map_or(a.shirk.clone(), |x| S::max_of(x, a.shirk.clone())));
                    best_found = Some(best_found.map_or(a.found.clone(), |x| S::max_of(x, a.found.clone())));
                    best_empty = Some(best_empty.map_or(a.empty.clone(), |x| S::max_of(x, a.empty.clone())));
                }
                let cost = game.cost.clone();
                let own = shirk_w.clone() * own_shirk + strat.gamma.clone() * (own_work - cost.clone());
                let work = best_found.expect("messages") + best_empty.expect("messages") - cost;
                let best = S::max_of(best_shirk.expect("messages"), work);
                let gain = best - own;
                if gain <= tolerance {
                    let children: Vec<&SubEq<S>> = idx.iter().zip(&child_sets).map(|(&i, (_, s))| &s[i]).collect();
                    let child_values: Vec<&Values<S>> = children.iter().map(|c| &c.values).collect();
                    let values = node_values(game, agent, strat, &child_values);
                    let mut strategies = vec![((agent, history.to_vec()), strat.clone())];
                    let mut informative = !strat.gamma.is_zero();
                    let mut max_gain = S::max_of(gain, S::zero());
                    for ((on_path, _), child) in child_sets.iter().zip(&children) {
                        strategies.extend(child.strategies.iter().cloned());
                        informative |= *on_path && child.informative;
                        max_gain = S::max_of(max_gain, child.gain.clone());
                    }
                    out.push(SubEq { strategies, values, informative, gain: max_gain });
                }
                if !advance(&mut idx, &sizes) {
                    break;
                }
            }
        }
        out
    }
}

/// All grid profiles that are equilibria given the off-path option, in lexicographic order.
pub fn enumerate_equilibria<S: Scalar>(game: &FiniteGame<S>, opts: &EnumerationOptions<S>) -> Result<Vec<EquilibriumCertificate<S>>, OracleError> {
    Ok(enumerate_family(game, opts.denominator, &opts.mixed_tolerance, &[opts.off_path])?.swap_remove(0))
}

/// [`enumerate_equilibria`] under several off-path rules at once, sharing the subgames that
/// no rule can affect.
pub fn enumerate_family<S: Scalar>(
    game: &FiniteGame<S>,
    denominator: u32,
    mixed_tolerance: &S,
    rules: &[OffPath],
) -> Result<Vec<Vec<EquilibriumCertificate<S>>>, OracleError> {
    if game.horizon > MAX_HORIZON || game.messages > 3 {
        return Err(OracleError::Intractable("enumeration needs T <= 3 and |M| <= 3".into()));
    }
    if !matches!(denominator, 1 | 2 | 4 | 8) {
        return Err(OracleError::Intractable("probability step must be 1, 1/2, 1/4 or 1/8".into()));
    }
    let candidates = candidate_strategies::<S>(game.messages, denominator);
    if candidates.len() > MAX_CANDIDATES {
        return Err(OracleError::Intractable(format!("{} candidate strategies per node", candidates.len())));
    }
    let approx = candidates.iter().map(flatten).collect();
    let mut solver =
        Solver { game, off_path: OffPath::WorstCase, mixed_tolerance: mixed_tolerance.clone(), candidates: Rc::new(candidates), approx, memo: HashMap::new() };
    let mut out = Vec::with_capacity(rules.len());
    for &rule in rules {
        solver.off_path = rule;
        let root = solver.solve(0, &[], &game.pmf);
        let mut certs: Vec<EquilibriumCertificate<S>> = root
            .iter()
            .map(|eq| {
                let mut strategies = eq.strategies.clone();
                strategies.sort_by(|a, b| a.0.cmp(&b.0));
                EquilibriumCertificate {
                    strategies,
                    max_gain: eq.gain.clone(),
                    informative: eq.informative,
                    payoffs: (0..game.horizon).map(|j| average(&game.pmf, &eq.values, j)).collect(),
                }
            })
            .collect();
        certs.sort_by(|a, b| cmp_strategies(&a.strategies, &b.strategies));
        out.push(certs);
    }
    Ok(out)
}

fn cmp_strategies<S: Scalar>(a: &[((usize, Vec<usize>), RoundStrategy<S>)], b: &[((usize, Vec<usize>), RoundStrategy<S>)]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.0.cmp(&y.0).then_with(|| {
            let fx: Vec<f64> = flatten(&x.1);
            let fy: Vec<f64> = flatten(&y.1);
            fx.partial_cmp(&fy).unwrap_or(std::cmp::Ordering::Equal)
        });
        if o != std::cmp::Ordering::Equal {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

fn flatten<S: Scalar>(s: &RoundStrategy<S>) -> Vec<f64> {
    std::iter::once(&s.gamma)
        .chain(&s.shirk_report)
        .chain(&s.found_report)
        .chain(&s.empty_report)
        .map(|x| x.to_f64())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceReport<S> {
    pub margins: Vec<S>,
    pub min_margin: S,
    /// Work is strictly dominated for every agent, so every equilibrium is all-shirk.
    pub certified: bool,
    /// Zero cost: working and shirking tie, so no strict certificate exists.
    pub indifferent: bool,
}

/// Backward dominance pass. For each agent, given that every later agent shirks with any
/// message function, a working agent's payoff equals that of shirking with the induced
/// message distribution minus the cost, at every remaining count.
pub fn dominance_scan<S: Scalar>(game: &FiniteGame<S>) -> Result<DominanceReport<S>, OracleError> {
    let mut margins = vec![S::zero(); game.horizon];
    for agent in (0..game.horizon).rev() {
        let later: Vec<(usize, Vec<usize>)> = (agent + 1..game.horizon).flat_map(|j| game.histories(j).into_iter().map(move |h| (j, h))).collect();
        let combos = (game.messages as f64).powi(later.len() as i32);
        if combos > 2e6 {
            return Err(OracleError::Intractable(format!("{combos} later shirk profiles")));
        }
        let mut best: Option<S> = None;
        let mut assignment = vec![0usize; later.len()];
        loop {
            let mut profile = Profile::default();
            for ((j, h), m) in later.iter().zip(&assignment) {
                profile.strategies.insert((*j, h.clone()), RoundStrategy::shirk(game.messages, *m));
            }
            for h in game.histories(agent) {
                let mut children = Vec::new();
                for m in 0..game.messages {
                    let mut next = h.clone();
                    next.push(m);
                    children.push(subtree_values(game, &profile, agent + 1, &mut next)?);
                }
                for n in 0..=game.max_count() {
                    let pf = game.found_prob(n);
                    for f in 0..game.messages {
                        for e in 0..game.messages {
                            let work = if n >= 1 {
                                pf.clone() * children[f][n - 1][agent].clone()
                            } else {
                                S::zero()
                            } + (S::one() - pf.clone()) * children[e][n][agent].clone()
                                - game.cost.clone();
                            let shirk = pf.clone() * children[f][n][agent].clone() + (S::one() - pf.clone()) * children[e][n][agent].clone();
                            let margin = shirk - work;
                            best = Some(best.map_or(margin.clone(), |b| S::min_of(b, margin)));
                        }
                    }
                }
            }
            let mut pos = 0;
            while pos < assignment.len() {
                assignment[pos] += 1;
                if assignment[pos] < game.messages {
                    break;
                }
                assignment[pos] = 0;
                pos += 1;
            }
            if pos == assignment.len() {
                break;
            }
        }
        margins[agent] = best.expect("at least one history");
    }
    let min_margin = margins.iter().cloned().reduce(S::min_of).expect("horizon >= 1");
    Ok(DominanceReport {
        certified: min_margin > S::zero(),
        indifferent: min_margin.is_zero(),
        margins,
        min_margin,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmptyBeliefRow<S> {
    pub agent: usize,
    pub history: Vec<usize>,
    pub message: usize,
    /// Gross value of working, finding nothing, and sending `message`.
    pub lhs: S,
    /// Best shirking value plus `f^0 (R + P) / (1 - lambda)`.
    pub rhs: S,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupermartingaleRow<S> {
    pub agent: usize,
    pub history: Vec<usize>,
    pub k: usize,
    pub before: S,
    pub expected_after: S,
    pub equality: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport<S> {
    /// `None` when `lambda = 1`, where the empty-find bound does not apply.
    pub empty_belief_rows: Option<Vec<EmptyBeliefRow<S>>>,
    pub supermartingale: Vec<SupermartingaleRow<S>>,
    pub holds: bool,
}

/// On-path nodes of a profile with the public belief at each.
pub fn on_path_beliefs<S: Scalar>(game: &FiniteGame<S>, profile: &Profile<S>) -> Result<Vec<(usize, Vec<usize>, Vec<S>)>, OracleError> {
    let mut out = Vec::new();
    let mut frontier = vec![(Vec::new(), game.pmf.clone())];
    for agent in 0..game.horizon {
        let mut next = Vec::new();
        for (h, b) in frontier {
            let strat = profile.get(agent, &h)?;
            for m in 0..game.messages {
                if let Some(post) = posterior(game, &b, strat, m) {
                    let mut h2 = h.clone();
                    h2.push(m);
                    next.push((h2, post));
                }
            }
            out.push((agent, h, b));
        }
        frontier = next;
    }
    Ok(out)
}

/// Evaluates the empty-find bound and the survival supermartingale on every on-path node.
pub fn bound_checks<S: Scalar>(game: &FiniteGame<S>, profile: &Profile<S>) -> Result<BoundReport<S>, OracleError> {
    let width = game.reward.clone() + game.punishment.clone();
    let mut a2 = Vec::new();
    let mut sm = Vec::new();
    for (agent, h, b) in on_path_beliefs(game, profile)? {
        let strat = profile.get(agent, &h)?;
        let survival = survival_from_counts(&b);
        for k in 1..=game.max_count().max(1) {
            let before = survival.f(k);
            let expected_after = expected_next_survival(&survival, strat, &game.lambda, k);
            sm.push(SupermartingaleRow { agent, history: h.clone(), k, equality: expected_after == before, before, expected_after });
        }
        if game.lambda.is_one() {
            continue;
        }
        let f0 = b[0].clone();
        let miss = S::one() - game.lambda.clone();
        let norm = f0.clone() + (S::one() - f0.clone()) * miss.clone();
        let empty_belief: Vec<S> =
            b.iter().enumerate().map(|(n, x)| if n == 0 { x.clone() / norm.clone() } else { x.clone() * miss.clone() / norm.clone() }).collect();
        let mut conts = Vec::new();
        for m in 0..game.messages {
            let mut next = h.clone();
            next.push(m);
            conts.push(subtree_values(game, profile, agent + 1, &mut next)?);
        }
        let v_star = conts.iter().map(|c| average(&b, c, agent)).reduce(S::max_of).expect("messages");
        let rhs = v_star + f0 * width.clone() / miss.clone();
        for (m, c) in conts.iter().enumerate() {
            a2.push(EmptyBeliefRow { agent, history: h.clone(), message: m, lhs: average(&empty_belief, c, agent), rhs: rhs.clone() });
        }
    }
    let holds = a2.iter().all(|r| r.lhs <= r.rhs) && sm.iter().all(|r| r.expected_after <= r.before);
    Ok(BoundReport { empty_belief_rows: if game.lambda.is_one() { None } else { Some(a2) }, supermartingale: sm, holds })
}

/// Both sides of the discovery-rate bound at one round:
/// `beta <= C E[(F^k - F^k'(m)) 1{m in M+}] / (F^k - C F^{k+1})`.
/// Returns `None` when `F^k <= C F^{k+1}`, where the bound says nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct SaverCheck<S> {
    pub beta: S,
    pub bound: S,
}

pub fn saver_check<S: Scalar>(
    belief: &SurvivalBelief<S>,
    strat: &RoundStrategy<S>,
    lambda: &S,
    big_c: &S,
    k: usize,
    informative_after: &[bool],
) -> Option<SaverCheck<S>> {
    let fk = belief.f(k);
    let gap = fk.clone() - big_c.clone() * belief.f(k + 1);
    if gap <= S::zero() {
        return None;
    }
    let mut drop = S::zero();
    for (m, plus) in informative_after.iter().enumerate() {
        if !plus {
            continue;
        }
        let p = crate::beliefs::message_probability(belief, strat, m, lambda);
        if let Ok(next) = crate::beliefs::update_survival(belief, strat, m, lambda) {
            drop = drop + p * (fk.clone() - next.f(k));
        }
    }
    let beta = crate::beliefs::discovery_probability(belief, strat, lambda);
    Some(SaverCheck { beta, bound: big_c.clone() * drop / gap })
}

/// Two-agent game with two signals for sure, perfect search and binary messages.
pub fn blood_test_game<S: Scalar>(reward: S, punishment: S, cost: S, tables: Vec<Vec<S>>) -> Result<FiniteGame<S>, OracleError> {
    FiniteGame::new(2, 2, vec![S::zero(), S::zero(), S::one()], S::one(), cost, reward, punishment, tables)
}

/// The 16 extreme table pairs: agent 1 gets `R` or `-P` on each message profile and agent 2
/// gets the opposite extreme.
pub fn corner_tables<S: Scalar>(reward: &S, punishment: &S) -> Vec<Vec<Vec<S>>> {
    (0..16u32)
        .map(|mask| {
            let first: Vec<S> = (0..4).map(|i| if mask >> i & 1 == 1 { reward.clone() } else { -punishment.clone() }).collect();
            let second: Vec<S> = first.iter().map(|v| if *v == *reward { -punishment.clone() } else { reward.clone() }).collect();
            vec![first, second]
        })
        .collect()
}

/// Random rational tables for `agents` agents over `cells` profiles, entries multiples of
/// `1/8` within `[-P, R]` (integer `R` and `P`).
pub fn random_tables<S: Scalar>(agents: usize, cells: usize, reward: i64, punishment: i64, id: StreamId) -> Vec<Vec<S>> {
    let mut rng = id.rng();
    (0..agents)
        .map(|_| (0..cells).map(|_| S::from_ratio(rng.gen_range(-8 * punishment..=8 * reward), 8)).collect())
        .collect()
}

/// Monte Carlo estimate of every agent's utility under `profile`, for cross-checking
/// [`expected_payoffs`].
pub fn simulate_payoffs<S: Scalar>(game: &FiniteGame<S>, profile: &Profile<S>, n: usize, seed: u64) -> Result<Vec<Estimate>, OracleError> {
    // validate the profile once up front so sampling cannot fail midway
    subtree_values(game, profile, 0, &mut Vec::new())?;
    let draw = |rng: &mut rand_chacha::ChaCha8Rng, dist: &[S]| -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, p) in dist.iter().enumerate() {
            acc += p.to_f64();
            if u < acc {
                return i;
            }
        }
        dist.iter().rposition(|p| !p.is_zero()).unwrap_or(0)
    };
    let samples: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = StreamId::new(seed, i as u64).rng();
            let mut count = draw(&mut rng, &game.pmf);
            let mut history = Vec::new();
            let mut costs = vec![0.0; game.horizon];
            for agent in 0..game.horizon {
                let s = profile.get(agent, &history).expect("validated");
                let works = rng.gen::<f64>() < s.gamma.to_f64();
                let m = if !works {
                    draw(&mut rng, &s.shirk_report)
                } else {
                    costs[agent] = game.cost.to_f64();
                    let found = count >= 1 && rng.gen::<f64>() < game.lambda.to_f64();
                    if found {
                        count -= 1;
                        draw(&mut rng, &s.found_report)
                    } else {
                        draw(&mut rng, &s.empty_report)
                    }
                };
                history.push(m);
            }
            let idx = game.profile_index(&history);
            (0..game.horizon).map(|j| game.tables[j][idx].to_f64() - costs[j]).collect()
        })
        .collect();
    Ok((0..game.horizon)
        .map(|j| Estimate::from_samples(&samples.iter().map(|s| s[j]).collect::<Vec<_>>()))
        .collect())
}
