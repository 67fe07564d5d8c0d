//! Episode simulation under a compensation scheme, with Monte Carlo aggregation.
//!
//! Randomness is drawn in `f64`; belief and payment bookkeeping stays in the scheme's scalar
//! type, so transcripts replay through [`CompensationScheme::payment`] bit for bit.

use rayon::prelude::*;
use serde::Serialize;

use crate::beliefs::{update_survival, RoundStrategy, SurvivalBelief};
use crate::designer::{CompensationScheme, Deviation, Outcome, Report};
use crate::rng::{bernoulli, StreamId};
use crate::scalar::{literal, Scalar};
use crate::supply::{sample_sequence, Signal, SignalModel, SignalSequence, SupplyKind, SupplySpec};
use crate::thresholds::GameParams;

pub const DEFAULT_HORIZON: usize = 10_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("grid point {0} is never reached by the designed profile")]
    OffPath(usize),
    #[error("episode count must be positive")]
    NoEpisodes,
    #[error("profile sends the empty report but the scheme has none")]
    MissingEmptyReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Profile {
    /// Work inside the grid and report the discovered signal.
    Designed,
    /// Never work; always send the empty report.
    AllShirk,
}

#[derive(Debug, Clone)]
pub struct SimConfig<S> {
    pub params: GameParams<S>,
    pub supply: SupplySpec<S>,
    pub model: SignalModel<S>,
    pub scheme: CompensationScheme<S>,
    pub profile: Profile,
    pub horizon: usize,
}

impl<S: Scalar> SimConfig<S> {
    pub fn new(params: GameParams<S>, supply: SupplySpec<S>, model: SignalModel<S>, scheme: CompensationScheme<S>) -> Self {
        Self { params, supply, model, scheme, profile: Profile::Designed, horizon: DEFAULT_HORIZON }
    }

    /// Learning stops at the first empty report unless the supply can never run out.
    pub fn stops_on_empty(&self) -> bool {
        match self.supply.kind() {
            SupplyKind::Unlimited => false,
            SupplyKind::Geometric { rho, .. } => !rho.is_one(),
            SupplyKind::Pmf(_) => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Terminal {
    Top,
    Bottom,
    Stopped,
    Truncated,
}

impl Terminal {
    pub fn as_str(self) -> &'static str {
        match self {
            Terminal::Top => "top",
            Terminal::Bottom => "bottom",
            Terminal::Stopped => "stopped",
            Terminal::Truncated => "truncated",
        }
    }

    pub fn outcome(self) -> Outcome {
        match self {
            Terminal::Top => Outcome::Top,
            Terminal::Bottom => Outcome::Bottom,
            Terminal::Stopped | Terminal::Truncated => Outcome::Stopped,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord<S> {
    pub round: usize,
    /// Grid index of the public belief when the agent acts.
    pub grid_index: usize,
    pub belief: S,
    pub worked: bool,
    pub discovery: Option<Signal>,
    pub report: Report,
    /// Public `F^1` before the round.
    pub survival_f1: f64,
    pub payment: S,
    pub cost: S,
}

impl<S: Scalar> RoundRecord<S> {
    pub fn utility(&self) -> S {
        self.payment.clone() - self.cost.clone()
    }
}

#[derive(Debug, Clone)]
pub struct Transcript<S> {
    pub omega: Signal,
    pub rounds: Vec<RoundRecord<S>>,
    pub terminal: Terminal,
}

impl<S: Scalar> Transcript<S> {
    /// Index of the last agent who worked, if any.
    pub fn last_worker(&self) -> Option<usize> {
        self.rounds.iter().rposition(|r| r.worked)
    }

    /// Recomputes every payment from the scheme and compares with the recorded ones.
    pub fn reconciles(&self, scheme: &CompensationScheme<S>) -> bool {
        let outcome = self.terminal.outcome();
        self.rounds.iter().all(|r| scheme.payment(r.grid_index, r.report, outcome) == r.payment)
    }
}

/// Public survival belief tracked alongside the walk; messages are `found = 0`, `none = 1`.
struct PublicSurvival<S> {
    belief: SurvivalBelief<S>,
    strategy: RoundStrategy<S>,
}

impl<S: Scalar> PublicSurvival<S> {
    fn new(supply: &SupplySpec<S>, profile: Profile) -> Self {
        let strategy = match profile {
            Profile::Designed => RoundStrategy::work(2, 0, 1),
            Profile::AllShirk => RoundStrategy::shirk(2, 1),
        };
        Self { belief: SurvivalBelief::from_supply(supply), strategy }
    }

    fn f1(&self) -> f64 {
        self.belief.f(1).to_f64()
    }

    fn observe(&mut self, found: bool, lambda: &S) {
        let m = if found { 0 } else { 1 };
        // an off-path observation (e.g. a deviator's fabrication) leaves the public belief alone
        if let Ok(next) = update_survival(&self.belief, &self.strategy, m, lambda) {
            self.belief = next;
        }
    }
}

/// Mutable state of one episode.
struct Walk<'a, S> {
    cfg: &'a SimConfig<S>,
    seq: SignalSequence,
    used: usize,
    k: usize,
    public: PublicSurvival<S>,
    search: rand_chacha::ChaCha8Rng,
    rounds: Vec<RoundRecord<S>>,
}

enum Step {
    Continue,
    Stop,
}

impl<'a, S: Scalar> Walk<'a, S> {
    fn new(cfg: &'a SimConfig<S>, k: usize, prior: &S, id: StreamId) -> Self {
        let model = SignalModel { prior: prior.clone(), precision: cfg.model.precision.clone() };
        Self {
            cfg,
            seq: sample_sequence(&cfg.supply, &model, id.child(11)),
            used: 0,
            k,
            public: PublicSurvival::new(&cfg.supply, cfg.profile),
            search: id.child(12).rng(),
            rounds: Vec::new(),
        }
    }

    fn search(&mut self) -> Option<Signal> {
        let lucky = bernoulli(&mut self.search, &self.cfg.params.lambda);
        if !lucky {
            return None;
        }
        let s = self.seq.get(self.used)?;
        self.used += 1;
        Some(s)
    }

    /// One agent acts: optionally works, then sends `report(discovery)`.
    fn act(&mut self, worked: bool, report_rule: impl Fn(Option<Signal>) -> Report) -> Step {
        let discovery = if worked { self.search() } else { None };
        let report = report_rule(discovery);
        let cost = if worked { self.cfg.params.cost.clone() } else { S::zero() };
        self.rounds.push(RoundRecord {
            round: self.rounds.len(),
            grid_index: self.k,
            belief: self.cfg.scheme.grid.point(self.k).clone(),
            worked,
            discovery,
            report,
            survival_f1: self.public.f1(),
            payment: S::zero(),
            cost,
        });
        self.public.observe(report != Report::Empty, &self.cfg.params.lambda);
        match report {
            Report::H => self.k += 1,
            Report::L => self.k -= 1,
            Report::Empty if self.cfg.stops_on_empty() => return Step::Stop,
            Report::Empty => {}
        }
        Step::Continue
    }

    fn designed_rule(discovery: Option<Signal>) -> Report {
        match discovery {
            Some(Signal::H) => Report::H,
            Some(Signal::L) => Report::L,
            None => Report::Empty,
        }
    }

    /// Plays the configured profile until absorption, stop, or the horizon cap.
    fn finish(mut self, omega_known: Signal) -> Transcript<S> {
        let top = self.cfg.scheme.grid.top();
        let terminal = loop {
            if self.k == 0 {
                break Terminal::Bottom;
            }
            if self.k == top {
                break Terminal::Top;
            }
            if self.rounds.len() >= self.cfg.horizon {
                break Terminal::Truncated;
            }
            let step = match self.cfg.profile {
                Profile::Designed => self.act(true, Self::designed_rule),
                Profile::AllShirk => self.act(false, |_| Report::Empty),
            };
            if let Step::Stop = step {
                break Terminal::Stopped;
            }
        };
        let outcome = terminal.outcome();
        for r in &mut self.rounds {
            r.payment = self.cfg.scheme.payment(r.grid_index, r.report, outcome);
        }
        Transcript { omega: omega_known, rounds: self.rounds, terminal }
    }
}

/// Plays one episode from the prior grid point.
pub fn run_episode<S: Scalar>(cfg: &SimConfig<S>, id: StreamId) -> Transcript<S> {
    let k = cfg.scheme.grid.prior_index();
    run_episode_from(cfg, k, id).expect("prior index is interior")
}

/// Plays one episode from grid point `k`, with the state drawn from the posterior `q^k`.
pub fn run_episode_from<S: Scalar>(cfg: &SimConfig<S>, k: usize, id: StreamId) -> Result<Transcript<S>, SimError> {
    if !cfg.scheme.grid.is_interior(k) {
        return Err(SimError::OffPath(k));
    }
    let prior = cfg.scheme.grid.point(k).clone();
    let walk = Walk::new(cfg, k, &prior, id);
    let omega = walk.seq.omega;
    Ok(walk.finish(omega))
}

/// Payoff of a single agent who deviates at grid point `k` while everyone else plays the
/// designed profile.
pub fn deviation_episode<S: Scalar>(cfg: &SimConfig<S>, k: usize, deviation: Deviation, id: StreamId) -> Result<S, SimError> {
    if !cfg.scheme.grid.is_interior(k) {
        return Err(SimError::OffPath(k));
    }
    let uses_empty = match deviation {
        Deviation::Shirk(r) => r == Report::Empty,
        Deviation::Work { on_high, on_low, .. } => on_high == Report::Empty || on_low == Report::Empty,
    };
    if uses_empty && !cfg.scheme.empty_report {
        return Err(SimError::MissingEmptyReport);
    }
    let mut designed = cfg.clone();
    designed.profile = Profile::Designed;
    let prior = cfg.scheme.grid.point(k).clone();
    let mut walk = Walk::new(&designed, k, &prior, id);
    let omega = walk.seq.omega;
    let _ = match deviation {
        Deviation::Shirk(r) => walk.act(false, |_| r),
        Deviation::Work { on_high, on_low, on_empty } => walk.act(true, |d| match d {
            Some(Signal::H) => on_high,
            Some(Signal::L) => on_low,
            None => on_empty,
        }),
    };
    // the deviator's own empty report stops learning only under the stopping convention
    let transcript = if walk.rounds[0].report == Report::Empty && designed.stops_on_empty() {
        Transcript { omega, rounds: walk.rounds, terminal: Terminal::Stopped }
    } else {
        walk.finish(omega)
    };
    let first = &transcript.rounds[0];
    Ok(cfg.scheme.payment(k, first.report, transcript.terminal.outcome()) - first.cost.clone())
}

/// Sample mean with its standard error (`sd / sqrt(n)`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: 0.0, se: 0.0, n };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, se, n }
    }

    /// Whether `target` lies within `z` standard errors of the mean.
    pub fn covers(&self, target: f64, z: f64) -> bool {
        (self.mean - target).abs() <= z * self.se + 1e-12
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftPoint {
    pub k: usize,
    pub belief: f64,
    /// Mean of `p_{i+1} - p_i` over rounds starting at this point.
    pub drift: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeStats {
    pub episodes: usize,
    pub exit_top: Estimate,
    pub exit_bottom: Estimate,
    pub stopped: Estimate,
    pub truncated: usize,
    pub rounds: Estimate,
    /// Realized utility of the first agent.
    pub first_agent: Estimate,
    /// Realized utility pooled over every agent who acted.
    pub per_agent: Estimate,
    /// Payoff of a lone fabricator (shirk, report `H`) at the prior point.
    pub fabrication: Estimate,
    pub drift: Vec<DriftPoint>,
}

/// Episode `i` of a run with base seed `seed`.
pub fn episode_stream(seed: u64, i: usize) -> StreamId {
    StreamId::new(seed, i as u64)
}

/// Runs `n` episodes in parallel; the result depends only on `(cfg, n, seed)`.
pub fn monte_carlo<S: Scalar>(cfg: &SimConfig<S>, n: usize, seed: u64) -> Result<(EpisodeStats, Vec<Transcript<S>>), SimError> {
    if n == 0 {
        return Err(SimError::NoEpisodes);
    }
    let transcripts: Vec<Transcript<S>> = (0..n).into_par_iter().map(|i| run_episode(cfg, episode_stream(seed, i))).collect();
    let k0 = cfg.scheme.grid.prior_index();
    let fab: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            deviation_episode(cfg, k0, Deviation::Shirk(Report::H), episode_stream(seed, i).child(99))
                .map(|x| x.to_f64())
                .expect("prior point is interior")
        })
        .collect();
    let stats = aggregate(cfg, &transcripts, &fab);
    Ok((stats, transcripts))
}

fn indicator(ts: &[Transcript<impl Scalar>], t: Terminal) -> Estimate {
    let xs: Vec<f64> = ts.iter().map(|x| if x.terminal == t { 1.0 } else { 0.0 }).collect();
    Estimate::from_samples(&xs)
}

fn aggregate<S: Scalar>(cfg: &SimConfig<S>, ts: &[Transcript<S>], fab: &[f64]) -> EpisodeStats {
    let grid = &cfg.scheme.grid;
    let rounds: Vec<f64> = ts.iter().map(|t| t.rounds.len() as f64).collect();
    let first: Vec<f64> = ts.iter().filter_map(|t| t.rounds.first()).map(|r| r.utility().to_f64()).collect();
    let pooled: Vec<f64> = ts.iter().flat_map(|t| t.rounds.iter().map(|r| r.utility().to_f64())).collect();
    let mut moves: Vec<Vec<f64>> = vec![Vec::new(); grid.top() + 1];
    for t in ts {
        for (i, r) in t.rounds.iter().enumerate() {
            let next = t.rounds.get(i + 1).map(|n| n.grid_index).unwrap_or(match r.report {
                Report::H => r.grid_index + 1,
                Report::L => r.grid_index - 1,
                Report::Empty => r.grid_index,
            });
            moves[r.grid_index].push(grid.point(next).to_f64() - r.belief.to_f64());
        }
    }
    let drift = (1..=grid.interior())
        .map(|k| DriftPoint { k, belief: grid.point(k).to_f64(), drift: Estimate::from_samples(&moves[k]) })
        .collect();
    EpisodeStats {
        episodes: ts.len(),
        exit_top: indicator(ts, Terminal::Top),
        exit_bottom: indicator(ts, Terminal::Bottom),
        stopped: indicator(ts, Terminal::Stopped),
        truncated: ts.iter().filter(|t| t.terminal == Terminal::Truncated).count(),
        rounds: Estimate::from_samples(&rounds),
        first_agent: Estimate::from_samples(&first),
        per_agent: Estimate::from_samples(&pooled),
        fabrication: Estimate::from_samples(fab),
        drift,
    }
}

/// Monte Carlo payoff estimate for a deviation at grid point `k`.
pub fn estimate_deviation<S: Scalar>(cfg: &SimConfig<S>, k: usize, deviation: Deviation, n: usize, seed: u64) -> Result<Estimate, SimError> {
    if n == 0 {
        return Err(SimError::NoEpisodes);
    }
    let xs: Result<Vec<f64>, SimError> = (0..n)
        .into_par_iter()
        .map(|i| deviation_episode(cfg, k, deviation, episode_stream(seed, i)).map(|x| x.to_f64()))
        .collect();
    Ok(Estimate::from_samples(&xs?))
}

/// Empirical frequency with which each interior start exits through the top.
pub fn exit_frequencies<S: Scalar>(cfg: &SimConfig<S>, n: usize, seed: u64) -> Vec<Estimate> {
    (1..=cfg.scheme.grid.interior())
        .map(|k| {
            let ts: Vec<Transcript<S>> = (0..n)
                .into_par_iter()
                .map(|i| run_episode_from(cfg, k, StreamId::new(seed, i as u64).child(k as u64)).expect("interior"))
                .collect();
            indicator(&ts, Terminal::Top)
        })
        .collect()
}

pub const TRANSCRIPT_COLUMNS: [&str; 13] = [
    "episode",
    "round",
    "grid_index",
    "belief",
    "worked",
    "discovery",
    "message",
    "survival_f1",
    "payment",
    "cost",
    "utility",
    "omega",
    "terminal",
];

/// Transcript rows in the frozen CSV layout.
pub fn transcripts_csv<S: Scalar>(ts: &[Transcript<S>]) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(TRANSCRIPT_COLUMNS).expect("in-memory write");
    for (e, t) in ts.iter().enumerate() {
        for r in &t.rounds {
            let discovery = r.discovery.map(Signal::as_str).unwrap_or("-");
            w.write_record([
                e.to_string(),
                r.round.to_string(),
                r.grid_index.to_string(),
                literal(&r.belief),
                (r.worked as u8).to_string(),
                discovery.to_string(),
                r.report.as_str().to_string(),
                r.survival_f1.to_string(),
                literal(&r.payment),
                literal(&r.cost),
                literal(&r.utility()),
                t.omega.as_str().to_string(),
                t.terminal.as_str().to_string(),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("fields are UTF-8")
}

/// Result of the maximal-inequality check on the public survival belief.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoobCheck {
    pub anchor: f64,
    pub level: f64,
    pub frequency: Estimate,
    pub bound: f64,
}

/// Runs the survival belief forward under round strategy `strat` (every agent, every round)
/// and estimates `Pr(max_j F^1_j >= g * F^1_0)`, which a nonnegative supermartingale keeps
/// at or below `1/g`.
pub fn doob_check<S: Scalar>(
    supply: &SupplySpec<S>,
    strat: &RoundStrategy<S>,
    lambda: &S,
    g: f64,
    horizon: usize,
    n: usize,
    seed: u64,
) -> DoobCheck {
    let start = SurvivalBelief::from_supply(supply);
    let anchor = start.f(1).to_f64();
    let level = g * anchor;
    let hits: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let id = episode_stream(seed, i);
            let mut rng = id.rng();
            let mut remaining = supply.sample_count(&mut rng);
            let mut belief = start.clone();
            let mut peak = anchor;
            for _ in 0..horizon {
                let works = bernoulli(&mut rng, &strat.gamma);
                let found = works && remaining.at_least(1) && bernoulli(&mut rng, lambda);
                let dist = if !works {
                    &strat.shirk_report
                } else if found {
                    &strat.found_report
                } else {
                    &strat.empty_report
                };
                if found {
                    if let crate::supply::Count::Finite(r) = remaining {
                        remaining = crate::supply::Count::Finite(r - 1);
                    }
                }
                let u: f64 = rand::Rng::gen(&mut rng);
                let mut acc = 0.0;
                let mut message = dist.len() - 1;
                for (m, p) in dist.iter().enumerate() {
                    acc += p.to_f64();
                    if u < acc {
                        message = m;
                        break;
                    }
                }
                match update_survival(&belief, strat, message, lambda) {
                    Ok(next) => belief = next,
                    Err(_) => break,
                }
                peak = peak.max(belief.f(1).to_f64());
                if belief.f(1).is_zero() {
                    break;
                }
            }
            if peak >= level { 1.0 } else { 0.0 }
        })
        .collect();
    DoobCheck { anchor, level, frequency: Estimate::from_samples(&hits), bound: 1.0 / g }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designer::design_scheme;
    use crate::grid::{exit_probabilities, BeliefGrid};
    use crate::Exact;

    fn q(n: i64, d: i64) -> Exact {
        Exact::from_ratio(n, d)
    }

    fn config() -> SimConfig<Exact> {
        let g = BeliefGrid::build(q(1, 2), q(1, 5), q(4, 5), q(3, 4)).unwrap();
        let ep = exit_probabilities(&g);
        let scheme = design_scheme(&g, &ep, q(4, 1)).unwrap();
        let params = GameParams::new(q(10, 1), q(10, 1), q(1, 1), q(1, 1)).unwrap();
        SimConfig::new(params, SupplySpec::unlimited(), SignalModel::new(q(1, 2), q(3, 4)).unwrap(), scheme)
    }

    #[test]
    fn episodes_are_reproducible() {
        let cfg = config();
        let a = run_episode(&cfg, StreamId::new(7, 3));
        let b = run_episode(&cfg, StreamId::new(7, 3));
        assert_eq!(transcripts_csv(&[a]), transcripts_csv(&[b]));
    }

    #[test]
    fn designed_episode_exits_and_reconciles() {
        let cfg = config();
        for i in 0..50 {
            let t = run_episode(&cfg, StreamId::new(1, i));
            assert!(matches!(t.terminal, Terminal::Top | Terminal::Bottom));
            assert!(t.reconciles(&cfg.scheme));
            assert!(t.rounds.iter().all(|r| r.worked && r.discovery.is_some()));
        }
    }

    #[test]
    fn perfect_signals_ascend() {
        let mut cfg = config();
        cfg.model = SignalModel::with_perfect_precision(q(1, 1));
        let t = run_episode(&cfg, StreamId::new(2, 0));
        assert_eq!(t.omega, Signal::H);
        assert_eq!(t.terminal, Terminal::Top);
        let path: Vec<usize> = t.rounds.iter().map(|r| r.grid_index).collect();
        assert_eq!(path, vec![2, 3]);
    }

    #[test]
    fn all_shirk_never_moves() {
        let mut cfg = config();
        cfg.profile = Profile::AllShirk;
        cfg.horizon = 25;
        let t = run_episode(&cfg, StreamId::new(3, 0));
        assert_eq!(t.terminal, Terminal::Truncated);
        assert_eq!(t.rounds.len(), 25);
        assert!(t.rounds.iter().all(|r| r.grid_index == 2 && r.discovery.is_none() && r.payment == q(0, 1)));
    }

    #[test]
    fn empty_report_stops_finite_supply() {
        let mut cfg = config();
        cfg.supply = SupplySpec::certain(0);
        let t = run_episode(&cfg, StreamId::new(4, 0));
        assert_eq!(t.terminal, Terminal::Stopped);
        assert_eq!(t.rounds.len(), 1);
        assert_eq!(t.rounds[0].utility(), q(-1, 1));
    }

    #[test]
    fn off_path_deviation_rejected() {
        let cfg = config();
        assert_eq!(
            deviation_episode(&cfg, 0, Deviation::Shirk(Report::H), StreamId::new(0, 0)),
            Err(SimError::OffPath(0))
        );
        assert_eq!(
            deviation_episode(&cfg, 4, Deviation::Shirk(Report::H), StreamId::new(0, 0)),
            Err(SimError::OffPath(4))
        );
    }

    #[test]
    fn estimate_standard_error() {
        let e = Estimate::from_samples(&[0.0, 1.0, 0.0, 1.0]);
        assert_eq!(e.mean, 0.5);
        assert!((e.se - (1.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert!(e.covers(0.5, 0.0));
    }
}
