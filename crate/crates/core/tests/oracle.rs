use std::collections::BTreeMap;

use attrition_core::beliefs::RoundStrategy;
use attrition_core::oracle::{
    blood_test_game, bound_checks, candidate_strategies, corner_tables, dominance_scan, enumerate_equilibria,
    enumerate_family, expected_payoffs, on_path_beliefs, random_tables, simulate_payoffs, EnumerationOptions,
    EquilibriumCertificate, FiniteGame, OffPath, OracleError, Profile,
};
use attrition_core::rng::StreamId;
use attrition_core::{Exact, Scalar};
use proptest::prelude::*;

fn q(n: i64, d: i64) -> Exact {
    Exact::from_ratio(n, d)
}

fn ints(xs: &[i64]) -> Vec<Exact> {
    xs.iter().map(|&x| q(x, 1)).collect()
}

fn tolerance() -> Exact {
    q(1, 1_000_000_000_000)
}

/// Expected utility of every agent from `(agent, history)` on, given a distribution over
/// the remaining count, with `agent`'s strategy at that node optionally replaced.
fn continuation(
    game: &FiniteGame<Exact>,
    profile: &Profile<Exact>,
    agent: usize,
    history: &[usize],
    counts: &[Exact],
    replace: Option<&RoundStrategy<Exact>>,
) -> Vec<Exact> {
    fn walk(
        game: &FiniteGame<Exact>,
        profile: &Profile<Exact>,
        root: (usize, Option<&RoundStrategy<Exact>>),
        agent: usize,
        count: usize,
        history: &mut Vec<usize>,
        prob: Exact,
        worked: &mut Vec<bool>,
        out: &mut Vec<Exact>,
    ) {
        if agent == game.horizon {
            let idx = history.iter().fold(0, |a, &m| a * game.messages + m);
            for j in 0..game.horizon {
                let cost = if worked[j] { game.cost.clone() } else { q(0, 1) };
                out[j] = out[j].clone() + prob.clone() * (game.tables[j][idx].clone() - cost);
            }
            return;
        }
        let s = match root {
            (a, Some(s)) if a == agent => s,
            _ => profile.get(agent, history).unwrap(),
        };
        let find = if count >= 1 { game.lambda.clone() } else { q(0, 1) };
        for m in 0..game.messages {
            history.push(m);
            for (works, next, w) in [
                (false, count, (q(1, 1) - s.gamma.clone()) * s.shirk_report[m].clone()),
                (true, count, s.gamma.clone() * (q(1, 1) - find.clone()) * s.empty_report[m].clone()),
                (true, count.saturating_sub(1), s.gamma.clone() * find.clone() * s.found_report[m].clone()),
            ] {
                if w != q(0, 1) {
                    worked[agent] = works;
                    walk(game, profile, root, agent + 1, next, history, prob.clone() * w, worked, out);
                    worked[agent] = false;
                }
            }
            history.pop();
        }
    }
    let mut out = vec![q(0, 1); game.horizon];
    for (n, p) in counts.iter().enumerate() {
        if *p != q(0, 1) {
            let mut h = history.to_vec();
            walk(game, profile, (agent, replace), agent, n, &mut h, p.clone(), &mut vec![false; game.horizon], &mut out);
        }
    }
    out
}

/// Probability of reaching each history and the count distribution there, by joint
/// enumeration from the root.
fn reach(game: &FiniteGame<Exact>, profile: &Profile<Exact>) -> BTreeMap<Vec<usize>, Vec<Exact>> {
    let mut layer: BTreeMap<Vec<usize>, Vec<Exact>> = BTreeMap::from([(Vec::new(), game.pmf.clone())]);
    let mut out = layer.clone();
    for agent in 0..game.horizon {
        let mut next: BTreeMap<Vec<usize>, Vec<Exact>> = BTreeMap::new();
        for (h, joint) in &layer {
            let s = profile.get(agent, h).unwrap();
            for m in 0..game.messages {
                let mut child = vec![q(0, 1); joint.len()];
                for (n, p) in joint.iter().enumerate() {
                    let find = if n >= 1 { game.lambda.clone() } else { q(0, 1) };
                    child[n] = child[n].clone()
                        + p.clone() * ((q(1, 1) - s.gamma.clone()) * s.shirk_report[m].clone()
                            + s.gamma.clone() * (q(1, 1) - find.clone()) * s.empty_report[m].clone());
                    if n >= 1 {
                        child[n - 1] = child[n - 1].clone() + p.clone() * s.gamma.clone() * find * s.found_report[m].clone();
                    }
                }
                if child.iter().any(|x| *x != q(0, 1)) {
                    let mut h2 = h.clone();
                    h2.push(m);
                    next.insert(h2, child);
                }
            }
        }
        out.extend(next.clone());
        layer = next;
    }
    out
}

fn normalize(joint: &[Exact]) -> Vec<Exact> {
    let total = joint.iter().fold(q(0, 1), |a, x| a + x.clone());
    joint.iter().map(|x| x.clone() / total.clone()).collect()
}

/// Largest gain from a pure one-shot deviation at any on-path node.
fn on_path_gain(game: &FiniteGame<Exact>, profile: &Profile<Exact>) -> Exact {
    let pure = candidate_strategies::<Exact>(game.messages, 1);
    let mut worst = q(0, 1);
    for (h, joint) in reach(game, profile) {
        let agent = h.len();
        if agent == game.horizon {
            continue;
        }
        let counts = normalize(&joint);
        let base = continuation(game, profile, agent, &h, &counts, None)[agent].clone();
        for d in &pure {
            let gain = continuation(game, profile, agent, &h, &counts, Some(d))[agent].clone() - base.clone();
            worst = Exact::max_of(worst, gain);
        }
    }
    worst
}

fn blood(t1: &[i64], t2: &[i64]) -> FiniteGame<Exact> {
    blood_test_game(q(10, 1), q(10, 1), q(1, 1), vec![ints(t1), ints(t2)]).unwrap()
}

fn works_on_path(game: &FiniteGame<Exact>, cert: &EquilibriumCertificate<Exact>) -> bool {
    let p = cert.profile();
    reach(game, &p).keys().filter(|h| h.len() < game.horizon).any(|h| p.get(h.len(), h).unwrap().gamma > q(0, 1))
}

#[test]
fn constant_tables_pay_the_constant() {
    let g = blood(&[3, 3, 3, 3], &[-2, -2, -2, -2]);
    assert_eq!(expected_payoffs(&g, &Profile::all_shirk(&g, 1)).unwrap(), ints(&[3, -2]));
}

#[test]
fn single_agent_enumeration() {
    let g = FiniteGame::new(1, 2, vec![q(1, 3), q(2, 3)], q(1, 2), q(1, 1), q(10, 1), q(10, 1), vec![ints(&[6, -4])]).unwrap();
    let work = Profile::stationary(&g, &[RoundStrategy::work(2, 0, 1)]);
    // message 0 iff the signal is found: (2/3)(1/2) = 1/3
    let by_hand = q(1, 3) * q(6, 1) + q(2, 3) * q(-4, 1) - q(1, 1);
    assert_eq!(expected_payoffs(&g, &work).unwrap(), vec![by_hand]);
}

#[test]
fn blood_test_unravels() {
    for t in corner_tables(&q(10, 1), &q(10, 1)) {
        let g = blood_test_game(q(10, 1), q(10, 1), q(1, 1), t).unwrap();
        let dom = dominance_scan(&g).unwrap();
        assert!(dom.certified);
        assert_eq!(dom.min_margin, q(1, 1));
    }
}

#[test]
fn sequential_majority_unravels() {
    // each agent is paid R when it sides with the final majority and -P otherwise
    let mut tables = vec![Vec::new(); 3];
    for idx in 0..8 {
        let ms = [idx >> 2 & 1, idx >> 1 & 1, idx & 1];
        let ones = ms.iter().sum::<usize>();
        let majority = usize::from(ones >= 2);
        for (j, t) in tables.iter_mut().enumerate() {
            t.push(if ms[j] == majority { q(10, 1) } else { q(-10, 1) });
        }
    }
    let g = FiniteGame::new(3, 2, vec![q(0, 1), q(0, 1), q(0, 1), q(1, 1)], q(1, 1), q(1, 1), q(10, 1), q(10, 1), tables).unwrap();
    let dom = dominance_scan(&g).unwrap();
    assert!(dom.certified);
    assert_eq!(dom.min_margin, q(1, 1));
}

#[test]
fn zero_cost_is_only_indifference() {
    let g = blood_test_game(q(10, 1), q(10, 1), q(0, 1), vec![ints(&[1, 2, 3, 4]), ints(&[4, 3, 2, 1])]).unwrap();
    let dom = dominance_scan(&g).unwrap();
    assert!(!dom.certified && dom.indifferent);
}

#[test]
fn pure_brute_force_blood_test() {
    // every pure profile with on-path work has a profitable one-shot deviation
    let g = blood(&[10, -10, 3, 7], &[-10, 10, 5, -5]);
    let pure = candidate_strategies::<Exact>(2, 1);
    let mut informative = 0;
    for a in &pure {
        for b0 in &pure {
            for b1 in &pure {
                let profile = Profile {
                    strategies: BTreeMap::from([((0, vec![]), a.clone()), ((1, vec![0]), b0.clone()), ((1, vec![1]), b1.clone())]),
                };
                let works = reach(&g, &profile).keys().filter(|h| h.len() < 2).any(|h| profile.get(h.len(), h).unwrap().gamma > q(0, 1));
                if works {
                    informative += 1;
                    assert!(on_path_gain(&g, &profile) > q(0, 1));
                }
            }
        }
    }
    assert!(informative > 0);
}

#[test]
fn all_shirk_is_always_an_equilibrium_under_constant_tables() {
    let g = blood(&[4, 4, 4, 4], &[1, 1, 1, 1]);
    for rule in OffPath::family(g.max_count()) {
        let opts = EnumerationOptions { denominator: 2, off_path: rule, mixed_tolerance: tolerance() };
        let certs = enumerate_equilibria(&g, &opts).unwrap();
        let shirk = Profile::all_shirk(&g, 0);
        assert!(certs.iter().any(|c| {
            let p = c.profile();
            reach(&g, &p).keys().all(|h| h.len() == 2 || p.get(h.len(), h).unwrap() == shirk.get(h.len(), h).unwrap())
        }));
        assert!(certs.iter().all(|c| !c.informative));
    }
}

#[test]
fn scarce_supply_blocks_work() {
    // F^1 = 1/20 < c/R = 1/10
    let tables = random_tables::<Exact>(2, 4, 10, 10, StreamId::new(31, 0));
    let g = FiniteGame::new(2, 2, vec![q(19, 20), q(1, 20)], q(1, 2), q(1, 1), q(10, 1), q(10, 1), tables).unwrap();
    let certs = enumerate_equilibria(&g, &EnumerationOptions::default()).unwrap();
    assert!(!certs.is_empty());
    assert!(certs.iter().all(|c| !works_on_path(&g, c)));
}

#[test]
fn limits_are_enforced() {
    assert_eq!(FiniteGame::new(4, 2, vec![q(1, 1)], q(1, 1), q(1, 1), q(1, 1), q(1, 1), vec![]).unwrap_err(), OracleError::Horizon);
    assert_eq!(FiniteGame::new(1, 1, vec![q(1, 1)], q(1, 1), q(1, 1), q(1, 1), q(1, 1), vec![]).unwrap_err(), OracleError::Messages);
    let g = blood(&[0, 0, 0, 0], &[0, 0, 0, 0]);
    assert!(matches!(enumerate_family(&g, 3, &tolerance(), &[OffPath::WorstCase]), Err(OracleError::Intractable(_))));
    assert!(blood_test_game(q(10, 1), q(10, 1), q(1, 1), vec![ints(&[11, 0, 0, 0]), ints(&[0, 0, 0, 0])]).is_err());
}

#[test]
fn bound_checks_on_reference_profiles() {
    let tables = random_tables::<Exact>(2, 4, 10, 10, StreamId::new(41, 0));
    let g = FiniteGame::new(2, 2, vec![q(1, 5), q(2, 5), q(2, 5)], q(1, 2), q(1, 1), q(10, 1), q(10, 1), tables).unwrap();
    let work = Profile::stationary(&g, &[RoundStrategy::work(2, 0, 1), RoundStrategy::work(2, 1, 0)]);
    let report = bound_checks(&g, &work).unwrap();
    assert!(report.holds);
    assert!(report.empty_belief_rows.as_ref().is_some_and(|rows| !rows.is_empty()));
    let shirk = bound_checks(&g, &Profile::all_shirk(&g, 0)).unwrap();
    assert!(shirk.holds && shirk.supermartingale.iter().all(|r| r.equality));
    let certain = blood(&[1, 2, 3, 4], &[4, 3, 2, 1]);
    assert!(bound_checks(&certain, &Profile::all_shirk(&certain, 0)).unwrap().empty_belief_rows.is_none());
}

#[test]
fn simulated_payoffs_agree() {
    let tables = random_tables::<Exact>(2, 4, 10, 10, StreamId::new(51, 0));
    let g = FiniteGame::new(2, 2, vec![q(1, 4), q(1, 4), q(1, 2)], q(3, 4), q(1, 1), q(10, 1), q(10, 1), tables).unwrap();
    let s = RoundStrategy { gamma: q(1, 2), shirk_report: vec![q(1, 4), q(3, 4)], found_report: vec![q(1, 1), q(0, 1)], empty_report: vec![q(1, 2), q(1, 2)] };
    let profile = Profile::stationary(&g, &[s.clone(), s]);
    let exact = expected_payoffs(&g, &profile).unwrap();
    for (e, est) in exact.iter().zip(simulate_payoffs(&g, &profile, 40_000, 9).unwrap()) {
        assert!(est.covers(e.to_f64(), 3.0), "{est:?} vs {e}");
    }
}

fn frac() -> impl Strategy<Value = Exact> {
    (0i64..=4).prop_map(|n| q(n, 4))
}

fn dist() -> impl Strategy<Value = Vec<Exact>> {
    (0i64..=4).prop_map(|n| vec![q(n, 4), q(4 - n, 4)])
}

fn round() -> impl Strategy<Value = RoundStrategy<Exact>> {
    (frac(), dist(), dist(), dist()).prop_map(|(gamma, shirk_report, found_report, empty_report)| RoundStrategy {
        gamma,
        shirk_report,
        found_report,
        empty_report,
    })
}

fn game(horizon: usize) -> impl Strategy<Value = FiniteGame<Exact>> {
    let cells = 1usize << horizon;
    (
        prop::collection::vec(prop::collection::vec(-10i64..=10, cells), horizon),
        prop::collection::vec(0i64..4, 1..4).prop_filter("mass", |w| w.iter().sum::<i64>() > 0),
        1i64..=2,
    )
        .prop_map(move |(tables, w, lam)| {
            let total: i64 = w.iter().sum();
            let pmf = w.into_iter().map(|x| q(x, total)).collect();
            let tables = tables.iter().map(|t| ints(t)).collect();
            FiniteGame::new(horizon, 2, pmf, q(lam, 2), q(1, 1), q(10, 1), q(10, 1), tables).unwrap()
        })
}

fn profile_for(g: &FiniteGame<Exact>, strats: &[RoundStrategy<Exact>]) -> Profile<Exact> {
    let mut p = Profile::default();
    let mut i = 0;
    for agent in 0..g.horizon {
        for h in g.histories(agent) {
            p.strategies.insert((agent, h), strats[i % strats.len()].clone());
            i += 1;
        }
    }
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn payoffs_match_forward_walk(g in game(3), strats in prop::collection::vec(round(), 7)) {
        let p = profile_for(&g, &strats);
        prop_assert_eq!(expected_payoffs(&g, &p).unwrap(), continuation(&g, &p, 0, &[], &g.pmf, None));
    }

    #[test]
    fn on_path_beliefs_match_joint_enumeration(g in game(2), strats in prop::collection::vec(round(), 3)) {
        let p = profile_for(&g, &strats);
        let brute = reach(&g, &p);
        for (agent, h, b) in on_path_beliefs(&g, &p).unwrap() {
            prop_assert_eq!(agent, h.len());
            prop_assert_eq!(&b, &normalize(&brute[&h]));
        }
        prop_assert!(bound_checks(&g, &p).unwrap().holds);
    }

    #[test]
    fn certificates_survive_deviation_checks(g in game(2)) {
        let rules = OffPath::family(g.max_count());
        let family = enumerate_family(&g, 2, &tolerance(), &rules).unwrap();
        let worst = family.last().unwrap();
        for (rule, certs) in rules.iter().zip(&family) {
            for c in certs {
                let p = c.profile();
                prop_assert!(on_path_gain(&g, &p) <= c.max_gain.clone());
                prop_assert_eq!(&c.payoffs, &continuation(&g, &p, 0, &[], &g.pmf, None));
                // the adversarial off-path rule admits every profile the fixed rules admit
                if *rule != OffPath::WorstCase {
                    prop_assert!(worst.iter().any(|w| w.strategies == c.strategies));
                }
            }
        }
    }

    #[test]
    fn translation_leaves_equilibria_unchanged(g in game(2), agent in 0usize..2, shift in -5i64..=5) {
        let moved = g.translated(agent, &q(shift, 1));
        let opts = EnumerationOptions { denominator: 2, off_path: OffPath::CarryForward, mixed_tolerance: tolerance() };
        let a = enumerate_equilibria(&g, &opts).unwrap();
        let b = enumerate_equilibria(&moved, &opts).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(&x.strategies, &y.strategies);
            prop_assert_eq!(y.payoffs[agent].clone(), x.payoffs[agent].clone() + q(shift, 1));
        }
    }
}
