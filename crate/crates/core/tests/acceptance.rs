//! Acceptance suite. Each test prints one `PASS`/`FAIL` line and then asserts it.
//!
//! Expected values come from small oracles written here (closed forms, brute-force joint
//! enumeration, forward tree walks) rather than from the library under test.

use std::time::{Duration, Instant};

use attrition_core::beliefs::{expected_next_survival, update_survival, RoundStrategy, SurvivalBelief};
use attrition_core::designer::{design_scheme, minimal_q, verify_ic};
use attrition_core::grid::{cheat_gaps, exit_probabilities, exit_probabilities_kappa, BeliefGrid};
use attrition_core::oracle::{
    blood_test_game, corner_tables, dominance_scan, enumerate_family, random_tables, FiniteGame, OffPath, Profile,
};
use attrition_core::rng::StreamId;
use attrition_core::sim::{monte_carlo, SimConfig};
use attrition_core::supply::{SignalModel, SupplySpec};
use attrition_core::thresholds::{c_lambda, lemma1_bound, proof_constants, witness_threshold, GameParams};
use attrition_core::witness::{
    collision_frequency, contraction_coefficient, ihr_monotonicity_check, order_stat_bound, ShockDensity,
};
use attrition_core::{Exact, Scalar};
use rayon::prelude::*;

fn q(n: i64, d: i64) -> Exact {
    Exact::from_ratio(n, d)
}

fn first(failures: &[String]) -> String {
    failures.first().map(|f| format!(" (first failure: {f})")).unwrap_or_default()
}

fn verdict(n: usize, ok: bool, elapsed: Duration, limit: Duration, detail: &str) -> bool {
    let in_time = elapsed < limit;
    let pass = ok && in_time;
    println!(
        "{} criterion {n}: {detail} [{:.2}s / {}s]",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    pass
}

// ---------------------------------------------------------------------------------------
// oracles

/// Gambler's ruin: probability of reaching `top` before 0 from `k` when each step goes up
/// with probability `up`.
fn ruin(k: usize, top: usize, up: &Exact) -> Exact {
    let one = q(1, 1);
    let r = (one.clone() - up.clone()) / up.clone();
    if r == one {
        return q(k as i64, top as i64);
    }
    let rk = (0..k).fold(one.clone(), |a, _| a * r.clone());
    let rt = (0..top).fold(one.clone(), |a, _| a * r.clone());
    (one.clone() - rk) / (one - rt)
}

struct GridOracle {
    points: Vec<Exact>,
    high: Vec<Exact>,
    low: Vec<Exact>,
    pi: Exact,
}

impl GridOracle {
    /// Grid built by repeated odds multiplication from `p0`.
    fn new(p0: Exact, below: usize, above: usize, pi: Exact) -> Self {
        let odds0 = p0.clone() / (q(1, 1) - p0);
        let step = pi.clone() / (q(1, 1) - pi.clone());
        let mut points = Vec::new();
        for j in -(below as i64)..=(above as i64) {
            let mut odds = odds0.clone();
            for _ in 0..j.unsigned_abs() {
                odds = if j > 0 { odds * step.clone() } else { odds / step.clone() };
            }
            points.push(odds.clone() / (q(1, 1) + odds));
        }
        let top = points.len() - 1;
        let high = (0..=top).map(|k| ruin(k, top, &pi)).collect();
        let low = (0..=top).map(|k| ruin(k, top, &(q(1, 1) - pi.clone()))).collect();
        Self { points, high, low, pi }
    }

    fn top_prob(&self, p: &Exact, k: usize) -> Exact {
        p.clone() * self.high[k].clone() + (q(1, 1) - p.clone()) * self.low[k].clone()
    }

    /// Payments and payoffs of the scheme that makes fabrication worthless at `Q`.
    fn designed(&self, big_q: &Exact, k: usize) -> (Exact, Exact, Exact, Exact) {
        let one = q(1, 1);
        let here = &self.points[k];
        let up = self.top_prob(here, k + 1);
        let rh = big_q.clone() * (one.clone() - up.clone()) / up;
        let down = self.top_prob(here, k - 1);
        let rl = big_q.clone() * down.clone() / (one.clone() - down);
        let value_h = |p: &Exact| self.top_prob(p, k + 1) * rh.clone() - (one.clone() - self.top_prob(p, k + 1)) * big_q.clone();
        let value_l = |p: &Exact| (one.clone() - self.top_prob(p, k - 1)) * rl.clone() - self.top_prob(p, k - 1) * big_q.clone();
        let fabrication = Exact::max_of(value_h(here), value_l(here));
        let z = here.clone() * self.pi.clone() + (one.clone() - here.clone()) * (one.clone() - self.pi.clone());
        let work = z.clone() * value_h(&self.points[k + 1]) + (one.clone() - z) * value_l(&self.points[k - 1]);
        (rh, rl, fabrication, work)
    }
}

/// Forward walk over `(remaining count, history)`: whether any agent works with positive
/// probability on path, and every agent's expected utility.
fn forward(game: &FiniteGame<Exact>, profile: &Profile<Exact>) -> (bool, Vec<Exact>) {
    fn walk(
        game: &FiniteGame<Exact>,
        profile: &Profile<Exact>,
        agent: usize,
        count: usize,
        history: &mut Vec<usize>,
        prob: Exact,
        worked: &mut Vec<bool>,
        out: &mut (bool, Vec<Exact>),
    ) {
        if agent == game.horizon {
            let idx = history.iter().fold(0, |a, &m| a * game.messages + m);
            for j in 0..game.horizon {
                let cost = if worked[j] { game.cost.clone() } else { q(0, 1) };
                out.1[j] = out.1[j].clone() + prob.clone() * (game.tables[j][idx].clone() - cost);
            }
            return;
        }
        let s = profile.get(agent, history).expect("complete profile");
        if s.gamma > q(0, 1) {
            out.0 = true;
        }
        let lambda = if count >= 1 { game.lambda.clone() } else { q(0, 1) };
        for m in 0..game.messages {
            history.push(m);
            let branches = [
                (false, count, (q(1, 1) - s.gamma.clone()) * s.shirk_report[m].clone()),
                (true, count, s.gamma.clone() * (q(1, 1) - lambda.clone()) * s.empty_report[m].clone()),
                (true, count.saturating_sub(1), s.gamma.clone() * lambda.clone() * s.found_report[m].clone()),
            ];
            for (works, next, w) in branches {
                if w > q(0, 1) {
                    worked[agent] = works;
                    walk(game, profile, agent + 1, next, history, prob.clone() * w, worked, out);
                    worked[agent] = false;
                }
            }
            history.pop();
        }
    }
    let mut out = (false, vec![q(0, 1); game.horizon]);
    for (n, p) in game.pmf.iter().enumerate() {
        if *p > q(0, 1) {
            walk(game, profile, 0, n, &mut Vec::new(), p.clone(), &mut vec![false; game.horizon], &mut out);
        }
    }
    out
}

/// Probability of each message and posterior count distribution, by joint enumeration.
fn joint_update(pmf: &[Exact], s: &RoundStrategy<Exact>, lambda: &Exact, m: usize) -> (Exact, Vec<Exact>) {
    let mut post = vec![q(0, 1); pmf.len()];
    for (n, w) in pmf.iter().enumerate() {
        let find = if n >= 1 { lambda.clone() } else { q(0, 1) };
        // shirk, work and miss, work and find
        post[n] = post[n].clone() + w.clone() * (q(1, 1) - s.gamma.clone()) * s.shirk_report[m].clone();
        post[n] = post[n].clone() + w.clone() * s.gamma.clone() * (q(1, 1) - find.clone()) * s.empty_report[m].clone();
        if n >= 1 {
            post[n - 1] = post[n - 1].clone() + w.clone() * s.gamma.clone() * find * s.found_report[m].clone();
        }
    }
    let total = post.iter().fold(q(0, 1), |a, x| a + x.clone());
    (total, post)
}

fn tail(pmf: &[Exact], k: usize) -> Exact {
    pmf.iter().skip(k).fold(q(0, 1), |a, x| a + x.clone())
}

/// Every pmf on `{0..=kmax}` with weights in multiples of `1/d` and positive mass at `kmax`.
fn pmfs(kmax: usize, d: i64) -> Vec<Vec<Exact>> {
    fn rec(slots: usize, left: i64, acc: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if slots == 1 {
            acc.push(left);
            out.push(acc.clone());
            acc.pop();
            return;
        }
        for x in 0..=left {
            acc.push(x);
            rec(slots - 1, left - x, acc, out);
            acc.pop();
        }
    }
    let mut raw = Vec::new();
    rec(kmax + 1, d, &mut Vec::new(), &mut raw);
    raw.into_iter()
        .filter(|w| w[kmax] > 0)
        .map(|w| w.into_iter().map(|x| q(x, d)).collect())
        .collect()
}

fn dists(d: i64) -> Vec<Vec<Exact>> {
    (0..=d).map(|x| vec![q(x, d), q(d - x, d)]).collect()
}

fn strategies(d: i64) -> Vec<RoundStrategy<Exact>> {
    let mut out = Vec::new();
    for g in 0..=d {
        for a in dists(d) {
            for f in dists(d) {
                for e in dists(d) {
                    out.push(RoundStrategy { gamma: q(g, d), shirk_report: a.clone(), found_report: f.clone(), empty_report: e });
                }
            }
        }
    }
    out
}

fn reference_grid() -> BeliefGrid<Exact> {
    BeliefGrid::build(q(1, 2), q(1, 5), q(4, 5), q(3, 4)).unwrap()
}

// ---------------------------------------------------------------------------------------

#[test]
fn criterion_1_unraveling() {
    let start = Instant::now();
    let (r, p, c) = (q(10, 1), q(10, 1), q(1, 1));
    let mut tables = corner_tables(&r, &p);
    tables.extend((0..100).map(|i| random_tables::<Exact>(2, 4, 10, 10, StreamId::new(2024, i))));
    let failures: Vec<String> = tables
        .into_par_iter()
        .enumerate()
        .filter_map(|(i, t)| {
            let game = blood_test_game(r.clone(), p.clone(), c.clone(), t).unwrap();
            let dom = dominance_scan(&game).unwrap();
            if !dom.certified || dom.min_margin < c {
                return Some(format!("game {i}: dominance margin {}", dom.min_margin));
            }
            let rules = OffPath::family(game.max_count());
            let family = enumerate_family(&game, 4, &q(1, 1_000_000_000_000), &rules).unwrap();
            for (rule, certs) in rules.iter().zip(&family) {
                if certs.is_empty() {
                    return Some(format!("game {i} {}: no equilibrium", rule.label()));
                }
                for cert in certs {
                    let (works, payoffs) = forward(&game, &cert.profile());
                    if works || cert.informative {
                        return Some(format!("game {i} {}: informative certificate", rule.label()));
                    }
                    if payoffs != cert.payoffs {
                        return Some(format!("game {i} {}: payoff mismatch", rule.label()));
                    }
                }
            }
            None
        })
        .collect();
    let ok = verdict(
        1,
        failures.is_empty(),
        start.elapsed(),
        Duration::from_secs(60),
        &format!("116 blood-test games, all-shirk certified, no informative certificate{}", first(&failures)),
    );
    assert!(ok);
}

#[test]
fn criterion_2_no_work_below_cost_ratio() {
    let start = Instant::now();
    let (r, p, c) = (q(10, 1), q(10, 1), q(1, 1));
    let supplies = vec![
        vec![q(1, 1)],
        vec![q(19, 20), q(1, 20)],
        vec![q(11, 12), q(1, 12)],
        vec![q(23, 25), q(1, 25), q(1, 25)],
        vec![q(23, 25), q(1, 25), q(1, 50), q(1, 50)],
    ];
    let mut games = Vec::new();
    for (s, pmf) in supplies.iter().enumerate() {
        for lambda in [q(1, 2), q(1, 1)] {
            for i in 0..4u64 {
                let tables = random_tables::<Exact>(2, 4, 10, 10, StreamId::new(77, 10 * s as u64 + i));
                games.push((4, FiniteGame::new(2, 2, pmf.clone(), lambda.clone(), c.clone(), r.clone(), p.clone(), tables).unwrap()));
            }
            let tables = random_tables::<Exact>(3, 8, 10, 10, StreamId::new(78, s as u64));
            games.push((1, FiniteGame::new(3, 2, pmf.clone(), lambda.clone(), c.clone(), r.clone(), p.clone(), tables).unwrap()));
        }
    }
    let bound = lemma1_bound(&r, &c);
    let failures: Vec<String> = games
        .par_iter()
        .enumerate()
        .filter_map(|(i, (d, game))| {
            assert!(game.f1() < bound);
            let rules = OffPath::family(game.max_count());
            let family = enumerate_family(game, *d, &q(1, 1_000_000_000_000), &rules).unwrap();
            for certs in &family {
                for cert in certs {
                    if forward(game, &cert.profile()).0 || cert.informative {
                        return Some(format!("game {i}: on-path work"));
                    }
                }
            }
            None
        })
        .collect();
    let ok = verdict(
        2,
        failures.is_empty(),
        start.elapsed(),
        Duration::from_secs(60),
        &format!("{} games with F^1 < c/R, no on-path work{}", games.len(), first(&failures)),
    );
    assert!(ok);
}

#[test]
fn criterion_3_designed_scheme() {
    let start = Instant::now();
    let grid = reference_grid();
    let ep = exit_probabilities(&grid);
    let oracle = GridOracle::new(q(1, 2), 2, 2, q(3, 4));
    let big_q = q(4, 1);
    let scheme = design_scheme(&grid, &ep, big_q.clone()).unwrap();
    let mut ok = grid.points() == oracle.points.as_slice();
    let mut required = Vec::new();
    for k in 1..=grid.interior() {
        let (rh, rl, fabrication, work) = oracle.designed(&big_q, k);
        ok &= scheme.reward_high[k] == rh && scheme.reward_low[k] == rl;
        ok &= fabrication == q(0, 1) && scheme.shirk_payoff(k).unwrap() == fabrication;
        ok &= work == big_q.clone() / q(4, 1) && scheme.work_payoff(k).unwrap() == work;
        required.push(q(1, 1) / (work / big_q.clone()));
    }
    let q_star = required.iter().cloned().reduce(Exact::max_of).unwrap();
    let expected_binding: Vec<usize> = (1..=grid.interior()).filter(|&k| required[k - 1] == q_star).collect();
    let params = GameParams::new(q(10, 1), q(10, 1), q(1, 1), q(1, 1)).unwrap();
    let m = minimal_q(&grid, &ep, &params, &q(1, 1)).unwrap();
    ok &= q_star == q(4, 1) && m.q == q_star && m.binding == expected_binding;
    let ic = verify_ic(&m.scheme, &params, &q(1, 1));
    ok &= ic.feasible && ic.points.iter().all(|p| p.min_margin() >= q(0, 1));
    ok &= ic.binding_points() == expected_binding;
    ok &= ic.points.iter().filter(|p| expected_binding.contains(&p.k)).all(|p| p.min_margin() == q(0, 1));
    let ok = verdict(
        3,
        ok,
        start.elapsed(),
        Duration::from_secs(5),
        &format!("fabrication 0, work Q/4, Q* = {}, binding {:?}, min IC margin {}", m.q, ic.binding_points(), ic.min_margin()),
    );
    assert!(ok);
}

#[test]
fn criterion_4_exit_identities() {
    let start = Instant::now();
    let mut checked = 0;
    let mut ok = true;
    for pi in [q(3, 4), q(2, 3), q(3, 5)] {
        for p0 in [q(1, 2), q(1, 3)] {
            for n in 1..=20 {
                let grid = BeliefGrid::with_interior(p0.clone(), n, pi.clone()).unwrap();
                let ep = exit_probabilities(&grid);
                let top = grid.top();
                let span = grid.point(top).clone() - grid.point(0).clone();
                for k in 0..=top {
                    let expected = (grid.point(k).clone() - grid.point(0).clone()) / span.clone();
                    ok &= ep.pi_mixed(grid.point(k), k) == expected;
                    ok &= ep.high[k] == ruin(k, top, &pi) && ep.low[k] == ruin(k, top, &(q(1, 1) - pi.clone()));
                }
                for k in 1..=n {
                    let (up, down) = cheat_gaps(&grid, &ep, k);
                    ok &= if k == n { up == q(0, 1) } else { up > q(0, 1) };
                    ok &= if k == 1 { down == q(0, 1) } else { down > q(0, 1) };
                }
                checked += 1;
            }
        }
    }
    let ok = verdict(
        4,
        ok,
        start.elapsed(),
        Duration::from_secs(5),
        &format!("{checked} grids with N <= 20: optional stopping exact, cheat gaps strict inside, zero at boundaries"),
    );
    assert!(ok);
}

#[test]
fn criterion_5_bayes_update() {
    let start = Instant::now();
    let strats = strategies(4);
    let supplies: Vec<Vec<Exact>> = (1..=4).flat_map(|k| pmfs(k, 4)).collect();
    let lambdas = [q(1, 2), q(1, 1)];
    let cases: Vec<(&Vec<Exact>, &Exact)> = supplies.iter().flat_map(|p| lambdas.iter().map(move |l| (p, l))).collect();
    let (updates, failures): (usize, Vec<String>) = cases
        .par_iter()
        .map(|(pmf, lambda)| {
            let b = SurvivalBelief::from_supply(&SupplySpec::pmf(pmf.to_vec()).unwrap());
            let kmax = pmf.len() - 1;
            let mut n = 0;
            let mut bad = Vec::new();
            for s in &strats {
                for m in 0..2 {
                    let (total, post) = joint_update(pmf, s, lambda, m);
                    match update_survival(&b, s, m, lambda) {
                        Ok(next) => {
                            n += 1;
                            for k in 1..=kmax + 1 {
                                if next.f(k) * total.clone() != tail(&post, k) {
                                    bad.push(format!("{pmf:?} {s:?} m={m} k={k}"));
                                }
                            }
                        }
                        Err(_) if total == q(0, 1) => {}
                        Err(_) => bad.push(format!("{pmf:?} {s:?} m={m}: rejected on path")),
                    }
                }
                for k in 1..=kmax {
                    let after = expected_next_survival(&b, s, lambda, k);
                    let brute = (0..2).fold(q(0, 1), |a, m| a + tail(&joint_update(pmf, s, lambda, m).1, k));
                    if after != brute || after > b.f(k) {
                        bad.push(format!("{pmf:?} {s:?} k={k}: supermartingale"));
                    }
                }
                if s.gamma == q(0, 1) {
                    for m in 0..2 {
                        if let Ok(next) = update_survival(&b, s, m, lambda) {
                            if (1..=kmax + 1).any(|k| next.f(k) != b.f(k)) {
                                bad.push(format!("{pmf:?} {s:?}: moved without work"));
                            }
                        }
                    }
                }
            }
            (n, bad)
        })
        .reduce(|| (0, Vec::new()), |a, b| (a.0 + b.0, a.1.into_iter().chain(b.1).collect()));
    let ok = verdict(
        5,
        failures.is_empty(),
        start.elapsed(),
        Duration::from_secs(120),
        &format!(
            "{updates} updates over {} supplies x {} strategies match joint enumeration{}",
            supplies.len(),
            strats.len(),
            first(&failures)
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_6_monte_carlo() {
    let start = Instant::now();
    let grid = reference_grid();
    let ep = exit_probabilities(&grid);
    let params = GameParams::new(q(10, 1), q(10, 1), q(1, 1), q(1, 1)).unwrap();
    let scheme = minimal_q(&grid, &ep, &params, &q(1, 1)).unwrap().scheme;
    let cfg = SimConfig::new(params, SupplySpec::unlimited(), SignalModel::new(q(1, 2), q(3, 4)).unwrap(), scheme);
    let (stats, _) = monte_carlo(&cfg, 100_000, 6).unwrap();
    let z = 3.0;
    let mut ok = stats.exit_top.covers(0.5, z) && stats.fabrication.covers(0.0, z) && stats.truncated == 0;
    ok &= stats.drift.iter().all(|d| d.drift.covers(0.0, z));
    let worst = stats.drift.iter().map(|d| (d.drift.mean / d.drift.se).abs()).fold(0.0, f64::max);
    let ok = verdict(
        6,
        ok,
        start.elapsed(),
        Duration::from_secs(120),
        &format!(
            "n=1e5: exit-top {:.4} (se {:.4}), fabrication {:.4} (se {:.4}), worst drift |t| {:.2}",
            stats.exit_top.mean, stats.exit_top.se, stats.fabrication.mean, stats.fabrication.se, worst
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_7_constants() {
    let start = Instant::now();
    let (r, c) = (q(10, 1), q(1, 1));
    let mut ok = lemma1_bound(&r, &c) == q(1, 10);
    ok &= c_lambda(&r, &c, &q(1, 1)) == q(20, 1) && c_lambda(&r, &c, &q(1, 2)) == q(80, 1);
    let pc = proof_constants(&GameParams::new(r.clone(), r.clone(), c.clone(), q(1, 1)).unwrap());
    // C = 2R/c, g = R/(lambda c), B = 8Cg, sqrt(G) = 128 (R/c)^3, eta = 1/sqrt(G)
    let sqrt_g = q(128_000, 1);
    let b = q(8 * 20 * 10, 1);
    let eta = q(1, 1) / sqrt_g.clone();
    let g_big = sqrt_g.clone() * sqrt_g.clone();
    let terms = [
        q(1, 1) / (q(2, 1) * eta.clone() * g_big.clone() * g_big.clone()),
        q(3, 1) / sqrt_g.clone(),
        q(2, 1) * b.clone() * eta.clone(),
        b.clone() / sqrt_g.clone(),
    ];
    let target = c.clone() / (q(4, 1) * r.clone());
    ok &= pc.sqrt_g == sqrt_g && pc.b == b && pc.terms == terms && pc.quarter_target == target;
    let strict = terms.iter().all(|t| *t < target);
    let worst = terms.iter().cloned().reduce(Exact::max_of).unwrap();
    let ok = verdict(
        7,
        ok && strict,
        start.elapsed(),
        Duration::from_secs(1),
        &format!(
            "constants match (sqrtG = {}, B = {}); largest term {} vs c/(4R) = {}, strict per-term bound {}",
            pc.sqrt_g,
            pc.b,
            worst,
            target,
            if strict { "holds" } else { "fails: 2 B eta equals c/(4R) exactly" }
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_8_witness_suite() {
    let start = Instant::now();
    let eps = 0.1;
    let bound = order_stat_bound(2, 1.0, eps);
    // |U - V| < eps for independent uniforms: one minus the two corner triangles
    let exact = 1.0 - (1.0 - eps) * (1.0 - eps);
    let mc = collision_frequency(&ShockDensity::Uniform { lo: 0.0, hi: 1.0 }, 2, eps, 1_000_000, 8);
    let mut ok = (bound - 0.2).abs() < 1e-15 && (exact - 0.19).abs() < 1e-15 && exact <= bound && mc.covers(exact, 3.0);

    let f: f64 = witness_threshold(2, 1.0, 10.0).unwrap();
    let residual = f * f - 82.0 * f + 1.0;
    let root = 41.0 - 1680f64.sqrt();
    ok &= residual.abs() < 1e-12 && (f - root).abs() < 1e-12 && (f - 0.012195).abs() < 5e-6;
    ok &= (contraction_coefficient(f, 2, 1.0, 10.0) - 1.0).abs() < 1e-9;

    let mut ihr_specs = 0;
    for kmax in 1..=4 {
        for pmf in pmfs(kmax, 4) {
            let hazards: Vec<Exact> = (0..kmax).map(|k| pmf[k].clone() / tail(&pmf, k)).collect();
            if hazards.windows(2).any(|w| w[1] < w[0]) {
                continue;
            }
            ihr_specs += 1;
            let spec = SupplySpec::pmf(pmf.clone()).unwrap();
            for lambda in [q(1, 2), q(1, 1)] {
                let rep = ihr_monotonicity_check(&spec, &lambda, 4);
                ok &= rep.part_i && rep.part_ii;
            }
            // hat survival Pr(K >= k + j | K >= j) never rises with j
            for k in 1..=4 {
                for j in 0..kmax {
                    let hat = |j: usize| tail(&pmf, k + j) / tail(&pmf, j);
                    ok &= hat(j + 1) <= hat(j);
                }
            }
        }
    }
    let geo = ihr_monotonicity_check(&SupplySpec::geometric(q(4, 5), q(1, 2)).unwrap(), &q(1, 2), 4);
    ok &= geo.part_i && geo.part_ii;
    let mut w = vec![q(0, 1); 6];
    w[0] = q(1, 2);
    w[5] = q(1, 2);
    let counter = ihr_monotonicity_check(&SupplySpec::pmf(w).unwrap(), &q(1, 2), 4);
    ok &= !counter.part_ii;
    let ok = verdict(
        8,
        ok,
        start.elapsed(),
        Duration::from_secs(120),
        &format!(
            "collision 0.19 <= 0.2 (MC {:.4} se {:.4}); threshold {f:.6} residual {residual:.1e}; {ihr_specs} IHR supplies pass, counterexample fails part ii",
            mc.mean, mc.se
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_9_kappa_scaling() {
    let start = Instant::now();
    let grid = reference_grid();
    let ep = exit_probabilities(&grid);
    let params = GameParams::new(q(20, 1), q(10, 1), q(1, 1), q(1, 2)).unwrap();
    let m = minimal_q(&grid, &ep, &params, &q(1, 1)).unwrap();
    // work payoff per unit Q is 1/4 at every point; discovery halves it
    let oracle = GridOracle::new(q(1, 2), 2, 2, q(3, 4));
    let expected = (1..=grid.interior())
        .map(|k| q(1, 1) / (q(1, 2) * oracle.designed(&q(1, 1), k).3))
        .reduce(Exact::max_of)
        .unwrap();
    let mut ok = m.q == expected && m.q == q(8, 1);
    let ic = verify_ic(&m.scheme, &params, &q(1, 2));
    ok &= ic.feasible && ic.min_margin() == q(0, 1);
    for n in 1..=8 {
        let g = BeliefGrid::with_interior(q(2, 5), n, q(4, 5)).unwrap();
        ok &= exit_probabilities_kappa(&g, q(1, 1)).unwrap() == exit_probabilities(&g);
    }
    let ok = verdict(
        9,
        ok,
        start.elapsed(),
        Duration::from_secs(5),
        &format!("lambda = 1/2 gives Q* = {} (oracle {expected}); kappa = 1 matches the plain walk", m.q),
    );
    assert!(ok);
}
