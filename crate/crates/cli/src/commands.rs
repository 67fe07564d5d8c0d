//! One function per subcommand. Each returns a JSON summary for the consolidated report and
//! pushes its files into [`Artifacts`]; nothing here touches the filesystem.

use attrition_core::beliefs::SurvivalBelief;
use attrition_core::designer::{continuation_kappa, design_scheme, discovery_probability, minimal_q, required_q, CompensationScheme, DesignError, WorkReading};
use attrition_core::grid::{exit_probabilities, exit_probabilities_kappa, BeliefGrid};
use attrition_core::oracle::{
    bound_checks, corner_tables, dominance_scan, enumerate_family, random_tables, EnumerationOptions, EquilibriumCertificate,
    FiniteGame,
};
use attrition_core::rng::StreamId;
use attrition_core::scalar::{literal, Scalar};
use attrition_core::sim::{monte_carlo, transcripts_csv, Estimate, SimConfig};
use attrition_core::supply::{SignalModel, SupplyKind};
use attrition_core::thresholds::{attrition_certificate, proof_constants, witness_threshold, GameParams};
use attrition_core::witness::{
    collision_frequency, contraction_coefficient, ihr_monotonicity_check, informative_bound, informative_frequency, order_stat_bound,
};
use attrition_core::Exact;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{Experiment, GridSettings, OracleSettings, TableSource};

pub const SCHEMA_VERSION: u32 = 1;

/// Monte Carlo checks pass when the target lies within this many standard errors.
const Z: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Problem {
    pub kind: String,
    pub field: Option<String>,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct Artifacts {
    /// Relative path and contents, in emission order.
    pub files: Vec<(String, Vec<u8>)>,
    /// Verification failures (exit 2).
    pub failures: Vec<Problem>,
    /// Invalid input discovered only while running (exit 1).
    pub invalid: Vec<Problem>,
}

impl Artifacts {
    pub fn put(&mut self, name: &str, body: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), body.into()));
    }

    pub fn put_json(&mut self, name: &str, value: &Value) {
        self.put(name, to_json(value));
    }

    fn fail(&mut self, kind: &str, message: impl Into<String>) {
        self.failures.push(Problem { kind: kind.into(), field: None, message: message.into() });
    }

    fn invalid(&mut self, field: &str, message: impl Into<String>) {
        self.invalid.push(Problem { kind: "invalid-config".into(), field: Some(field.into()), message: message.into() });
    }
}

pub fn to_json(value: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("JSON values serialize");
    s.push('\n');
    s.into_bytes()
}

fn lit(x: &Exact) -> String {
    literal(x)
}

fn lits(xs: &[Exact]) -> Vec<String> {
    xs.iter().map(lit).collect()
}

fn csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("fields are UTF-8")
}

fn params_json(p: &GameParams<Exact>) -> Value {
    json!({"reward": lit(&p.reward), "punishment": lit(&p.punishment), "cost": lit(&p.cost), "lambda": lit(&p.lambda)})
}

fn estimate_json(e: &Estimate) -> Value {
    json!({"mean": e.mean, "se": e.se, "n": e.n})
}

// ---------------------------------------------------------------- thresholds

pub fn thresholds(exp: &Experiment, art: &mut Artifacts) -> Value {
    let p = &exp.params;
    let pc = proof_constants(p);
    let cmp: Vec<&str> = pc
        .term_vs_target
        .iter()
        .map(|o| match o {
            std::cmp::Ordering::Less => "less",
            std::cmp::Ordering::Equal => "equal",
            std::cmp::Ordering::Greater => "greater",
        })
        .collect();
    let certificate = serde_json::to_value(attrition_certificate(&exp.supply, p)).expect("certificate serializes");
    let witness = exp.witness.as_ref().map(|w| {
        let fbar = w.spec.fbar();
        match witness_threshold(w.spec.messages(), fbar, w.reward) {
            Ok(f) => json!({
                "messages": w.spec.messages(),
                "fbar": fbar,
                "reward": w.reward,
                "threshold": f,
                "contraction_at_threshold": contraction_coefficient(f, w.spec.messages(), fbar, w.reward),
            }),
            Err(e) => json!({"error": e.to_string()}),
        }
    });
    let value = json!({
        "schema_version": SCHEMA_VERSION,
        "params": params_json(p),
        "lemma1_bound": lit(&p.lemma1_bound()),
        "c_lambda": lit(&p.c_lambda()),
        "proof_constants": {
            "C": lit(&pc.c),
            "g": lit(&pc.g),
            "B": lit(&pc.b),
            "sqrt_G": lit(&pc.sqrt_g),
            "G": lit(&pc.g_big),
            "eta": lit(&pc.eta),
            "terms": lits(&pc.terms),
            "quarter_target": lit(&pc.quarter_target),
            "term_vs_target": cmp,
            "inequality_holds": pc.inequality_holds,
        },
        "certificate": certificate,
        "witness_threshold": witness,
    });
    art.put_json("thresholds.json", &value);
    value
}

// ---------------------------------------------------------------------- grid

pub const GRID_COLUMNS: [&str; 3] = ["point", "hH", "hL"];

pub fn grid_csv(grid: &BeliefGrid<Exact>) -> String {
    let ep = exit_probabilities(grid);
    let rows: Vec<Vec<String>> = (0..=grid.top()).map(|k| vec![lit(grid.point(k)), lit(&ep.high[k]), lit(&ep.low[k])]).collect();
    csv(&GRID_COLUMNS, &rows)
}

pub fn grid(settings: &GridSettings, art: &mut Artifacts) -> Option<Value> {
    match settings.build() {
        Ok(g) => {
            art.put("grid.csv", grid_csv(&g));
            Some(json!({"points": lits(g.points()), "prior_index": g.prior_index(), "interior": g.interior()}))
        }
        Err(e) => {
            art.invalid("grid", e.to_string());
            None
        }
    }
}

// -------------------------------------------------------------------- design

pub const SCHEME_COLUMNS: [&str; 6] = ["k", "q", "RH", "RL", "Q", "margin"];

pub struct Designed {
    pub scheme: CompensationScheme<Exact>,
    pub summary: Value,
}

pub fn design(exp: &Experiment, art: &mut Artifacts) -> Option<Designed> {
    let Some(settings) = &exp.grid else {
        art.invalid("grid", "design needs [signal] and [grid] sections");
        return None;
    };
    let grid = match settings.build() {
        Ok(g) => g,
        Err(e) => {
            art.invalid("grid", e.to_string());
            return None;
        }
    };
    let p = &exp.params;
    let kappa = continuation_kappa(&p.lambda, &exp.rho);
    let discovery = discovery_probability(&p.lambda, &exp.rho);
    let ep = match exit_probabilities_kappa(&grid, kappa.clone()) {
        Ok(ep) => ep,
        Err(e) => {
            art.invalid("grid", e.to_string());
            return None;
        }
    };
    let one = Exact::from_ratio(1, 1);
    let empty = discovery != one || kappa != one;
    let (scheme, source, required, binding) = match &exp.q {
        Some(q) => match design_scheme(&grid, &ep, q.clone()) {
            Ok(s) => (s.with_empty_report(empty), "config", None, None),
            Err(e) => {
                art.fail("design", e.to_string());
                return None;
            }
        },
        None => match minimal_q(&grid, &ep, p, &exp.rho) {
            Ok(m) => (m.scheme, "auto", Some(m.required), Some(m.binding)),
            Err(DesignError::Infeasible(v)) => {
                art.fail("design", format!("minimal Q breaks the payoff box: {} needs {} but the limit is {}", v.bound, v.required, v.limit));
                // still emit the unconstrained scheme so the violation can be inspected
                match required_q(&grid, &ep, &p.cost, &discovery) {
                    Ok(m) => (m.scheme, "auto", Some(m.required), Some(m.binding)),
                    Err(e) => {
                        art.fail("design", e.to_string());
                        return None;
                    }
                }
            }
            Err(e) => {
                art.fail("design", e.to_string());
                return None;
            }
        },
    };
    let ic = attrition_core::designer::verify_ic(&scheme, p, &discovery);
    let zero = Exact::from_ratio(0, 1);
    if !ic.feasible {
        let why = match &ic.box_violation {
            Some(v) => format!("{} needs {} but the limit is {}", v.bound, v.required, v.limit),
            None => format!("negative deviation margin {}", lit(&ic.min_margin())),
        };
        if !art.failures.iter().any(|f| f.kind == "design") {
            art.fail("design", format!("scheme is not incentive compatible: {why}"));
        }
    }
    let rows: Vec<Vec<String>> = ic
        .points
        .iter()
        .map(|pt| {
            let k = pt.k;
            vec![k.to_string(), lit(grid.point(k)), lit(&scheme.reward_high[k]), lit(&scheme.reward_low[k]), lit(&scheme.punishment), lit(&pt.min_margin())]
        })
        .collect();
    art.put("scheme.csv", csv(&SCHEME_COLUMNS, &rows));
    let reading = exp.reading;
    let points: Vec<Value> = ic
        .points
        .iter()
        .map(|pt| {
            let k = pt.k;
            let work = scheme.work_payoff_with(k, reading).map(|x| lit(&x)).ok();
            let shirk = scheme.shirk_payoff(k).map(|x| lit(&x)).ok();
            let deviations: Vec<Value> = pt
                .deviations
                .iter()
                .map(|d| json!({"deviation": d.deviation.label(), "payoff": lit(&d.payoff), "margin": lit(&d.margin)}))
                .collect();
            json!({
                "k": k,
                "q": lit(grid.point(k)),
                "truthful": lit(&pt.truthful),
                "work_payoff": work,
                "fabrication_payoff": shirk,
                "min_margin": lit(&pt.min_margin()),
                "binding": pt.min_margin() == zero,
                "deviations": deviations,
            })
        })
        .collect();
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "params": params_json(p),
        "grid": lits(grid.points()),
        "kappa": lit(&kappa),
        "discovery": lit(&discovery),
        "Q": lit(&scheme.punishment),
        "Q_source": source,
        "required": required.as_deref().map(lits),
        "binding": ic.binding_points(),
        "binding_requirement": binding,
        "reading": match reading { WorkReading::Consistent => "consistent", WorkReading::AsPrinted => "as-printed" },
        "empty_report": scheme.empty_report,
        "max_reward": lit(&scheme.max_reward()),
        "box_violation": ic.box_violation.as_ref().map(|v| json!({"bound": v.bound, "required": v.required, "limit": v.limit})),
        "feasible": ic.feasible,
        "min_margin": lit(&ic.min_margin()),
        "points": points,
    });
    art.put_json("design.json", &summary);
    Some(Designed { scheme, summary })
}

// ------------------------------------------------------------------ simulate

fn signal_model(exp: &Experiment) -> Option<SignalModel<Exact>> {
    exp.signal.clone()
}

pub fn simulate(exp: &Experiment, scheme: Option<&CompensationScheme<Exact>>, n: usize, seed: u64, art: &mut Artifacts) -> Value {
    let (Some(scheme), Some(model)) = (scheme, signal_model(exp)) else {
        art.invalid("simulation", "simulate needs a designed scheme and a [signal] section");
        return empty_stats(seed);
    };
    let mut cfg = SimConfig::new(exp.params.clone(), exp.supply.clone(), model, scheme.clone());
    cfg.horizon = exp.horizon;
    let (stats, transcripts) = match monte_carlo(&cfg, n, seed) {
        Ok(r) => r,
        Err(e) => {
            art.fail("simulate", e.to_string());
            return empty_stats(seed);
        }
    };
    let reconciled = transcripts.iter().all(|t| t.reconciles(scheme));
    if !reconciled {
        art.fail("simulate", "a transcript's payments disagree with the scheme");
    }
    art.put("transcripts.csv", transcripts_csv(&transcripts));
    let drift: Vec<Value> = stats.drift.iter().map(|d| json!({"k": d.k, "belief": d.belief, "drift": estimate_json(&d.drift)})).collect();
    let value = json!({
        "schema_version": SCHEMA_VERSION,
        "seed": seed,
        "episodes": stats.episodes,
        "horizon": exp.horizon,
        "stops_on_empty": cfg.stops_on_empty(),
        "exit_top": estimate_json(&stats.exit_top),
        "exit_bottom": estimate_json(&stats.exit_bottom),
        "stopped": estimate_json(&stats.stopped),
        "truncated": stats.truncated,
        "rounds": estimate_json(&stats.rounds),
        "first_agent": estimate_json(&stats.first_agent),
        "per_agent": estimate_json(&stats.per_agent),
        "fabrication": estimate_json(&stats.fabrication),
        "drift": drift,
        "reconciled": reconciled,
    });
    art.put_json("stats.json", &value);
    value
}

/// Stats document with every field present and null.
pub fn empty_stats(seed: u64) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "seed": seed,
        "episodes": 0,
        "horizon": null,
        "stops_on_empty": null,
        "exit_top": null,
        "exit_bottom": null,
        "stopped": null,
        "truncated": null,
        "rounds": null,
        "first_agent": null,
        "per_agent": null,
        "fabrication": null,
        "drift": null,
        "reconciled": null,
    })
}

// -------------------------------------------------------------------- oracle

fn to_int(x: &Exact, what: &str) -> Result<i64, String> {
    if x.is_integer() {
        x.to_integer().try_into().map_err(|_| format!("{what} is too large for random tables"))
    } else {
        Err(format!("random tables need an integer {what}"))
    }
}

pub fn oracle_games(settings: &OracleSettings, p: &GameParams<Exact>) -> Result<Vec<(String, FiniteGame<Exact>)>, String> {
    let cells = settings.messages.pow(settings.horizon as u32);
    let tables: Vec<(String, Vec<Vec<Exact>>)> = match &settings.tables {
        TableSource::Random(n) => {
            let (r, pu) = (to_int(&p.reward, "reward")?, to_int(&p.punishment, "punishment")?);
            (0..*n).map(|i| (format!("random-{i}"), random_tables(settings.horizon, cells, r, pu, StreamId::new(settings.seed, i as u64)))).collect()
        }
        TableSource::Corners => {
            if settings.horizon != 2 || settings.messages != 2 {
                return Err("corner tables need horizon 2 and 2 messages".into());
            }
            corner_tables(&p.reward, &p.punishment).into_iter().enumerate().map(|(i, t)| (format!("corner-{i}"), t)).collect()
        }
        TableSource::Explicit(games) => games.iter().cloned().enumerate().map(|(i, t)| (format!("explicit-{i}"), t)).collect(),
    };
    tables
        .into_iter()
        .map(|(name, t)| {
            FiniteGame::new(
                settings.horizon,
                settings.messages,
                settings.pmf.clone(),
                settings.lambda.clone(),
                p.cost.clone(),
                p.reward.clone(),
                p.punishment.clone(),
                t,
            )
            .map(|g| (name, g))
            .map_err(|e| e.to_string())
        })
        .collect()
}

fn certificate_json(c: &EquilibriumCertificate<Exact>, bounds_hold: bool) -> Value {
    let strategies: Vec<Value> = c
        .strategies
        .iter()
        .map(|((agent, history), s)| {
            json!({
                "agent": agent,
                "history": history,
                "gamma": lit(&s.gamma),
                "shirk_report": lits(&s.shirk_report),
                "found_report": lits(&s.found_report),
                "empty_report": lits(&s.empty_report),
            })
        })
        .collect();
    json!({
        "informative": c.informative,
        "max_gain": lit(&c.max_gain),
        "payoffs": lits(&c.payoffs),
        "bounds_hold": bounds_hold,
        "strategies": strategies,
    })
}

struct GameResult {
    value: Value,
    failures: Vec<String>,
    error: Option<String>,
}

fn run_game(name: &str, game: &FiniteGame<Exact>, settings: &OracleSettings, inject: bool) -> GameResult {
    let mut failures = Vec::new();
    let dominance = match dominance_scan(game) {
        Ok(d) => d,
        Err(e) => return GameResult { value: Value::Null, failures, error: Some(e.to_string()) },
    };
    let f1 = game.f1();
    let below = f1 < game.cost.clone() / game.reward.clone();
    let mut runs = Vec::new();
    let mut informative_total = 0usize;
    let family = match enumerate_family(game, settings.denominator, &EnumerationOptions::<Exact>::default().mixed_tolerance, &settings.off_path) {
        Ok(f) => f,
        Err(e) => return GameResult { value: Value::Null, failures, error: Some(e.to_string()) },
    };
    for (j, (off, certs)) in settings.off_path.iter().zip(family).enumerate() {
        let mut entries = Vec::with_capacity(certs.len());
        for (i, c) in certs.iter().enumerate() {
            let mut c = c.clone();
            if inject && j == 0 && i == 0 {
                c.informative = true;
            }
            let holds = match bound_checks(game, &c.profile()) {
                Ok(b) => b.holds,
                Err(e) => return GameResult { value: Value::Null, failures, error: Some(e.to_string()) },
            };
            if !holds {
                failures.push(format!("{name}: bound check fails for an equilibrium under {}", off.label()));
            }
            if c.informative {
                informative_total += 1;
                if dominance.certified {
                    failures.push(format!("{name}: informative equilibrium under {} although work is strictly dominated", off.label()));
                }
                if below {
                    failures.push(format!("{name}: informative equilibrium under {} although F^1 < c/R", off.label()));
                }
            }
            entries.push(certificate_json(&c, holds));
        }
        runs.push(json!({"off_path": off.label(), "count": entries.len(), "certificates": entries}));
    }
    let margin_ok = dominance.certified && dominance.min_margin >= game.cost;
    let value = json!({
        "game": name,
        "pmf": lits(&game.pmf),
        "tables": game.tables.iter().map(|t| lits(t)).collect::<Vec<_>>(),
        "f1": lit(&f1),
        "below_work_threshold": below,
        "dominance": {
            "margins": lits(&dominance.margins),
            "min_margin": lit(&dominance.min_margin),
            "certified": dominance.certified,
            "indifferent": dominance.indifferent,
            "margin_at_least_cost": margin_ok,
        },
        "informative_certificates": informative_total,
        "enumerations": runs,
    });
    GameResult { value, failures, error: None }
}

pub fn oracle(exp: &Experiment, inject: bool, art: &mut Artifacts) -> Value {
    let Some(settings) = &exp.oracle else {
        art.invalid("oracle", "oracle needs an [oracle] section");
        return Value::Null;
    };
    let games = match oracle_games(settings, &exp.params) {
        Ok(g) => g,
        Err(e) => {
            art.invalid("oracle", e);
            return Value::Null;
        }
    };
    let results: Vec<GameResult> = games.par_iter().enumerate().map(|(i, (name, g))| run_game(name, g, settings, inject && i == 0)).collect();
    let mut values = Vec::with_capacity(results.len());
    for r in results {
        if let Some(e) = r.error {
            art.invalid("oracle", e);
            return Value::Null;
        }
        for f in r.failures {
            art.fail("oracle", f);
        }
        values.push(r.value);
    }
    let informative = values.iter().map(|v| v["informative_certificates"].as_u64().unwrap_or(0)).sum::<u64>();
    let certified = values.iter().filter(|v| v["dominance"]["certified"] == Value::Bool(true)).count();
    let value = json!({
        "schema_version": SCHEMA_VERSION,
        "params": params_json(&exp.params),
        "horizon": settings.horizon,
        "messages": settings.messages,
        "denominator": settings.denominator,
        "off_path": settings.off_path.iter().map(|o| o.label()).collect::<Vec<_>>(),
        "games": values.len(),
        "dominance_certified": certified,
        "informative_certificates": informative,
        "results": values,
    });
    art.put_json("certificates.json", &value);
    let mut summary = value.clone();
    summary.as_object_mut().expect("object").remove("results");
    summary
}

// ------------------------------------------------------------------- witness

pub const WITNESS_COLUMNS: [&str; 6] = ["check", "target", "value", "se", "bound", "holds"];

pub fn witness(exp: &Experiment, art: &mut Artifacts) -> Value {
    let Some(w) = &exp.witness else {
        art.invalid("witness", "witness needs a [witness] section");
        return Value::Null;
    };
    let mut rows = Vec::new();
    let mut push = |art: &mut Artifacts, check: &str, target: String, value: f64, se: f64, bound: f64, holds: bool| {
        if !holds {
            art.fail("witness", format!("{check} {target}: {value} exceeds {bound}"));
        }
        rows.push(vec![check.to_string(), target, format!("{value:?}"), format!("{se:?}"), format!("{bound:?}"), holds.to_string()]);
    };
    for (m, density) in w.spec.shocks.iter().enumerate() {
        let bound = order_stat_bound(w.order, density.fbar(), w.eps);
        let est = collision_frequency(density, w.order, w.eps, w.samples, w.seed.wrapping_add(1 + m as u64));
        push(art, "collision", format!("message-{m}"), est.mean, est.se, bound, est.mean - Z * est.se <= bound);
    }
    let belief: SurvivalBelief<Exact> = SurvivalBelief::from_supply(&exp.supply);
    let pair_bound = informative_bound(&w.spec, &w.z, w.reward);
    match informative_frequency(&w.spec, &belief, &w.z, w.reward, w.samples, w.seed) {
        Ok(est) => push(art, "informative", "witness".into(), est.mean, est.se, pair_bound, est.mean - Z * est.se <= pair_bound),
        Err(e) => art.fail("witness", e.to_string()),
    }
    let fbar = w.spec.fbar();
    let threshold = witness_threshold(w.spec.messages(), fbar, w.reward).ok();
    if let Some(f) = threshold {
        let contraction = contraction_coefficient(f, w.spec.messages(), fbar, w.reward);
        push(art, "threshold", "contraction".into(), contraction, 0.0, 1.0, (contraction - 1.0).abs() < 1e-9);
        if let Some(sf) = w.supply_f {
            // below the threshold the witness-only continuation must contract
            let at_f = contraction_coefficient(sf, w.spec.messages(), fbar, w.reward);
            push(art, "contraction", format!("F={sf:?}"), at_f, 0.0, 1.0, sf >= f || at_f < 1.0);
        }
    }
    let ihr = match exp.supply.kind() {
        SupplyKind::Unlimited => None,
        _ => {
            let report = ihr_monotonicity_check(&exp.supply, &exp.params.lambda, 4);
            let is_ihr = exp.supply.check_ihr(false).holds;
            if is_ihr && !(report.part_i && report.part_ii) {
                art.fail("witness", "survival monotonicity fails for an IHR supply");
            }
            Some((report, is_ihr))
        }
    };
    art.put("witness.csv", csv(&WITNESS_COLUMNS, &rows));
    let value = json!({
        "schema_version": SCHEMA_VERSION,
        "spec": serde_json::to_value(&w.spec).expect("spec serializes"),
        "fbar": fbar,
        "reward": w.reward,
        "z": w.z,
        "order": w.order,
        "eps": w.eps,
        "samples": w.samples,
        "seed": w.seed,
        "order_stat_bound": w.spec.shocks.iter().map(|d| order_stat_bound(w.order, d.fbar(), w.eps)).collect::<Vec<_>>(),
        "informative_bound": pair_bound,
        "threshold": threshold,
        "supply_ihr": ihr.as_ref().map(|(_, i)| *i),
        "monotonicity": ihr.as_ref().map(|(r, _)| serde_json::to_value(r).expect("report serializes")),
    });
    art.put_json("witness.json", &value);
    value
}

// ----------------------------------------------------------------------- all

pub const REPORT_COLUMNS: [&str; 3] = ["section", "key", "value"];

/// Joins the designed scheme with simulated fabrication payoffs at each interior point.
fn cross_link(exp: &Experiment, designed: &Designed, n: usize, seed: u64) -> Value {
    let Some(model) = signal_model(exp) else { return Value::Null };
    let mut cfg = SimConfig::new(exp.params.clone(), exp.supply.clone(), model, designed.scheme.clone());
    cfg.horizon = exp.horizon;
    let rows: Vec<Value> = designed.summary["points"]
        .as_array()
        .map(|pts| {
            pts.iter()
                .map(|pt| {
                    let k = pt["k"].as_u64().unwrap_or(0) as usize;
                    let dev = attrition_core::designer::Deviation::Shirk(attrition_core::designer::Report::H);
                    let est = attrition_core::sim::estimate_deviation(&cfg, k, dev, n, seed.wrapping_add(k as u64)).ok();
                    let designed_value = pt["fabrication_payoff"].clone();
                    let target = designed_value.as_str().and_then(|s| Exact::parse_literal(s).ok()).map(|x| x.to_f64());
                    json!({
                        "k": k,
                        "min_margin": pt["min_margin"],
                        "fabrication_designed": designed_value,
                        "fabrication_simulated": est.as_ref().map(estimate_json),
                        "within_3se": match (est, target) { (Some(e), Some(t)) => Some(e.covers(t, Z)), _ => None },
                    })
                })
                .collect()
        })
        .unwrap_or_default();
    json!({"Q": designed.summary["Q"], "points": rows})
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(map) => {
            for (k, x) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, x, out);
            }
        }
        Value::Array(xs) => {
            for (i, x) in xs.iter().enumerate() {
                flatten(&format!("{prefix}[{i}]"), x, out);
            }
        }
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        Value::Null => out.push((prefix.to_string(), String::new())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// Consolidated JSON plus a flat `section,key,value` CSV.
pub fn emit_report(sections: &[(&str, Value)], art: &mut Artifacts) {
    let mut report = serde_json::Map::new();
    report.insert("schema_version".into(), json!(SCHEMA_VERSION));
    let mut rows = Vec::new();
    for (name, v) in sections {
        report.insert((*name).into(), v.clone());
        let mut flat = Vec::new();
        flatten("", v, &mut flat);
        rows.extend(flat.into_iter().map(|(k, x)| vec![(*name).to_string(), k, x]));
    }
    art.put_json("report.json", &Value::Object(report));
    art.put("report.csv", csv(&REPORT_COLUMNS, &rows));
}

pub fn all(exp: &Experiment, n: usize, seed: u64, art: &mut Artifacts) {
    let mut sections: Vec<(&str, Value)> = vec![("thresholds", thresholds(exp, art))];
    if let Some(g) = &exp.grid {
        sections.push(("grid", grid(g, art).unwrap_or(Value::Null)));
    }
    let designed = if exp.grid.is_some() { design(exp, art) } else { None };
    if let Some(d) = &designed {
        let mut scheme = d.summary.clone();
        scheme.as_object_mut().expect("object").remove("points");
        sections.push(("scheme", scheme));
        let stats = if exp.signal.is_some() { simulate(exp, Some(&d.scheme), n, seed, art) } else { empty_stats(seed) };
        sections.push(("simulation", stats));
        sections.push(("cross_link", cross_link(exp, d, n, seed)));
    } else {
        sections.push(("simulation", empty_stats(seed)));
    }
    if exp.oracle.is_some() {
        sections.push(("oracle", oracle(exp, false, art)));
    }
    if exp.witness.is_some() {
        sections.push(("witness", witness(exp, art)));
    }
    emit_report(&sections, art);
}
