//! Experiment configuration: TOML on disk, exact rationals in memory.
//!
//! Numeric fields accept TOML numbers or strings holding `"1/3"`, `"0.75"` or `"2e-3"`.
//! Everything is validated here so the core never sees an inconsistent value.

use std::path::{Path, PathBuf};

use attrition_core::designer::WorkReading;
use attrition_core::grid::BeliefGrid;
use attrition_core::oracle::OffPath;
use attrition_core::scalar::Scalar;
use attrition_core::supply::{SignalModel, SupplySpec};
use attrition_core::thresholds::GameParams;
use attrition_core::witness::{ShockDensity, WitnessSpec};
use attrition_core::Exact;
use serde::Deserialize;

/// One validation failure, addressed by dotted field path.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, reason: impl ToString) -> Self {
        Self { field: field.into(), reason: reason.to_string() }
    }
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Lit {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Lit {
    fn exact(&self, field: &str) -> Result<Exact, ConfigError> {
        let text = match self {
            Lit::Int(i) => i.to_string(),
            // shortest round-trip decimal, then read exactly
            Lit::Float(x) => format!("{x:?}"),
            Lit::Text(s) => s.clone(),
        };
        Exact::parse_literal(&text).map_err(|e| ConfigError::new(field, e))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub game: RawGame,
    #[serde(default)]
    pub supply: RawSupply,
    pub signal: Option<RawSignal>,
    pub grid: Option<RawGrid>,
    #[serde(default)]
    pub scheme: RawScheme,
    #[serde(default)]
    pub simulation: RawSimulation,
    pub oracle: Option<RawOracle>,
    pub witness: Option<RawWitness>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGame {
    pub reward: Lit,
    pub punishment: Lit,
    pub cost: Lit,
    pub lambda: Lit,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSupply {
    pub kind: String,
    pub weights: Option<Vec<Lit>>,
    pub f1: Option<Lit>,
    pub rho: Option<Lit>,
}

impl Default for RawSupply {
    fn default() -> Self {
        Self { kind: "unlimited".into(), weights: None, f1: None, rho: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSignal {
    pub prior: Lit,
    pub precision: Lit,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGrid {
    pub p_lo: Lit,
    pub p_hi: Lit,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RawScheme {
    /// `"auto"` (minimal Q) or a literal.
    pub q: Option<Lit>,
    pub reading: Option<String>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RawSimulation {
    pub episodes: Option<usize>,
    pub seed: Option<u64>,
    pub horizon: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOracle {
    pub horizon: usize,
    pub messages: usize,
    pub pmf: Vec<Lit>,
    pub lambda: Option<Lit>,
    /// `"random:<n>"`, `"corners"`, `"file:<path>"`, or omitted when `table` is given.
    pub tables: Option<String>,
    /// Explicit tables, one per agent.
    pub table: Option<Vec<Vec<Lit>>>,
    pub denominator: Option<u32>,
    /// `"all"`, `"carry-forward"`, `"worst-case"`, or `"point-mass-<n>"`.
    pub off_path: Option<String>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawWitness {
    pub shocks: Vec<ShockDensity>,
    pub phi: Option<f64>,
    pub z: Option<Vec<f64>>,
    pub reward: Option<f64>,
    pub order: Option<usize>,
    pub eps: Option<f64>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub supply_f: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct GridSettings {
    pub p0: Exact,
    pub p_lo: Exact,
    pub p_hi: Exact,
    pub precision: Exact,
}

#[derive(Debug, Clone)]
pub enum TableSource {
    Random(usize),
    Corners,
    Explicit(Vec<Vec<Vec<Exact>>>),
}

#[derive(Debug, Clone)]
pub struct OracleSettings {
    pub horizon: usize,
    pub messages: usize,
    pub pmf: Vec<Exact>,
    pub lambda: Exact,
    pub tables: TableSource,
    pub denominator: u32,
    pub off_path: Vec<OffPath>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct WitnessSettings {
    pub spec: WitnessSpec,
    pub z: Vec<f64>,
    pub reward: f64,
    pub order: usize,
    pub eps: f64,
    pub samples: usize,
    pub seed: u64,
    /// Supply probability at which to evaluate the contraction coefficient.
    pub supply_f: Option<f64>,
}

/// Validated experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub params: GameParams<Exact>,
    pub supply: SupplySpec<Exact>,
    /// Ratio of the geometric tail, one otherwise.
    pub rho: Exact,
    pub signal: Option<SignalModel<Exact>>,
    pub grid: Option<GridSettings>,
    pub q: Option<Exact>,
    pub reading: WorkReading,
    pub episodes: usize,
    pub seed: u64,
    pub horizon: usize,
    pub oracle: Option<OracleSettings>,
    pub witness: Option<WitnessSettings>,
    pub base_dir: PathBuf,
}

fn get<T>(r: Result<T, ConfigError>, errs: &mut Vec<ConfigError>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            errs.push(e);
            None
        }
    }
}

pub fn parse_text(text: &str, base_dir: &Path) -> Result<Experiment, Vec<ConfigError>> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| vec![ConfigError::new("<config>", e.message())])?;
    validate(raw, base_dir)
}

pub fn load(path: &Path) -> Result<(Experiment, Vec<u8>), Vec<ConfigError>> {
    let bytes = std::fs::read(path).map_err(|e| vec![ConfigError::new("<config>", format!("cannot read {}: {e}", path.display()))])?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| vec![ConfigError::new("<config>", "not UTF-8")])?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((parse_text(&text, &base)?, bytes))
}

fn validate(raw: RawConfig, base_dir: &Path) -> Result<Experiment, Vec<ConfigError>> {
    let mut errs = Vec::new();
    let reward = get(raw.game.reward.exact("game.reward"), &mut errs);
    let punishment = get(raw.game.punishment.exact("game.punishment"), &mut errs);
    let cost = get(raw.game.cost.exact("game.cost"), &mut errs);
    let lambda = get(raw.game.lambda.exact("game.lambda"), &mut errs);
    let params = match (reward, punishment, cost, lambda) {
        (Some(r), Some(p), Some(c), Some(l)) => get(GameParams::new(r, p, c, l).map_err(|e| ConfigError::new("game", e)), &mut errs),
        _ => None,
    };

    let (supply, rho) = match raw.supply.kind.as_str() {
        "unlimited" => (Some(SupplySpec::unlimited()), Exact::from_ratio(1, 1)),
        "pmf" => {
            let weights: Option<Vec<Exact>> = match &raw.supply.weights {
                Some(ws) => ws.iter().enumerate().map(|(i, w)| get(w.exact(&format!("supply.weights[{i}]")), &mut errs)).collect(),
                None => {
                    errs.push(ConfigError::new("supply.weights", "required for kind = \"pmf\""));
                    None
                }
            };
            let spec = weights.and_then(|w| get(SupplySpec::pmf(w).map_err(|e| ConfigError::new("supply.weights", e)), &mut errs));
            (spec, Exact::from_ratio(1, 1))
        }
        "geometric" => {
            let f1 = raw.supply.f1.as_ref().map(|x| x.exact("supply.f1"));
            let rho = raw.supply.rho.as_ref().map(|x| x.exact("supply.rho"));
            match (f1, rho) {
                (Some(f1), Some(rho)) => {
                    let (f1, rho) = (get(f1, &mut errs), get(rho, &mut errs));
                    match (f1, rho) {
                        (Some(f1), Some(rho)) => {
                            let spec = get(SupplySpec::geometric(f1, rho.clone()).map_err(|e| ConfigError::new("supply", e)), &mut errs);
                            (spec, rho)
                        }
                        _ => (None, Exact::from_ratio(1, 1)),
                    }
                }
                _ => {
                    errs.push(ConfigError::new("supply", "kind = \"geometric\" needs f1 and rho"));
                    (None, Exact::from_ratio(1, 1))
                }
            }
        }
        other => {
            errs.push(ConfigError::new("supply.kind", format!("unknown kind `{other}` (unlimited, pmf, geometric)")));
            (None, Exact::from_ratio(1, 1))
        }
    };

    let signal = raw.signal.as_ref().and_then(|s| {
        let prior = get(s.prior.exact("signal.prior"), &mut errs)?;
        let precision = get(s.precision.exact("signal.precision"), &mut errs)?;
        get(SignalModel::new(prior, precision).map_err(|e| ConfigError::new("signal", e)), &mut errs)
    });

    let grid = match (&raw.grid, &signal) {
        (Some(g), Some(model)) => {
            let p_lo = get(g.p_lo.exact("grid.p_lo"), &mut errs);
            let p_hi = get(g.p_hi.exact("grid.p_hi"), &mut errs);
            match (p_lo, p_hi) {
                (Some(p_lo), Some(p_hi)) => {
                    let settings = GridSettings { p0: model.prior.clone(), p_lo, p_hi, precision: model.precision.clone() };
                    get(settings.build().map(|_| settings).map_err(|e| ConfigError::new("grid", e)), &mut errs)
                }
                _ => None,
            }
        }
        (Some(_), None) => {
            errs.push(ConfigError::new("grid", "a grid needs a [signal] section"));
            None
        }
        _ => None,
    };

    let q = match &raw.scheme.q {
        None => None,
        Some(Lit::Text(t)) if t == "auto" => None,
        Some(lit) => get(lit.exact("scheme.q"), &mut errs).and_then(|q| {
            if q <= Exact::from_ratio(0, 1) {
                errs.push(ConfigError::new("scheme.q", "must be positive"));
                None
            } else {
                Some(q)
            }
        }),
    };
    if let (Some(q), Some(p)) = (&q, &params) {
        if *q > p.punishment {
            errs.push(ConfigError::new("scheme.q", "exceeds the maximal punishment P"));
        }
    }
    let reading = match raw.scheme.reading.as_deref() {
        None | Some("consistent") => WorkReading::Consistent,
        Some("as-printed") => WorkReading::AsPrinted,
        Some(other) => {
            errs.push(ConfigError::new("scheme.reading", format!("unknown reading `{other}` (consistent, as-printed)")));
            WorkReading::Consistent
        }
    };

    let episodes = raw.simulation.episodes.unwrap_or(1000);
    if episodes == 0 {
        errs.push(ConfigError::new("simulation.episodes", "must be positive"));
    }
    let horizon = raw.simulation.horizon.unwrap_or(attrition_core::sim::DEFAULT_HORIZON);
    if horizon == 0 {
        errs.push(ConfigError::new("simulation.horizon", "must be positive"));
    }

    let oracle = raw.oracle.as_ref().and_then(|o| validate_oracle(o, params.as_ref(), base_dir, &mut errs));
    let witness = raw.witness.as_ref().and_then(|w| validate_witness(w, params.as_ref(), &mut errs));

    if !errs.is_empty() {
        return Err(errs);
    }
    Ok(Experiment {
        params: params.expect("validated"),
        supply: supply.expect("validated"),
        rho,
        signal,
        grid,
        q,
        reading,
        episodes,
        seed: raw.simulation.seed.unwrap_or(0),
        horizon,
        oracle,
        witness,
        base_dir: base_dir.to_path_buf(),
    })
}

impl GridSettings {
    pub fn build(&self) -> Result<BeliefGrid<Exact>, attrition_core::grid::GridError> {
        BeliefGrid::build(self.p0.clone(), self.p_lo.clone(), self.p_hi.clone(), self.precision.clone())
    }
}

fn parse_off_path(text: &str, kmax: usize) -> Option<Vec<OffPath>> {
    match text {
        "all" => Some(OffPath::family(kmax)),
        "carry-forward" => Some(vec![OffPath::CarryForward]),
        "worst-case" => Some(vec![OffPath::WorstCase]),
        _ => {
            let n: usize = text.strip_prefix("point-mass-")?.parse().ok()?;
            (n <= kmax).then_some(vec![OffPath::PointMass(n)])
        }
    }
}

pub fn parse_table_source(text: &str, base_dir: &Path) -> Result<TableSource, ConfigError> {
    if text == "corners" {
        return Ok(TableSource::Corners);
    }
    if let Some(n) = text.strip_prefix("random:") {
        return n
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(TableSource::Random)
            .ok_or_else(|| ConfigError::new("oracle.tables", "random:<n> needs a positive count"));
    }
    let path = text.strip_prefix("file:").unwrap_or(text);
    let path = base_dir.join(path);
    let body = std::fs::read_to_string(&path).map_err(|e| ConfigError::new("oracle.tables", format!("cannot read {}: {e}", path.display())))?;
    #[derive(Deserialize)]
    struct TableFile {
        games: Vec<Vec<Vec<Lit>>>,
    }
    let file: TableFile = toml::from_str(&body).map_err(|e| ConfigError::new("oracle.tables", e.message()))?;
    let games = file
        .games
        .iter()
        .map(|g| g.iter().map(|t| t.iter().map(|x| x.exact("oracle.tables")).collect::<Result<Vec<_>, _>>()).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TableSource::Explicit(games))
}

fn validate_oracle(o: &RawOracle, params: Option<&GameParams<Exact>>, base_dir: &Path, errs: &mut Vec<ConfigError>) -> Option<OracleSettings> {
    let before = errs.len();
    let pmf: Vec<Exact> = o.pmf.iter().enumerate().filter_map(|(i, w)| get(w.exact(&format!("oracle.pmf[{i}]")), errs)).collect();
    let lambda = match &o.lambda {
        Some(l) => get(l.exact("oracle.lambda"), errs),
        None => params.map(|p| p.lambda.clone()),
    };
    let tables = match (&o.tables, &o.table) {
        (Some(_), Some(_)) => {
            errs.push(ConfigError::new("oracle", "give either `tables` or `table`, not both"));
            None
        }
        (Some(src), None) => get(parse_table_source(src, base_dir), errs),
        (None, Some(t)) => {
            let parsed: Option<Vec<Vec<Exact>>> = t
                .iter()
                .enumerate()
                .map(|(i, row)| row.iter().map(|x| get(x.exact(&format!("oracle.table[{i}]")), errs)).collect::<Option<Vec<_>>>())
                .collect();
            parsed.map(|t| TableSource::Explicit(vec![t]))
        }
        (None, None) => Some(TableSource::Corners),
    };
    let kmax = o.pmf.len().saturating_sub(1);
    let off_path = match parse_off_path(o.off_path.as_deref().unwrap_or("all"), kmax) {
        Some(v) => Some(v),
        None => {
            errs.push(ConfigError::new("oracle.off_path", "expected all, carry-forward, worst-case or point-mass-<n>"));
            None
        }
    };
    let denominator = o.denominator.unwrap_or(4);
    if !matches!(denominator, 1 | 2 | 4 | 8) {
        errs.push(ConfigError::new("oracle.denominator", "probability step must be 1, 1/2, 1/4 or 1/8"));
    }
    if o.horizon == 0 || o.horizon > attrition_core::oracle::MAX_HORIZON {
        errs.push(ConfigError::new("oracle.horizon", "must be 1, 2 or 3"));
    }
    if !(2..=3).contains(&o.messages) {
        errs.push(ConfigError::new("oracle.messages", "must be 2 or 3"));
    }
    let settings = OracleSettings {
        horizon: o.horizon,
        messages: o.messages,
        pmf,
        lambda: lambda?,
        tables: tables?,
        denominator,
        off_path: off_path?,
        seed: o.seed.unwrap_or(0),
    };
    if errs.len() > before {
        return None;
    }
    // build every game once so table shapes and the pmf are checked at load time
    if let Some(p) = params {
        if let Err(e) = crate::commands::oracle_games(&settings, p) {
            errs.push(ConfigError::new("oracle", e));
            return None;
        }
    }
    Some(settings)
}

fn validate_witness(w: &RawWitness, params: Option<&GameParams<Exact>>, errs: &mut Vec<ConfigError>) -> Option<WitnessSettings> {
    let spec = match WitnessSpec::new(w.shocks.clone(), w.phi.unwrap_or(1.0)) {
        Ok(s) => s,
        Err(e) => {
            errs.push(ConfigError::new("witness.shocks", e));
            return None;
        }
    };
    let m = spec.messages();
    let z = w.z.clone().unwrap_or_else(|| vec![0.0; m]);
    if z.len() != m || z.iter().any(|x| !(0.0..=1.0).contains(x)) {
        errs.push(ConfigError::new("witness.z", "one probability per message"));
        return None;
    }
    let reward = w.reward.or_else(|| params.map(|p| p.reward.to_f64())).unwrap_or(1.0);
    let order = w.order.unwrap_or(2);
    let eps = w.eps.unwrap_or(0.1);
    let supply_f = w.supply_f;
    if reward <= 0.0 || order < 2 || !(eps >= 0.0) || supply_f.is_some_and(|f| !(0.0..1.0).contains(&f)) {
        errs.push(ConfigError::new("witness", "need reward > 0, order >= 2, eps >= 0 and supply_f in [0,1)"));
        return None;
    }
    Some(WitnessSettings { spec, z, reward, order, eps, samples: w.samples.unwrap_or(100_000), seed: w.seed.unwrap_or(0), supply_f })
}
