//! `attrition-lab`: batch driver for the attrition-core experiments.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use attrition_core::scalar::Scalar;
use attrition_core::Exact;
use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use commands::{Artifacts, Problem, SCHEMA_VERSION};
use config::{ConfigError, Experiment, GridSettings};

const ENV_PREFIX: &str = "ATTRITION_LAB_";

#[derive(Debug, Parser)]
#[command(name = "attrition-lab", version, about = "Mediated learning under information attrition: exact checks and simulations")]
struct Cli {
    /// Experiment file (TOML).
    #[arg(long, global = true, env = "ATTRITION_LAB_CONFIG")]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "ATTRITION_LAB_OUT", default_value = "attrition-out")]
    out: PathBuf,
    /// Base seed; replaces every seed in the config.
    #[arg(long, global = true, env = "ATTRITION_LAB_SEED")]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Does not change any output.
    #[arg(long, global = true, env = "ATTRITION_LAB_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form constants and the attrition certificate.
    Thresholds,
    /// Belief grid and exit probabilities.
    Grid {
        #[arg(long)]
        p0: Option<String>,
        #[arg(long)]
        plo: Option<String>,
        #[arg(long)]
        phi: Option<String>,
        /// Signal precision.
        #[arg(long)]
        pi: Option<String>,
    },
    /// Compensation scheme and incentive report.
    Design,
    /// Monte Carlo episodes under the designed scheme.
    Simulate {
        #[arg(long, env = "ATTRITION_LAB_N")]
        n: Option<usize>,
    },
    /// Equilibrium enumeration and dominance certificates on small games.
    Oracle {
        /// `random:<n>`, `corners`, or a TOML file with `games = [...]`.
        #[arg(long, env = "ATTRITION_LAB_TABLES")]
        tables: Option<String>,
        #[arg(long, hide = true)]
        inject_informative: bool,
    },
    /// Witness bound checks.
    Witness,
    /// Every stage the config supports, plus the consolidated report.
    All {
        #[arg(long, env = "ATTRITION_LAB_N")]
        n: Option<usize>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Thresholds => "thresholds",
            Command::Grid { .. } => "grid",
            Command::Design => "design",
            Command::Simulate { .. } => "simulate",
            Command::Oracle { .. } => "oracle",
            Command::Witness => "witness",
            Command::All { .. } => "all",
        }
    }
}

fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Best-effort output directory when argument parsing itself failed.
fn fallback_out(args: &[String]) -> PathBuf {
    for (i, a) in args.iter().enumerate() {
        if let Some(v) = a.strip_prefix("--out=") {
            return PathBuf::from(v);
        }
        if a == "--out" {
            if let Some(v) = args.get(i + 1) {
                return PathBuf::from(v);
            }
        }
    }
    std::env::var_os(format!("{ENV_PREFIX}OUT")).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("attrition-out"))
}

fn write_errors(out: &Path, code: u8, problems: &[Problem]) {
    let body = commands::to_json(&json!({"schema_version": SCHEMA_VERSION, "exit_code": code, "errors": problems}));
    if std::fs::create_dir_all(out).is_ok() {
        let _ = std::fs::write(out.join("errors.json"), body);
    }
}

fn config_problems(errs: Vec<ConfigError>) -> Vec<Problem> {
    errs.into_iter().map(|e| Problem { kind: "invalid-config".into(), field: Some(e.field), message: e.reason }).collect()
}

fn fail(out: &Path, code: u8, problems: Vec<Problem>) -> ExitCode {
    for p in &problems {
        match &p.field {
            Some(f) => eprintln!("error: {f}: {}", p.message),
            None => eprintln!("error: {}", p.message),
        }
    }
    write_errors(out, code, &problems);
    ExitCode::from(code)
}

fn grid_from_flags(p0: &Option<String>, plo: &Option<String>, phi: &Option<String>, pi: &Option<String>, exp: Option<&Experiment>) -> Result<GridSettings, Vec<ConfigError>> {
    let base = exp.and_then(|e| e.grid.clone());
    let mut errs = Vec::new();
    let mut pick = |flag: &Option<String>, name: &str, from_config: Option<Exact>| -> Option<Exact> {
        match flag {
            Some(s) => match Exact::parse_literal(s) {
                Ok(x) => Some(x),
                Err(e) => {
                    errs.push(ConfigError::new(format!("--{name}"), e));
                    None
                }
            },
            None => {
                if from_config.is_none() {
                    errs.push(ConfigError::new(format!("--{name}"), "missing (no flag and no [grid] in the config)"));
                }
                from_config
            }
        }
    };
    let settings = (
        pick(p0, "p0", base.as_ref().map(|g| g.p0.clone())),
        pick(plo, "plo", base.as_ref().map(|g| g.p_lo.clone())),
        pick(phi, "phi", base.as_ref().map(|g| g.p_hi.clone())),
        pick(pi, "pi", base.as_ref().map(|g| g.precision.clone())),
    );
    match settings {
        (Some(p0), Some(p_lo), Some(p_hi), Some(precision)) if errs.is_empty() => {
            let g = GridSettings { p0, p_lo, p_hi, precision };
            g.build().map(|_| g).map_err(|e| vec![ConfigError::new("grid", e)])
        }
        _ => Err(errs),
    }
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            let problem = Problem { kind: "usage".into(), field: None, message: e.kind().to_string() };
            write_errors(&fallback_out(&args), 1, &[problem]);
            return ExitCode::from(1);
        }
    };
    let started = Instant::now();
    let out = cli.out.clone();

    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return fail(&out, 1, vec![Problem { kind: "invalid-config".into(), field: Some("--jobs".into()), message: "must be positive".into() }]);
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }

    let loaded = match &cli.config {
        Some(path) => match config::load(path) {
            Ok(x) => Some(x),
            Err(errs) => return fail(&out, 1, config_problems(errs)),
        },
        None => None,
    };
    let config_hash = loaded.as_ref().map(|(_, bytes)| sha256(bytes));
    let mut exp = loaded.map(|(e, _)| e);
    if exp.is_none() && !matches!(cli.command, Command::Grid { .. }) {
        return fail(&out, 1, vec![Problem { kind: "invalid-config".into(), field: Some("--config".into()), message: format!("`{}` needs a config file", cli.command.name()) }]);
    }
    if let (Some(seed), Some(e)) = (cli.seed, exp.as_mut()) {
        e.seed = seed;
        if let Some(o) = e.oracle.as_mut() {
            o.seed = seed;
        }
        if let Some(w) = e.witness.as_mut() {
            w.seed = seed;
        }
    }

    let mut overrides = serde_json::Map::new();
    if let Some(s) = cli.seed {
        overrides.insert("seed".into(), json!(s));
    }
    let mut art = Artifacts::default();
    let mut stdout: Option<String> = None;
    match &cli.command {
        Command::Thresholds => {
            let v = commands::thresholds(exp.as_ref().expect("checked"), &mut art);
            stdout = Some(String::from_utf8(commands::to_json(&v)).expect("UTF-8"));
        }
        Command::Grid { p0, plo, phi, pi } => {
            for (k, v) in [("p0", p0), ("plo", plo), ("phi", phi), ("pi", pi)] {
                if let Some(v) = v {
                    overrides.insert(k.into(), json!(v));
                }
            }
            match grid_from_flags(p0, plo, phi, pi, exp.as_ref()) {
                Ok(g) => {
                    commands::grid(&g, &mut art);
                    stdout = art.files.last().map(|(_, b)| String::from_utf8_lossy(b).into_owned());
                }
                Err(errs) => return fail(&out, 1, config_problems(errs)),
            }
        }
        Command::Design => {
            commands::design(exp.as_ref().expect("checked"), &mut art);
        }
        Command::Simulate { n } => {
            let e = exp.as_ref().expect("checked");
            let n = n.unwrap_or(e.episodes);
            if n == 0 {
                return fail(&out, 1, vec![Problem { kind: "invalid-config".into(), field: Some("--n".into()), message: "must be positive".into() }]);
            }
            overrides.insert("n".into(), json!(n));
            let mut scratch = Artifacts::default();
            let designed = commands::design(e, &mut scratch);
            art.invalid.extend(scratch.invalid);
            art.failures.extend(scratch.failures);
            commands::simulate(e, designed.as_ref().map(|d| &d.scheme), n, e.seed, &mut art);
        }
        Command::Oracle { tables, inject_informative } => {
            let e = exp.as_mut().expect("checked");
            if let Some(src) = tables {
                overrides.insert("tables".into(), json!(src));
                let base = e.base_dir.clone();
                match (e.oracle.as_mut(), config::parse_table_source(src, Path::new(".").join(&base).as_path())) {
                    (Some(o), Ok(t)) => o.tables = t,
                    (None, _) => return fail(&out, 1, vec![Problem { kind: "invalid-config".into(), field: Some("oracle".into()), message: "missing [oracle] section".into() }]),
                    (_, Err(err)) => return fail(&out, 1, config_problems(vec![err])),
                }
                if let Err(err) = commands::oracle_games(e.oracle.as_ref().expect("set"), &e.params) {
                    return fail(&out, 1, config_problems(vec![ConfigError::new("--tables", err)]));
                }
            }
            if *inject_informative {
                overrides.insert("inject_informative".into(), json!(true));
            }
            commands::oracle(e, *inject_informative, &mut art);
        }
        Command::Witness => {
            commands::witness(exp.as_ref().expect("checked"), &mut art);
        }
        Command::All { n } => {
            let e = exp.as_ref().expect("checked");
            let n = n.unwrap_or(e.episodes);
            if n == 0 {
                return fail(&out, 1, vec![Problem { kind: "invalid-config".into(), field: Some("--n".into()), message: "must be positive".into() }]);
            }
            overrides.insert("n".into(), json!(n));
            commands::all(e, n, e.seed, &mut art);
        }
    }

    if !art.invalid.is_empty() {
        return fail(&out, 1, art.invalid);
    }
    if let Err(e) = std::fs::create_dir_all(&out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return ExitCode::from(1);
    }
    let code: u8 = if art.failures.is_empty() { 0 } else { 2 };
    let errors = commands::to_json(&json!({"schema_version": SCHEMA_VERSION, "exit_code": code, "errors": art.failures}));
    art.put("errors.json", errors);
    let mut outputs = serde_json::Map::new();
    for (name, body) in &art.files {
        if let Err(e) = std::fs::write(out.join(name), body) {
            eprintln!("error: cannot write {name}: {e}");
            return ExitCode::from(1);
        }
        outputs.insert(name.clone(), json!({"path": name, "sha256": sha256(body), "bytes": body.len()}));
    }
    let manifest = json!({
        "schema_version": SCHEMA_VERSION,
        "tool": "attrition-lab",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cli.command.name(),
        "config_sha256": config_hash,
        "seed": exp.as_ref().map(|e| e.seed),
        "overrides": Value::Object(overrides),
        "outputs": Value::Object(outputs),
        "wall_clock_seconds": started.elapsed().as_secs_f64(),
    });
    if let Err(e) = std::fs::write(out.join("manifest.json"), commands::to_json(&manifest)) {
        eprintln!("error: cannot write manifest.json: {e}");
        return ExitCode::from(1);
    }
    if let Some(s) = stdout {
        print!("{s}");
    }
    for p in &art.failures {
        eprintln!("verification failed: {}", p.message);
    }
    ExitCode::from(code)
}
