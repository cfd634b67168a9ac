//! Command-line harness over [`crate::experiments`].
//!
//! Exit codes: 0 when every check passes, 1 on a failed check or a suite
//! error, 2 on malformed configuration.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::experiments::{run_suite, RunOptions, SUITES};
use crate::report::{RunReport, Tolerances};

pub const OUT_ENV: &str = "CYCLIC_INFERENCE_OUT";

#[derive(Debug, Parser)]
#[command(name = "cyclic-inference", version, about = "Run validation suites and write report.json plus CSV tables")]
pub struct Cli {
    /// JSON parameters; for `all`, an object keyed by suite name.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (overridden by CYCLIC_INFERENCE_OUT).
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for per-instance sweeps.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default)]
pub struct GraphArgs {
    #[arg(long)]
    pub instances: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub q: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct DynamicsArgs {
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub t: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct GridArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub epsilon0: Option<f64>,
    #[arg(long)]
    pub halvings: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    VnEquiv {
        #[arg(long)]
        instances: Option<usize>,
        #[command(flatten)]
        dynamics: DynamicsArgs,
    },
    KernelConverge(GridArgs),
    EmKernel(GridArgs),
    Maxcal(GraphArgs),
    AppendixMarkov,
    BpChain(GraphArgs),
    CycleBorn(GraphArgs),
    CycleUpdate(GraphArgs),
    Bernstein(GraphArgs),
    Clamp(GraphArgs),
    FirstPerson(DynamicsArgs),
    Energetics {
        #[arg(long)]
        nu: Option<f64>,
    },
    All,
}

fn put<T: Into<Value>>(map: &mut Map<String, Value>, key: &str, v: Option<T>) {
    if let Some(v) = v {
        map.insert(key.to_string(), v.into());
    }
}

impl Command {
    pub fn suite_name(&self) -> &'static str {
        match self {
            Command::VnEquiv { .. } => "vn-equiv",
            Command::KernelConverge(_) => "kernel-converge",
            Command::EmKernel(_) => "em-kernel",
            Command::Maxcal(_) => "maxcal",
            Command::AppendixMarkov => "appendix-markov",
            Command::BpChain(_) => "bp-chain",
            Command::CycleBorn(_) => "cycle-born",
            Command::CycleUpdate(_) => "cycle-update",
            Command::Bernstein(_) => "bernstein",
            Command::Clamp(_) => "clamp",
            Command::FirstPerson(_) => "first-person",
            Command::Energetics { .. } => "energetics",
            Command::All => "all",
        }
    }

    /// Flag values that override the JSON input.
    fn overrides(&self) -> Map<String, Value> {
        let mut m = Map::new();
        let graph = |m: &mut Map<String, Value>, g: &GraphArgs| {
            put(m, "instances", g.instances);
            put(m, "n", g.n);
            put(m, "q", g.q);
        };
        let dynamics = |m: &mut Map<String, Value>, d: &DynamicsArgs| {
            put(m, "dim", d.dim);
            put(m, "t", d.t);
            put(m, "dt", d.dt);
        };
        match self {
            Command::VnEquiv { instances, dynamics: d } => {
                put(&mut m, "instances", *instances);
                dynamics(&mut m, d);
            }
            Command::KernelConverge(g) | Command::EmKernel(g) => {
                put(&mut m, "n", g.n);
                put(&mut m, "delta", g.delta);
                put(&mut m, "epsilon0", g.epsilon0);
                put(&mut m, "halvings", g.halvings);
            }
            Command::Maxcal(g) | Command::BpChain(g) | Command::CycleBorn(g) | Command::CycleUpdate(g) | Command::Bernstein(g) | Command::Clamp(g) => graph(&mut m, g),
            Command::FirstPerson(d) => dynamics(&mut m, d),
            Command::Energetics { nu } => put(&mut m, "nu", *nu),
            Command::AppendixMarkov | Command::All => {}
        }
        m
    }
}

/// Splits `--tol.<name>=<value>` arguments from the rest.
pub fn extract_tolerances(args: Vec<String>) -> Result<(Vec<String>, Tolerances)> {
    let mut tol = Tolerances::default();
    let mut rest = Vec::with_capacity(args.len());
    for a in args {
        match a.strip_prefix("--tol.") {
            Some(pair) => tol.insert_pair(pair)?,
            None => rest.push(a),
        }
    }
    Ok((rest, tol))
}

fn read_input(path: Option<&Path>) -> Result<Option<Value>> {
    let Some(path) = path else { return Ok(None) };
    let text = std::fs::read_to_string(path)?;
    let v: Value = serde_json::from_str(&text)?;
    if !v.is_object() {
        return Err(Error::InvalidInput("--input must hold a JSON object".into()));
    }
    Ok(Some(v))
}

fn merged(base: Option<&Value>, overrides: Map<String, Value>) -> Result<Option<Value>> {
    let mut m = match base {
        None | Some(Value::Null) => Map::new(),
        Some(Value::Object(m)) => m.clone(),
        Some(_) => return Err(Error::InvalidInput("suite parameters must be a JSON object".into())),
    };
    let empty = m.is_empty() && overrides.is_empty();
    m.extend(overrides);
    Ok((!empty).then_some(Value::Object(m)))
}

fn is_config_error(e: &Error) -> bool {
    matches!(e, Error::InvalidInput(_) | Error::Json(_))
}

pub struct Outcome {
    pub report: RunReport,
    pub out: PathBuf,
}

/// Runs the parsed command and writes its report. Configuration problems
/// surface as `Err`; suite errors are recorded in the report.
pub fn execute(cli: &Cli, tol: Tolerances) -> Result<Outcome> {
    let input = read_input(cli.input.as_deref())?;
    let out = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| cli.out.clone());
    let opts = RunOptions { seed: cli.seed, tol };
    let name = cli.command.suite_name();
    let mut report = RunReport {
        command: name.to_string(),
        seed: cli.seed,
        suites: Vec::new(),
        errors: Vec::new(),
    };
    if name == "all" {
        if let Some(Value::Object(m)) = &input {
            if let Some(k) = m.keys().find(|k| !SUITES.contains(&k.as_str())) {
                return Err(Error::InvalidInput(format!("unknown suite '{k}' in input")));
            }
        }
        for suite in SUITES {
            let params = merged(input.as_ref().and_then(|v| v.get(suite)), Map::new())?;
            match run_suite(suite, params.as_ref(), &opts) {
                Ok(r) => report.suites.push(r),
                Err(e) if is_config_error(&e) => return Err(e),
                Err(e) => report.errors.push((suite.to_string(), e.to_string())),
            }
        }
    } else {
        let params = merged(input.as_ref(), cli.command.overrides())?;
        match run_suite(name, params.as_ref(), &opts) {
            Ok(r) => report.suites.push(r),
            Err(e) if is_config_error(&e) => return Err(e),
            Err(e) => report.errors.push((name.to_string(), e.to_string())),
        }
    }
    report.write(&out)?;
    Ok(Outcome { report, out })
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args(args: Vec<String>) -> i32 {
    let (args, tol) = match extract_tolerances(args) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(jobs) = cli.jobs {
        if jobs == 0 || rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().is_err() {
            eprintln!("error: invalid --jobs {jobs}");
            return 2;
        }
    }
    match execute(&cli, tol) {
        Ok(outcome) => {
            for suite in &outcome.report.suites {
                for check in &suite.checks {
                    println!("{}", check.line());
                }
            }
            for (suite, err) in &outcome.report.errors {
                println!("ERROR {suite}: {err}");
            }
            println!("report: {}", outcome.out.join("report.json").display());
            if outcome.report.passed() {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            if is_config_error(&e) || matches!(e, Error::Io(_)) {
                2
            } else {
                1
            }
        }
    }
}
