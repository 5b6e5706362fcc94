//! Command-line front end.
//!
//! Every subcommand resolves a [`RunConfig`] from flags and an optional JSON
//! file, runs it, writes its artifacts plus `manifest.json` into the output
//! directory, and returns an exit code: 0 success, 1 usage or configuration
//! error, 2 numerical or solver failure. A manifest can be passed back as
//! `--config` to regenerate the same bytes.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::dictionary::{Algorithm, Coder};
use crate::error::{Error, Result};
use crate::experiments::{
    atoms_table_csv, cells_csv, heatmap_svg, learn_curves_csv, phase_grid, synth_dict_experiment, volume_scores, PhaseConfig,
    SynthDictConfig,
};
use crate::frame_analysis::{analyze, exhaustive_p0_with_cap, AnalyzeOptions, DEFAULT_SUBSET_CAP};
use crate::matrix_io::{load_matrix, load_vector, write_atomic};
use crate::solvers::{Solver, SolverParams};

pub const TOOLKIT: &str = "parsimony";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Parser)]
#[command(name = "parsimony", version, about = "Sparse recovery, frame diagnostics and dictionary learning")]
struct Cli {
    /// Worker threads for experiment grids.
    #[arg(long, env = "PARSIMONY_JOBS", global = true)]
    jobs: Option<usize>,
    /// Output directory for artifacts and the manifest.
    #[arg(long, env = "PARSIMONY_OUT", global = true, default_value = "parsimony-out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Frame diagnostics (coherence, bounds, spark, RIC, NSP) as JSON.
    Analyze(AnalyzeArgs),
    /// Recover a sparse code with a named solver.
    Recover(RecoverArgs),
    /// Exhaustive sparsest-solution search.
    Oracle(OracleArgs),
    /// Phase-transition grid.
    Phase(ExperimentArgs),
    /// Synthetic dictionary-learning study.
    Dictlearn(ExperimentArgs),
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RecoverArgs {
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long)]
    signal: Option<PathBuf>,
    #[arg(long)]
    solver: Option<String>,
    /// Sparsity cap for greedy solvers and the oracle.
    #[arg(long)]
    k: Option<usize>,
    /// Solver parameter overrides as a JSON object.
    #[arg(long)]
    params: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long)]
    signal: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Paper-scale defaults instead of desk scale.
    #[arg(long)]
    full: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Desk,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyzeRun {
    pub matrix: PathBuf,
    pub exhaustive: bool,
    pub ric_orders: Vec<usize>,
    pub nsp_orders: Vec<usize>,
    pub subset_cap: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoverRun {
    pub matrix: PathBuf,
    pub signal: PathBuf,
    pub solver: String,
    pub params: SolverParams,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRun {
    pub matrix: PathBuf,
    pub signal: PathBuf,
    pub k: Option<usize>,
    pub subset_cap: u64,
}

/// A fully resolved run, echoed into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum RunConfig {
    Analyze(AnalyzeRun),
    Recover(RecoverRun),
    Oracle(OracleRun),
    Phase { scale: Scale, #[serde(flatten)] config: PhaseConfig },
    Dictlearn { scale: Scale, #[serde(flatten)] config: SynthDictConfig },
}

impl RunConfig {
    pub fn command(&self) -> &'static str {
        match self {
            RunConfig::Analyze(_) => "analyze",
            RunConfig::Recover(_) => "recover",
            RunConfig::Oracle(_) => "oracle",
            RunConfig::Phase { .. } => "phase",
            RunConfig::Dictlearn { .. } => "dictlearn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest<'a> {
    pub toolkit: &'static str,
    pub version: &'static str,
    pub config: &'a RunConfig,
}

// ---------------------------------------------------------------- config parsing

/// Loads a config object. A manifest is accepted too: its `config` member is
/// used, after checking the toolkit name.
pub fn load_config_object(path: &Path) -> Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path)?;
    let value: Value = serde_json::from_str(&text)?;
    let Value::Object(mut obj) = value else {
        return Err(Error::Config { key: "<root>".into(), message: "config must be a JSON object".into() });
    };
    if let Some(toolkit) = obj.get("toolkit") {
        if toolkit != TOOLKIT {
            return Err(Error::Config { key: "toolkit".into(), message: format!("manifest is from {toolkit}, not {TOOLKIT}") });
        }
        return match obj.remove("config") {
            Some(Value::Object(inner)) => Ok(inner),
            _ => Err(Error::Config { key: "config".into(), message: "manifest has no config object".into() }),
        };
    }
    Ok(obj)
}

/// Removes `key` from `obj` and decodes it, naming the key on failure.
fn take<T: DeserializeOwned>(obj: &mut Map<String, Value>, key: &str) -> Result<Option<T>> {
    match obj.remove(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v)
            .map(Some)
            .map_err(|e| Error::Config { key: key.to_string(), message: e.to_string() }),
    }
}

fn finish(obj: Map<String, Value>, command: &str) -> Result<()> {
    match obj.keys().next() {
        None => Ok(()),
        Some(key) => Err(Error::Config { key: key.clone(), message: format!("unknown key for `{command}`") }),
    }
}

fn check_command(obj: &mut Map<String, Value>, command: &str) -> Result<()> {
    if let Some(c) = take::<String>(obj, "command")? {
        if c != command {
            return Err(Error::Config { key: "command".into(), message: format!("config is for `{c}`, not `{command}`") });
        }
    }
    Ok(())
}

fn required<T>(v: Option<T>, key: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config { key: key.into(), message: "missing (give it as a flag or in the config)".into() })
}

pub fn parse_phase(mut obj: Map<String, Value>, seed: Option<u64>, full: bool) -> Result<RunConfig> {
    check_command(&mut obj, "phase")?;
    let scale = match (full, take::<Scale>(&mut obj, "scale")?) {
        (true, _) => Scale::Full,
        (false, s) => s.unwrap_or(Scale::Desk),
    };
    let seed = seed.or(take(&mut obj, "seed")?).unwrap_or(DEFAULT_SEED);
    let mut c = match scale {
        Scale::Desk => PhaseConfig::desk(seed),
        Scale::Full => PhaseConfig::full(seed),
    };
    macro_rules! over {
        ($($f:ident),*) => { $( if let Some(v) = take(&mut obj, stringify!($f))? { c.$f = v; } )* };
    }
    over!(n, delta_min, delta_max, rho_min, rho_max, resolution, trials, solvers, solver_params);
    finish(obj, "phase")?;
    c.validate()?;
    c.build_solvers()?;
    c.grid()?;
    Ok(RunConfig::Phase { scale, config: c })
}

pub fn parse_dictlearn(mut obj: Map<String, Value>, seed: Option<u64>, full: bool) -> Result<RunConfig> {
    check_command(&mut obj, "dictlearn")?;
    let scale = match (full, take::<Scale>(&mut obj, "scale")?) {
        (true, _) => Scale::Full,
        (false, s) => s.unwrap_or(Scale::Desk),
    };
    let seed = seed.or(take(&mut obj, "seed")?).unwrap_or(DEFAULT_SEED);
    let mut c = match scale {
        Scale::Desk => SynthDictConfig::desk(seed),
        Scale::Full => SynthDictConfig::full(seed),
    };
    macro_rules! over {
        ($($f:ident),*) => { $( if let Some(v) = take(&mut obj, stringify!($f))? { c.$f = v; } )* };
    }
    over!(n, m, k, samples, iterations, noise_snr_db, trials, group_size);
    if let Some(a) = take::<Vec<Algorithm>>(&mut obj, "algorithms")? {
        c.algorithms = a;
    }
    if let Some(coder) = take::<Coder>(&mut obj, "coder")? {
        c.coder = coder;
    }
    finish(obj, "dictlearn")?;
    c.validate()?;
    Ok(RunConfig::Dictlearn { scale, config: c })
}

fn parse_analyze(args: &AnalyzeArgs) -> Result<RunConfig> {
    let mut obj = match &args.config {
        Some(p) => load_config_object(p)?,
        None => Map::new(),
    };
    check_command(&mut obj, "analyze")?;
    let defaults = AnalyzeOptions::default();
    let matrix = args.matrix.clone().or(take(&mut obj, "matrix")?);
    let run = AnalyzeRun {
        matrix: required(matrix, "matrix")?,
        exhaustive: take(&mut obj, "exhaustive")?.unwrap_or(defaults.exhaustive),
        ric_orders: take(&mut obj, "ric_orders")?.unwrap_or(defaults.ric_orders),
        nsp_orders: take(&mut obj, "nsp_orders")?.unwrap_or(defaults.nsp_orders),
        subset_cap: take(&mut obj, "subset_cap")?.unwrap_or(DEFAULT_SUBSET_CAP as u64),
    };
    finish(obj, "analyze")?;
    Ok(RunConfig::Analyze(run))
}

fn parse_recover(args: &RecoverArgs) -> Result<RunConfig> {
    let mut obj = match &args.config {
        Some(p) => load_config_object(p)?,
        None => Map::new(),
    };
    check_command(&mut obj, "recover")?;
    let matrix = args.matrix.clone().or(take(&mut obj, "matrix")?);
    let signal = args.signal.clone().or(take(&mut obj, "signal")?);
    let solver = args.solver.clone().or(take(&mut obj, "solver")?);
    let mut params: SolverParams = take(&mut obj, "params")?.unwrap_or_default();
    if let Some(text) = &args.params {
        params = serde_json::from_str(text).map_err(|e| Error::Config { key: "params".into(), message: e.to_string() })?;
    }
    if let Some(k) = args.k.or(take(&mut obj, "k")?) {
        params.k = Some(k);
    }
    finish(obj, "recover")?;
    let solver = required(solver, "solver")?;
    Solver::with_params(&solver, &params)?;
    Ok(RunConfig::Recover(RecoverRun { matrix: required(matrix, "matrix")?, signal: required(signal, "signal")?, solver, params }))
}

fn parse_oracle(args: &OracleArgs) -> Result<RunConfig> {
    let mut obj = match &args.config {
        Some(p) => load_config_object(p)?,
        None => Map::new(),
    };
    check_command(&mut obj, "oracle")?;
    let matrix = args.matrix.clone().or(take(&mut obj, "matrix")?);
    let signal = args.signal.clone().or(take(&mut obj, "signal")?);
    let k = args.k.or(take(&mut obj, "k")?);
    let subset_cap = take(&mut obj, "subset_cap")?.unwrap_or(DEFAULT_SUBSET_CAP as u64);
    finish(obj, "oracle")?;
    Ok(RunConfig::Oracle(OracleRun { matrix: required(matrix, "matrix")?, signal: required(signal, "signal")?, k, subset_cap }))
}

fn parse_experiment(args: &ExperimentArgs, phase: bool) -> Result<RunConfig> {
    let obj = match &args.config {
        Some(p) => load_config_object(p)?,
        None => Map::new(),
    };
    if phase {
        parse_phase(obj, args.seed, args.full)
    } else {
        parse_dictlearn(obj, args.seed, args.full)
    }
}

// ---------------------------------------------------------------- execution

/// What a finished run produced: files for the output directory and text
/// for standard output.
pub struct Outcome {
    pub files: Vec<(String, Vec<u8>)>,
    pub stdout: String,
}

pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    match cfg {
        RunConfig::Analyze(run) => {
            let phi = load_matrix(&run.matrix)?;
            let opts = AnalyzeOptions {
                exhaustive: run.exhaustive,
                ric_orders: run.ric_orders.clone(),
                nsp_orders: run.nsp_orders.clone(),
                subset_cap: run.subset_cap as u128,
            };
            let json = analyze(&phi, &opts)?.to_json()? + "\n";
            Ok(Outcome { files: vec![("report.json".into(), json.clone().into_bytes())], stdout: json })
        }
        RunConfig::Recover(run) => {
            let phi = load_matrix(&run.matrix)?;
            let s = load_vector(&run.signal)?;
            let result = Solver::with_params(&run.solver, &run.params)?.solve(&phi, &s)?;
            let json = serde_json::to_string_pretty(&result)? + "\n";
            Ok(Outcome { files: vec![("result.json".into(), json.clone().into_bytes())], stdout: json })
        }
        RunConfig::Oracle(run) => {
            let phi = load_matrix(&run.matrix)?;
            let s = load_vector(&run.signal)?;
            let result = exhaustive_p0_with_cap(&phi, &s, run.k.unwrap_or(phi.rows()), run.subset_cap as u128)?;
            let json = serde_json::to_string_pretty(&result)? + "\n";
            Ok(Outcome { files: vec![("result.json".into(), json.clone().into_bytes())], stdout: json })
        }
        RunConfig::Phase { config, .. } => {
            let cells = phase_grid(config)?;
            let volumes = volume_scores(&cells)?;
            let mut files = vec![
                ("cells.csv".to_string(), cells_csv(&cells).into_bytes()),
                ("volumes.json".to_string(), (serde_json::to_string_pretty(&volumes)? + "\n").into_bytes()),
            ];
            for name in &config.solvers {
                files.push((format!("heatmap_{name}.svg"), heatmap_svg(&cells, name)?.into_bytes()));
            }
            let mut stdout = String::from("solver volume\n");
            for (name, v) in &volumes {
                stdout.push_str(&format!("{name} {v:.4}\n"));
            }
            Ok(Outcome { files, stdout })
        }
        RunConfig::Dictlearn { config, .. } => {
            let report = synth_dict_experiment(config)?;
            let files = vec![
                ("learn_curves.csv".to_string(), learn_curves_csv(&report).into_bytes()),
                ("atoms_table.csv".to_string(), atoms_table_csv(&report).into_bytes()),
                ("summary.json".to_string(), (serde_json::to_string_pretty(&report)? + "\n").into_bytes()),
            ];
            Ok(Outcome { files, stdout: atoms_table_csv(&report) })
        }
    }
}

pub fn manifest_json(cfg: &RunConfig) -> Result<String> {
    Ok(serde_json::to_string_pretty(&Manifest { toolkit: TOOLKIT, version: VERSION, config: cfg })? + "\n")
}

/// Exit code for a failure during execution (after the config was accepted).
fn failure_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) | Error::Parse { .. } | Error::Config { .. } | Error::UnknownSolver { .. } | Error::TooLarge { .. } => 1,
        _ => 2,
    }
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout(), &mut std::io::stderr())
}

pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if code == 0 { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    let cfg = match &cli.command {
        Command::Analyze(a) => parse_analyze(a),
        Command::Recover(a) => parse_recover(a),
        Command::Oracle(a) => parse_oracle(a),
        Command::Phase(a) => parse_experiment(a, true),
        Command::Dictlearn(a) => parse_experiment(a, false),
    };
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return 1;
        }
    };

    let outcome = match cli.jobs {
        Some(0) => {
            let _ = writeln!(err, "error: --jobs must be at least 1");
            return 1;
        }
        Some(j) => match rayon::ThreadPoolBuilder::new().num_threads(j).build() {
            Ok(pool) => pool.install(|| execute(&cfg)),
            Err(e) => {
                let _ = writeln!(err, "error: cannot start {j} worker threads: {e}");
                return 1;
            }
        },
        None => execute(&cfg),
    };
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            let _ = writeln!(err, "error: {} failed: {e}", cfg.command());
            return failure_code(&e);
        }
    };

    let written = (|| -> Result<()> {
        for (name, bytes) in &outcome.files {
            write_atomic(cli.out.join(name), bytes)?;
        }
        write_atomic(cli.out.join("manifest.json"), manifest_json(&cfg)?.as_bytes())
    })();
    if let Err(e) = written {
        let _ = writeln!(err, "error: writing to {}: {e}", cli.out.display());
        return 1;
    }
    let _ = out.write_all(outcome.stdout.as_bytes());
    0
}
