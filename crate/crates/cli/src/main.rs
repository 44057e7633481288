//! `sacfv`: reference tables, single trajectories, Monte Carlo studies and the
//! invariant suite.
//!
//! Exit codes: 0 success, 1 failed check, 2 configuration or I/O error,
//! 3 numerical failure. `SACFV_WORKERS` sets the worker-thread count.

mod config;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use sacfv::experiments::{
    error_curve, estimate_expectation, splitting_error_study, write_error_csv, write_expectation_csv,
    write_fit_csv, StudyConfig,
};
use sacfv::numfmt::fmt_f64;
use sacfv::scheme::{run_trajectory, Recording, Stepper};
use sacfv::stochastic::{sample_path, NoisePath};
use sacfv::validation::{reference_path, reproduce_tables, run_all, CheckOutcome};
use sacfv::{golden, Error};

use config::{apply_entries, canonical, parse_entries, Preset, RunConfig};

const WORKERS_ENV: &str = "SACFV_WORKERS";

#[derive(Parser)]
#[command(name = "sacfv", version, about = "Stochastic Allen-Cahn finite-volume experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reproduce the reference tables on the 2x2 mesh and compare.
    TableRepro(CommonArgs),
    /// One trajectory of the configured scheme.
    Simulate(CommonArgs),
    /// Monte Carlo means at the configured checkpoints.
    Expectation(CommonArgs),
    /// Time-refinement error curve and fitted order per amplitude.
    Convergence(CommonArgs),
    /// Coupled-versus-splitting error as a function of tau.
    SplittingError(CommonArgs),
    /// Run the randomized invariant suite.
    Validate(CommonArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Key-value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of Monte Carlo paths (overrides `N_p`).
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long, value_enum, default_value = "desk")]
    preset: Preset,
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Check(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(Error::Io(e))
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_workers() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let result = match &cli.command {
        Command::TableRepro(a) => cmd_table_repro(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Expectation(a) => cmd_expectation(a),
        Command::Convergence(a) => cmd_convergence(a),
        Command::SplittingError(a) => cmd_splitting_error(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}

fn configure_workers() -> Result<(), Error> {
    let Ok(value) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidConfig(format!("{WORKERS_ENV} must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidConfig(e.to_string()))
}

/// Preset for `command`, then the config file, then command-line overrides.
fn load(args: &CommonArgs, command: &str) -> Result<RunConfig, Error> {
    let study = match (command, args.preset) {
        ("expectation", Preset::Desk) => StudyConfig::desk_expectation(),
        ("expectation", Preset::Full) => StudyConfig::full_expectation(),
        ("splitting-error", Preset::Desk) => StudyConfig::desk_splitting_error(),
        ("splitting-error", Preset::Full) => StudyConfig { paths: 1000, ..StudyConfig::desk_splitting_error() },
        (_, Preset::Desk) => StudyConfig::desk_convergence(),
        (_, Preset::Full) => StudyConfig::full_convergence(),
    };
    let mut run = RunConfig { study, path_file: None, out_dir: PathBuf::from("sacfv-out") };
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read config {}: {e}", path.display())))?;
        let base_dir = path.parent().unwrap_or(Path::new("."));
        run = apply_entries(run, &parse_entries(&text)?, base_dir)?;
    }
    if let Some(seed) = args.seed {
        run.study.seed = seed;
    }
    if let Some(paths) = args.paths {
        run.study.paths = paths;
    }
    if let Some(out) = &args.out {
        run.out_dir = out.clone();
    }
    run.study.validate()?;
    Ok(run)
}

/// Creates the output directory and writes `manifest.txt`.
fn write_manifest(command: &str, run: &RunConfig) -> Result<String, Error> {
    let path_digest = match &run.path_file {
        Some(p) => Some(hex(&Sha256::digest(fs::read(p)?))),
        None => None,
    };
    let body = canonical(&run.study, path_digest.as_deref());
    let run_id = hex(&Sha256::digest(format!("{command}\n{body}").as_bytes())[..8]);
    fs::create_dir_all(&run.out_dir)?;
    let mut out = BufWriter::new(File::create(run.out_dir.join("manifest.txt"))?);
    writeln!(out, "command = {command}")?;
    writeln!(out, "run_id = {run_id}")?;
    out.write_all(body.as_bytes())?;
    out.flush()?;
    Ok(run_id)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn create(run: &RunConfig, name: &str) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(run.out_dir.join(name))?))
}

fn read_path(path: &Path, horizon: f64) -> Result<NoisePath, Error> {
    let file = File::open(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot open path file {}: {e}", path.display())))?;
    NoisePath::read_csv(BufReader::new(file), horizon)
}

fn cmd_table_repro(args: &CommonArgs) -> CmdResult {
    let run = load(args, "table-repro")?;
    let path = match &run.path_file {
        Some(p) => read_path(p, 1.0)?,
        None => reference_path(),
    };
    if path.steps() != 4 {
        return Err(Error::InvalidConfig(format!("path file must hold 4 increments, found {}", path.steps())).into());
    }
    let id = write_manifest("table-repro", &run)?;
    let tables = reproduce_tables(&path)?;
    let sections = [
        ("splitting_N2", &tables.splitting_n2, &golden::SPLITTING_N2[..]),
        ("heat_N2", &tables.heat_n2, &golden::HEAT_N2[..]),
        ("splitting_N4", &tables.splitting_n4, &golden::SPLITTING_N4[..]),
    ];
    let mut csv = create(&run, "tables.csv")?;
    writeln!(csv, "table,n,cell,value,reference")?;
    for (name, states, reference) in sections {
        println!("{name}");
        for (n, (state, expected)) in states.iter().zip(reference).enumerate() {
            let cells: Vec<String> = state.iter().map(|v| format!("{v:11.8}")).collect();
            println!("  n={}  {}", n + 1, cells.join(" "));
            for (k, (v, r)) in state.iter().zip(expected).enumerate() {
                writeln!(csv, "{name},{},{k},{},{}", n + 1, fmt_f64(*v), fmt_f64(*r))?;
            }
        }
    }
    csv.flush()?;
    let dev = tables.max_deviation();
    println!("run {id}: max dev = {dev:.3e} (tolerance 1e-5)");
    if dev <= 1e-5 {
        println!("max dev <= 1e-5");
        Ok(())
    } else {
        Err(Failure::Check(format!("max deviation {dev:.3e} exceeds 1e-5")))
    }
}

fn cmd_simulate(args: &CommonArgs) -> CmdResult {
    let run = load(args, "simulate")?;
    let s = &run.study;
    let amplitude = *s.amplitudes.first().ok_or_else(|| Error::InvalidConfig("no amplitude given".into()))?;
    let path = match &run.path_file {
        Some(p) => read_path(p, s.horizon)?,
        None => sample_path(s.seed, 0, s.horizon, s.steps)?,
    };
    let dw = path.aggregate_increments(s.steps)?;
    let id = write_manifest("simulate", &run)?;
    let disc = s.discretization()?;
    let params = s.scheme(s.steps, amplitude)?;
    let stepper = Stepper::new(&disc, &params)?;
    let u0 = s.initial.discretize(&disc)?;
    let recording = if s.checkpoints.is_empty() { Recording::Full } else { Recording::Checkpoints(s.checkpoints.clone()) };
    let traj = run_trajectory(&stepper, &u0, &dw, &recording)?;

    disc.mesh.write_csv(create(&run, "mesh.csv")?)?;
    path.write_csv(create(&run, "path.csv")?)?;
    traj.write_csv(create(&run, "trajectory.csv")?)?;
    let last = traj.final_state();
    let (lo, hi) = last.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    println!(
        "run {id}: {} steps of {} (a = {amplitude}, eps = {:.4e}); final range [{lo:.6}, {hi:.6}]",
        s.steps,
        s.variant,
        params.epsilon_value()?
    );
    Ok(())
}

fn cmd_expectation(args: &CommonArgs) -> CmdResult {
    let run = load(args, "expectation")?;
    let id = write_manifest("expectation", &run)?;
    let mut rows = Vec::new();
    for &a in &run.study.amplitudes {
        let est = estimate_expectation(&run.study, a)?;
        for r in &est {
            println!("a={a:<6} n={:<6} E={:.8} |E(u0)-E|={:.8}", r.n, r.mean, r.abs_diff);
        }
        rows.extend(est);
    }
    let mut out = create(&run, "expectation.csv")?;
    write_expectation_csv(&mut out, &rows)?;
    out.flush()?;
    if let Some(r) = rows.first() {
        println!("run {id}: E(u0) = {:.8}", r.initial_mean);
    }
    Ok(())
}

fn cmd_convergence(args: &CommonArgs) -> CmdResult {
    let run = load(args, "convergence")?;
    let id = write_manifest("convergence", &run)?;
    let mut curves = Vec::new();
    for &a in &run.study.amplitudes {
        let curve = error_curve(&run.study, a)?;
        match curve.slope() {
            Some(m) => println!("a={a:<6} m={m:.4}"),
            None => println!("a={a:<6} m=n/a (vanishing errors)"),
        }
        curves.push(curve);
    }
    write_error_csv(create(&run, "errors.csv")?, &curves)?;
    write_fit_csv(create(&run, "fit.csv")?, &curves)?;
    println!("run {id}: {} curve(s) written", curves.len());
    Ok(())
}

fn cmd_splitting_error(args: &CommonArgs) -> CmdResult {
    let run = load(args, "splitting-error")?;
    let id = write_manifest("splitting-error", &run)?;
    let mut curves = Vec::new();
    for &a in &run.study.amplitudes {
        let curve = splitting_error_study(&run.study, a)?;
        for &(n, tau, e) in &curve.points {
            println!("a={a:<6} N={n:<6} tau={tau:.4e} sup_n E max_K|u-v| = {e:.4e}");
        }
        if let Some(m) = curve.slope() {
            println!("a={a:<6} slope={m:.4}");
        }
        curves.push(curve);
    }
    write_error_csv(create(&run, "splitting_errors.csv")?, &curves)?;
    write_fit_csv(create(&run, "fit.csv")?, &curves)?;
    println!("run {id}");
    Ok(())
}

fn cmd_validate(args: &CommonArgs) -> CmdResult {
    let run = load(args, "validate")?;
    let id = write_manifest("validate", &run)?;
    let checks: Vec<CheckOutcome> = run_all(run.study.seed)?;
    let mut out = create(&run, "validation.txt")?;
    for c in &checks {
        println!("{c}");
        writeln!(out, "{c}")?;
    }
    out.flush()?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("run {id}: {} of {} checks passed", checks.len() - failed, checks.len());
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::Check(format!("{failed} invariant check(s) failed")))
    }
}
