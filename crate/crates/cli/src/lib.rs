//! Command-line front end for `urnsir-core`.
//!
//! Every subcommand reads one configuration file, echoes the resolved model
//! and master seed, and writes its outputs into the `--out` directory:
//!
//! | subcommand     | outputs                                  |
//! |----------------|------------------------------------------|
//! | `simulate`     | `events.ndjson`, `snapshots.csv`         |
//! | `solve`        | `density.csv`                            |
//! | `fluctuate`    | `covariance.csv`, `pairs.csv`            |
//! | `homogeneous`  | `homogeneous.csv`                        |
//! | `validate K`   | `K.csv` (report records)                 |
//!
//! Each run also writes `resolved.cfg`, which reproduces the run when passed
//! back as `--config`. Exit codes: 0 success, 1 runtime failure, 2 usage or
//! configuration error, 3 a validation threshold failed.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use urnsir_core::fluct::{
    classic_clt_covariance, classic_sir_solve, evolve_covariance, initial_covariance, write_covariance_csv,
    write_pair_report, FluctuationProblem,
};
use urnsir_core::harness::{
    clt_report, covariance_anchor_report, covariance_decay_report, dynkin_report, lln_report, oracle_report,
    with_threads, write_records_csv, Report, Settings, Thresholds,
};
use urnsir_core::hydro::{solve_density, GridSpec};
use urnsir_core::model::{render_model_spec, ConfigFile};
use urnsir_core::sim::simulate;
use urnsir_core::{Error, Spec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_THRESHOLD: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "urnsir", version, about = "N-urn SIR simulation, limits and validation reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Master seed, overriding `[ensemble] seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Replica count, overriding `[ensemble] replicas`.
    #[arg(long, global = true)]
    replicas: Option<usize>,
    /// Worker threads, overriding `[ensemble] threads` (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One exact trajectory: event log and snapshots at the report times.
    Simulate,
    /// Density limit on the `[grid]` nodes.
    Solve,
    /// Fluctuation covariance on the `[fluct]` nodes at the report times.
    Fluctuate,
    /// Classic SIR mean and covariance for a spatially homogeneous model.
    Homogeneous,
    /// Statistical validation report.
    Validate {
        #[arg(value_enum)]
        kind: Validation,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Validation {
    Lln,
    Clt,
    Cov,
    Dynkin,
    Oracle,
}

impl Validation {
    fn name(self) -> &'static str {
        match self {
            Validation::Lln => "lln",
            Validation::Clt => "clt",
            Validation::Cov => "cov",
            Validation::Dynkin => "dynkin",
            Validation::Oracle => "oracle",
        }
    }
}

/// Everything resolved from the configuration file and flags.
struct Run {
    spec: Spec,
    settings: Settings,
    thresholds: Thresholds,
    out: PathBuf,
}

enum Failure {
    Config(String),
    Runtime(Error),
}

impl<E: Into<Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the exit code.
pub fn cli_main<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let run = match resolve(&cli) {
        Ok(run) => run,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_CONFIG;
        }
    };
    println!("# master_seed = {}", run.settings.seed);
    print!("{}", render_model_spec(&run.spec));
    let result = std::fs::create_dir_all(&run.out)
        .map_err(Error::from)
        .and_then(|_| write_resolved(&run))
        .map_err(Failure::from)
        .and_then(|_| with_threads(run.settings.threads, || execute(&cli.command, &run)).map_err(Failure::from)?);
    match result {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_THRESHOLD,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            EXIT_CONFIG
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn resolve(cli: &Cli) -> Result<Run, String> {
    let path = cli.config.as_ref().ok_or("--config PATH is required")?;
    let cfg = ConfigFile::load(path).map_err(|e| e.to_string())?;
    let spec: Spec = cfg.model_spec().map_err(|e| e.to_string())?;
    let mut settings = Settings::from_config(&cfg, spec.horizon()).map_err(|e| e.to_string())?;
    let thresholds = Thresholds::from_config(&cfg).map_err(|e| e.to_string())?;
    if let Some(seed) = cli.seed {
        settings.seed = seed;
    }
    if let Some(r) = cli.replicas {
        if r == 0 {
            return Err("--replicas must be at least 1".into());
        }
        settings.replicas = r;
    }
    if let Some(t) = cli.threads {
        settings.threads = t;
    }
    Ok(Run { spec, settings, thresholds, out: cli.out.clone() })
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

/// Model sections plus the ensemble keys that the flags may have overridden.
fn write_resolved(run: &Run) -> urnsir_core::Result<()> {
    let s = &run.settings;
    let mut w = create(&run.out, "resolved.cfg")?;
    write!(w, "{}", render_model_spec(&run.spec))?;
    writeln!(
        w,
        "\n[ensemble]\nreplicas = {}\nseed = {}\ntimes = {}\nladder = {}",
        s.replicas,
        s.seed,
        join(&s.times),
        join(&s.ladder)
    )?;
    writeln!(w, "\n[grid]\nM = {}\ndt = {}\n\n[fluct]\nM = {}\ndt = {}", s.grid_m, s.grid_dt, s.fluct_m, s.fluct_dt)?;
    w.flush()?;
    Ok(())
}

fn create(dir: &Path, name: &str) -> urnsir_core::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Returns whether every threshold check passed.
fn execute(command: &Command, run: &Run) -> Result<bool, Failure> {
    let (spec, s) = (&run.spec, &run.settings);
    match command {
        Command::Simulate => {
            let tr = simulate(spec, s.seed, &s.times)?;
            tr.write_events_ndjson(create(&run.out, "events.ndjson")?)?;
            tr.write_snapshots_csv(create(&run.out, "snapshots.csv")?)?;
            println!("{} events up to t = {}", tr.events.len(), spec.horizon());
        }
        Command::Solve => {
            let grid = GridSpec::new(s.grid_m, s.grid_dt, spec.horizon())?;
            let field = solve_density(spec, &grid)?;
            field.write_csv(create(&run.out, "density.csv")?)?;
            println!("density on {} nodes, {} time steps", field.m(), field.len() - 1);
        }
        Command::Fluctuate => {
            let problem = FluctuationProblem::new(spec, s.fluct_m, s.fluct_dt)?;
            let c0 = initial_covariance(spec, s.fluct_m)?;
            let states = evolve_covariance(&problem, &c0, &s.times)?;
            write_covariance_csv(&states, create(&run.out, "covariance.csv")?)?;
            write_pair_report(&states, &s.f, &s.g, create(&run.out, "pairs.csv")?)?;
            println!("covariance at {} times on {} nodes", states.len(), s.fluct_m);
        }
        Command::Homogeneous => {
            let (lambda0, phi0) = spec
                .homogeneous_parameters()
                .ok_or_else(|| Failure::Config("homogeneous needs constant λ and φ with ψ ≡ 1".into()))?;
            let cov = classic_clt_covariance(lambda0, phi0, spec.horizon(), s.grid_dt)?;
            let mean = classic_sir_solve(lambda0, phi0, spec.horizon(), s.grid_dt)?;
            let mut w = csv::Writer::from_writer(create(&run.out, "homogeneous.csv")?);
            w.write_record(["time", "infected", "susceptible", "var_eta", "cov_eta_beta", "var_beta"])?;
            for (k, t) in cov.times.iter().enumerate() {
                let c = cov.sigma[k];
                w.serialize((t, mean.infected[k], mean.susceptible[k], c[0][0], c[0][1], c[1][1]))?;
            }
            w.flush()?;
            println!("classic SIR with λ0 = {lambda0}, φ0 = {phi0}, {} time steps", cov.times.len() - 1);
        }
        Command::Validate { kind } => {
            let report = validate(*kind, run)?;
            write_records_csv(&report.records, create(&run.out, &format!("{}.csv", kind.name()))?)?;
            for c in report.checks() {
                let verdict = if c.passed == Some(true) { "PASS" } else { "FAIL" };
                let bound = c.bound.map_or_else(String::new, |b| format!(" bound {b:.6}"));
                println!("{verdict} {} N={} t={} {} = {:.6}{bound}", kind.name(), c.n, c.t, c.statistic, c.value);
            }
            return Ok(report.passed());
        }
    }
    Ok(true)
}

fn validate(kind: Validation, run: &Run) -> urnsir_core::Result<Report> {
    let (spec, s, th) = (&run.spec, &run.settings, &run.thresholds);
    if kind == Validation::Oracle {
        return oracle_report(spec, &s.times, s.replicas, s.seed, th);
    }
    let mut report: Option<Report> = None;
    for &t in &s.times {
        let part = match kind {
            Validation::Lln => lln_report(spec, &s.ladder, t, s.replicas, s.seed, &s.f, s.grid_dt, th)?,
            Validation::Clt => clt_report(spec, t, s.replicas, s.seed, &s.f, &s.g, s.fluct_m, s.fluct_dt, th)?,
            Validation::Cov => {
                let mut r = covariance_decay_report(spec, &s.ladder, t, s.replicas, s.seed, th)?;
                r.extend(covariance_anchor_report(&spec.with_n(th.anchor_n)?, t, s.replicas, s.seed, th)?);
                r
            }
            _ => dynkin_report(spec, t, s.replicas, s.seed, &s.f, th)?,
        };
        match report.as_mut() {
            Some(r) => r.extend(part),
            None => report = Some(part),
        }
    }
    report.ok_or_else(|| Error::Precondition("no report times".into()))
}
