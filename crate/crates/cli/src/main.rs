//! `symmetra`: command-line front end for the symmetry-reduction toolkit.
//!
//! Every subcommand writes a human-readable table to standard output and,
//! with `--json path`, a [`RunManifest`]. Standard output contains no timings,
//! so repeated runs with the same seed produce identical bytes.

mod commands;
mod format;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "symmetra", version, about = "Symmetry reduction of semidefinite programs")]
struct Cli {
    /// Write a machine-readable run manifest to this path.
    #[arg(long, global = true, value_name = "PATH")]
    json: Option<PathBuf>,
    /// Worker threads for parallel sections.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Orbits of a permutation group on pairs.
    Orbits {
        #[arg(long)]
        group: PathBuf,
    },
    /// Block diagonalization of a matrix *-algebra.
    Blockdiag {
        #[arg(long)]
        basis: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Symmetry-reduce a single-block SDPA problem.
    Reduce(ReduceArgs),
    /// Solve an SDPA problem.
    Solve(SolveArgs),
    /// Delsarte LP bound for codes in the Hamming space.
    Delsarte {
        #[arg(short)]
        n: usize,
        #[arg(short)]
        d: usize,
        #[arg(short, default_value_t = 2)]
        q: usize,
        /// Solve in exact rational arithmetic.
        #[arg(long)]
        rational: bool,
    },
    /// Triple-distance SDP bound for binary codes.
    Schrijver {
        #[arg(short)]
        n: usize,
        #[arg(short)]
        d: usize,
        #[arg(long, value_enum, default_value_t = BackendArg::Regular)]
        backend: BackendArg,
    },
    /// Delsarte LP bound for spherical codes.
    SphereLp {
        #[arg(short)]
        n: usize,
        /// Minimal angle in degrees.
        #[arg(long)]
        theta: f64,
        #[arg(short)]
        d: usize,
        #[arg(long, value_enum, default_value_t = CertifyArg::Sos)]
        certify: CertifyArg,
        /// Grid size for `--certify grid`.
        #[arg(long, default_value_t = 2000)]
        grid: usize,
    },
    /// Three-point SDP bound for spherical codes.
    #[command(name = "sphere-3pt")]
    Sphere3pt {
        #[arg(short)]
        n: usize,
        /// Minimal angle in degrees.
        #[arg(long)]
        theta: f64,
        #[arg(short)]
        d: usize,
        /// Points per axis of the box grid.
        #[arg(long, default_value_t = 60)]
        grid: usize,
        /// Points on the segment grid.
        #[arg(long, default_value_t = 400)]
        segment_grid: usize,
    },
    /// SDP bound α_m and the resulting crossing number bound.
    Crossing {
        #[arg(short)]
        m: usize,
        /// Allow m = 8 and m = 9.
        #[arg(long)]
        long: bool,
        #[arg(short)]
        n: Option<usize>,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Symmetry-reduced sum-of-squares certificate.
    Sos {
        #[arg(long)]
        poly: PathBuf,
        #[arg(long)]
        group: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args, Debug)]
struct ReduceArgs {
    #[arg(long)]
    sdpa: PathBuf,
    #[arg(long)]
    group: PathBuf,
    /// 1 (orbit variables only), 1.5 (regular representation) or 2 (blocks).
    #[arg(long, default_value = "2")]
    step: String,
    #[arg(long, value_enum, default_value_t = ModeArg::Coefficient)]
    mode: ModeArg,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct SolveArgs {
    file: PathBuf,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    /// Write the full solution as JSON.
    #[arg(long, value_name = "PATH")]
    emit_solution: Option<PathBuf>,
    /// Sidecar written by `reduce`; maps the result back to the original program.
    #[arg(long, value_name = "PATH")]
    recover: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
enum BackendArg {
    Regular,
    Blockdiag,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
enum CertifyArg {
    Grid,
    Sos,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
enum ModeArg {
    Coefficient,
    Parametrized,
}

/// Record of one invocation.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub parameters: serde_json::Value,
    pub seed: u64,
    pub version: String,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
    pub results: serde_json::Value,
    pub audit: BTreeMap<String, bool>,
}

/// What a subcommand hands back for printing and the manifest.
#[derive(Debug, Default)]
pub struct Outcome {
    pub lines: Vec<String>,
    pub results: serde_json::Map<String, serde_json::Value>,
    pub audit: BTreeMap<String, bool>,
    pub timings: BTreeMap<String, f64>,
}

impl Outcome {
    pub fn line(&mut self, s: impl Into<String>) {
        self.lines.push(s.into());
    }

    pub fn result(&mut self, key: &str, v: impl Serialize) {
        self.results.insert(key.to_string(), serde_json::to_value(v).expect("serializable result"));
    }

    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.insert(phase.to_string(), start.elapsed().as_secs_f64());
        out
    }
}

/// A failure carrying the name of the module error.
#[derive(Debug)]
pub struct Failure {
    pub name: String,
    pub message: String,
    /// Usage errors exit with 2, computational failures with 1.
    pub usage: bool,
}

impl Failure {
    pub fn from_error<E: std::fmt::Debug + std::fmt::Display>(kind: &str, e: E) -> Self {
        let dbg = format!("{e:?}");
        let variant: String = dbg.chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
        Self { name: format!("{kind}::{variant}"), message: e.to_string(), usage: false }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        Self { name: "Io".into(), message: format!("{}: {e}", path.display()), usage: false }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self { name: "Usage".into(), message: message.into(), usage: true }
    }
}

pub fn default_seed() -> Result<u64, Failure> {
    match std::env::var("SYMMETRA_SEED") {
        Ok(s) => s.trim().parse().map_err(|_| Failure::usage(format!("SYMMETRA_SEED is not an integer: {s}"))),
        Err(_) => Ok(1),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.threads == 0 {
        eprintln!("error [Usage]: --threads must be at least 1");
        return ExitCode::from(2);
    }
    // A second global pool cannot be installed; only the first call matters.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error [{}]: {}", f.name, f.message);
            ExitCode::from(if f.usage { 2 } else { 1 })
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let env_seed = default_seed()?;
    let (name, params, seed, outcome) = match &cli.command {
        Command::Orbits { group } => ("orbits", serde_json::json!({ "group": group }), env_seed, commands::orbits(group)?),
        Command::Blockdiag { basis, seed, tol } => {
            let seed = seed.unwrap_or(env_seed);
            ("blockdiag", serde_json::json!({ "basis": basis, "tol": tol }), seed, commands::blockdiag(basis, seed, *tol)?)
        }
        Command::Reduce(a) => {
            let seed = a.seed.unwrap_or(env_seed);
            let params = serde_json::json!({
                "sdpa": a.sdpa, "group": a.group, "step": a.step, "mode": a.mode, "tol": a.tol, "output": a.output,
            });
            ("reduce", params, seed, commands::reduce(a, seed)?)
        }
        Command::Solve(a) => {
            let params = serde_json::json!({ "file": a.file, "tol": a.tol, "max_iter": a.max_iter });
            ("solve", params, env_seed, commands::solve(a)?)
        }
        Command::Delsarte { n, d, q, rational } => {
            let params = serde_json::json!({ "n": n, "d": d, "q": q, "rational": rational });
            ("delsarte", params, env_seed, commands::delsarte(*n, *d, *q, *rational)?)
        }
        Command::Schrijver { n, d, backend } => {
            let params = serde_json::json!({ "n": n, "d": d, "backend": backend });
            ("schrijver", params, env_seed, commands::schrijver(*n, *d, *backend)?)
        }
        Command::SphereLp { n, theta, d, certify, grid } => {
            let params = serde_json::json!({ "n": n, "theta_degrees": theta, "d": d, "certify": certify, "grid": grid });
            ("sphere-lp", params, env_seed, commands::sphere_lp(*n, *theta, *d, *certify, *grid)?)
        }
        Command::Sphere3pt { n, theta, d, grid, segment_grid } => {
            let params = serde_json::json!({ "n": n, "theta_degrees": theta, "d": d, "grid": grid, "segment_grid": segment_grid });
            ("sphere-3pt", params, env_seed, commands::sphere_3pt(*n, *theta, *d, *grid, *segment_grid)?)
        }
        Command::Crossing { m, long, n, tol } => {
            let params = serde_json::json!({ "m": m, "long": long, "n": n, "tol": tol });
            ("crossing", params, env_seed, commands::crossing(*m, *long, *n, *tol)?)
        }
        Command::Sos { poly, group, seed } => {
            let seed = seed.unwrap_or(env_seed);
            let params = serde_json::json!({ "poly": poly, "group": group });
            ("sos", params, seed, commands::sos(poly, group.as_deref(), seed)?)
        }
    };
    for l in &outcome.lines {
        println!("{l}");
    }
    if let Some(path) = &cli.json {
        let manifest = RunManifest {
            command: name.to_string(),
            parameters: params,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timings: outcome.timings,
            results: serde_json::Value::Object(outcome.results),
            audit: outcome.audit,
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        std::fs::write(path, text + "\n").map_err(|e| Failure::io(path, e))?;
    }
    Ok(())
}
