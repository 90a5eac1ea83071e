//! The `iolab` command line.
//!
//! Exit codes: 0 on success, 1 on a domain error (infeasible memory,
//! singular matrix, no feasible grid, rule violation), 2 on a usage error
//! or missing or malformed input. Every file written through `--out` or
//! `--summary` is listed, with its SHA-256, in `<out>.manifest.json`.

use std::collections::HashMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bound::{program_bound, BoundError};
use crate::conflux::{factorize, select_grid, ConfluxError, FactorConfig, GridConfig, Matrix};
use crate::daap::{parse_program, DaapError};
use crate::models::{pow2_range, sweep, sweep_csv, MemPolicy, Model, SizeRule};
use crate::pebble::{gen_lu_cdag, min_io_search, validate_schedule, CDag, PebbleError, Schedule};

#[derive(Debug, Parser, Serialize)]
#[command(name = "iolab", version, about = "I/O lower bounds, pebbling and simulated 2.5D LU")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Lower bound on the I/O of a loop-nest program.
    Bound(BoundArgs),
    /// Red-blue pebble game tools.
    #[command(subcommand)]
    Pebble(PebbleCommand),
    /// Factor a seeded random matrix on the simulated machine.
    Factor(FactorArgs),
    /// Evaluate the cost models over a range of rank counts.
    Sweep(SweepArgs),
}

#[derive(Debug, Args, Serialize)]
struct BoundArgs {
    /// Program in the loop-nest DSL.
    #[arg(long)]
    program: PathBuf,
    /// Fast memory size in words.
    #[arg(long)]
    memory: f64,
    #[arg(long, default_value_t = 1)]
    ranks: u64,
    /// Parameter binding `NAME=VALUE`; repeatable.
    #[arg(long = "param", value_parser = parse_binding)]
    params: Vec<(String, i64)>,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum PebbleCommand {
    /// Replay a schedule and report its I/O count.
    Validate {
        #[arg(long)]
        cdag: PathBuf,
        #[arg(long)]
        schedule: PathBuf,
        #[arg(long)]
        memory: usize,
        #[arg(long, default_value_t = 1)]
        hues: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exhaustive minimum-I/O search on a small graph.
    Search {
        #[arg(long)]
        cdag: PathBuf,
        #[arg(long)]
        memory: usize,
        /// Node expansion budget.
        #[arg(long, default_value_t = 5_000_000)]
        limit: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the LU computation graph for an `n x n` matrix.
    GenLu {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args, Serialize)]
struct FactorArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    ranks: usize,
    /// Words of memory per rank.
    #[arg(long)]
    memory: usize,
    /// Block size; chosen from `n` and the layer count when absent.
    #[arg(long)]
    block: Option<usize>,
    /// Largest number of replicated layers the grid may use.
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    strict_memory: bool,
    #[arg(long)]
    verify: bool,
    /// Communication ledger CSV.
    #[arg(long)]
    out: PathBuf,
    /// Summary JSON; stdout when absent.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
#[command(group = clap::ArgGroup::new("size").required(true).args(["n", "weak"]))]
struct SweepArgs {
    /// Comma-separated model names.
    #[arg(long, value_delimiter = ',', default_value = "conflux,candmc,2d")]
    models: Vec<String>,
    /// Fixed matrix size.
    #[arg(long)]
    n: Option<f64>,
    /// Weak scaling base: `N = base * cbrt(P)`.
    #[arg(long)]
    weak: Option<f64>,
    /// Rank range `lo:hi`; every power of two inside it.
    #[arg(long, value_parser = parse_range)]
    p: (u64, u64),
    /// `fig5` for `M = N^2 / P^(2/3)`, or a fixed word count.
    #[arg(long, default_value = "fig5")]
    mem_policy: String,
    #[arg(long)]
    out: PathBuf,
}

fn parse_binding(s: &str) -> Result<(String, i64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected NAME=VALUE, got `{s}`"))?;
    let v = v.trim().parse().map_err(|e| format!("bad value in `{s}`: {e}"))?;
    Ok((k.trim().to_string(), v))
}

fn parse_range(s: &str) -> Result<(u64, u64), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected LO:HI, got `{s}`"))?;
    let lo = a.trim().parse().map_err(|e| format!("bad lower end in `{s}`: {e}"))?;
    let hi = b.trim().parse().map_err(|e| format!("bad upper end in `{s}`: {e}"))?;
    Ok((lo, hi))
}

/// Provenance written next to each output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub args: serde_json::Value,
    pub seed: Option<u64>,
    pub version: String,
    pub outputs: Vec<OutputDigest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub path: String,
    pub sha256: String,
}

/// Path of the manifest for output `out`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Domain(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Usage(_) => 2,
        }
    }
}

fn usage(op: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("{op}: {e}"))
}

fn domain(op: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Domain(format!("{op}: {e}"))
}

fn bound_error(e: BoundError) -> CliError {
    match e {
        BoundError::Program(d) => daap_error(d),
        e => domain("bound::program_bound", e),
    }
}

fn daap_error(e: DaapError) -> CliError {
    match e {
        DaapError::Syntax { .. }
        | DaapError::UndeclaredVariable { .. }
        | DaapError::DimensionMismatch { .. }
        | DaapError::Duplicate { .. } => usage("daap::parse_program", e),
        e => domain("daap::parse_program", e),
    }
}

fn pebble_error(op: &str, e: PebbleError) -> CliError {
    match e {
        PebbleError::InvalidGraph(_) | PebbleError::InvalidInput(_) => usage(op, e),
        e => domain(op, e),
    }
}

fn conflux_error(e: ConfluxError) -> CliError {
    match e {
        ConfluxError::InvalidInput(_) => usage("conflux::factorize", e),
        e => domain("conflux::factorize", e),
    }
}

/// Collects outputs and writes them with a manifest.
struct Outputs<'a> {
    stdout: &'a mut dyn Write,
    written: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs<'_> {
    fn emit(&mut self, path: Option<&Path>, bytes: Vec<u8>) -> Result<(), CliError> {
        match path {
            Some(p) => self.written.push((p.to_path_buf(), bytes)),
            None => self
                .stdout
                .write_all(&bytes)
                .map_err(|e| usage("cli", format!("cannot write to stdout: {e}")))?,
        }
        Ok(())
    }

    fn finish(self, subcommand: &str, args: serde_json::Value, seed: Option<u64>) -> Result<(), CliError> {
        let Some((first, _)) = self.written.first() else {
            return Ok(());
        };
        let manifest_at = manifest_path(first);
        let mut outputs = Vec::new();
        for (path, bytes) in &self.written {
            std::fs::write(path, bytes).map_err(|e| usage("cli", format!("cannot write {}: {e}", path.display())))?;
            outputs.push(OutputDigest {
                path: path.display().to_string(),
                sha256: hex::encode(Sha256::digest(bytes)),
            });
        }
        let manifest = RunManifest {
            subcommand: subcommand.to_string(),
            args,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            outputs,
        };
        std::fs::write(&manifest_at, to_json(&manifest))
            .map_err(|e| usage("cli", format!("cannot write {}: {e}", manifest_at.display())))
    }
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(value).expect("serializable");
    s.push(b'\n');
    s
}

fn read(op: &str, path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| usage(op, format!("cannot read {}: {e}", path.display())))
}

fn read_json<T: for<'de> Deserialize<'de>>(op: &str, path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read(op, path)?).map_err(|e| usage(op, format!("malformed {}: {e}", path.display())))
}

/// Parses `args` (program name first) and runs the subcommand, writing
/// JSON that has no `--out` to `stdout` and diagnostics to stderr.
/// Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            if code == 0 {
                let _ = write!(stdout, "{e}");
            } else {
                eprint!("{e}");
            }
            return code;
        }
    };
    match dispatch(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            match &e {
                CliError::Usage(m) | CliError::Domain(m) => eprintln!("error: {m}"),
            }
            e.code()
        }
    }
}

fn dispatch(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let args = serde_json::to_value(&cli.command).expect("serializable");
    let mut out = Outputs {
        stdout,
        written: Vec::new(),
    };
    let (name, seed) = match cli.command {
        Command::Bound(a) => {
            bound(a, &mut out)?;
            ("bound", None)
        }
        Command::Pebble(p) => {
            pebble(p, &mut out)?;
            ("pebble", None)
        }
        Command::Factor(a) => {
            let seed = a.seed;
            factor(a, &mut out)?;
            ("factor", Some(seed))
        }
        Command::Sweep(a) => {
            run_sweep(a, &mut out)?;
            ("sweep", None)
        }
    };
    out.finish(name, args, seed)
}

fn bound(a: BoundArgs, out: &mut Outputs) -> Result<(), CliError> {
    let program = parse_program(&read("bound::program_bound", &a.program)?).map_err(daap_error)?;
    let params: HashMap<String, i64> = a.params.into_iter().collect();
    if let Some(p) = program.parameters.iter().find(|p| !params.contains_key(*p)) {
        return Err(usage("bound::program_bound", format!("parameter `{p}` needs --param {p}=VALUE")));
    }
    let report = program_bound(&program, a.memory, a.ranks, &params).map_err(bound_error)?;
    out.emit(a.out.as_deref(), to_json(&report))
}

#[derive(Serialize)]
struct ValidateReport {
    q: u64,
    memory: usize,
    hues: usize,
    moves: usize,
}

fn pebble(cmd: PebbleCommand, out: &mut Outputs) -> Result<(), CliError> {
    match cmd {
        PebbleCommand::Validate {
            cdag,
            schedule,
            memory,
            hues,
            out: path,
        } => {
            let op = "pebble::validate_schedule";
            let g: CDag = read_json(op, &cdag)?;
            let s: Schedule = read_json(op, &schedule)?;
            let q = validate_schedule(&g, &s, memory, hues).map_err(|e| pebble_error(op, e))?;
            let report = ValidateReport {
                q,
                memory,
                hues,
                moves: s.moves.len(),
            };
            out.emit(path.as_deref(), to_json(&report))
        }
        PebbleCommand::Search {
            cdag,
            memory,
            limit,
            out: path,
        } => {
            let op = "pebble::min_io_search";
            let g: CDag = read_json(op, &cdag)?;
            let r = min_io_search(&g, memory, limit).map_err(|e| pebble_error(op, e))?;
            out.emit(path.as_deref(), to_json(&r))
        }
        PebbleCommand::GenLu { n, out: path } => {
            let g = gen_lu_cdag(n).map_err(|e| usage("pebble::gen_lu_cdag", e))?;
            out.emit(path.as_deref(), to_json(&g))
        }
    }
}

fn factor(a: FactorArgs, out: &mut Outputs) -> Result<(), CliError> {
    let op = "conflux::select_grid";
    if a.n == 0 || a.ranks == 0 || a.memory == 0 {
        return Err(usage(op, "--n, --ranks and --memory must be positive"));
    }
    let mut grid = select_grid(a.ranks, a.n, a.memory, a.layers).map_err(|e| domain(op, e))?;
    if let Some(v) = a.block {
        grid = GridConfig::with_block(grid.p1_sqrt, grid.c, v).map_err(|e| usage(op, e))?;
    }
    let config = FactorConfig {
        ranks: a.ranks,
        memory: a.memory,
        grid,
        strict_memory: a.strict_memory,
        verify: a.verify,
    };
    let r = factorize(&Matrix::random(a.n, a.seed), &config).map_err(conflux_error)?;
    out.emit(Some(&a.out), r.ledger.to_csv().into_bytes())?;
    out.emit(a.summary.as_deref(), to_json(&r.summary))
}

fn run_sweep(a: SweepArgs, out: &mut Outputs) -> Result<(), CliError> {
    let op = "models::sweep";
    let models = a
        .models
        .iter()
        .map(|m| m.parse::<Model>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| usage(op, e))?;
    let size = match (a.n, a.weak) {
        (Some(n), _) if n > 0.0 => SizeRule::Fixed(n),
        (_, Some(b)) if b > 0.0 => SizeRule::Weak(b),
        _ => return Err(usage(op, "matrix size must be positive")),
    };
    let policy: MemPolicy = a.mem_policy.parse().map_err(|e| usage(op, e))?;
    let rows = sweep(&models, size, &pow2_range(a.p.0, a.p.1), policy);
    out.emit(Some(&a.out), sweep_csv(&rows).into_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String) {
        let mut out = Vec::new();
        let code = run(std::iter::once("iolab").chain(args.iter().copied()), &mut out);
        (code, String::from_utf8(out).unwrap())
    }

    fn lu_program(dir: &Path) -> String {
        let p = dir.join("lu.daap");
        std::fs::write(
            &p,
            "param N\nloop k in 0..N {\n  loop i in k+1..N { S1: A[i,k] = f(A[i,k], A[k,k]) @outdeg1(A) }\n  loop i in k+1..N { loop j in k+1..N { S2: A[i,j] = f(A[i,j], A[i,k], A[k,j]) } }\n}\n",
        )
        .unwrap();
        p.display().to_string()
    }

    #[test]
    fn bound_prints_report() {
        let dir = tempfile::tempdir().unwrap();
        let prog = lu_program(dir.path());
        let (code, out) = call(&["bound", "--program", &prog, "--memory", "4096", "--param", "N=1024", "--ranks", "1"]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        let q = v["q_parallel"].as_f64().unwrap();
        assert!((q / 11.68e6 - 1.0).abs() < 2e-3, "{q}");
        let (code, _) = call(&["bound", "--program", &prog, "--memory", "4096"]);
        assert_eq!(code, 2);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(call(&["pebble", "search", "--cdag", "missing.json", "--memory", "4"]).0, 2);
        assert_eq!(call(&["frobnicate"]).0, 2);
        assert_eq!(call(&["factor", "--n", "64", "--ranks", "4"]).0, 2);
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("c.csv").display().to_string();
        assert_eq!(call(&["factor", "--n", "256", "--ranks", "8", "--memory", "100", "--out", &out]).0, 1);
        let g = dir.path().join("g.json").display().to_string();
        assert_eq!(call(&["pebble", "gen-lu", "--n", "3", "--out", &g]).0, 0);
        assert_eq!(call(&["pebble", "search", "--cdag", &g, "--memory", "3"]).0, 1);
        std::fs::write(&g, "{\"vertices\": [").unwrap();
        assert_eq!(call(&["pebble", "search", "--cdag", &g, "--memory", "4"]).0, 2);
    }

    #[test]
    fn pebble_search_then_validate() {
        let dir = tempfile::tempdir().unwrap();
        let g = dir.path().join("g.json").display().to_string();
        let r = dir.path().join("r.json").display().to_string();
        assert_eq!(call(&["pebble", "gen-lu", "--n", "2", "--out", &g]).0, 0);
        assert_eq!(call(&["pebble", "search", "--cdag", &g, "--memory", "4", "--out", &r]).0, 0);
        let found: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&r).unwrap()).unwrap();
        let s = dir.path().join("s.json");
        std::fs::write(&s, found["schedule"].to_string()).unwrap();
        let (code, out) = call(&["pebble", "validate", "--cdag", &g, "--schedule", s.to_str().unwrap(), "--memory", "4"]);
        assert_eq!(code, 0);
        let v: serde_json::Value = serde_json::from_str(&out).unwrap();
        assert_eq!(v["q"], found["q"]);
    }

    #[test]
    fn reruns_reproduce_outputs_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("comm.csv");
        let summary = dir.path().join("summary.json");
        let args = [
            "factor", "--n", "96", "--ranks", "4", "--memory", "8192", "--seed", "3", "--verify",
            "--out", csv.to_str().unwrap(), "--summary", summary.to_str().unwrap(),
        ];
        let snapshot = || {
            [&csv, &summary, &manifest_path(&csv)].map(|p| std::fs::read(p).unwrap())
        };
        assert_eq!(call(&args).0, 0);
        let first = snapshot();
        assert_eq!(call(&args).0, 0);
        assert_eq!(first, snapshot());
        let m: RunManifest = serde_json::from_slice(&first[2]).unwrap();
        assert_eq!(m.seed, Some(3));
        assert_eq!(m.outputs[0].sha256, hex::encode(Sha256::digest(&first[0])));
        assert_eq!(m.outputs[1].sha256, hex::encode(Sha256::digest(&first[1])));
        let s: serde_json::Value = serde_json::from_slice(&first[1]).unwrap();
        assert!(s["residual"].as_f64().unwrap() < 1e-10);
    }

    #[test]
    fn sweep_writes_csv() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("sweep.csv");
        let o = out.to_str().unwrap();
        assert_eq!(call(&["sweep", "--models", "conflux,2d", "--n", "16384", "--p", "64:1024", "--out", o]).0, 0);
        let text = std::fs::read_to_string(&out).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 5);
        assert!(manifest_path(&out).exists());
        assert_eq!(call(&["sweep", "--n", "100", "--p", "5:7", "--out", o]).0, 0);
        assert_eq!(std::fs::read_to_string(&out).unwrap(), "model,N,P,M,words,bytes\n");
        assert_eq!(call(&["sweep", "--models", "lapack", "--n", "100", "--p", "1:4", "--out", o]).0, 2);
        assert_eq!(call(&["sweep", "--p", "1:4", "--out", o]).0, 2);
    }
}
