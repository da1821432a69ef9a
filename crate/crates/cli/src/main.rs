//! modspec: generate, diagonalize and analyze positive module operators
//! over finite direct sums of matrix factors, plus the Harper band demo.
//!
//! Exit codes: 0 success, 1 contract violation (bad mathematical input),
//! 2 parse or I/O failure, 3 internal solver failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};
use serde::Serialize;

use modspec_core::hilbert::random as mrandom;
use modspec_core::rng::SplitMix64;
use modspec_core::{diag, serial, verify, weak, AlgebraShape, CoreError, ModuleOperator};

#[derive(Parser)]
#[command(name = "modspec", version, about = "Operator-valued spectral toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded random strictly positive operator.
    Gen {
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Module rank.
        #[arg(long, default_value_t = 2)]
        n: usize,
        /// Comma-separated factor dimensions, e.g. 2,3.
        #[arg(long, default_value = "2")]
        dims: String,
        /// Comma-separated trace weights; uniform over factors if omitted.
        #[arg(long)]
        weights: Option<String>,
        /// Identity shift added to G*G to force strict positivity.
        #[arg(long, default_value_t = 0.1)]
        eps: f64,
    },
    /// Diagonalize a strictly positive operator.
    Diag {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Export the trace quantile as CSV.
    Scale {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Pair the eigensystems of two operators; pass --input twice.
    Perturb {
        #[arg(long = "input", action = ArgAction::Append)]
        input: Vec<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Run the dyadic weak-diagonalization iteration.
    Weakdiag {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 20)]
        iters: usize,
    },
    /// Compute Harper bands; writes CSV plus a .report.json sibling.
    Harper {
        #[arg(long)]
        p: usize,
        #[arg(long)]
        q: usize,
        #[arg(long, default_value_t = 64)]
        grid: usize,
        /// Degeneracy gap tolerance.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Sweep coprime fluxes p/q up to qmax, writing the union spectra.
    Butterfly {
        #[arg(long, default_value_t = 8)]
        qmax: usize,
        #[arg(long, default_value_t = 16)]
        grid: usize,
        #[arg(long)]
        output: PathBuf,
    },
    /// Run the full seeded invariant suite; nonzero exit on any violation.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Resolved parameters echoed into every artifact.
#[derive(Serialize, Clone, Default)]
struct ConfigEcho {
    command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    input: Vec<String>,
    output: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dims: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    eps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    q: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    qmax: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tol: Option<f64>,
    threads: usize,
}

#[derive(Serialize)]
struct WithConfig<T: Serialize> {
    config: ConfigEcho,
    #[serde(flatten)]
    artifact: T,
}

enum CliError {
    Core(CoreError),
    Usage(String),
    Io(String),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn exit_code(e: &CliError) -> u8 {
    match e {
        CliError::Usage(_) | CliError::Io(_) => 2,
        CliError::Core(c) => match c {
            CoreError::ParseError(_) | CoreError::Io(_) => 2,
            CoreError::NoConvergence { .. }
            | CoreError::SolverFailure(_)
            | CoreError::TraceMismatchUnresolvable => 3,
            _ => 1,
        },
    }
}

fn message(e: &CliError) -> String {
    match e {
        CliError::Usage(m) | CliError::Io(m) => m.clone(),
        CliError::Core(c) => c.to_string(),
    }
}

fn threads_from_env() -> usize {
    std::env::var("MODSPEC_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t >= 1)
        .unwrap_or(1)
}

fn read_file(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, content: &str) -> CliResult<()> {
    std::fs::write(path, content)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn read_operator(path: &Path) -> CliResult<ModuleOperator> {
    let text = read_file(path)?;
    let parsed: serial::OperatorJson = serial::from_json_str(&text)?;
    Ok(serial::operator_from_json(&parsed)?)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> CliResult<Vec<T>> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<T>()
                .map_err(|_| CliError::Usage(format!("invalid {what} entry {tok:?}")))
        })
        .collect()
}

fn run(cli: Cli) -> CliResult<u8> {
    let threads = threads_from_env();
    match cli.command {
        Command::Gen {
            output,
            seed,
            n,
            dims,
            weights,
            eps,
        } => {
            let dims: Vec<usize> = parse_list(&dims, "dims")?;
            let weights: Option<Vec<f64>> = match &weights {
                Some(w) => Some(parse_list(w, "weights")?),
                None => None,
            };
            let shape = AlgebraShape::new(dims.clone(), weights.clone())?;
            let mut rng = SplitMix64::new(seed);
            let k = mrandom::positive_operator(&shape, n, eps, &mut rng);
            let config = ConfigEcho {
                command: "gen",
                seed: Some(seed),
                output: output.display().to_string(),
                n: Some(n),
                dims: Some(dims),
                weights: Some(shape.trace_weights().to_vec()),
                eps: Some(eps),
                threads,
                ..Default::default()
            };
            let doc = WithConfig {
                config,
                artifact: serial::operator_to_json(&k),
            };
            write_file(&output, &serial::to_json_string(&doc)?)?;
            println!("wrote {}", output.display());
            Ok(0)
        }
        Command::Diag { input, output } => {
            let k = read_operator(&input)?;
            let d = diag::diagonalize(&k)?;
            let config = ConfigEcho {
                command: "diag",
                input: vec![input.display().to_string()],
                output: output.display().to_string(),
                threads,
                ..Default::default()
            };
            let doc = WithConfig {
                config,
                artifact: serial::diagonalization_to_json(&d),
            };
            write_file(&output, &serial::to_json_string(&doc)?)?;
            println!("wrote {}", output.display());
            Ok(0)
        }
        Command::Scale { input, output } => {
            let k = read_operator(&input)?;
            let scale = diag::spectral_scale(&k)?;
            write_file(&output, &serial::scale_to_csv(&scale))?;
            let config = ConfigEcho {
                command: "scale",
                input: vec![input.display().to_string()],
                output: output.display().to_string(),
                threads,
                ..Default::default()
            };
            let sidecar = sibling(&output, ".config.json");
            write_file(&sidecar, &serial::to_json_string(&config)?)?;
            println!("wrote {}", output.display());
            Ok(0)
        }
        Command::Perturb { input, output } => {
            if input.len() != 2 {
                return Err(CliError::Usage(
                    "perturb needs exactly two --input files".into(),
                ));
            }
            let k1 = read_operator(&input[0])?;
            let k2 = read_operator(&input[1])?;
            let (_, _, report) = diag::match_eigenvalues(&k1, &k2)?;
            let config = ConfigEcho {
                command: "perturb",
                input: input.iter().map(|p| p.display().to_string()).collect(),
                output: output.display().to_string(),
                threads,
                ..Default::default()
            };
            let doc = WithConfig {
                config,
                artifact: serial::perturbation_to_json(&report),
            };
            write_file(&output, &serial::to_json_string(&doc)?)?;
            println!("wrote {}", output.display());
            Ok(0)
        }
        Command::Weakdiag {
            input,
            output,
            iters,
        } => {
            let k = read_operator(&input)?;
            let trace = weak::iterate_weak_diagonalization(&k, iters)?;
            let config = ConfigEcho {
                command: "weakdiag",
                input: vec![input.display().to_string()],
                output: output.display().to_string(),
                iters: Some(iters),
                threads,
                ..Default::default()
            };
            let doc = WithConfig {
                config,
                artifact: serial::trace_to_json(&trace),
            };
            write_file(&output, &serial::to_json_string(&doc)?)?;
            println!("wrote {}", output.display());
            Ok(0)
        }
        Command::Harper {
            p,
            q,
            grid,
            tol,
            output,
        } => {
            let field = weak::harper_field(p, q, grid)?;
            let bands = weak::band_functions_with(&field, tol, threads)?;
            let report = weak::selection_report(&field, &bands, 1e-9)?;
            write_file(&output, &serial::bands_to_csv(&field, &bands))?;
            let config = ConfigEcho {
                command: "harper",
                output: output.display().to_string(),
                p: Some(p),
                q: Some(q),
                grid: Some(grid),
                tol: Some(tol),
                threads,
                ..Default::default()
            };
            let doc = WithConfig {
                config,
                artifact: serial::selection_report_to_json(&report, &bands),
            };
            let report_path = sibling(&output, ".report.json");
            write_file(&report_path, &serial::to_json_string(&doc)?)?;
            println!("wrote {}", output.display());
            println!("wrote {}", report_path.display());
            Ok(0)
        }
        Command::Butterfly { qmax, grid, output } => {
            if qmax < 2 {
                return Err(CliError::Usage("qmax must be at least 2".into()));
            }
            let mut rows: Vec<(usize, usize, f64)> = Vec::new();
            for q in 2..=qmax {
                for p in 1..q {
                    if gcd(p, q) != 1 {
                        continue;
                    }
                    let field = weak::harper_field(p, q, grid)?;
                    let bands = weak::band_functions_with(&field, 1e-6, threads)?;
                    for v in bands.union_spectrum(1e-9) {
                        rows.push((p, q, v));
                    }
                }
            }
            write_file(&output, &serial::butterfly_to_csv(&rows))?;
            let config = ConfigEcho {
                command: "butterfly",
                output: output.display().to_string(),
                grid: Some(grid),
                qmax: Some(qmax),
                threads,
                ..Default::default()
            };
            let sidecar = sibling(&output, ".config.json");
            write_file(&sidecar, &serial::to_json_string(&config)?)?;
            println!("wrote {}", output.display());
            Ok(0)
        }
        Command::Verify { seed } => {
            let results = verify::run_all(seed);
            let mut any_failed = false;
            for r in &results {
                let status = if r.passed { "PASS" } else { "FAIL" };
                println!("criterion {} ({}): {status} - {}", r.index, r.name, r.detail);
                any_failed |= !r.passed;
            }
            Ok(if any_failed { 1 } else { 0 })
        }
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(suffix);
    PathBuf::from(name)
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", message(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
