//! `sysrel`: survival signatures and imprecise Bayesian system reliability
//! bounds from the command line.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sysrel::prior_sets::{
    build_prior_spec, lint_prior, read_prior_csv, read_test_data_csv, ConflictReport, PriorSpec, ScalarPrior, TestData,
};
use sysrel::structure_graph::{
    compute_survival_signature_with_limit, parse_system, read_signature_csv, write_signature_csv, SurvivalSignature,
    DEFAULT_MAX_COMPONENTS,
};
use sysrel::system_bounds::{compute_bounds, write_bounds_csv, write_diagnostics_csv, BoundsError, SearchConfig};
use sysrel::{TimeGrid, DEFAULT_EPSILON};
use thiserror::Error;

#[derive(Debug, Error)]
enum CliError {
    /// Bad or missing input; exit status 1.
    #[error("{0}")]
    Input(String),
    /// The computation itself failed; exit status 2.
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Numeric(_) => 2,
        }
    }
}

fn input_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

#[derive(Parser)]
#[command(name = "sysrel", version, about = "System reliability bounds from survival signatures and sets of Beta priors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the survival signature of a system file and write it as CSV.
    Signature {
        #[arg(long)]
        system: PathBuf,
        /// Output CSV; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_MAX_COMPONENTS)]
        max_components: usize,
    },
    /// Prior or posterior lower/upper system reliability over a time grid.
    Infer(InferArgs),
    /// Check a prior specification for common mistakes.
    Lint(LintArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct SystemSource {
    /// System file (`edge:` and `type:` lines).
    #[arg(long)]
    system: Option<PathBuf>,
    /// Precomputed survival signature CSV.
    #[arg(long)]
    signature: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    /// Explicit evaluation times, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["t_start", "t_stop", "t_step"])]
    times: Option<Vec<f64>>,
    #[arg(long, requires_all = ["t_stop", "t_step"])]
    t_start: Option<String>,
    #[arg(long, requires_all = ["t_start", "t_step"])]
    t_stop: Option<String>,
    #[arg(long, requires_all = ["t_start", "t_stop"])]
    t_step: Option<String>,
}

#[derive(Args)]
struct PriorArgs {
    /// Prior CSV: `type,t[,n_lower,n_upper,y_lower,y_upper]`.
    #[arg(long)]
    priors: Option<PathBuf>,
    #[arg(long)]
    n_lower: Option<f64>,
    #[arg(long)]
    n_upper: Option<f64>,
    #[arg(long)]
    y_lower: Option<f64>,
    #[arg(long)]
    y_upper: Option<f64>,
    /// Clamp for prior functioning probabilities, `y ∈ [ε, 1 − ε]`.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
}

#[derive(Args)]
struct InferArgs {
    #[command(flatten)]
    source: SystemSource,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    prior: PriorArgs,
    /// Failure data CSV: `type,failure_time`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Ignore the data and report the prior bounds.
    #[arg(long)]
    prior_only: bool,
    /// Bounds CSV.
    #[arg(long)]
    out: PathBuf,
    /// Per-type diagnostics CSV.
    #[arg(long)]
    diag_out: Option<PathBuf>,
    /// Points per prior strength interval in the fallback search.
    #[arg(long)]
    grid_resolution: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_MAX_COMPONENTS)]
    max_components: usize,
}

#[derive(Args)]
struct LintArgs {
    #[command(flatten)]
    source: SystemSource,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    prior: PriorArgs,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MAX_COMPONENTS)]
    max_components: usize,
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| input_err(path, e))
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| input_err(path, e))
}

fn system_signature(path: &Path, max_components: usize) -> Result<SurvivalSignature, CliError> {
    let graph = parse_system(&read_file(path)?).map_err(|e| input_err(path, e))?;
    compute_survival_signature_with_limit(&graph, max_components).map_err(|e| input_err(path, e))
}

fn load_signature(source: &SystemSource, max_components: usize) -> Result<SurvivalSignature, CliError> {
    match (&source.system, &source.signature) {
        (Some(path), _) => system_signature(path, max_components),
        (None, Some(path)) => {
            let sig = read_signature_csv(open(path)?).map_err(|e| input_err(path, e))?;
            let report = sig.validate();
            if !report.is_valid() {
                return Err(input_err(path, format!("invalid survival signature: {:?}", report.violations)));
            }
            Ok(sig)
        }
        (None, None) => Err(CliError::Input("one of --system or --signature is required".into())),
    }
}

fn load_grid(args: &GridArgs) -> Result<TimeGrid, CliError> {
    let grid = match (&args.times, &args.t_start, &args.t_stop, &args.t_step) {
        (Some(times), ..) => TimeGrid::new(times.clone()),
        (None, Some(a), Some(b), Some(h)) => TimeGrid::from_decimal_range(a, b, h),
        _ => return Err(CliError::Input("a time grid is required: --times or --t-start/--t-stop/--t-step".into())),
    };
    grid.map_err(|e| CliError::Input(format!("time grid: {e}")))
}

fn load_prior(args: &PriorArgs, grid: &TimeGrid, labels: &[String]) -> Result<PriorSpec, CliError> {
    let scalars = ScalarPrior { n_lower: args.n_lower, n_upper: args.n_upper, y_lower: args.y_lower, y_upper: args.y_upper };
    let table = match &args.priors {
        Some(path) => Some(read_prior_csv(open(path)?).map_err(|e| input_err(path, e))?),
        None => None,
    };
    build_prior_spec(table.as_ref(), &scalars, grid, labels, args.epsilon).map_err(|e| match &args.priors {
        Some(path) => input_err(path, e),
        None => CliError::Input(format!("prior: {e}")),
    })
}

fn load_data(path: Option<&PathBuf>) -> Result<TestData, CliError> {
    match path {
        Some(path) => read_test_data_csv(open(path)?).map_err(|e| input_err(path, e)),
        None => Ok(TestData::empty()),
    }
}

/// Writes through a temporary file in the target directory, then renames,
/// so a failed run never leaves a truncated output behind.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| CliError::Input(format!("{}: not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        input_err(path, e)
    })
}

fn bounds_error(e: BoundsError) -> CliError {
    match e {
        BoundsError::LabelMismatch(_) | BoundsError::BadResolution(_) | BoundsError::Prior(_) => {
            CliError::Input(e.to_string())
        }
        _ => CliError::Numeric(e.to_string()),
    }
}

fn conflict_summary(report: &ConflictReport, labels: &[String], data: &TestData) -> Vec<String> {
    labels
        .iter()
        .map(|label| {
            if data.n_obs(label) == 0 {
                return format!("{label}: no test data");
            }
            let ranges = report.conflict_ranges(label);
            if ranges.is_empty() {
                format!("{label}: no prior-data conflict")
            } else {
                let spans: Vec<String> = ranges
                    .iter()
                    .map(|&(a, b)| if a == b { format!("t = {a}") } else { format!("t in [{a}, {b}]") })
                    .collect();
                format!("{label}: prior-data conflict at {}", spans.join(", "))
            }
        })
        .collect()
}

fn run_signature(system: &Path, out: Option<&Path>, max_components: usize) -> Result<(), CliError> {
    let sig = system_signature(system, max_components)?;
    let mut buf = Vec::new();
    write_signature_csv(&sig, &mut buf).map_err(|e| CliError::Numeric(e.to_string()))?;
    match out {
        Some(path) => write_atomic(path, &buf),
        None => io::stdout().write_all(&buf).map_err(|e| CliError::Input(format!("stdout: {e}"))),
    }
}

fn run_infer(args: &InferArgs) -> Result<(), CliError> {
    let sig = load_signature(&args.source, args.max_components)?;
    let grid = load_grid(&args.grid)?;
    let spec = load_prior(&args.prior, &grid, sig.type_labels())?;
    let data = load_data(args.data.as_ref())?;
    let config = match args.grid_resolution {
        Some(p) => SearchConfig::with_resolution(p).map_err(bounds_error)?,
        None => SearchConfig::default(),
    };
    let result = compute_bounds(&sig, &spec, &data, !args.prior_only, &config).map_err(bounds_error)?;

    let mut bounds = Vec::new();
    write_bounds_csv(&result, &mut bounds).map_err(|e| CliError::Numeric(e.to_string()))?;
    let diagnostics = match &args.diag_out {
        Some(_) => {
            let mut buf = Vec::new();
            write_diagnostics_csv(&result, &mut buf).map_err(|e| CliError::Numeric(e.to_string()))?;
            Some(buf)
        }
        None => None,
    };
    write_atomic(&args.out, &bounds)?;
    if let (Some(path), Some(buf)) = (&args.diag_out, diagnostics) {
        write_atomic(path, &buf)?;
    }
    if !args.prior_only {
        for line in conflict_summary(&result.conflicts, sig.type_labels(), &data) {
            println!("{line}");
        }
    }
    Ok(())
}

fn run_lint(args: &LintArgs) -> Result<(), CliError> {
    let sig = load_signature(&args.source, args.max_components)?;
    let grid = load_grid(&args.grid)?;
    let spec = load_prior(&args.prior, &grid, sig.type_labels())?;
    let data = load_data(args.data.as_ref())?;
    let warnings = lint_prior(&spec, &data, args.prior.epsilon);
    if warnings.is_empty() {
        println!("no warnings");
    }
    for w in warnings {
        println!("warning: {w}");
    }
    Ok(())
}

fn main() -> ExitCode {
    // Usage errors are input errors; clap's own status 2 is reserved here
    // for numeric failures.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Signature { system, out, max_components } => run_signature(system, out.as_deref(), *max_components),
        Command::Infer(args) => run_infer(args),
        Command::Lint(args) => run_lint(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
