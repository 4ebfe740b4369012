use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sigmafluid::catalog::{case_from_json, load_case, parse_axis_override, registry_json, SolutionCase};
use sigmafluid::energy_stress::parse_rational;
use sigmafluid::reductions::{cross_validate, AnsatzFamily, IntegratorOptions, Method};
use sigmafluid::verify::{fmt17, verify_case, Equation, VerificationReport, VerifyOptions};

#[derive(Parser)]
#[command(name = "sigmafluid", version, about = "Verify sigma-model perfect-fluid solutions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the case registry as JSON.
    ListCases,
    /// Check a case and print a summary.
    Verify(VerifyArgs),
    /// Emit the machine-readable report of a case.
    Report(VerifyArgs),
    /// Residual heatmap over two grid axes.
    Scan(ScanArgs),
    /// Integrate a reduced profile equation against its closed form.
    Reduce(ReduceArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
    Summary,
}

#[derive(Args)]
struct CaseArgs {
    /// Registered case name, `name(args)`, or path to a case JSON file.
    case: String,
    /// Case parameter override `NAME=VALUE` (JSON files only).
    #[arg(long = "param", value_name = "NAME=VALUE")]
    params: Vec<String>,
    /// Grid override `AX=lo:hi:n` or `AX=value`.
    #[arg(long, value_name = "AX=lo:hi:n")]
    grid: Vec<String>,
    /// Tolerance override `EQ=value`.
    #[arg(long = "tol", value_name = "EQ=value")]
    tolerances: Vec<String>,
    /// Comma-separated equations; all applicable ones by default.
    #[arg(long, value_delimiter = ',')]
    equations: Vec<String>,
    /// Base finite-difference step.
    #[arg(long = "fd-step")]
    fd_step: Option<f64>,
    /// Ignore analytic jacobians and metric partials.
    #[arg(long = "force-fd")]
    force_fd: bool,
    /// Worker threads (defaults to SIGMAFLUID_THREADS, then all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    case: CaseArgs,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScanArgs {
    #[command(flatten)]
    case: CaseArgs,
    /// First scan axis, `AX=lo:hi:n`.
    #[arg(long)]
    x: String,
    /// Second scan axis, `AX=lo:hi:n`.
    #[arg(long)]
    y: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReduceArgs {
    /// so3, so2 or morawetz.
    family: String,
    #[arg(long, default_value = "1")]
    k: String,
    /// Integration constant.
    #[arg(long = "constant", short = 'c', default_value_t = 1.0)]
    constant: f64,
    #[arg(long, allow_hyphen_values = true)]
    z0: Option<f64>,
    #[arg(long = "z-end", allow_hyphen_values = true)]
    z_end: Option<f64>,
    #[arg(long, default_value_t = 81)]
    samples: usize,
    /// Fixed RK4 step instead of the adaptive integrator.
    #[arg(long)]
    rk4: Option<f64>,
    /// Exit 1 when the sup error exceeds this.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure exit codes: 1 for residual failures, 2 for invalid input.
struct Failure(u8, String);

impl From<sigmafluid::Error> for Failure {
    fn from(e: sigmafluid::Error) -> Self {
        Failure(2, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(2, msg.into())
}

fn load(spec: &str, params: &[String]) -> Result<SolutionCase, Failure> {
    let path = Path::new(spec);
    if spec.ends_with(".json") || path.is_file() {
        let text = fs::read_to_string(path).map_err(|e| invalid(format!("{spec}: {e}")))?;
        let overrides = params
            .iter()
            .map(|p| {
                p.split_once('=')
                    .map(|(n, v)| (n.trim().to_string(), v.trim().to_string()))
                    .ok_or_else(|| invalid(format!("parameter `{p}` is not NAME=VALUE")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        return Ok(case_from_json(&text, &overrides)?);
    }
    if !params.is_empty() {
        return Err(invalid("--param applies to case files; write registered cases as name(a=1,...)"));
    }
    Ok(load_case(spec)?)
}

fn options(args: &CaseArgs) -> Result<VerifyOptions, Failure> {
    let equations = args
        .equations
        .iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| Equation::parse(s.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    let tolerances = args
        .tolerances
        .iter()
        .map(|t| {
            let (eq, v) = t.split_once('=').ok_or_else(|| invalid(format!("tolerance `{t}` is not EQ=value")))?;
            let v: f64 = v.trim().parse().map_err(|_| invalid(format!("tolerance `{t}` is not a number")))?;
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("tolerance `{t}` must be positive")));
            }
            Ok((Equation::parse(eq.trim())?, v))
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let grid = args.grid.iter().map(|g| parse_axis_override(g)).collect::<Result<Vec<_>, _>>()?;
    Ok(VerifyOptions {
        equations,
        tolerances,
        grid,
        force_fd: args.force_fd,
        fd_base: args.fd_step,
        threads: args.threads,
    })
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| invalid(format!("{}: {e}", p.display()))),
        None => {
            // a closed pipe (`| head`) is not an error
            let _ = io::stdout().lock().write_all(text.as_bytes());
            Ok(())
        }
    }
}

fn render(report: &VerificationReport, format: Format) -> String {
    match format {
        Format::Text => report.summary(),
        Format::Json => report.to_json(),
        Format::Csv => report.to_csv(),
        Format::Summary => report.summary_csv(),
    }
}

fn verdict(report: &VerificationReport) -> Result<(), Failure> {
    if report.pass {
        Ok(())
    } else {
        Err(Failure(1, format!("{}: residual check failed", report.case)))
    }
}

fn run_verify(args: &VerifyArgs, default: Format) -> Result<(), Failure> {
    let case = load(&args.case.case, &args.case.params)?;
    let report = verify_case(&case, &options(&args.case)?)?;
    if let Some(out) = &args.out {
        // files get machine reports unless asked otherwise
        let format = args.format.unwrap_or(Format::Json);
        emit(&render(&report, format), Some(out))?;
        if matches!(default, Format::Text) && !matches!(format, Format::Text) {
            emit(&report.summary(), None)?;
        }
    } else {
        emit(&render(&report, args.format.unwrap_or(default)), None)?;
    }
    verdict(&report)
}

fn run_scan(args: &ScanArgs) -> Result<(), Failure> {
    let case = load(&args.case.case, &args.case.params)?;
    let mut opts = options(&args.case)?;
    let x = parse_axis_override(&args.x)?;
    let y = parse_axis_override(&args.y)?;
    if x.0 == y.0 {
        return Err(invalid("scan axes must differ"));
    }
    // remaining axes collapse to their midpoints unless set with --grid
    for axis in &case.grid.axes {
        let named = axis.name == x.0 || axis.name == y.0 || opts.grid.iter().any(|g| g.0 == axis.name);
        if !named {
            let mid = 0.5 * (axis.lo + axis.hi);
            opts.grid.push((axis.name.clone(), mid, mid, 1));
        }
    }
    let (xn, yn) = (x.0.clone(), y.0.clone());
    opts.grid.push(x);
    opts.grid.push(y);
    let report = verify_case(&case, &opts)?;
    emit(&report.to_scan_csv(&[&xn, &yn])?, args.out.as_deref())
}

fn run_reduce(args: &ReduceArgs) -> Result<(), Failure> {
    let family = AnsatzFamily::parse(&args.family)?;
    let k = parse_rational(&args.k)?;
    let (lo, hi) = match family {
        AnsatzFamily::MorawetzLog => (-1.0, 2.0),
        _ => (0.1, 0.9),
    };
    let options = IntegratorOptions {
        method: match args.rk4 {
            Some(step) if step.is_finite() && step > 0.0 => Method::Rk4 { step },
            Some(_) => return Err(invalid("--rk4 step must be positive")),
            None => Method::Dopri5,
        },
        ..IntegratorOptions::default()
    };
    if args.samples < 2 {
        return Err(invalid("--samples must be at least 2"));
    }
    let rows = cross_validate(
        family,
        k,
        args.constant,
        args.z0.unwrap_or(lo),
        args.z_end.unwrap_or(hi),
        args.samples,
        &options,
    )?;
    let mut csv = String::from("z,f_numeric,f_closed,abs_error\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{},{}\n", fmt17(r.z), fmt17(r.numeric), fmt17(r.closed), fmt17(r.error)));
    }
    emit(&csv, args.out.as_deref())?;
    let worst = rows.iter().map(|r| r.error).fold(0.0, f64::max);
    if worst > args.tol {
        return Err(Failure(1, format!("sup error {worst:.3e} exceeds {:e}", args.tol)));
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::ListCases => {
            emit(&format!("{:#}\n", registry_json()?), None)
        }
        Command::Verify(a) => run_verify(a, Format::Text),
        Command::Report(a) => run_verify(a, Format::Json),
        Command::Scan(a) => run_scan(a),
        Command::Reduce(a) => run_reduce(a),
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
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("sigmafluid: {msg}");
            ExitCode::from(code)
        }
    }
}
