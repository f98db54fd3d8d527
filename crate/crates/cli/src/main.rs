use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use steinplanes::normal_form::{parse_rational, CaseTag};
use steinplanes::poly::Rational;
use steinplanes::report::{self, Command, Report, ReportError, RunConfig, Status, DEFAULT_SEED};

#[derive(Parser)]
#[command(name = "steinplanes", version, about = "Stein neighborhoods of two totally real planes in C^2")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Reduce a matrix `A = ..` or a plane pair `M = ..`, `N = ..` to normal form.
    Normalize {
        input: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Exact Levi-form factorization and positivity certificates.
    Certify {
        #[arg(long, value_parser = parse_case)]
        case: CaseTag,
        #[arg(long, default_value_t = 1)]
        alpha: u32,
        #[arg(long, default_value_t = 1)]
        beta: u32,
        #[command(flatten)]
        common: Common,
    },
    /// The small-entry bound N0, N1 and delta.
    Bound {
        #[arg(long, value_parser = parse_case)]
        case: CaseTag,
        #[command(flatten)]
        common: Common,
    },
    /// Sampled positivity and pseudoconvexity at fixed entries.
    Scan {
        #[command(flatten)]
        params: Params,
        #[command(flatten)]
        common: Common,
    },
    /// Gradient-flow retraction onto M and N.
    Flow {
        #[command(flatten)]
        params: Params,
        /// Write every flow trace as one JSON line.
        #[arg(long)]
        traces: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Params {
    #[arg(long, value_parser = parse_case)]
    case: CaseTag,
    #[arg(long, value_parser = parse_rat, allow_hyphen_values = true)]
    a: Option<Rational>,
    #[arg(long, value_parser = parse_rat, allow_hyphen_values = true)]
    d: Option<Rational>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    r: f64,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct OutArgs {
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_case(s: &str) -> Result<CaseTag, String> {
    CaseTag::parse(s).ok_or_else(|| format!("unknown case `{s}`; expected diag, complex or jordan"))
}

fn parse_rat(s: &str) -> Result<Rational, String> {
    parse_rational(s).ok_or_else(|| format!("`{s}` is not a rational number"))
}

fn write_text(path: Option<&Path>, text: &str) -> std::io::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text),
        None => std::io::stdout().lock().write_all(text.as_bytes()),
    }
}

fn emit(report: &Report, out: &OutArgs) -> Result<(), String> {
    let mut text = serde_json::to_string_pretty(report).map_err(|e| e.to_string())?;
    text.push('\n');
    write_text(out.out.as_deref(), &text).map_err(|e| e.to_string())?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for f in &report.failures {
        eprintln!("failure: {f}");
    }
    for c in report.certificates.iter().filter(|c| !c.exact) {
        eprintln!("certificate `{}` failed; residual {}", c.name, c.residual.as_deref().unwrap_or(""));
    }
    for s in report.scans.iter().filter(|s| s.asserted && !s.pass) {
        eprintln!("scan `{}` failed", s.name);
    }
    eprintln!("status: {}", if report.status == Status::Pass { "pass" } else { "FAIL" });
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, ReportError> {
    let (config, out, traces) = match cli.command {
        Cmd::Normalize { input, out } => {
            let text = std::fs::read_to_string(&input)
                .map_err(|e| ReportError::Usage(format!("{}: {e}", input.display())))?;
            let mut c = RunConfig::new(Command::Normalize);
            c.input = Some(text);
            (c, out, None)
        }
        Cmd::Certify { case, alpha, beta, common } => {
            let mut c = config_from(Command::Certify, case, &common);
            c.alpha = alpha;
            c.beta = beta;
            (c, common.out, None)
        }
        Cmd::Bound { case, common } => (config_from(Command::Bound, case, &common), common.out, None),
        Cmd::Scan { params, common } => (with_params(Command::Scan, params, &common), common.out, None),
        Cmd::Flow { params, traces, common } => (with_params(Command::Flow, params, &common), common.out, traces),
    };
    let report = if config.command == Command::Flow {
        let (report, all) = report::run_flow(config)?;
        if let Some(path) = traces {
            let mut text = String::new();
            for t in &all {
                text.push_str(&serde_json::to_string(t).map_err(|e| ReportError::Usage(e.to_string()))?);
                text.push('\n');
            }
            write_text(Some(&path), &text).map_err(|e| ReportError::Usage(format!("{}: {e}", path.display())))?;
        }
        report
    } else {
        report::run(config)?
    };
    emit(&report, &out).map_err(ReportError::Usage)?;
    Ok(ExitCode::from(report.exit_code() as u8))
}

fn config_from(command: Command, case: CaseTag, common: &Common) -> RunConfig {
    let mut c = RunConfig::new(command);
    c.case = Some(case);
    c.samples = common.samples;
    c.seed = common.seed;
    c
}

fn with_params(command: Command, p: Params, common: &Common) -> RunConfig {
    let mut c = config_from(command, p.case, common);
    c.a = p.a;
    c.d = p.d;
    c.eps = p.eps;
    c.r = p.r;
    c
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
