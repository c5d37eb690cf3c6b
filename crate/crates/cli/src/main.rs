//! `subheat`: command-line front end for the subheat library.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on numeric failures. A
//! numeric failure also prints a one-line JSON diagnostic on stderr.

mod commands;
mod config;
mod grid;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde_json::json;
use subheat::Error;

#[derive(Parser, Debug)]
#[command(
    name = "subheat",
    version,
    about = "Geodesics, hinged energies and small-time heat kernels on sub-Riemannian model spaces"
)]
pub struct Cli {
    /// key=value file; flags on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Trajectory of the exponential map as CSV.
    Geodesic(GeodesicArgs),
    /// Distance and all geodesics found between two points, as JSON.
    Distance(PairArgs),
    /// Midpoints of the minimizing geodesics, as JSON.
    Midpoints(PairArgs),
    /// Hessian of the hinged energy at a midpoint, as JSON.
    Hessian(HingedArgs),
    /// Taylor coefficients of the hinged energy up to degree 4, as CSV.
    Taylor(HingedArgs),
    /// Heat kernel samples over a time grid, as CSV.
    HeatEval(HeatArgs),
    /// Semigroup check p_t(x,y) = ∫ p_{t/2}(x,z) p_{t/2}(z,y) dz, as JSON.
    Glue(GlueArgs),
    /// Fit p_t ≈ C t^{-α} e^{-d²/4t}, as JSON.
    Fit(FitArgs),
    /// Check a fitted exponent against the small-time bounds, as JSON.
    Verdict(VerdictArgs),
    /// Small-time behaviour of the Grushin heat kernel at each kind of pair.
    ReproduceTable(TableArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// heisenberg, grushin, free36 or two_step.
    #[arg(long)]
    pub model: Option<String>,
    /// JSON file with the bracket matrices of a two_step model.
    #[arg(long, value_name = "FILE")]
    pub brackets: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ShootArgs {
    /// Start points per direction of the multi-start search.
    #[arg(long)]
    pub n_start: Option<usize>,
    #[arg(long)]
    pub newton_max_iter: Option<usize>,
    /// Endpoint residual accepted as converged.
    #[arg(long)]
    pub newton_tol: Option<f64>,
    /// Deduplication radius for geodesics and midpoints.
    #[arg(long)]
    pub cluster_radius: Option<f64>,
    /// Integrator tolerance of the coarse search.
    #[arg(long)]
    pub coarse_tol: Option<f64>,
    /// Integrator tolerance of the polishing phase.
    #[arg(long)]
    pub flow_tol: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct OutArgs {
    /// Output file; standard output when absent.
    #[arg(long, short, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct GeodesicArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Base point, comma separated; the origin when absent.
    #[arg(long, allow_hyphen_values = true)]
    pub from: Option<String>,
    /// Initial covector, rescaled to unit energy.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "theta")]
    pub covector: Option<String>,
    /// Angle of the initial covector (rank-2 groups, Grushin off x = 0).
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    /// Vertical covector components that go with --theta.
    #[arg(long, allow_hyphen_values = true, requires = "theta")]
    pub w: Option<String>,
    /// Final time, equal to the length of the arc.
    #[arg(long, allow_hyphen_values = true)]
    pub t: f64,
    #[arg(long, default_value_t = 101)]
    pub samples: usize,
    #[arg(long)]
    pub flow_tol: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone)]
pub struct PairArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub from: Option<String>,
    #[arg(long, visible_alias = "target", allow_hyphen_values = true)]
    pub to: Option<String>,
    #[command(flatten)]
    pub shoot: ShootArgs,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone)]
pub struct HingedArgs {
    #[command(flatten)]
    pub pair: PairArgs,
    /// Midpoint to localize at; the first midpoint found when absent.
    #[arg(long, allow_hyphen_values = true)]
    pub z0: Option<String>,
    /// Chart matrix, rows separated by `;`, e.g. `1,1;1,-1`.
    #[arg(long, allow_hyphen_values = true)]
    pub chart: Option<String>,
    #[arg(long)]
    pub hess_step: Option<f64>,
    #[arg(long)]
    pub quartic_step: Option<f64>,
    #[arg(long)]
    pub low_step: Option<f64>,
    /// Fixed integrator steps for local shooting.
    #[arg(long)]
    pub flow_steps: Option<usize>,
    /// Also write the diagonal normal form and heat exponent as JSON.
    #[arg(long, value_name = "FILE")]
    pub form_out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Closed form when one exists for the pair, quadrature otherwise.
    Auto,
    Closed,
    /// Contour-shifted Fourier integral (Gaveau form or Mehler).
    Integral,
    /// Fourier integral on the real line with zero-interval summation.
    RealLine,
    /// Radial reduction of the (3,6) kernel at vertical targets.
    Radial,
}

#[derive(Args, Debug, Clone)]
pub struct HeatArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub from: Option<String>,
    #[arg(long, visible_alias = "to", allow_hyphen_values = true)]
    pub target: Option<String>,
    /// `log:a:b:n`, `lin:a:b:n` or `t1,t2,...`.
    #[arg(long)]
    pub t_grid: Option<String>,
    /// Relative quadrature tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, value_enum, default_value_t = Method::Auto)]
    pub method: Method,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone)]
pub struct GlueArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub from: Option<String>,
    #[arg(long, visible_alias = "to", allow_hyphen_values = true)]
    pub target: Option<String>,
    #[arg(long)]
    pub t: Option<f64>,
    /// Integration box `lo1,..:hi1,..`; a cube of half-width 4.25√t around
    /// the pair when absent.
    #[arg(long = "box", allow_hyphen_values = true)]
    pub bounds: Option<String>,
    /// Relative tolerance of the outer cubature.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Relative tolerance of each kernel evaluation.
    #[arg(long)]
    pub kernel_tol: Option<f64>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug, Clone)]
pub struct FitArgs {
    #[command(flatten)]
    pub heat: HeatArgs,
    /// Fit samples from a heat-eval CSV instead of computing them.
    #[arg(long, value_name = "FILE")]
    pub samples: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct VerdictArgs {
    /// AsymptoticFit JSON written by `fit`.
    #[arg(long, value_name = "FILE")]
    pub fit: Option<PathBuf>,
    /// Manifold dimension; taken from --model when absent.
    #[arg(long)]
    pub n: Option<usize>,
    /// Hessian corank of the hinged energy; computed from --from/--to when
    /// absent.
    #[arg(long)]
    pub conjugacy: Option<usize>,
    /// Predicted exponent as a fraction, e.g. 5/4.
    #[arg(long)]
    pub predicted: Option<String>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[command(flatten)]
    pub pair: PairArgs,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

#[derive(Args, Debug, Clone)]
pub struct TableArgs {
    /// Relative quadrature tolerance of the Mehler samples.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Samples per fit window.
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
    pub format: TableFormat,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numeric(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(m) | Error::InvalidModel(m) => CliError::Usage(m),
            Error::UnknownModel(m) => CliError::Usage(format!("unknown model `{m}`")),
            other => CliError::Numeric(other),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn diagnostic(e: &Error) -> serde_json::Value {
    let (kind, details) = match e {
        Error::IntegrationFailure { t, state, .. } => ("integration_failure", json!({ "t": t, "state": state })),
        Error::NoSolution { best_residual } => ("no_solution", json!({ "best_residual": best_residual })),
        Error::ProbeFailure { probe, .. } => ("probe_failure", json!({ "probe": probe })),
        Error::StencilFailure { point, .. } => ("stencil_failure", json!({ "point": point })),
        Error::UnsupportedDegeneracy(_) => ("unsupported_degeneracy", json!({})),
        Error::QuadratureFailure { estimate, error } => {
            ("quadrature_failure", json!({ "estimate": estimate, "error": error }))
        }
        Error::ToleranceUnachievable { requested, achievable, .. } => (
            "tolerance_unachievable",
            json!({ "requested": requested, "achievable": achievable }),
        ),
        Error::BoxTooSmall { suggested_radius } => ("box_too_small", json!({ "suggested_radius": suggested_radius })),
        Error::IllConditioned(_) => ("ill_conditioned", json!({})),
        Error::InvalidModel(_) | Error::UnknownModel(_) | Error::InvalidArgument(_) => ("invalid_argument", json!({})),
    };
    json!({ "error": kind, "message": e.to_string(), "details": details })
}

/// Long flags (and aliases) of a subcommand, for config merging.
fn known_flags(sub: &str) -> Option<Vec<String>> {
    let cmd = Cli::command();
    let sc = cmd.find_subcommand(sub)?;
    let mut out: Vec<String> = Vec::new();
    for a in sc.get_arguments() {
        if let Some(l) = a.get_long() {
            out.push(l.to_string());
        }
        if let Some(al) = a.get_all_aliases() {
            out.extend(al.iter().map(|s| s.to_string()));
        }
    }
    Some(out)
}

fn parse_args(argv: &[String]) -> std::result::Result<Cli, clap::Error> {
    Cli::try_parse_from(argv)
}

/// Parse argv, fold in the config file and run. Returns the exit code.
pub fn run(argv: Vec<String>) -> u8 {
    let cli = match parse_args(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let cli = match &cli.config {
        None => cli,
        Some(path) => {
            let text = match std::fs::read_to_string(path) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read config {}: {e}", path.display());
                    return 1;
                }
            };
            let cfg = match config::parse_config(&text) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return 1;
                }
            };
            let all: Vec<String> = Cli::command()
                .get_subcommands()
                .flat_map(|s| known_flags(s.get_name()).unwrap_or_default())
                .collect();
            if let Some(k) = cfg.keys().find(|k| *k != "config" && !all.contains(k)) {
                eprintln!("error: unknown config key `{k}`");
                return 1;
            }
            let sub = cli_name(&cli.cmd);
            let merged = config::merge(&argv, &cfg, &known_flags(sub).unwrap_or_default());
            match parse_args(&merged) {
                Ok(c) => c,
                Err(e) => {
                    let _ = e.print();
                    return 1;
                }
            }
        }
    };
    match commands::dispatch(cli.cmd) {
        Ok(()) => 0,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            1
        }
        Err(CliError::Numeric(e)) => {
            eprintln!("{}", subheat::io::to_json_line(&diagnostic(&e)));
            2
        }
    }
}

fn cli_name(cmd: &Cmd) -> &'static str {
    match cmd {
        Cmd::Geodesic(_) => "geodesic",
        Cmd::Distance(_) => "distance",
        Cmd::Midpoints(_) => "midpoints",
        Cmd::Hessian(_) => "hessian",
        Cmd::Taylor(_) => "taylor",
        Cmd::HeatEval(_) => "heat-eval",
        Cmd::Glue(_) => "glue",
        Cmd::Fit(_) => "fit",
        Cmd::Verdict(_) => "verdict",
        Cmd::ReproduceTable(_) => "reproduce-table",
    }
}

fn init_threads() {
    if let Some(n) = std::env::var("SUBHEAT_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn main() -> ExitCode {
    init_threads();
    ExitCode::from(run(std::env::args().collect()))
}
