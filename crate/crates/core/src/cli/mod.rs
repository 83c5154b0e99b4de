//! The `lpvjump` command line: problem files in, JSON reports and CSV
//! traces out.
//!
//! Exit codes: 0 success or feasible, 1 infeasible at the requested degree,
//! 2 usage or structural error, 3 numerical failure.

pub mod problem;
pub mod report;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use thiserror::Error;

use crate::analysis::{
    self, AnalysisError, AnalysisOptions, BisectOptions, GammaSpec, KernelEncoding, LpvJumpSystem, Outcome, SynthesisOptions,
};
use crate::polyalg::text::parse_poly_str;
use crate::sdpsolve::{self, SdpError};
use crate::simulate::{self, InputSignal, SimConfig, SimError};
use crate::sosprog::SosProgram;
use problem::{parse_problem, ProblemFile};
use report::{Report, ReportVerdict, SCHEMA_VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INFEASIBLE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Environment variable holding the default SDP tolerance.
pub const SDP_TOL_ENV: &str = "LPVJUMP_SDP_TOL";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Analysis(
                AnalysisError::Numerical { .. } | AnalysisError::CertificateRejected { .. } | AnalysisError::ControllerSingular { .. },
            ) => EXIT_NUMERICAL,
            CliError::Analysis(AnalysisError::Sdp(_)) | CliError::Sdp(_) => EXIT_NUMERICAL,
            CliError::Sim(SimError::ControllerSingular { .. }) => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "lpvjump", version, about = "Stability, L2 gain and state feedback for LPV systems with jumping parameters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Certify mean-square exponential stability, optionally maximizing the decay rate.
    Analyze(AnalyzeArgs),
    /// Upper-bound the stochastic L2 gain from w to z.
    Gain(GainArgs),
    /// Synthesize a parameter-dependent state-feedback controller.
    Synthesize(SynthesizeArgs),
    /// Monte Carlo simulation of open or closed loop.
    Simulate(SimulateArgs),
    /// Write the SDP of a workflow in SDPA sparse format.
    ExportSdp(ExportArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Problem file (JSON).
    pub file: PathBuf,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Primal, dual and gap tolerance of the SDP solver.
    #[arg(long, env = SDP_TOL_ENV)]
    pub sdp_tol: Option<f64>,
    /// Interior-point iteration cap
    #[arg(long)]
    pub sdp_max_iter: Option<usize>,
    /// Grid nodes per axis for the a posteriori check.
    #[arg(long)]
    pub grid_per_axis: Option<usize>,
    /// Multiplier degree; defaults to the main degree rounded up to even.
    #[arg(long)]
    pub deg_mult: Option<u32>,
    /// Positivity floor for the Lyapunov matrix.
    #[arg(long)]
    pub eps: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Decide feasibility for this decay rate.
    #[arg(long, conflicts_with = "maximize_alpha")]
    pub alpha: Option<f64>,
    /// Bisect for the largest certifiable decay rate (the default).
    #[arg(long)]
    pub maximize_alpha: bool,
    /// Degree of the Lyapunov matrix in rho
    #[arg(long)]
    pub deg_p: Option<u32>,
    /// Bracket width at which bisection stops
    #[arg(long)]
    pub bisect_tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Degree of the Lyapunov matrix in rho
    #[arg(long)]
    pub deg_p: Option<u32>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum EncodingArg {
    Constant,
    Square,
    Scaled,
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Fixed performance level.
    #[arg(long, conflicts_with = "minimize_gamma")]
    pub gamma: Option<f64>,
    /// Minimize the performance level (the default).
    #[arg(long)]
    pub minimize_gamma: bool,
    /// Degree of Q(rho)
    #[arg(long)]
    pub deg_q: Option<u32>,
    /// Degree of U(rho)
    #[arg(long)]
    pub deg_u: Option<u32>,
    /// Degree of Z(rho, theta)
    #[arg(long)]
    pub deg_z: Option<u32>,
    /// How the jump kernel enters the synthesis LMI
    #[arg(long, value_enum)]
    pub kernel_encoding: Option<EncodingArg>,
    /// Polynomial `l(rho, theta)` with `l^2` equal to the kernel, for `--kernel-encoding square`.
    #[arg(long)]
    pub kernel_root: Option<String>,
    /// Write the controller JSON here.
    #[arg(long)]
    pub controller_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Controller JSON as written by `synthesize`; open loop when absent.
    #[arg(long)]
    pub controller: Option<PathBuf>,
    /// Stability report whose certificate is tracked along the paths.
    #[arg(long)]
    pub lyapunov: Option<PathBuf>,
    /// Initial state, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    /// Initial parameter, comma separated; uniform on the box when absent.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub rho0: Option<Vec<f64>>,
    /// `zero` or `pulse:AMPLITUDE,T1`.
    #[arg(long, default_value = "zero")]
    pub input: String,
    /// Number of realizations.
    #[arg(long)]
    pub n: Option<usize>,
    /// Base seed; realization k uses stream k
    #[arg(long)]
    pub seed: Option<u64>,
    /// Simulated time [default: 10]
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Maximum integration step.
    #[arg(long)]
    pub step: Option<f64>,
    /// Spacing of recorded samples [default: horizon / 1000]
    #[arg(long)]
    pub record_dt: Option<f64>,
    /// Per-realization trace CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Ensemble mean-square CSV.
    #[arg(long)]
    pub ensemble: Option<PathBuf>,
    /// Directory receiving `trace.csv` and `ensemble.csv` when the individual paths are not given.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Workflow {
    Stability,
    Gain,
    Synthesis,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub workflow: Workflow,
    /// Output `.dat-s` path.
    #[arg(long)]
    pub out: PathBuf,
    /// Decay rate for the stability workflow.
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    /// Fixed performance level for synthesis; minimized when absent.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Degree of the decision polynomials
    #[arg(long)]
    pub degree: Option<u32>,
}

/// What a command produced before it is wrapped into a [`Report`].
struct Produced {
    verdict: ReportVerdict,
    exit_code: i32,
    results: Value,
    certificate: Option<Value>,
    solver: Option<Value>,
    warnings: Vec<String>,
}

impl Produced {
    fn new(verdict: ReportVerdict, exit_code: i32, results: Value) -> Self {
        Produced { verdict, exit_code, results, certificate: None, solver: None, warnings: Vec::new() }
    }
}

struct Loaded {
    file: ProblemFile,
    sys: LpvJumpSystem,
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn load(bytes: &[u8]) -> Result<Loaded, CliError> {
    let text = std::str::from_utf8(bytes).map_err(|e| CliError::Schema { path: String::new(), message: e.to_string() })?;
    let file = parse_problem(text)?;
    let sys = file.system()?;
    Ok(Loaded { file, sys })
}

fn analysis_options(c: &Common, file: &ProblemFile, degree: Option<u32>) -> AnalysisOptions {
    let fo = &file.options;
    let mut o = AnalysisOptions::default();
    if let Some(d) = degree.or(fo.degree) {
        o.degree = d;
    }
    o.multiplier_degree = c.deg_mult.or(fo.multiplier_degree);
    if let Some(e) = c.eps.or(fo.eps) {
        o.eps = e;
    }
    if let Some(e) = fo.eps_strict {
        o.eps_strict = e;
    }
    o.grid_per_axis = c.grid_per_axis.or(fo.grid_per_axis);
    if let Some(t) = c.sdp_tol.or(fo.sdp_tol) {
        o.solver.tol_primal = t;
        o.solver.tol_dual = t;
        o.solver.tol_gap = t;
    }
    if let Some(k) = c.sdp_max_iter.or(fo.sdp_max_iter) {
        o.solver.max_iter = k;
    }
    o
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn infeasible(rep: &analysis::InfeasibleReport, extra: Value) -> Produced {
    let mut results = json!({ "status": rep.status, "degree": rep.degree, "multiplier_degree": rep.multiplier_degree, "size": rep.size });
    if let (Value::Object(r), Value::Object(e)) = (&mut results, extra) {
        r.extend(e);
    }
    let mut p = Produced::new(ReportVerdict::Infeasible, EXIT_INFEASIBLE, results);
    p.solver = Some(to_value(&rep.solver));
    p
}

fn cmd_analyze(a: &AnalyzeArgs, l: &Loaded) -> Result<(Produced, Value), CliError> {
    let opts = analysis_options(&a.common, &l.file, a.deg_p);
    let mut bisect = BisectOptions::default();
    if let Some(t) = a.bisect_tol.or(l.file.options.bisect_tol) {
        bisect.tol = t;
    }
    let echo = json!({ "analysis": opts, "bisect": bisect, "alpha": a.alpha });
    let produced = match a.alpha {
        Some(alpha) => match analysis::certify_stability(&l.sys, alpha, &opts)? {
            Outcome::Certified(c) => {
                let mut p = Produced::new(
                    ReportVerdict::Feasible,
                    EXIT_OK,
                    json!({ "alpha": alpha, "grid_min_margin": c.grid.min_margin(), "size": c.size }),
                );
                p.solver = Some(to_value(&c.solver));
                p.certificate = Some(report::stability_certificate_json(&c));
                p
            }
            Outcome::Infeasible(r) => infeasible(&r, json!({ "alpha": alpha })),
        },
        None => match analysis::max_decay_rate(&l.sys, &opts, &bisect)? {
            Outcome::Certified(r) => {
                let c = &r.certificate;
                let mut p = Produced::new(
                    ReportVerdict::Feasible,
                    EXIT_OK,
                    json!({
                        "alpha_star": r.alpha,
                        "alpha_upper": r.alpha_upper,
                        "grid_min_margin": c.grid.min_margin(),
                        "size": c.size,
                        "steps": r.steps,
                    }),
                );
                p.solver = Some(to_value(&c.solver));
                p.certificate = Some(report::stability_certificate_json(c));
                p.warnings = r.warnings.clone();
                p
            }
            Outcome::Infeasible(r) => infeasible(&r, json!({ "alpha": 0.0 })),
        },
    };
    Ok((produced, echo))
}

fn cmd_gain(a: &GainArgs, l: &Loaded) -> Result<(Produced, Value), CliError> {
    let opts = analysis_options(&a.common, &l.file, a.deg_p);
    let echo = json!({ "analysis": opts });
    let produced = match analysis::l2_gain_upper_bound(&l.sys, &opts)? {
        Outcome::Certified(c) => {
            let mut p = Produced::new(
                ReportVerdict::Feasible,
                EXIT_OK,
                json!({ "gamma_star": c.gamma, "grid_min_margin": c.grid.min_margin(), "size": c.size }),
            );
            p.solver = Some(to_value(&c.solver));
            p.certificate = Some(report::l2_certificate_json(&c));
            p
        }
        Outcome::Infeasible(r) => infeasible(&r, json!({})),
    };
    Ok((produced, echo))
}

fn synthesis_options(gamma: Option<f64>, enc: Option<EncodingArg>, root: Option<&str>, sys: &LpvJumpSystem) -> Result<SynthesisOptions, CliError> {
    let mut s = SynthesisOptions::default();
    if let Some(g) = gamma {
        s.gamma = GammaSpec::Fixed(g);
    }
    s.encoding = match enc {
        None => None,
        Some(EncodingArg::Constant) => Some(KernelEncoding::Constant),
        Some(EncodingArg::Scaled) => Some(KernelEncoding::Scaled),
        Some(EncodingArg::Square) => {
            let r = root.ok_or_else(|| CliError::Usage("--kernel-encoding square needs --kernel-root".into()))?;
            let l = parse_poly_str(r, sys.joint_vars())
                .map_err(|e| CliError::Schema { path: "--kernel-root".into(), message: e.to_string() })?;
            Some(KernelEncoding::Square(l))
        }
    };
    Ok(s)
}

fn cmd_synthesize(a: &SynthesizeArgs, l: &Loaded) -> Result<(Produced, Value), CliError> {
    let opts = analysis_options(&a.common, &l.file, a.deg_q);
    let mut sopts = synthesis_options(a.gamma, a.kernel_encoding, a.kernel_root.as_deref(), &l.sys)?;
    sopts.degree_u = a.deg_u;
    sopts.degree_z = a.deg_z;
    let echo = json!({
        "analysis": opts,
        "gamma": a.gamma,
        "deg_u": a.deg_u,
        "deg_z": a.deg_z,
        "kernel_encoding": sopts.encoding.as_ref().map(|e| e.name()),
    });
    let produced = match analysis::synthesize_sf(&l.sys, &sopts, &opts)? {
        Outcome::Certified(r) => {
            let controller = report::controller_json(&r.k);
            if let Some(path) = &a.controller_out {
                write(path, serde_json::to_string_pretty(&controller).expect("serializable").as_bytes())?;
            }
            let mut p = Produced::new(
                ReportVerdict::Feasible,
                EXIT_OK,
                json!({
                    "gamma": r.gamma,
                    "controller_numerator_degree": r.k.numerator_degree(),
                    "controller_denominator_degree": r.k.denominator_degree(),
                    "grid_min_margin": r.grid.min_margin(),
                    "size": r.size,
                    "controller": controller,
                }),
            );
            p.solver = Some(to_value(&r.solver));
            p.certificate = Some(report::synthesis_json(&r));
            p
        }
        Outcome::Infeasible(r) => infeasible(&r, json!({})),
    };
    Ok((produced, echo))
}

fn parse_input(s: &str) -> Result<InputSignal, CliError> {
    let bad = || CliError::Usage(format!("--input expects `zero` or `pulse:AMPLITUDE,T1`, got `{s}`"));
    if s == "zero" {
        return Ok(InputSignal::Zero);
    }
    let rest = s.strip_prefix("pulse:").ok_or_else(bad)?;
    let (a, t1) = rest.split_once(',').ok_or_else(bad)?;
    let amplitude: f64 = a.trim().parse().map_err(|_| bad())?;
    let t1: f64 = t1.trim().parse().map_err(|_| bad())?;
    if !(t1 > 0.0) {
        return Err(bad());
    }
    Ok(InputSignal::Pulse { amplitude, t1 })
}

fn cmd_simulate(a: &SimulateArgs, l: &Loaded) -> Result<(Produced, Value), CliError> {
    let fo = &l.file.options;
    let sys = &l.sys;
    let x0 = a.x0.clone().or_else(|| fo.x0.clone()).unwrap_or_else(|| vec![1.0; sys.n()]);
    let horizon = a.horizon.or(fo.horizon).unwrap_or(10.0);
    let mut cfg = SimConfig::new(x0, horizon);
    if let Some(h) = a.step.or(fo.step) {
        cfg.step = h;
    }
    cfg.record_dt = a.record_dt;
    if let Some(n) = a.n.or(fo.n_realizations) {
        cfg.n_realizations = n;
    }
    if let Some(s) = a.seed.or(fo.seed) {
        cfg.seed = s;
    }
    cfg.input = parse_input(&a.input)?;
    cfg.rho0 = a.rho0.clone();
    let controller = match &a.controller {
        Some(p) => {
            let text = String::from_utf8_lossy(&read(p)?).into_owned();
            Some(report::read_controller(&text, sys)?)
        }
        None => None,
    };
    let mut alpha = None;
    if let Some(p) = &a.lyapunov {
        let text = String::from_utf8_lossy(&read(p)?).into_owned();
        let (pm, al) = report::read_lyapunov(&text, sys)?;
        cfg.lyapunov = Some(pm);
        alpha = Some(al);
    }
    let echo = json!({
        "x0": cfg.x0,
        "rho0": cfg.rho0,
        "horizon": cfg.horizon,
        "step": cfg.step,
        "record_dt": cfg.record_dt,
        "n_realizations": cfg.n_realizations,
        "seed": cfg.seed,
        "input": cfg.input,
        "closed_loop": controller.is_some(),
    });
    let (stats, paths) = simulate::run_ensemble(sys, controller.as_ref(), &cfg)?;

    let (trace, ensemble) = match &a.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.clone(), source })?;
            (a.trace.clone().or(Some(dir.join("trace.csv"))), a.ensemble.clone().or(Some(dir.join("ensemble.csv"))))
        }
        None => (a.trace.clone(), a.ensemble.clone()),
    };
    if let Some(p) = &trace {
        simulate::write_trace_csv(p, sys, &paths)?;
    }
    if let Some(p) = &ensemble {
        simulate::write_ensemble_csv(p, &stats)?;
    }
    let first = stats.mean_x_sq.first().copied().unwrap_or(f64::NAN);
    let last = stats.mean_x_sq.last().copied().unwrap_or(f64::NAN);
    let dynkin = alpha.and_then(|al| simulate::dynkin_check(&stats, al));
    let mut results = json!({
        "realizations": stats.realizations,
        "aborted": stats.aborted,
        "mean_x_sq_initial": first,
        "mean_x_sq_final": last,
        "mean_x_sq_max": stats.mean_x_sq.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        "fitted_rate": simulate::fit_decay_rate(&stats, horizon / 2.0),
        "gain": stats.gain,
        "dynkin": dynkin,
        "trace_csv": trace,
        "ensemble_csv": ensemble,
    });
    if stats.realizations == 0 {
        results["error"] = json!("every realization aborted");
    }
    let (verdict, code) = if stats.realizations == 0 {
        (ReportVerdict::NumericalFailure, EXIT_NUMERICAL)
    } else {
        (ReportVerdict::Completed, EXIT_OK)
    };
    let mut p = Produced::new(verdict, code, results);
    p.warnings = stats.warnings.clone();
    p.warnings.extend(stats.aborted.iter().map(|(k, m)| format!("realization {k} aborted: {m}")));
    Ok((p, echo))
}

fn cmd_export(a: &ExportArgs, l: &Loaded) -> Result<(Produced, Value), CliError> {
    let opts = analysis_options(&a.common, &l.file, a.degree);
    let prog: SosProgram = match a.workflow {
        Workflow::Stability => analysis::stability_program(&l.sys, a.alpha, &opts)?,
        Workflow::Gain => analysis::gain_program(&l.sys, &opts)?,
        Workflow::Synthesis => {
            let s = synthesis_options(a.gamma, None, None, &l.sys)?;
            analysis::synthesis_program(&l.sys, &s, &opts)?
        }
    };
    let compiled = prog.compile(&opts.compile).map_err(AnalysisError::from)?;
    sdpsolve::sdpa::export_sdpa(&compiled.sdp, &a.out)?;
    let echo = json!({ "analysis": opts, "workflow": format!("{:?}", a.workflow).to_lowercase(), "alpha": a.alpha, "gamma": a.gamma });
    let results = json!({
        "path": a.out,
        "size": compiled.size,
        "constraints": compiled.sdp.num_constraints(),
        "blocks": compiled.sdp.blocks.len(),
    });
    Ok((Produced::new(ReportVerdict::Completed, EXIT_OK, results), echo))
}

fn common(cmd: &Command) -> &Common {
    match cmd {
        Command::Analyze(a) => &a.common,
        Command::Gain(a) => &a.common,
        Command::Synthesize(a) => &a.common,
        Command::Simulate(a) => &a.common,
        Command::ExportSdp(a) => &a.common,
    }
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Analyze(_) => "analyze",
        Command::Gain(_) => "gain",
        Command::Synthesize(_) => "synthesize",
        Command::Simulate(_) => "simulate",
        Command::ExportSdp(_) => "export-sdp",
    }
}

/// Runs one parsed command and returns the report; never panics on bad input.
pub fn execute(cli: &Cli, args: Vec<String>) -> Report {
    let start = Instant::now();
    let c = common(&cli.command);
    let bytes = read(&c.file);
    let input_sha256 = bytes.as_ref().ok().map(|b| report::sha256_hex(b));
    let outcome = bytes.and_then(|b| load(&b)).and_then(|l| match &cli.command {
        Command::Analyze(a) => cmd_analyze(a, &l),
        Command::Gain(a) => cmd_gain(a, &l),
        Command::Synthesize(a) => cmd_synthesize(a, &l),
        Command::Simulate(a) => cmd_simulate(a, &l),
        Command::ExportSdp(a) => cmd_export(a, &l),
    });
    let (produced, options, error) = match outcome {
        Ok((p, echo)) => (p, echo, None),
        Err(e) => {
            let code = e.exit_code();
            let verdict = if code == EXIT_NUMERICAL { ReportVerdict::NumericalFailure } else { ReportVerdict::Error };
            (Produced::new(verdict, code, Value::Null), Value::Null, Some(e.to_string()))
        }
    };
    Report {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command_name(&cli.command).to_string(),
        args,
        input: c.file.display().to_string(),
        input_sha256,
        options,
        verdict: produced.verdict,
        exit_code: produced.exit_code,
        results: produced.results,
        certificate: produced.certificate,
        solver: produced.solver,
        warnings: produced.warnings,
        error,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    }
}

/// Entry point of the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let echo: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let rep = execute(&cli, echo);
    if let Some(e) = &rep.error {
        eprintln!("error: {e}");
    }
    let text = serde_json::to_string_pretty(&rep).expect("serializable");
    match &common(&cli.command).report {
        Some(path) => {
            if let Err(e) = write(path, text.as_bytes()) {
                eprintln!("error: {e}");
                return EXIT_USAGE;
            }
        }
        None => println!("{text}"),
    }
    rep.exit_code
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn input_spec_parsing() {
        assert_eq!(parse_input("zero").unwrap(), InputSignal::Zero);
        assert_eq!(parse_input("pulse:10,1").unwrap(), InputSignal::Pulse { amplitude: 10.0, t1: 1.0 });
        assert!(parse_input("pulse:10").is_err());
        assert!(parse_input("step:1").is_err());
        assert!(parse_input("pulse:1,-1").is_err());
    }

    #[test]
    fn exit_codes_by_error_kind() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), EXIT_USAGE);
        assert_eq!(CliError::Schema { path: "kernel".into(), message: "x".into() }.exit_code(), EXIT_USAGE);
        let num = AnalysisError::Numerical { status: sdpsolve::SolveStatus::MaxIterations, detail: String::new() };
        assert_eq!(CliError::Analysis(num).exit_code(), EXIT_NUMERICAL);
        assert_eq!(CliError::Analysis(AnalysisError::Invalid("x".into())).exit_code(), EXIT_USAGE);
    }

    #[test]
    fn clap_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
