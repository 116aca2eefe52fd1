//! Command-line front end.
//!
//! Exit codes: 0 pass, 1 tolerance failure, 2 configuration or usage error,
//! 3 mathematical or domain error, 4 when `lemma` finds the function
//! identically zero.

pub mod config;
pub mod csvio;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::expr::{self, Env, Var};
use crate::fundamental::{self, ZeroTolerance};
use crate::nabla::{self, CalcError, GridFunction};
use crate::solver::{self, SolverError, TerminalMode};
use crate::variational::{self, ResidualReport, VariationalError};

use config::{on_grid, Config};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Math(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Math(_) => 3,
        }
    }
}

impl From<VariationalError> for CliError {
    fn from(e: VariationalError) -> Self {
        match e {
            VariationalError::Eval { .. } => CliError::Math(e.to_string()),
            VariationalError::Calc(CalcError::DimensionMismatch { .. } | CalcError::GridMismatch) => {
                CliError::Math(e.to_string())
            }
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Variational(v) => v.into(),
            SolverError::NonFinite { .. } => CliError::Math(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "nablavar", version, about = "Nabla calculus and variational residuals on time scales")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Form {
    Pointwise,
    Integral,
    Finite,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    Direct,
    BruteForce,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Nabla integral of the [quad] integrand between two grid points.
    #[command(allow_negative_numbers = true)]
    Quad {
        config: PathBuf,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
    },
    /// Euler-Lagrange residuals of a trajectory.
    #[command(name = "check-el", allow_negative_numbers = true)]
    CheckEl {
        config: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long, value_enum, default_value = "pointwise")]
        form: Form,
        #[arg(long = "Tprime")]
        t_prime: Option<f64>,
        /// Report CSV path; defaults to [report] output, else stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Solve the truncated problem and run the horizon study.
    Solve {
        config: PathBuf,
        #[arg(long, value_enum)]
        method: Option<Method>,
        #[arg(long)]
        trajectory_out: Option<PathBuf>,
        #[arg(long)]
        horizon_out: Option<PathBuf>,
    },
    /// Build a variation exposing a nonzero residual function.
    #[command(allow_negative_numbers = true)]
    Lemma {
        config: PathBuf,
        #[arg(long)]
        function: PathBuf,
        #[arg(long)]
        t0: Option<f64>,
    },
    /// Weak-maximizer margin of a candidate against a reference trajectory.
    Compare {
        config: PathBuf,
        #[arg(long)]
        candidate: PathBuf,
        #[arg(long)]
        star: PathBuf,
    },
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let mut out = std::io::stdout().lock();
    match dispatch(cli.command, &mut out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<i32, CliError> {
    match cmd {
        Command::Quad { config, from, to } => quad(&config, from, to, out),
        Command::CheckEl {
            config,
            trajectory,
            form,
            t_prime,
            output,
        } => check_el(&config, &trajectory, form, t_prime, output, out),
        Command::Solve {
            config,
            method,
            trajectory_out,
            horizon_out,
        } => solve(&config, method, trajectory_out, horizon_out, out),
        Command::Lemma { config, function, t0 } => lemma(&config, &function, t0, out),
        Command::Compare { config, candidate, star } => compare(&config, &candidate, &star, out),
    }
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Config(format!("output: {e}"))
}

/// `%#.15g`-style: 15 significant digits with trailing zeros kept; an exact
/// zero prints as `0`.
pub fn format_sig15(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{v:.14e}");
    let exp: i32 = sci.rsplit('e').next().and_then(|e| e.parse().ok()).unwrap_or(0);
    if (-5..15).contains(&exp) {
        format!("{:.*}", (14 - exp) as usize, v)
    } else {
        let (mantissa, _) = sci.split_once('e').unwrap_or((&sci, ""));
        format!("{mantissa}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn quad(path: &Path, from: f64, to: f64, out: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = Config::load(path)?;
    let ts = cfg.time_scale()?;
    let section = cfg.section("quad")?;
    let src = section.string("integrand")?;
    let f = expr::parse(&src).map_err(|e| CliError::Config(format!("[quad] integrand: {e}")))?;
    if let Some(v) = f.variables().into_iter().find(|v| *v != Var::T) {
        return Err(CliError::Config(format!("[quad] integrand may only use t, found {v}")));
    }
    let ia = on_grid(&ts, from, "--from")?;
    let ib = on_grid(&ts, to, "--to")?;
    if ia > ib {
        return Err(CliError::Config(format!("--from {from} lies above --to {to}")));
    }
    let mut values = vec![0.0; ts.len()];
    for i in (ia + 1)..=ib {
        let t = ts.point(i);
        let v = f
            .eval(&Env::new(t, &[], &[], 0.0))
            .map_err(|e| CliError::Math(format!("integrand at t = {t}: {e}")))?;
        if !v.is_finite() {
            return Err(CliError::Math(format!("integrand is not finite at t = {t}")));
        }
        values[i] = v;
    }
    let gf = GridFunction::from_values(Arc::clone(&ts), 1, values).map_err(|e| CliError::Math(e.to_string()))?;
    let value = nabla::integral(&gf, from, to).map_err(|e| CliError::Math(e.to_string()))?[0];
    writeln!(out, "{}", format_sig15(value)).map_err(io_err)?;
    Ok(0)
}

fn report_tolerance(cfg: &Config, key: &str, default: f64) -> Result<f64, CliError> {
    Ok(match cfg.optional_section("report")? {
        Some(s) => s.opt_f64(key)?.unwrap_or(default),
        None => default,
    })
}

fn report_path(cfg: &Config, key: &str) -> Result<Option<PathBuf>, CliError> {
    match cfg.optional_section("report")? {
        Some(s) => s.opt_path(key),
        None => Ok(None),
    }
}

fn check_el(
    path: &Path,
    trajectory: &Path,
    form: Form,
    t_prime: Option<f64>,
    output: Option<PathBuf>,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let cfg = Config::load(path)?;
    let p = cfg.problem()?;
    let x = csvio::load_trajectory(trajectory, &p)?;
    let tp = match t_prime {
        Some(t) => t,
        None => cfg.solve_options(&p)?.t_trunc,
    };
    on_grid(p.time_scale(), tp, "--Tprime")?;
    let tol = report_tolerance(&cfg, "tolerance", 1e-6)?;

    let mut report = ResidualReport::build(&p, &x, &[tp])?;
    let (label, value) = match form {
        Form::Pointwise | Form::Finite => {
            report.el_integral.clear();
            report.el_integral_constant_spread.clear();
            ("max |EL residual|", report.max_pointwise())
        }
        Form::Integral => {
            report.el_pointwise.clear();
            ("integral-form spread", report.max_spread())
        }
    };
    if !value.is_finite() {
        return Err(CliError::Math(format!("{label} is not finite")));
    }

    let summary = format!("{label} = {value} (tolerance {tol}, T' = {tp})");
    match output.or(report_path(&cfg, "output")?) {
        Some(file) => {
            let f = std::fs::File::create(&file)
                .map_err(|e| CliError::Config(format!("{}: {e}", file.display())))?;
            report.write_csv(f)?;
            writeln!(out, "{summary}").map_err(io_err)?;
        }
        None => {
            report.write_csv(&mut *out)?;
            eprintln!("{summary}");
        }
    }
    Ok(if value <= tol { 0 } else { 1 })
}

fn solve(
    path: &Path,
    method: Option<Method>,
    trajectory_out: Option<PathBuf>,
    horizon_out: Option<PathBuf>,
    out: &mut dyn Write,
) -> Result<i32, CliError> {
    let cfg = Config::load(path)?;
    let p = cfg.problem()?;
    let opts = cfg.solve_options(&p)?;
    let section = cfg.optional_section("solve")?;
    let method = match method {
        Some(m) => m,
        None => match section.as_ref().map(|s| s.opt_string("method")).transpose()?.flatten().as_deref() {
            None | Some("direct") => Method::Direct,
            Some("brute_force") | Some("brute-force") => Method::BruteForce,
            Some(other) => return Err(CliError::Config(format!("[solve] unknown method {other:?}"))),
        },
    };
    let trajectory_out = trajectory_out
        .or(report_path(&cfg, "trajectory_out")?)
        .unwrap_or_else(|| PathBuf::from("trajectory.csv"));
    let horizon_out = horizon_out
        .or(report_path(&cfg, "horizon_out")?)
        .unwrap_or_else(|| PathBuf::from("horizon.csv"));

    let (trajectory, objective) = match method {
        Method::Direct => {
            let sol = solver::direct_solve(&p, &opts)?;
            writeln!(
                out,
                "direct solve: objective = {}, iterations = {}, |grad| = {:e}, stop = {:?}",
                sol.objective, sol.iterations, sol.grad_norm, sol.stop
            )
            .map_err(io_err)?;
            (sol.trajectory, sol.objective)
        }
        Method::BruteForce => {
            let grid = section
                .as_ref()
                .map(|s| s.list("value_grid"))
                .transpose()?
                .ok_or_else(|| CliError::Config("brute force needs [solve] value_grid".into()))?;
            let r = solver::brute_force(&p, &opts, &grid)?;
            writeln!(out, "brute force: objective = {}, assignments = {}", r.objective, r.evaluated)
                .map_err(io_err)?;
            (r.trajectory, r.objective)
        }
    };
    let _ = objective;
    csvio::save_trajectory(&trajectory, &trajectory_out)?;
    writeln!(out, "trajectory written to {}", trajectory_out.display()).map_err(io_err)?;

    let truncations = match section.as_ref().map(|s| s.opt_list("truncations")).transpose()?.flatten() {
        Some(list) => list,
        None => vec![opts.t_trunc],
    };
    for &t in &truncations {
        on_grid(p.time_scale(), t, "[solve] truncations entry")?;
        if t <= p.time_scale().min() {
            return Err(CliError::Config(format!("[solve] truncation {t} must lie above the minimum")));
        }
    }
    let rows = solver::horizon_study(&p, &truncations, &opts)?;
    let file = std::fs::File::create(&horizon_out)
        .map_err(|e| CliError::Config(format!("{}: {e}", horizon_out.display())))?;
    solver::write_horizon_csv(&rows, file).map_err(|e| CliError::Config(e.to_string()))?;
    writeln!(out, "T_trunc,max_el_residual,trans_T1,trans_T2,objective").map_err(io_err)?;
    for r in &rows {
        writeln!(
            out,
            "{},{:e},{:e},{:e},{}",
            r.t_trunc, r.max_el_residual, r.trans_t1, r.trans_t2, r.objective
        )
        .map_err(io_err)?;
    }
    if matches!(opts.terminal, TerminalMode::Pinned(_)) {
        writeln!(out, "transversality columns: not applicable (pinned terminal)").map_err(io_err)?;
    }
    writeln!(out, "horizon study written to {}", horizon_out.display()).map_err(io_err)?;
    Ok(0)
}

fn lemma(path: &Path, function: &Path, t0: Option<f64>, out: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = Config::load(path)?;
    let ts = cfg.time_scale()?;
    let g = csvio::load_function(function, &ts)?;
    let defaults = ZeroTolerance::default();
    let tol = ZeroTolerance {
        scattered: report_tolerance(&cfg, "zero_tol", defaults.scattered)?,
        dense_relative: report_tolerance(&cfg, "zero_tol_dense_relative", defaults.dense_relative)?,
    };
    let variation = match t0 {
        Some(t) => {
            on_grid(&ts, t, "--t0")?;
            fundamental::construct_violating_variation_at(&g, &ts, t, tol)
        }
        None => fundamental::construct_violating_variation_with(&g, &ts, tol),
    };
    match variation {
        None => {
            writeln!(out, "function vanishes at every testable point (within tolerance)").map_err(io_err)?;
            Ok(4)
        }
        Some(v) => {
            let w = fundamental::witness_value(&g, &v.eta, &ts, ts.min());
            let (lo, hi) = v.support_interval();
            writeln!(out, "case_tag = {}", v.case_tag).map_err(io_err)?;
            writeln!(out, "t0 = {}", v.t0).map_err(io_err)?;
            writeln!(out, "witness = {w}").map_err(io_err)?;
            writeln!(out, "support = [{lo}, {hi}]").map_err(io_err)?;
            Ok(0)
        }
    }
}

fn compare(path: &Path, candidate: &Path, star: &Path, out: &mut dyn Write) -> Result<i32, CliError> {
    let cfg = Config::load(path)?;
    let p = cfg.problem()?;
    let cand = csvio::load_trajectory(candidate, &p)?;
    let star = csvio::load_trajectory(star, &p)?;
    let tol = report_tolerance(&cfg, "margin_tol", 1e-9)?;
    let margin = variational::weak_max_compare(&p, &cand, &star)?;
    if !margin.is_finite() {
        return Err(CliError::Math("margin is not finite".into()));
    }
    writeln!(out, "margin = {margin}").map_err(io_err)?;
    Ok(if margin <= tol { 0 } else { 1 })
}
