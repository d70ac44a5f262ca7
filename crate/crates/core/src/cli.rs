//! The `nmlz` command line.
//!
//! Every flag may also come from `--config file.json`, an object whose
//! `command` key names the subcommand and whose other keys are flag names
//! (`rel_tol` or `rel-tol`). Flags given on the command line win.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::adiabatic;
use crate::analytic::{self, SolvableN4Params, SolvableN6Params};
use crate::bdg::{self, DissociationSystem};
use crate::error::{Error, Result};
use crate::integrability::{self, TwoTimeFamily, TwoTimePath};
use crate::matrix::C64;
use crate::model::{eigenvalue_trace, Hermiticity, NmlzModel};
use crate::output::{self, num, CsvTable};
use crate::propagator::{self, EndpointBasis, PropagationSettings, TransitionTable};
use crate::recipes;
use crate::semiclassic::Hs4Params;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser, Serialize)]
#[command(name = "nmlz", version, about = "Non-Hermitian multistate Landau-Zener toolkit", args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Scattering table of a model by direct propagation.
    Solve(SolveArgs),
    /// Closed-form tables of the solvable models.
    Analytic(AnalyticArgs),
    /// Sign vector s with sum_m s_m P~_mn = 1 for one column of a table.
    Conservation(ConservationArgs),
    /// Semiclassical and numeric P~(3 -> 4) of the four-level model over 1/b.
    Dykhne(DykhneArgs),
    /// Zero-curvature residual of a two-time family on a (t, tau) grid.
    CheckIntegrability(IntegrabilityArgs),
    /// Transition table along a path deformed to fixed tau.
    PathEvolve(PathArgs),
    /// Pair production from a mean-field molecular dissociation sweep.
    Dissociate(DissociateArgs),
    /// Instantaneous eigenvalues on a time grid.
    Trace(TraceArgs),
    /// Transition tables over a one-parameter grid.
    Sweep(SweepArgs),
    /// Data for one of the figure recipes.
    Figure(FigureArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Endpoint {
    Adiabatic,
    Diabatic,
}

#[derive(Debug, Args, Serialize)]
pub struct NumericArgs {
    /// Half-width T of the integration window [-T, T].
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, default_value_t = 1e-10)]
    pub rel_tol: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub abs_tol: f64,
    #[arg(long, default_value_t = 20_000_000)]
    pub max_steps: usize,
    #[arg(long, value_enum, default_value = "adiabatic")]
    pub endpoint: Endpoint,
    /// Skip the second run at T/2 that estimates convergence.
    #[arg(long)]
    pub no_convergence_check: bool,
}

impl NumericArgs {
    pub fn settings(&self) -> Result<PropagationSettings> {
        let s = PropagationSettings {
            horizon: self.horizon,
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_steps: self.max_steps,
            endpoint_basis: match self.endpoint {
                Endpoint::Adiabatic => EndpointBasis::Adiabatic,
                Endpoint::Diabatic => EndpointBasis::Diabatic,
            },
            estimate_convergence: !self.no_convergence_check,
            ..Default::default()
        };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SolveArgs {
    /// Model JSON: a file path or an inline document.
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub numeric: NumericArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    TwoLevel,
    N4,
    N6,
}

#[derive(Debug, Args, Serialize)]
pub struct AnalyticArgs {
    #[arg(long, value_enum, required_unless_present = "explain_be")]
    pub model_kind: Option<ModelKind>,
    /// Comma-separated `key=value` list, e.g. `g=0.3,v=1`.
    #[arg(long, default_value = "")]
    pub params: String,
    /// Table of the Hermitian counterpart.
    #[arg(long)]
    pub hermitian: bool,
    /// Report the diagonal formula for every level of `--model` along with
    /// the half-circle contour evaluation.
    #[arg(long, requires = "model")]
    pub explain_be: bool,
    #[arg(long)]
    pub model: Option<String>,
    /// Half-circle radius for `--explain-be`.
    #[arg(long, default_value_t = 1e4)]
    pub radius: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ConservationArgs {
    /// Transition table CSV as written by `solve` or `analytic`.
    #[arg(long)]
    pub table: PathBuf,
    /// One-based initial level.
    #[arg(long)]
    pub column: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct DykhneArgs {
    #[arg(long = "E1")]
    pub e1: f64,
    #[arg(long = "E2")]
    pub e2: f64,
    /// Squared coupling g^2.
    #[arg(long)]
    pub g2: f64,
    /// Grid `a:b:n` over 1/b.
    #[arg(long, default_value = "0.1:1:50", allow_hyphen_values = true)]
    pub b_inv_grid: String,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub stokes_phase: f64,
    /// Skip the propagator column.
    #[arg(long)]
    pub no_numeric: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub numeric: NumericArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Hs4,
}

#[derive(Debug, Args, Serialize)]
pub struct IntegrabilityArgs {
    #[arg(long, value_enum, default_value = "hs4")]
    pub family: Family,
    /// `b=..,E1=..,E2=..,g=..`
    #[arg(long, default_value = "b=1,E1=1,E2=2,g=0.5")]
    pub params: String,
    /// `t0:t1:nt,tau0:tau1:ntau`
    #[arg(long, default_value = "-5:5:10,0.5:4:10", allow_hyphen_values = true)]
    pub grid: String,
    #[arg(long)]
    pub hermitian: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PathArgs {
    #[arg(long, value_enum, default_value = "hs4")]
    pub family: Family,
    #[arg(long, default_value = "b=1,E1=1,E2=2,g=0.5")]
    pub params: String,
    /// tau of the horizontal part.
    #[arg(long)]
    pub tau: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub numeric: NumericArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct DissociateArgs {
    /// Relative sweep rate: mu1 = -v t / 2, mu2 = +v t / 2.
    #[arg(long)]
    pub v: f64,
    #[arg(long)]
    pub g: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub g_im: f64,
    #[arg(long, default_value_t = 401)]
    pub samples: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub numeric: NumericArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct TraceArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long, allow_negative_numbers = true)]
    pub t_min: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub t_max: f64,
    #[arg(long, default_value_t = 401)]
    pub samples: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub model: String,
    /// `name=a:b:n` with name one of `g` (coupling scale), `b` (slope
    /// scale), `e` (static scale) or `horizon`.
    #[arg(long, allow_hyphen_values = true)]
    pub sweep: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub numeric: NumericArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct FigureArgs {
    /// fig1, fig3a, fig3b, fig4a, fig4c or fig4d.
    #[arg(long)]
    pub name: String,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub numeric: NumericArgs,
}

/// Parses `a:b:n` into `n` evenly spaced points.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidArgument(format!("grid {spec:?} is not of the form a:b:n"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let a: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let b: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if n == 0 || !a.is_finite() || !b.is_finite() || (n > 1 && !(b > a)) {
        return Err(Error::InvalidArgument(format!("grid {spec:?} must be nonempty and increasing")));
    }
    Ok(recipes::linspace(a, b, n))
}

/// Parses `k=v,k=v` and rejects keys outside `allowed`.
pub fn parse_params(spec: &str, allowed: &[&str]) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("parameter {item:?} is not key=value")))?;
        let k = k.trim();
        if !allowed.contains(&k) {
            return Err(Error::InvalidArgument(format!(
                "unknown parameter {k:?}; expected one of {}",
                allowed.join(", ")
            )));
        }
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("parameter {k} has non-numeric value {v:?}")))?;
        if out.insert(k.to_string(), v).is_some() {
            return Err(Error::InvalidArgument(format!("parameter {k} given twice")));
        }
    }
    Ok(out)
}

fn require(p: &BTreeMap<String, f64>, k: &str) -> Result<f64> {
    p.get(k)
        .copied()
        .ok_or_else(|| Error::InvalidArgument(format!("missing parameter {k}")))
}

fn opt(p: &BTreeMap<String, f64>, k: &str) -> f64 {
    p.get(k).copied().unwrap_or(0.0)
}

/// Inline JSON when the text starts with `{`, a file path otherwise.
pub fn load_model(source: &str) -> Result<NmlzModel> {
    let text = if source.trim_start().starts_with('{') {
        source.to_string()
    } else {
        fs::read_to_string(source).map_err(|e| Error::Io(format!("cannot read model {source:?}: {e}")))?
    };
    NmlzModel::from_json(&text)
}

fn hs4_params(spec: &str) -> Result<Hs4Params> {
    let p = parse_params(spec, &["b", "E1", "E2", "g"])?;
    let h = Hs4Params {
        b: require(&p, "b")?,
        e1: require(&p, "E1")?,
        e2: require(&p, "E2")?,
        g: require(&p, "g")?,
    };
    h.validate()?;
    Ok(h)
}

/// Expands `--config` into ordinary arguments placed before the explicit
/// ones, so that the command line overrides the file.
pub fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut rest = Vec::with_capacity(args.len());
    let mut config: Option<String> = None;
    let mut it = args.into_iter();
    let program = it.next().unwrap_or_else(|| "nmlz".into());
    while let Some(a) = it.next() {
        let s = a.to_string_lossy().to_string();
        if s == "--config" {
            let path = it
                .next()
                .ok_or_else(|| Error::InvalidArgument("--config needs a file path".into()))?;
            config = Some(path.to_string_lossy().to_string());
        } else if let Some(path) = s.strip_prefix("--config=") {
            config = Some(path.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config else {
        let mut out = vec![program];
        out.extend(rest);
        return Ok(out);
    };
    let text = fs::read_to_string(&path).map_err(|e| Error::Io(format!("cannot read config {path:?}: {e}")))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidArgument(format!("config {path:?}: {e}")))?;
    let Value::Object(map) = value else {
        return Err(Error::InvalidArgument(format!("config {path:?} must be a JSON object")));
    };
    let explicit_command = rest.first().map(|a| !a.to_string_lossy().starts_with('-')).unwrap_or(false);
    let mut out = vec![program];
    let command = map.get("command").and_then(Value::as_str).map(str::to_string);
    match (&command, explicit_command) {
        (_, true) => out.push(rest.remove(0)),
        (Some(c), false) => out.push(c.into()),
        (None, false) => {
            return Err(Error::InvalidArgument(format!(
                "config {path:?} has no \"command\" and none was given"
            )))
        }
    }
    for (k, v) in &map {
        if k == "command" {
            continue;
        }
        let flag = if k.starts_with("E1") || k.starts_with("E2") { format!("--{k}") } else { format!("--{}", k.replace('_', "-")) };
        let mut push = |v: &Value| -> Result<()> {
            match v {
                Value::Bool(true) => out.push(flag.clone().into()),
                Value::Bool(false) | Value::Null => {}
                Value::String(s) => {
                    out.push(flag.clone().into());
                    out.push(s.into());
                }
                Value::Number(n) => {
                    out.push(flag.clone().into());
                    out.push(n.to_string().into());
                }
                other => {
                    return Err(Error::InvalidArgument(format!("config key {k:?} has unsupported value {other}")));
                }
            }
            Ok(())
        };
        match v {
            Value::Array(items) => {
                for i in items {
                    push(i)?;
                }
            }
            v => push(v)?,
        }
    }
    out.extend(rest);
    Ok(out)
}

/// Entry point: returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("nmlz: {e}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("nmlz: {e}");
            e.exit_code()
        }
    }
}

fn metadata(cli: &Cli, extra: Option<&Value>) -> String {
    let mut v = serde_json::to_value(&cli.command).unwrap_or(Value::Null);
    if let (Value::Object(m), Some(x)) = (&mut v, extra) {
        m.insert("resolved".into(), x.clone());
    }
    format!("nmlz {VERSION} {v}")
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| Error::Io(format!("cannot create {dir:?}: {e}")))?;
            }
            fs::write(p, text).map_err(|e| Error::Io(format!("cannot write {p:?}: {e}")))
        }
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes()).map_err(|e| Error::Io(e.to_string()))
        }
    }
}

fn write_table(cli: &Cli, out: Option<&Path>, table: &CsvTable, extra: Option<&Value>) -> Result<()> {
    emit(out, &table.render(&metadata(cli, extra))?)
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Solve(a) => {
            let model = load_model(&a.model)?;
            let s = a.numeric.settings()?;
            let result = propagator::scattering_matrix(&model, &s)?;
            let table = propagator::transition_table(&result)?;
            let extra = serde_json::json!({
                "model": model.to_spec(),
                "horizon_used": result.horizon_used,
                "convergence_estimate": num(result.convergence_estimate),
            });
            write_table(cli, a.out.as_deref(), &output::transition_csv(&table), Some(&extra))
        }
        Command::Analytic(a) => {
            if a.explain_be {
                let model = load_model(a.model.as_deref().unwrap_or_default())?;
                return write_table(cli, a.out.as_deref(), &explain_be(&model, a.radius)?, None);
            }
            let kind = a
                .model_kind
                .ok_or_else(|| Error::InvalidArgument("--model-kind is required".into()))?;
            let table = analytic_table(kind, &a.params, a.hermitian)?;
            write_table(cli, a.out.as_deref(), &output::transition_csv(&table), None)
        }
        Command::Conservation(a) => {
            let text = fs::read_to_string(&a.table).map_err(|e| Error::Io(format!("cannot read {:?}: {e}", a.table)))?;
            let logs = output::read_log_table(&CsvTable::parse(&text)?)?;
            let n = logs.len();
            if a.column == 0 || a.column > n {
                return Err(Error::InvalidArgument(format!("column {} outside 1..={n}", a.column)));
            }
            let from = a.column - 1;
            let log_col: Vec<f64> = (0..n).map(|to| logs[to][from]).collect();
            let top = log_col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut t = CsvTable::new(&["to", "log_p_tilde", "sign"]);
            let signature = if top <= propagator::LOG_OVERFLOW {
                let col: Vec<f64> = log_col.iter().map(|l| l.exp()).collect();
                analytic::conservation_signature(&col, from, a.tol)
            } else {
                None
            };
            let extra = match &signature {
                Some(sig) => {
                    for to in 0..n {
                        t.push(vec![(to + 1).to_string(), num(log_col[to]), sig.signs[to].to_string()]);
                    }
                    serde_json::json!({"found": true, "residual": sig.residual,
                        "scaled_residual": analytic::scaled_signature_residual(&log_col, &sig.signs)})
                }
                None => {
                    for to in 0..n {
                        t.push(vec![(to + 1).to_string(), num(log_col[to]), "0".into()]);
                    }
                    serde_json::json!({"found": false})
                }
            };
            write_table(cli, a.out.as_deref(), &t, Some(&extra))
        }
        Command::Dykhne(a) => {
            let grid = parse_grid(&a.b_inv_grid)?;
            let s = a.numeric.settings()?;
            let probe = Hs4Params {
                b: 1.0,
                e1: a.e1,
                e2: a.e2,
                g: a.g2.sqrt(),
            };
            probe.validate()?;
            if !(a.g2 >= 0.0) {
                return Err(Error::InvalidArgument(format!("g2 must be non-negative, got {}", a.g2)));
            }
            if probe.regime() == crate::semiclassic::Regime::Critical {
                return Err(Error::CriticalRegime(probe.r()));
            }
            let pts = recipes::p34_curve(a.e1, a.e2, a.g2, &grid, a.stokes_phase, !a.no_numeric, &s)?;
            write_table(cli, a.out.as_deref(), &recipes::p34_table(&pts, None), None)
        }
        Command::CheckIntegrability(a) => {
            let Family::Hs4 = a.family;
            let p = hs4_params(&a.params)?;
            let flag = if a.hermitian { Hermiticity::Hermitian } else { Hermiticity::AntiHermitian };
            let fam = TwoTimeFamily::new(crate::semiclassic::hs4_model_with(&p, flag)?, vec![true, true, false, false], p.b)?;
            let (ts, taus) = a
                .grid
                .split_once(',')
                .ok_or_else(|| Error::InvalidArgument(format!("grid {:?} is not t0:t1:nt,tau0:tau1:ntau", a.grid)))?;
            let (ts, taus) = (parse_grid(ts)?, parse_grid(taus)?);
            let points: Vec<(f64, f64)> = ts.iter().flat_map(|&t| taus.iter().map(move |&u| (t, u))).collect();
            let res: Vec<f64> = propagator::with_thread_cap(|| {
                points
                    .par_iter()
                    .map(|&pt| integrability::integrability_residual(&fam, &[pt]))
                    .collect::<Result<Vec<_>>>()
            })?;
            let mut t = CsvTable::new(&["t", "tau", "residual"]);
            for (&(x, u), r) in points.iter().zip(&res) {
                t.push_nums(&[x, u, *r]);
            }
            let max = res.iter().copied().fold(0.0, f64::max);
            eprintln!("max residual {max:e}");
            write_table(cli, a.out.as_deref(), &t, Some(&serde_json::json!({"max_residual": max})))
        }
        Command::PathEvolve(a) => {
            let Family::Hs4 = a.family;
            let p = hs4_params(&a.params)?;
            let fam = TwoTimeFamily::hs4(&p)?;
            let mut s = a.numeric.settings()?;
            let horizon = s.horizon_for(fam.base());
            s.horizon = Some(horizon);
            let path = TwoTimePath::deformed(horizon, a.tau)?;
            for w in integrability::path_warnings(&fam, &path)? {
                eprintln!("nmlz: warning: {w}");
            }
            let table = integrability::path_evolution(&fam, &path, &s)?;
            let extra = serde_json::json!({"horizon_used": horizon});
            write_table(cli, a.out.as_deref(), &output::transition_csv(&table), Some(&extra))
        }
        Command::Dissociate(a) => {
            let sys = DissociationSystem::symmetric(a.v, C64::new(a.g, a.g_im));
            let s = a.numeric.settings()?;
            let obs = bdg::pair_production_run(&sys, a.samples, &s)?;
            let mut t = CsvTable::new(&["t", "n_a", "n_b", "diff"]);
            for k in 0..obs.times.len() {
                t.push_nums(&[obs.times[k], obs.n_a[k], obs.n_b[k], obs.difference[k]]);
            }
            let extra = serde_json::json!({"final_n_a": obs.final_n_a, "final_n_b": obs.final_n_b, "drift": obs.drift()});
            write_table(cli, a.out.as_deref(), &t, Some(&extra))
        }
        Command::Trace(a) => {
            let model = load_model(&a.model)?;
            let tr = eigenvalue_trace(&model, a.t_min, a.t_max, a.samples)?;
            write_table(cli, a.out.as_deref(), &output::trace_csv(&tr), None)
        }
        Command::Sweep(a) => {
            let model = load_model(&a.model)?;
            let s = a.numeric.settings()?;
            let (name, grid) = a
                .sweep
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("sweep {:?} is not name=a:b:n", a.sweep)))?;
            let name = name.trim();
            if !["g", "b", "e", "horizon"].contains(&name) {
                return Err(Error::InvalidArgument(format!(
                    "unknown sweep parameter {name:?}; expected g, b, e or horizon"
                )));
            }
            let values = parse_grid(grid)?;
            let tables = sweep(&model, name, &values, &s)?;
            let mut t = CsvTable::new(&["param", "value", "from", "to", "p_tilde", "p_normalized", "log_p_tilde"]);
            for (v, table) in values.iter().zip(&tables) {
                for row in output::transition_csv(table).rows {
                    let mut r = vec![name.to_string(), num(*v)];
                    r.extend(row);
                    t.push(r);
                }
            }
            write_table(cli, a.out.as_deref(), &t, None)
        }
        Command::Figure(a) => {
            let s = a.numeric.settings()?;
            let outputs = recipes::run_recipe(&a.name, &s)?;
            for o in outputs {
                let path = a.out_dir.join(format!("{}.csv", o.stem));
                write_table(cli, Some(&path), &o.table, Some(&o.params))?;
                eprintln!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}

/// Scattering tables of `model` with one scale or the horizon varied.
pub fn sweep(model: &NmlzModel, name: &str, values: &[f64], settings: &PropagationSettings) -> Result<Vec<TransitionTable>> {
    propagator::with_thread_cap(|| {
        values
            .par_iter()
            .map(|&v| {
                let (m, s) = match name {
                    "g" => (model.rescaled(1.0, 1.0, v), *settings),
                    "b" => (model.rescaled(v, 1.0, 1.0), *settings),
                    "e" => (model.rescaled(1.0, v, 1.0), *settings),
                    "horizon" => (model.clone(), settings.with_horizon(v)),
                    other => return Err(Error::InvalidArgument(format!("unknown sweep parameter {other:?}"))),
                };
                m.check_nondegenerate()?;
                propagator::transition_table(&propagator::scattering_matrix(&m, &s)?)
            })
            .collect()
    })
}

fn c(p: &BTreeMap<String, f64>, re: &str, im: &str) -> Result<C64> {
    Ok(C64::new(require(p, re)?, opt(p, im)))
}

/// Closed-form table for one of the solvable models.
pub fn analytic_table(kind: ModelKind, params: &str, hermitian: bool) -> Result<TransitionTable> {
    match kind {
        ModelKind::TwoLevel => {
            let p = parse_params(params, &["g", "g_im", "v"])?;
            let g = c(&p, "g", "g_im")?;
            let v = require(&p, "v")?;
            let (l11, l21) = if hermitian {
                let (p11, p21) = analytic::lz_two_level_hermitian(g, v)?;
                (p11.ln(), p21.ln())
            } else {
                analytic::nlz_two_level_log(g, v)?
            };
            TransitionTable::from_log(vec![vec![l11, l21], vec![l21, l11]])
        }
        ModelKind::N4 => {
            let p = parse_params(params, &["b1", "b2", "e1", "e2", "g", "g_im", "gamma", "gamma_im"])?;
            let s = SolvableN4Params {
                b1: require(&p, "b1")?,
                b2: require(&p, "b2")?,
                e1: opt(&p, "e1"),
                e2: opt(&p, "e2"),
                g: c(&p, "g", "g_im")?,
                gamma: c(&p, "gamma", "gamma_im")?,
            };
            if hermitian {
                analytic::solvable_n4_hermitian(&s)
            } else {
                analytic::solvable_n4(&s)
            }
        }
        ModelKind::N6 => {
            let p = parse_params(params, &["b1", "b2", "e", "g", "g_im", "gamma", "gamma_im"])?;
            let s = SolvableN6Params {
                b1: require(&p, "b1")?,
                b2: require(&p, "b2")?,
                e: opt(&p, "e"),
                g: c(&p, "g", "g_im")?,
                gamma: c(&p, "gamma", "gamma_im")?,
            };
            if hermitian {
                analytic::solvable_n6_hermitian(&s)
            } else {
                analytic::solvable_n6(&s)
            }
        }
    }
}

/// Per level: the `1/t` coefficient, the diagonal formula and the contour
/// value (empty where the slope is not extremal).
pub fn explain_be(model: &NmlzModel, radius: f64) -> Result<CsvTable> {
    let mut t = CsvTable::new(&["level", "slope", "coeff_1_over_t", "ln_s_formula", "ln_s_contour", "ln_s_quadrature"]);
    for n in 0..model.dim() {
        let e = adiabatic::adiabatic_expansion(model, n)?;
        let (f, c, q) = match analytic::modified_be_diagonal(model, n) {
            Ok(f) => (
                num(f),
                num(adiabatic::semicircle_phase(model, n, radius)?.re),
                num(adiabatic::semicircle_phase_numeric(model, n, radius)?.re),
            ),
            Err(Error::SlopeNotExtremal(_)) => (String::new(), String::new(), String::new()),
            Err(err) => return Err(err),
        };
        t.push(vec![(n + 1).to_string(), num(e.slope), num(e.correction_coeff), f, c, q]);
    }
    Ok(t)
}
