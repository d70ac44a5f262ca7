//! Figure data with the caption parameters built in.

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::analytic::{self, SolvableN6Params};
use crate::error::{Error, Result};
use crate::matrix::C64;
use crate::model::{eigenvalue_trace, Hermiticity};
use crate::output::{num, trace_csv, CsvTable};
use crate::propagator::{self, PropagationSettings};
use crate::semiclassic::{self, Hs4Params};

pub const RECIPES: [&str; 6] = ["fig1", "fig3a", "fig3b", "fig4a", "fig4c", "fig4d"];

/// One emitted file: `stem.csv` plus the parameters for its metadata line.
#[derive(Debug, Clone)]
pub struct RecipeOutput {
    pub stem: String,
    pub params: Value,
    pub table: CsvTable,
}

pub fn run_recipe(name: &str, settings: &PropagationSettings) -> Result<Vec<RecipeOutput>> {
    match name {
        "fig1" => fig1(),
        "fig3a" => fig3a(),
        "fig3b" => fig3b(settings),
        "fig4a" => fig4a(),
        "fig4c" => fig4c(settings),
        "fig4d" => fig4d(settings),
        other => Err(Error::UnknownRecipe(other.to_string())),
    }
}

pub const FIG1: (f64, f64) = (1.0, 2.0);

fn fig1() -> Result<Vec<RecipeOutput>> {
    let (g, v) = FIG1;
    [Hermiticity::Hermitian, Hermiticity::AntiHermitian]
        .into_iter()
        .map(|flag| {
            let m = analytic::two_level_model(C64::new(g, 0.0), v, flag)?;
            Ok(RecipeOutput {
                stem: format!("fig1_{}", flag.name()),
                params: json!({"recipe": "fig1", "g": g, "v": v, "hermiticity": flag.name(), "t": [-4.0, 4.0, 801]}),
                table: trace_csv(&eigenvalue_trace(&m, -4.0, 4.0, 801)?),
            })
        })
        .collect()
}

pub const FIG3A: SolvableN6Params = SolvableN6Params {
    b1: 0.1,
    b2: 0.2,
    e: 2.0,
    g: C64::new(0.2, 0.0),
    gamma: C64::new(0.3, 0.0),
};

pub const FIG3B: SolvableN6Params = SolvableN6Params {
    b1: 0.3,
    b2: 1.6,
    e: 2.2,
    g: C64::new(0.3, 0.0),
    gamma: C64::new(0.3, 0.0),
};

fn n6_json(p: &SolvableN6Params) -> Value {
    json!({"E": p.e, "b1": p.b1, "b2": p.b2, "g": p.g.re, "gamma": p.gamma.re})
}

fn fig3a() -> Result<Vec<RecipeOutput>> {
    let m = analytic::n6_model(&FIG3A, Hermiticity::AntiHermitian)?;
    let mut params = n6_json(&FIG3A);
    params["recipe"] = json!("fig3a");
    params["t"] = json!([-40.0, 40.0, 4001]);
    Ok(vec![RecipeOutput {
        stem: "fig3a".into(),
        params,
        table: trace_csv(&eigenvalue_trace(&m, -40.0, 40.0, 4001)?),
    }])
}

/// Normalized probabilities out of state 1: `(analytic, numeric)` per target.
pub fn fig3b_column(settings: &PropagationSettings) -> Result<Vec<(f64, f64)>> {
    let analytic = analytic::solvable_n6(&FIG3B)?;
    let m = analytic::n6_model(&FIG3B, Hermiticity::AntiHermitian)?;
    let numeric = propagator::transition_table(&propagator::scattering_matrix(&m, settings)?)?;
    Ok((0..6).map(|to| (analytic.normalized()[to][0], numeric.normalized()[to][0])).collect())
}

fn fig3b(settings: &PropagationSettings) -> Result<Vec<RecipeOutput>> {
    let mut t = CsvTable::new(&["to", "p_analytic", "p_numeric", "abs_diff"]);
    for (k, (a, n)) in fig3b_column(settings)?.into_iter().enumerate() {
        t.push(vec![(k + 1).to_string(), num(a), num(n), num((a - n).abs())]);
    }
    let mut params = n6_json(&FIG3B);
    params["recipe"] = json!("fig3b");
    params["from"] = json!(1);
    Ok(vec![RecipeOutput {
        stem: "fig3b".into(),
        params,
        table: t,
    }])
}

pub const FIG4A: Hs4Params = Hs4Params {
    b: 1.0,
    e1: 0.25,
    e2: 0.25,
    g: 0.05,
};

fn hs4_json(p: &Hs4Params) -> Value {
    json!({"b": p.b, "E1": p.e1, "E2": p.e2, "g": p.g})
}

fn fig4a() -> Result<Vec<RecipeOutput>> {
    let m = semiclassic::hs4_model(&FIG4A)?;
    let mut params = hs4_json(&FIG4A);
    params["recipe"] = json!("fig4a");
    params["t"] = json!([-1.5, 1.5, 1501]);
    Ok(vec![RecipeOutput {
        stem: "fig4a".into(),
        params,
        table: trace_csv(&eigenvalue_trace(&m, -1.5, 1.5, 1501)?),
    }])
}

/// `b = 2`, `g = 2`, `E1 = 1`; one curve per `E2`.
pub const FIG4C_E2: [f64; 2] = [2.0, 3.0];

fn fig4c(settings: &PropagationSettings) -> Result<Vec<RecipeOutput>> {
    let times: Vec<f64> = (0..=600).map(|k| -6.0 + 0.02 * k as f64).collect();
    let mut t = CsvTable::new(&["e2", "from", "t", "p_1", "p_2", "p_3", "p_4"]);
    for e2 in FIG4C_E2 {
        let p = Hs4Params {
            b: 2.0,
            e1: 1.0,
            e2,
            g: 2.0,
        };
        let m = semiclassic::hs4_model(&p)?;
        for from in [0, 2] {
            let traj = propagator::propagate_trajectory(&m, from, &times, settings)?;
            for (time, amp) in traj.times.iter().zip(&traj.amplitudes) {
                let total: f64 = amp.iter().map(|a| a.norm_sqr()).sum();
                let mut row = vec![num(e2), (from + 1).to_string(), num(*time)];
                row.extend(amp.iter().map(|a| num(a.norm_sqr() / total)));
                t.push(row);
            }
        }
    }
    Ok(vec![RecipeOutput {
        stem: "fig4c".into(),
        params: json!({"recipe": "fig4c", "b": 2.0, "g": 2.0, "E1": 1.0, "E2": FIG4C_E2, "t": [-6.0, 6.0, 601]}),
        table: t,
    }])
}

pub fn fig4d_g2() -> [f64; 5] {
    [1.0, 2.0 * std::f64::consts::SQRT_2, 4.0, 9.0, 16.0]
}

/// `n` points evenly spaced over `[a, b]`.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// One point of a `P~(3 -> 4)` curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct P34Point {
    pub inv_b: f64,
    pub r: f64,
    pub regime: semiclassic::Regime,
    /// `NaN` in the critical regime.
    pub log_semiclassical: f64,
    pub log_numeric: f64,
}

/// `P~(3 -> 4)` for `E1 = E2 = e` over a grid of `1/b`, points in parallel.
pub fn p34_curve(
    e1: f64,
    e2: f64,
    g2: f64,
    inv_b: &[f64],
    stokes_phase: f64,
    numeric: bool,
    settings: &PropagationSettings,
) -> Result<Vec<P34Point>> {
    propagator::with_thread_cap(|| {
        inv_b
            .par_iter()
            .map(|&ib| {
                if !(ib > 0.0) {
                    return Err(Error::InvalidArgument(format!("1/b must be positive, got {ib}")));
                }
                let p = Hs4Params {
                    b: 1.0 / ib,
                    e1,
                    e2,
                    g: g2.sqrt(),
                };
                let regime = p.regime();
                let log_semiclassical = match semiclassic::p34_composed_log(&p, stokes_phase) {
                    Ok(l) => l,
                    Err(Error::CriticalRegime(_)) => f64::NAN,
                    Err(e) => return Err(e),
                };
                let log_numeric = if numeric {
                    semiclassic::p34_propagated_log(&p, settings)?
                } else {
                    f64::NAN
                };
                Ok(P34Point {
                    inv_b: ib,
                    r: p.r(),
                    regime,
                    log_semiclassical,
                    log_numeric,
                })
            })
            .collect()
    })
}

pub fn p34_table(points: &[P34Point], g2: Option<f64>) -> CsvTable {
    let mut head = vec![];
    if g2.is_some() {
        head.push("g2");
    }
    head.extend([
        "inv_b",
        "p34_semiclassical",
        "p34_numeric",
        "r",
        "regime",
        "log_p34_semiclassical",
        "log_p34_numeric",
    ]);
    let mut t = CsvTable::new(&head);
    let exp = |l: f64| if l > propagator::LOG_OVERFLOW { f64::INFINITY } else { l.exp() };
    for p in points {
        let mut row = vec![];
        if let Some(g) = g2 {
            row.push(num(g));
        }
        row.extend([
            num(p.inv_b),
            num(exp(p.log_semiclassical)),
            num(exp(p.log_numeric)),
            num(p.r),
            p.regime.name().to_string(),
            num(p.log_semiclassical),
            num(p.log_numeric),
        ]);
        t.push(row);
    }
    t
}

fn fig4d(settings: &PropagationSettings) -> Result<Vec<RecipeOutput>> {
    let grid = linspace(0.1, 1.0, 50);
    let mut table: Option<CsvTable> = None;
    for g2 in fig4d_g2() {
        let pts = p34_curve(2.0, 2.0, g2, &grid, 0.0, true, settings)?;
        let part = p34_table(&pts, Some(g2));
        match table.as_mut() {
            Some(t) => t.rows.extend(part.rows),
            None => table = Some(part),
        }
    }
    Ok(vec![RecipeOutput {
        stem: "fig4d".into(),
        params: json!({"recipe": "fig4d", "E1": 2.0, "E2": 2.0, "g2": fig4d_g2(), "inv_b": [0.1, 1.0, 50], "stokes_phase": 0.0}),
        table: table.unwrap_or_default(),
    }])
}
