//! The four-level model with two parallel pairs (`HS4`): symmetric frame,
//! effective two-level dynamics between the crossings, branch points and
//! Dykhne-type estimates of the interference-dependent probability
//! `P~(3 -> 4)`.
//!
//! The effective Hamiltonian lives in rescaled time `s = b t / E2`, where the
//! physical crossings `t = +-E2 / b` sit at `s = +-1`:
//!
//! `H_eff(s) = (1/b) [[4 g^2 s / (s^2 - 1), E1 E2], [E1 E2, 0]]`.
//!
//! [`reduced_gap`] is the eigenvalue difference of the bracket without the
//! `1/b` prefactor, so every exponent below carries a single `1/b`.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, C64, I, ONE, ZERO};
use crate::model::{Hermiticity, NmlzModel};
use crate::ode::{self, OdeState, StepControl};
use crate::propagator::{self, PropagationSettings};
use crate::quadrature::BranchQuadrature;

/// `|r - 1|` below which both Dykhne forms are refused.
pub const CRITICAL_WINDOW: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hs4Params {
    pub b: f64,
    pub e1: f64,
    pub e2: f64,
    pub g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    SubCritical,
    Critical,
    SuperCritical,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::SubCritical => "sub_critical",
            Regime::Critical => "critical",
            Regime::SuperCritical => "super_critical",
        }
    }
}

impl Hs4Params {
    pub fn validate(&self) -> Result<()> {
        if ![self.b, self.e1, self.e2, self.g].iter().all(|x| x.is_finite()) {
            return Err(Error::NonFiniteEntry("HS4 parameters"));
        }
        if !(self.b > 0.0 && self.e1 > 0.0 && self.e2 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need b, E1, E2 > 0, got b = {}, E1 = {}, E2 = {}",
                self.b, self.e1, self.e2
            )));
        }
        Ok(())
    }

    /// `r = E1 E2 / g^2`
    pub fn r(&self) -> f64 {
        self.e1 * self.e2 / (self.g * self.g)
    }

    pub fn regime(&self) -> Regime {
        let r = self.r();
        if (r - 1.0).abs() < CRITICAL_WINDOW {
            Regime::Critical
        } else if r < 1.0 {
            Regime::SubCritical
        } else {
            Regime::SuperCritical
        }
    }
}

/// Diagonal `(E1, -E1, b t + E2, b t - E2)`, coupling `g` from each of the
/// first two levels to each of the last two.
pub fn hs4_model(p: &Hs4Params) -> Result<NmlzModel> {
    hs4_model_with(p, Hermiticity::AntiHermitian)
}

pub fn hs4_model_with(p: &Hs4Params, flag: Hermiticity) -> Result<NmlzModel> {
    p.validate()?;
    let g = C64::new(p.g, 0.0);
    NmlzModel::from_upper(
        vec![0.0, 0.0, p.b, p.b],
        vec![p.e1, -p.e1, p.e2, -p.e2],
        &[(0, 2, g), (0, 3, g), (1, 2, g), (1, 3, g)],
        flag,
    )
}

/// The HS4 equations in the basis `(a+, a-, a3, a4)`, `a+- = (a1 +- a2)/sqrt 2`.
///
/// The coupling is neither Hermitian nor anti-Hermitian (the `+-` block is
/// Hermitian, the rest anti-Hermitian), so the generator is kept as raw
/// data rather than an [`NmlzModel`].
#[derive(Debug, Clone)]
pub struct SymmetricFrame {
    pub slopes: Vec<f64>,
    pub statics: Vec<f64>,
    pub coupling: ComplexMatrix,
}

pub fn symmetric_frame(p: &Hs4Params) -> Result<SymmetricFrame> {
    p.validate()?;
    let mut c = ComplexMatrix::zeros(4, 4);
    let s = C64::new(SQRT_2 * p.g, 0.0);
    c[(0, 1)] = C64::new(p.e1, 0.0);
    c[(1, 0)] = C64::new(p.e1, 0.0);
    for k in [2, 3] {
        c[(0, k)] = s;
        c[(k, 0)] = -s;
    }
    Ok(SymmetricFrame {
        slopes: vec![0.0, 0.0, p.b, p.b],
        statics: vec![0.0, 0.0, p.e2, -p.e2],
        coupling: c,
    })
}

impl SymmetricFrame {
    pub fn hamiltonian_at(&self, t: f64) -> ComplexMatrix {
        let mut h = self.coupling.clone();
        for m in 0..4 {
            h[(m, m)] += C64::new(self.slopes[m] * t + self.statics[m], 0.0);
        }
        h
    }

    /// `(a1, a2, a3, a4) -> (a+, a-, a3, a4)`
    pub fn to_frame(psi: &[C64]) -> Vec<C64> {
        vec![
            (psi[0] + psi[1]) * FRAC_1_SQRT_2,
            (psi[0] - psi[1]) * FRAC_1_SQRT_2,
            psi[2],
            psi[3],
        ]
    }

    pub fn from_frame(a: &[C64]) -> Vec<C64> {
        vec![
            (a[0] + a[1]) * FRAC_1_SQRT_2,
            (a[0] - a[1]) * FRAC_1_SQRT_2,
            a[2],
            a[3],
        ]
    }

    /// Evolves frame amplitudes `a * exp(log_offset)` from `t0` to `t1`.
    pub fn evolve(
        &self,
        a: &[C64],
        log_offset: f64,
        t0: f64,
        t1: f64,
        settings: &PropagationSettings,
    ) -> Result<(Vec<C64>, f64)> {
        propagator::evolve_linear(&self.slopes, &self.statics, &self.coupling, a, log_offset, t0, t1, settings)
    }
}

/// `P~(3 -> +) = P~(+ -> 4) = e^{4 pi g^2 / b} - 1`.
pub fn crossing_factor(p: &Hs4Params) -> Result<f64> {
    p.validate()?;
    Ok((4.0 * PI * p.g * p.g / p.b).exp_m1())
}

/// `ln` of [`crossing_factor`], finite for large exponents.
pub fn crossing_factor_log(p: &Hs4Params) -> Result<f64> {
    p.validate()?;
    let x = 4.0 * PI * p.g * p.g / p.b;
    Ok(x + (-(-x).exp_m1()).ln())
}

/// `(1/b) [[4 g^2 s / (s^2 - 1), E1 E2], [E1 E2, 0]]` at rescaled time `s`.
pub fn effective_hamiltonian(p: &Hs4Params, s: C64) -> Result<ComplexMatrix> {
    p.validate()?;
    let d = s * s - ONE;
    if d.norm() < 1e-8 {
        return Err(Error::PoleProximity(format!("s = {s}")));
    }
    let e = C64::new(p.e1 * p.e2 / p.b, 0.0);
    let mut h = ComplexMatrix::zeros(2, 2);
    h[(0, 0)] = s * (4.0 * p.g * p.g / p.b) / d;
    h[(0, 1)] = e;
    h[(1, 0)] = e;
    Ok(h)
}

/// Principal value of `sqrt((4 g^2 s / (s^2 - 1))^2 + 4 (E1 E2)^2)`.
pub fn reduced_gap(p: &Hs4Params, s: C64) -> C64 {
    let w = s * (4.0 * p.g * p.g) / (s * s - ONE);
    let e = p.e1 * p.e2;
    (w * w + C64::new(4.0 * e * e, 0.0)).sqrt()
}

/// Branch points of the gap in the upper half plane, nearest one first.
///
/// Zeros satisfy `2 g^2 s = +-i E1 E2 (s^2 - 1)`, i.e. `s^2 -+ (2i/r) s - 1 = 0`.
/// For `r < 1` both upper roots lie on the imaginary axis; for `r > 1` they
/// are `+-sqrt(1 - 1/r^2) + i/r`.
pub fn branch_points(p: &Hs4Params) -> Result<(C64, C64)> {
    p.validate()?;
    if p.g == 0.0 {
        return Err(Error::NoRoot("zero coupling leaves the gap nonzero".into()));
    }
    let r = p.r();
    let inv = 1.0 / r;
    let (t1, t2) = if r < 1.0 {
        let root = (inv * inv - 1.0).sqrt();
        // 1/r - root without cancellation
        (C64::new(0.0, 1.0 / (inv + root)), C64::new(0.0, inv + root))
    } else {
        let re = (1.0 - inv * inv).sqrt();
        (C64::new(re, inv), C64::new(-re, inv))
    };
    for t in [t1, t2] {
        let res = gap_polynomial_residual(p, t);
        if !(res < 1e-12) {
            return Err(Error::NoRoot(format!("residual {res:.3e} at {t}")));
        }
    }
    Ok((t1, t2))
}

/// Relative residual of `16 g^4 s^2 + 4 e^2 (s^2 - 1)^2` at `s`.
fn gap_polynomial_residual(p: &Hs4Params, s: C64) -> f64 {
    let g4 = p.g.powi(4);
    let e2 = (p.e1 * p.e2).powi(2);
    let d = s * s - ONE;
    let val = s * s * (16.0 * g4) + d * d * (4.0 * e2);
    let scale = 16.0 * g4 * s.norm_sqr() + 4.0 * e2 * (s.norm_sqr() + 1.0).powi(2);
    val.norm() / scale
}

/// Data of the semiclassical two-level problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DykhneParams {
    pub r: f64,
    pub branch_points: (C64, C64),
    /// Stokes phase of the two-branch formula; not determined by the model.
    pub stokes_phase: f64,
    pub regime: Regime,
}

pub fn dykhne_params(p: &Hs4Params, stokes_phase: f64) -> Result<DykhneParams> {
    let branch_points = branch_points(p)?;
    Ok(DykhneParams {
        r: p.r(),
        branch_points,
        stokes_phase,
        regime: p.regime(),
    })
}

/// `int reduced_gap ds` along the polyline `0 -> vertices[0] -> ... ->
/// end`, continuing the square root from its positive value at `s = 0`.
/// The last vertex may be a branch point: the final segment is
/// reparametrized so the square-root endpoint behaviour becomes smooth.
pub fn gap_integral(p: &Hs4Params, vertices: &[C64]) -> Result<C64> {
    if vertices.is_empty() {
        return Err(Error::InvalidArgument("contour needs at least one vertex".into()));
    }
    let quad = BranchQuadrature::default();
    let mut start = ZERO;
    let mut prev = reduced_gap(p, start);
    if prev.re <= 0.0 {
        return Err(Error::InvalidArgument("gap must be positive at s = 0".into()));
    }
    let mut total = ZERO;
    for (k, &end) in vertices.iter().enumerate() {
        let last = k + 1 == vertices.len();
        let a = start;
        let delta = end - a;
        let mut f = |u: f64, prev: C64| {
            let (v, dv) = if last { (1.0 - (1.0 - u).powi(2), 2.0 * (1.0 - u)) } else { (u, 1.0) };
            let r = reduced_gap(p, a + delta * v) * dv;
            if (r * prev.conj()).re >= 0.0 {
                r
            } else {
                -r
            }
        };
        let (val, at_end) = quad.integrate(&mut f, 0.0, 1.0, prev)?;
        total += val * delta;
        prev = at_end;
        start = end;
    }
    Ok(total)
}

/// `P_{++}`: survival in the symmetric mode across the effective two-level
/// dynamics between the crossings.
///
/// `r < 1`: `exp(-(2/b) Im I_1)`. `r > 1`:
/// `|exp(-i conj(I_1)/b + i phi) + exp(-i conj(I_2)/b)|^2`, where
/// `I_k = int_0^{t_k}` of the reduced gap with `Im I_k > 0`; the conjugates
/// pick the branch on which both terms decay.
pub fn dykhne_probability(p: &Hs4Params, stokes_phase: f64) -> Result<f64> {
    let d = dykhne_params(p, stokes_phase)?;
    match d.regime {
        Regime::Critical => Err(Error::CriticalRegime(d.r)),
        Regime::SubCritical => {
            let i1 = gap_integral(p, &[d.branch_points.0])?;
            Ok((-2.0 * i1.im / p.b).exp())
        }
        Regime::SuperCritical => {
            let i1 = gap_integral(p, &[d.branch_points.0])?;
            let i2 = gap_integral(p, &[d.branch_points.1])?;
            let a = (-I * i1.conj() / p.b + I * stokes_phase).exp();
            let b = (-I * i2.conj() / p.b).exp();
            Ok((a + b).norm_sqr())
        }
    }
}

/// `ln P~(3 -> 4) = 2 ln P~(3 -> +) + ln P_{++}`; `-inf` for zero coupling.
pub fn p34_composed_log(p: &Hs4Params, stokes_phase: f64) -> Result<f64> {
    p.validate()?;
    if p.g == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(2.0 * crossing_factor_log(p)? + dykhne_probability(p, stokes_phase)?.ln())
}

/// `P~(3 -> 4) = P~(3 -> +) P_{++} P~(+ -> 4)`.
pub fn p34_composed(p: &Hs4Params, stokes_phase: f64) -> Result<f64> {
    let l = p34_composed_log(p, stokes_phase)?;
    if l > propagator::LOG_OVERFLOW {
        return Err(Error::Overflow(l));
    }
    Ok(l.exp())
}

/// `ln P~(3 -> 4)` from direct propagation of the full model (table entry
/// `[to = 4][from = 3]`).
pub fn p34_propagated_log(p: &Hs4Params, settings: &PropagationSettings) -> Result<f64> {
    let model = hs4_model(p)?;
    let col = propagator::propagate_column(&model, 2, settings)?;
    Ok(2.0 * (col.amplitudes[3].norm().ln() + col.log_offset))
}

/// `P_{++}` by direct integration of the effective Hamiltonian from
/// `s = -1 + delta` to `1 - delta`, starting in the symmetric mode.
pub fn effective_survival(p: &Hs4Params, delta: f64) -> Result<f64> {
    p.validate()?;
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 0.5), got {delta}")));
    }
    let e = p.e1 * p.e2 / p.b;
    let k = 2.0 * p.g * p.g / p.b;
    // interaction picture on the diagonal: theta(s) = (2 g^2 / b) ln|1 - s^2|
    let rhs = |s: f64, c: &[C64], dc: &mut [C64]| {
        let theta = k * (1.0 - s * s).abs().ln();
        let ph = C64::new(theta.cos(), theta.sin());
        dc[0] = -I * e * ph * c[1];
        dc[1] = -I * e * ph.conj() * c[0];
    };
    let mut st = OdeState::new(-1.0 + delta, vec![ONE, ZERO]);
    let ctl = StepControl {
        rel_tol: 1e-11,
        abs_tol: 1e-11,
        ..StepControl::default()
    };
    ode::integrate(&mut st, 1.0 - delta, 2.0, &ctl, rhs)?;
    Ok(st.y[0].norm_sqr() * (2.0 * st.log_offset).exp())
}
