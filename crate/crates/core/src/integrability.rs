//! Two-time integrability: a model family `H(t, tau)`, its partner
//! `H'(t, tau)`, the zero-curvature residual
//! `dH/dtau - dH'/dt - i [H, H']`, and evolution along deformed paths in the
//! `(t, tau)` plane.

use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, C64, I, ONE, ZERO};
use crate::model::NmlzModel;
use crate::ode::{self, OdeState};
use crate::propagator::{self, PropagationSettings, ScatteringResult, TransitionTable};
use crate::semiclassic::{self, Hs4Params};

/// `||H'|| dtau` above which a vertical segment is reported as stiff.
pub const STIFF_SEGMENT: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Deformation {
    /// `B -> B tau`, marked statics `-> tau E`, `G -> G sqrt(tau)`.
    Integrable,
    /// The integrable deformation followed by the time rescaling
    /// `t -> t / sqrt(tau)`: marked statics `-> E sqrt(tau)`, the others
    /// `-> E / sqrt(tau)`, slopes and couplings fixed.
    Combined,
}

#[derive(Debug, Clone)]
pub struct TwoTimeFamily {
    base: NmlzModel,
    scaled: Vec<bool>,
    relative_slope: f64,
    mode: Deformation,
}

impl TwoTimeFamily {
    /// `scaled[n]` marks the levels whose static energy is multiplied by
    /// `tau`; `relative_slope` is the `b2 - b1` entering `H'`.
    pub fn new(base: NmlzModel, scaled: Vec<bool>, relative_slope: f64) -> Result<Self> {
        if scaled.len() != base.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} static flags for a model of dimension {}",
                scaled.len(),
                base.dim()
            )));
        }
        if !(relative_slope != 0.0 && relative_slope.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "relative slope must be finite and nonzero, got {relative_slope}"
            )));
        }
        Ok(Self {
            base,
            scaled,
            relative_slope,
            mode: Deformation::Integrable,
        })
    }

    /// The four-level family: statics of the two flat levels scale, the
    /// relative slope is `b`.
    pub fn hs4(p: &Hs4Params) -> Result<Self> {
        Self::new(semiclassic::hs4_model(p)?, vec![true, true, false, false], p.b)
    }

    pub fn with_mode(mut self, mode: Deformation) -> Self {
        self.mode = mode;
        self
    }

    pub fn mode(&self) -> Deformation {
        self.mode
    }

    pub fn base(&self) -> &NmlzModel {
        &self.base
    }

    pub fn relative_slope(&self) -> f64 {
        self.relative_slope
    }

    pub fn family_at(&self, tau: f64) -> Result<NmlzModel> {
        check_tau(tau)?;
        let root = tau.sqrt();
        let b = &self.base;
        let (slopes, statics, coupling) = match self.mode {
            Deformation::Integrable => (
                b.slopes().iter().map(|s| s * tau).collect(),
                self.statics_with(tau, 1.0),
                b.coupling().scale(C64::new(root, 0.0)),
            ),
            Deformation::Combined => (b.slopes().to_vec(), self.statics_with(root, 1.0 / root), b.coupling().clone()),
        };
        NmlzModel::new(slopes, statics, coupling, b.hermiticity())
    }

    fn statics_with(&self, marked: f64, other: f64) -> Vec<f64> {
        self.base
            .statics()
            .iter()
            .zip(&self.scaled)
            .map(|(e, &s)| e * if s { marked } else { other })
            .collect()
    }

    pub fn hamiltonian(&self, t: f64, tau: f64) -> Result<ComplexMatrix> {
        Ok(self.family_at(tau)?.hamiltonian_at(t))
    }

    /// `A(tau) = E(tau) + G(tau)`
    fn a_matrix(&self, tau: f64) -> Result<ComplexMatrix> {
        let m = self.family_at(tau)?;
        let mut a = m.coupling().clone();
        for (k, e) in m.statics().iter().enumerate() {
            a[(k, k)] += C64::new(*e, 0.0);
        }
        Ok(a)
    }

    /// `dA/dtau`, exact.
    fn a_derivative(&self, tau: f64) -> ComplexMatrix {
        let mut d = self.base.coupling().scale(C64::new(0.5 / tau.sqrt(), 0.0));
        for (k, (e, &s)) in self.base.statics().iter().zip(&self.scaled).enumerate() {
            if s {
                d[(k, k)] += C64::new(*e, 0.0);
            }
        }
        d
    }

    /// `H' = B t^2 / 2 + A'(tau) t - A(tau)^2 / (2 (b2 - b1) tau^2)`.
    pub fn h_prime(&self, t: f64, tau: f64) -> Result<ComplexMatrix> {
        check_tau(tau)?;
        if self.mode != Deformation::Integrable {
            return Err(Error::InvalidArgument("the partner generator is defined for the integrable deformation".into()));
        }
        let a = self.a_matrix(tau)?;
        let a2 = &a * &a;
        let mut h = self.a_derivative(tau).scale(C64::new(t, 0.0));
        h = &h - &a2.scale(C64::new(1.0 / (2.0 * self.relative_slope * tau * tau), 0.0));
        for (k, b) in self.base.slopes().iter().enumerate() {
            h[(k, k)] += C64::new(0.5 * b * t * t, 0.0);
        }
        Ok(h)
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveTau(tau))
    }
}

/// The time rescaling `t -> t sqrt(tau)`: `b -> b / tau`,
/// `E -> E / sqrt(tau)`, `G -> G / sqrt(tau)`.
pub fn time_rescaled(model: &NmlzModel, tau: f64) -> Result<NmlzModel> {
    check_tau(tau)?;
    let r = 1.0 / tau.sqrt();
    Ok(model.rescaled(1.0 / tau, r, r))
}

/// Finite-difference step for the residual.
pub const FD_STEP: f64 = 1e-6;

/// Central difference at step `h` with one Richardson extrapolation.
fn richardson<F>(f: &F, x: f64, h: f64) -> Result<ComplexMatrix>
where
    F: Fn(f64) -> Result<ComplexMatrix>,
{
    let central = |h: f64| -> Result<ComplexMatrix> {
        let d = &f(x + h)? - &f(x - h)?;
        Ok(d.scale(C64::new(0.5 / h, 0.0)))
    };
    let coarse = central(h)?;
    let fine = central(0.5 * h)?;
    Ok((&fine.scale(C64::new(4.0, 0.0)) - &coarse).scale(C64::new(1.0 / 3.0, 0.0)))
}

/// `max |dH/dtau - dH'/dt - i [H, H']|` over `grid`, for arbitrary
/// generators.
pub fn integrability_residual_with<H, P>(h: H, h_prime: P, grid: &[(f64, f64)]) -> Result<f64>
where
    H: Fn(f64, f64) -> Result<ComplexMatrix>,
    P: Fn(f64, f64) -> Result<ComplexMatrix>,
{
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty residual grid".into()));
    }
    let mut worst: f64 = 0.0;
    for &(t, tau) in grid {
        check_tau(tau)?;
        let step = FD_STEP.min(0.5 * tau);
        let d_tau = richardson(&|x| h(t, x), tau, step)?;
        let d_t = richardson(&|x| h_prime(x, tau), t, FD_STEP)?;
        let hm = h(t, tau)?;
        let hp = h_prime(t, tau)?;
        let comm = hm.commutator(&hp).scale(I);
        let r = &(&d_tau - &d_t) - &comm;
        worst = worst.max(r.max_abs());
    }
    Ok(worst)
}

pub fn integrability_residual(family: &TwoTimeFamily, grid: &[(f64, f64)]) -> Result<f64> {
    integrability_residual_with(|t, tau| family.hamiltonian(t, tau), |t, tau| family.h_prime(t, tau), grid)
}

/// Regular `nt x ntau` grid over `[t0, t1] x [tau0, tau1]`.
pub fn grid(t: (f64, f64), tau: (f64, f64), nt: usize, ntau: usize) -> Vec<(f64, f64)> {
    let pt = |k: usize, n: usize, (a, b): (f64, f64)| if n < 2 { a } else { a + (b - a) * k as f64 / (n - 1) as f64 };
    (0..nt)
        .flat_map(|i| (0..ntau).map(move |j| (pt(i, nt, t), pt(j, ntau, tau))))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Segment {
    /// Evolution in `t` with `H` at fixed `tau`.
    Horizontal { tau: f64, t0: f64, t1: f64 },
    /// Evolution in `tau` with `H'` at fixed `t`.
    Vertical { t: f64, tau0: f64, tau1: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoTimePath {
    start: (f64, f64),
    segments: Vec<Segment>,
}

impl TwoTimePath {
    /// Path through `(t, tau)` vertices; consecutive vertices must share
    /// either coordinate.
    pub fn from_vertices(points: &[(f64, f64)]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidArgument("a path needs at least two vertices".into()));
        }
        let mut segments = Vec::new();
        for w in points.windows(2) {
            let ((t0, a), (t1, b)) = (w[0], w[1]);
            check_tau(a)?;
            check_tau(b)?;
            if ![t0, t1].iter().all(|x| x.is_finite()) {
                return Err(Error::NonFiniteEntry("path vertex"));
            }
            if a == b {
                if t0 != t1 {
                    segments.push(Segment::Horizontal { tau: a, t0, t1 });
                }
            } else if t0 == t1 {
                segments.push(Segment::Vertical { t: t0, tau0: a, tau1: b });
            } else {
                return Err(Error::InvalidArgument(format!(
                    "segment ({t0}, {a}) -> ({t1}, {b}) is neither horizontal nor vertical"
                )));
            }
        }
        Ok(Self {
            start: points[0],
            segments,
        })
    }

    /// `(-T, 1) -> (T, 1)`
    pub fn direct(horizon: f64) -> Result<Self> {
        Self::from_vertices(&[(-horizon, 1.0), (horizon, 1.0)])
    }

    /// `(-T, 1) -> (-T, tau) -> (T, tau) -> (T, 1)`
    pub fn deformed(horizon: f64, tau: f64) -> Result<Self> {
        Self::from_vertices(&[(-horizon, 1.0), (-horizon, tau), (horizon, tau), (horizon, 1.0)])
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn start(&self) -> (f64, f64) {
        self.start
    }

    pub fn end(&self) -> (f64, f64) {
        match self.segments.last() {
            Some(Segment::Horizontal { tau, t1, .. }) => (*t1, *tau),
            Some(Segment::Vertical { t, tau1, .. }) => (*t, *tau1),
            None => self.start,
        }
    }

    fn max_abs_t(&self) -> f64 {
        self.segments
            .iter()
            .flat_map(|s| match *s {
                Segment::Horizontal { t0, t1, .. } => [t0.abs(), t1.abs()],
                Segment::Vertical { t, .. } => [t.abs(), t.abs()],
            })
            .fold(self.start.0.abs(), f64::max)
    }
}

/// Evolves `psi * exp(log_offset)` along `i dpsi/dtau = H'(t, tau) psi`.
/// The `tau`-independent diagonal of `H'` is handled in the interaction
/// picture.
pub fn evolve_vertical(
    family: &TwoTimeFamily,
    psi: &[C64],
    log_offset: f64,
    t: f64,
    tau0: f64,
    tau1: f64,
    settings: &PropagationSettings,
) -> Result<(Vec<C64>, f64)> {
    check_tau(tau0)?;
    check_tau(tau1)?;
    let n = family.base.dim();
    let d: Vec<f64> = (0..n)
        .map(|k| {
            let e = if family.scaled[k] { family.base.statics()[k] } else { 0.0 };
            0.5 * family.base.slopes()[k] * t * t + e * t
        })
        .collect();
    let mut st = OdeState::new(tau0, psi.to_vec());
    st.log_offset = log_offset;
    st.normalize();
    let mut err = None;
    let rhs = |tau: f64, y: &[C64], dy: &mut [C64]| {
        let hp = match family.h_prime(t, tau) {
            Ok(h) => h,
            Err(e) => {
                err = Some(e);
                dy.iter_mut().for_each(|v| *v = ZERO);
                return;
            }
        };
        let dt = tau - tau0;
        let rot: Vec<C64> = d.iter().map(|x| C64::from_polar(1.0, x * dt)).collect();
        for k in 0..n {
            let mut acc = ZERO;
            for j in 0..n {
                let m = if j == k { hp[(k, k)] - d[k] } else { hp[(k, j)] };
                acc += m * rot[k] * rot[j].conj() * y[j];
            }
            dy[k] = -I * acc;
        }
    };
    ode::integrate(&mut st, tau1, (tau1 - tau0).abs(), &settings.step_control(), rhs)?;
    if let Some(e) = err {
        return Err(e);
    }
    let dt = tau1 - tau0;
    let out = st.y.iter().zip(&d).map(|(c, x)| c * C64::from_polar(1.0, -x * dt)).collect();
    Ok((out, st.log_offset))
}

/// Vertical segments whose `||H'|| dtau` exceeds [`STIFF_SEGMENT`].
pub fn path_warnings(family: &TwoTimeFamily, path: &TwoTimePath) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for s in path.segments() {
        if let Segment::Vertical { t, tau0, tau1 } = *s {
            let size = family.h_prime(t, tau0)?.max_abs().max(family.h_prime(t, tau1)?.max_abs());
            let load = size * (tau1 - tau0).abs();
            if load > STIFF_SEGMENT {
                out.push(format!(
                    "vertical segment at t = {t} from tau = {tau0} to {tau1}: |H'| dtau = {load:.3e}"
                ));
            }
        }
    }
    Ok(out)
}

/// Scattering matrix along `path`: amplitudes are prepared in the adiabatic
/// frame of the family at the start point and read out in the frame at the
/// end point.
pub fn path_scattering(family: &TwoTimeFamily, path: &TwoTimePath, settings: &PropagationSettings) -> Result<ScatteringResult> {
    settings.validate()?;
    if family.mode != Deformation::Integrable {
        return Err(Error::InvalidArgument("path evolution needs the integrable deformation".into()));
    }
    let n = family.base.dim();
    let (t_start, tau_start) = path.start();
    let (t_end, tau_end) = path.end();
    let prepare = propagator::preparation_map(&family.family_at(tau_start)?, t_start);
    let read = propagator::readout_map(&family.family_at(tau_end)?, t_end);
    let mut s_matrix = ComplexMatrix::zeros(n, n);
    let mut log_offsets = vec![0.0; n];
    for col in 0..n {
        let mut psi = match &prepare {
            Some(p) => p.column(col),
            None => {
                let mut y = vec![ZERO; n];
                y[col] = ONE;
                y
            }
        };
        let mut off = 0.0;
        for s in path.segments() {
            (psi, off) = match *s {
                Segment::Horizontal { tau, t0, t1 } => {
                    propagator::evolve_state(&family.family_at(tau)?, &psi, off, t0, t1, settings)?
                }
                Segment::Vertical { t, tau0, tau1 } => evolve_vertical(family, &psi, off, t, tau0, tau1, settings)?,
            };
        }
        if let Some(r) = &read {
            psi = r.matvec(&psi);
        }
        let mut st = OdeState::new(0.0, psi);
        st.log_offset = off;
        st.normalize();
        s_matrix.set_column(col, &st.y);
        log_offsets[col] = st.log_offset;
    }
    Ok(ScatteringResult {
        s_matrix,
        log_offsets,
        horizon_used: path.max_abs_t(),
        convergence_estimate: f64::NAN,
    })
}

pub fn path_evolution(family: &TwoTimeFamily, path: &TwoTimePath, settings: &PropagationSettings) -> Result<TransitionTable> {
    propagator::transition_table(&path_scattering(family, path, settings)?)
}

/// Max over entries of `|P~_a - P~_b|` relative to the largest entry of each
/// column.
pub fn table_distance(a: &TransitionTable, b: &TransitionTable) -> f64 {
    let (la, lb) = (a.log_unnormalized(), b.log_unnormalized());
    let n = a.dim();
    let mut worst: f64 = 0.0;
    for from in 0..n {
        let top = (0..n).map(|to| la[to][from]).fold(f64::NEG_INFINITY, f64::max);
        for to in 0..n {
            let d = ((la[to][from] - top).exp() - (lb[to][from] - top).exp()).abs();
            worst = worst.max(d);
        }
    }
    worst
}
