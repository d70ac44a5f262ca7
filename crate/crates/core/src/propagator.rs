//! Scattering matrices by direct integration of `i dpsi/dt = H(t) psi`.
//!
//! Production runs integrate in the diabatic interaction picture
//! `phi_m = exp(-i theta_m) c_m`, `theta_m = b_m t^2 / 2 + E_m t`, which
//! leaves only the coupling-driven oscillation `exp(i (theta_m - theta_k))`.
//! Growth from non-Hermitian couplings is absorbed into a running log
//! offset so columns never overflow.
//!
//! At the horizon the state is expressed in the instantaneous eigenbasis
//! (each eigenvector labelled by its dominant diabatic component), which
//! removes the slowly decaying `O(G / (db T))` transient of the diabatic
//! amplitudes. When the model has a conserved indefinite metric the
//! eigenvectors are normalized in that metric so the conservation law
//! survives the change of basis exactly.

use rayon::prelude::*;

use crate::eigen;
use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, C64, I, ONE, ZERO};
use crate::model::NmlzModel;
use crate::ode::{self, OdeState, StepControl};

/// Basis in which amplitudes are prepared at `-T` and read out at `+T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndpointBasis {
    /// Instantaneous eigenvectors of `H(+-T)`; falls back to diabatic if the
    /// eigenvectors cannot be labelled unambiguously.
    Adiabatic,
    Diabatic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationSettings {
    /// Evolution runs over `[-T, T]`; `None` picks [`default_horizon`].
    pub horizon: Option<f64>,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    pub renorm_threshold: f64,
    pub endpoint_basis: EndpointBasis,
    /// Re-run at `T/2` to fill [`ScatteringResult::convergence_estimate`].
    pub estimate_convergence: bool,
}

impl Default for PropagationSettings {
    fn default() -> Self {
        Self {
            horizon: None,
            rel_tol: 1e-10,
            abs_tol: 1e-10,
            max_steps: 20_000_000,
            renorm_threshold: 20.0,
            endpoint_basis: EndpointBasis::Adiabatic,
            estimate_convergence: true,
        }
    }
}

impl PropagationSettings {
    pub fn with_horizon(mut self, t: f64) -> Self {
        self.horizon = Some(t);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.horizon {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidArgument(format!("horizon must be positive, got {t}")));
            }
        }
        for (name, v) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidArgument(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if !(self.renorm_threshold > 0.0) {
            return Err(Error::InvalidArgument("renorm_threshold must be positive".into()));
        }
        Ok(())
    }

    pub fn horizon_for(&self, model: &NmlzModel) -> f64 {
        self.horizon.unwrap_or_else(|| default_horizon(model))
    }

    pub(crate) fn step_control(&self) -> StepControl {
        StepControl {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_steps: self.max_steps,
            renorm_threshold: self.renorm_threshold,
            ..StepControl::default()
        }
    }
}

/// `10 max(1, max(|E|, |G|) max 1/|db|) max(1, 1/sqrt(min |db|))` over
/// coupled pairs with distinct slopes.
pub fn default_horizon(model: &NmlzModel) -> f64 {
    let mut inv_db: f64 = 0.0;
    let mut min_db = f64::INFINITY;
    let b = model.slopes();
    for (i, j) in model.coupled_pairs() {
        let db = (b[i] - b[j]).abs();
        if db > 0.0 {
            inv_db = inv_db.max(1.0 / db);
            min_db = min_db.min(db);
        }
    }
    let e_max = model.statics().iter().fold(0.0f64, |a, e| a.max(e.abs()));
    let scale = e_max.max(model.coupling().max_abs());
    let sqrt_factor = if min_db.is_finite() { (1.0 / min_db.sqrt()).max(1.0) } else { 1.0 };
    10.0 * (scale * inv_db).max(1.0) * sqrt_factor
}

/// Scaled scattering matrix: `S_mn = s_matrix[(m, n)] exp(log_offsets[n])`.
#[derive(Debug, Clone)]
pub struct ScatteringResult {
    pub s_matrix: ComplexMatrix,
    pub log_offsets: Vec<f64>,
    pub horizon_used: f64,
    /// Max change of `|S_mn|^2` between horizons `T` and `T/2`, relative to
    /// the largest entry of the column. `NaN` when not computed.
    pub convergence_estimate: f64,
}

impl ScatteringResult {
    pub fn dim(&self) -> usize {
        self.log_offsets.len()
    }

    /// `ln |S_mn|^2`, `-inf` for exact zeros.
    pub fn log_p_tilde(&self, m: usize, n: usize) -> f64 {
        2.0 * (self.s_matrix[(m, n)].norm().ln() + self.log_offsets[n])
    }

    /// Column `n` with the offset applied; overflows to `inf` for huge growth.
    pub fn column(&self, n: usize) -> Vec<C64> {
        let f = self.log_offsets[n].exp();
        self.s_matrix.column(n).into_iter().map(|v| v * f).collect()
    }
}

/// One column of `S` before assembly.
#[derive(Debug, Clone)]
pub struct ColumnResult {
    pub amplitudes: Vec<C64>,
    pub log_offset: f64,
}

/// Linear maps between asymptotic amplitudes and diabatic states at the
/// horizon: `psi(-T) = prepare * a_in`, `a_out = read * psi(T)`.
struct Endpoints {
    prepare: Option<ComplexMatrix>,
    read: Option<ComplexMatrix>,
}

fn endpoints(model: &NmlzModel, t_start: f64, t_end: f64, basis: EndpointBasis) -> Endpoints {
    match basis {
        EndpointBasis::Diabatic => Endpoints {
            prepare: None,
            read: None,
        },
        EndpointBasis::Adiabatic => {
            let prepare = AsymptoticFrame::at(model, t_start).map(|f| {
                let corr = f.correction();
                &(&f.vectors * &corr.scale(C64::new(-1.0, 0.0)).exp()) * &f.tail_phases()
            });
            let read = AsymptoticFrame::at(model, t_end).map(|f| {
                let corr = f.correction();
                &(&f.tail_phases() * &corr.exp()) * &f.inverse
            });
            Endpoints { prepare, read }
        }
    }
}

/// Instantaneous eigenframe with its first-order non-adiabatic coupling.
struct AsymptoticFrame {
    vectors: ComplexMatrix,
    inverse: ComplexMatrix,
    eigenvalues: Vec<C64>,
    /// `V^{-1} dV/dt`
    coupling: ComplexMatrix,
    /// `int (lambda_n - b_n t - E_n - c_n / t)` from the horizon outwards.
    tail: Vec<C64>,
}

impl AsymptoticFrame {
    fn at(model: &NmlzModel, t: f64) -> Option<Self> {
        let (vectors, inverse, eigenvalues) = labelled_eigenframe(model, t)?;
        let dt = 1e-3 * t.abs().max(1.0);
        let (vp, _, _) = labelled_eigenframe(model, t + dt)?;
        let (vm, _, _) = labelled_eigenframe(model, t - dt)?;
        let dv = (&vp - &vm).scale(C64::new(0.5 / dt, 0.0));
        let coupling = &inverse * &dv;
        let (_, _, far) = labelled_eigenframe(model, 2.0 * t)?;
        let tail = eigenvalue_tail(model, t, &eigenvalues, &far);
        Some(Self {
            vectors,
            inverse,
            eigenvalues,
            coupling,
            tail,
        })
    }

    /// `diag(exp(-i tail_n))`
    fn tail_phases(&self) -> ComplexMatrix {
        let d: Vec<C64> = self.tail.iter().map(|z| (-I * z).exp()).collect();
        ComplexMatrix::from_diag(&d)
    }

    /// `C_jk = A_jk / (i (lambda_j - lambda_k))`: the amplitude still to be
    /// exchanged between adiabatic states beyond the horizon, to first order.
    /// Applied as `exp(C)`, which keeps the conserved (indefinite) norm.
    fn correction(&self) -> ComplexMatrix {
        let n = self.eigenvalues.len();
        let scale = self.eigenvalues.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let mut c = ComplexMatrix::zeros(n, n);
        for j in 0..n {
            for k in 0..n {
                let gap = self.eigenvalues[j] - self.eigenvalues[k];
                if j != k && gap.norm() > 1e-12 * scale {
                    c[(j, k)] = self.coupling[(j, k)] / (I * gap);
                }
            }
        }
        c
    }
}

/// Beyond `|t|` the eigenvalue of level `n` differs from
/// `b_n t + E_n + c_n / t` by `d/t^2 + e/t^3`, with `d`, `e` fitted from the
/// residuals at `t` and `2t`. Returns the integral of that remainder from `t`
/// out to infinity (`t > 0`) or in from minus infinity (`t < 0`). A complex
/// `d` arises from coupling loops with a net phase and changes `|S_nn|` at
/// order `1/T`. Levels with a coupled partner of equal slope get zero.
fn eigenvalue_tail(model: &NmlzModel, t: f64, near: &[C64], far: &[C64]) -> Vec<C64> {
    let b = model.slopes();
    let e = model.statics();
    let g = model.coupling();
    let sign = model.hermiticity().sign();
    (0..model.dim())
        .map(|n| {
            let mut c = 0.0;
            for m in 0..model.dim() {
                let w = g[(n, m)].norm_sqr();
                if m == n || w == 0.0 {
                    continue;
                }
                if b[m] == b[n] {
                    return ZERO;
                }
                c += w / (b[n] - b[m]);
            }
            let c = sign * c;
            let f = |s: f64, lambda: C64| (level_shift(model, n, s, lambda - b[n] * s - e[n]) - c / s) * (s * s);
            let (f1, f2) = (f(t, near[n]), f(2.0 * t, far[n]));
            let d = f2 * 2.0 - f1;
            let e3 = (f1 - f2) * (2.0 * t);
            (d / t + e3 / (2.0 * t * t)) * t.signum()
        })
        .collect()
}

/// `lambda - H_nn` for the eigenvalue of level `n` near `H_nn + shift`, from
/// the fixed point of `shift = H_n,rest (H_nn + shift - H_rest)^-1 H_rest,n`.
/// Exact in `shift` up to rounding of the small quantity itself, which the
/// difference of a full eigenvalue and `H_nn` is not at large `|t|`.
fn level_shift(model: &NmlzModel, n: usize, t: f64, shift: C64) -> C64 {
    let h = model.hamiltonian_at(t);
    let rest: Vec<usize> = (0..model.dim()).filter(|&m| m != n).collect();
    let k = rest.len();
    let mut shift = shift;
    for _ in 0..3 {
        let mut a = ComplexMatrix::zeros(k, k);
        for (i, &p) in rest.iter().enumerate() {
            for (j, &q) in rest.iter().enumerate() {
                a[(i, j)] = -h[(p, q)];
            }
            a[(i, i)] = h[(n, n)] - h[(p, p)] + shift;
        }
        let Ok(inv) = a.inverse() else { return shift };
        let mut next = ZERO;
        for (i, &p) in rest.iter().enumerate() {
            for (j, &q) in rest.iter().enumerate() {
                next += h[(n, p)] * inv[(i, j)] * h[(q, n)];
            }
        }
        shift = next;
    }
    shift
}

/// Eigenvector matrix `V` (column `j` follows diabatic level `j`) and its
/// inverse at time `t`. `None` if labelling is ambiguous.
pub fn adiabatic_basis(model: &NmlzModel, t: f64) -> Option<(ComplexMatrix, ComplexMatrix)> {
    labelled_eigenframe(model, t).map(|(v, inv, _)| (v, inv))
}

fn labelled_eigenframe(model: &NmlzModel, t: f64) -> Option<(ComplexMatrix, ComplexMatrix, Vec<C64>)> {
    let n = model.dim();
    let h = model.hamiltonian_at(t);
    let ev = eigen::eigenvalues(&h).ok()?;
    let metric = model.conserved_metric();
    let mut v = ComplexMatrix::zeros(n, n);
    let mut labelled = vec![ZERO; n];
    let mut taken = vec![false; n];
    for lambda in ev {
        let mut x = eigen::eigenvector(&h, lambda).ok()?;
        let (level, dominant) = x
            .iter()
            .enumerate()
            .map(|(i, z)| (i, z.norm()))
            .max_by(|a, b| a.1.total_cmp(&b.1))?;
        // a clean label needs a clearly dominant component
        let second = x
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != level)
            .map(|(_, z)| z.norm())
            .fold(0.0, f64::max);
        if taken[level] || second > 0.5 * dominant {
            return None;
        }
        taken[level] = true;
        let phase = x[level].conj() / x[level].norm();
        x.iter_mut().for_each(|z| *z *= phase);
        let scale = match &metric {
            Some(eta) => {
                let q: f64 = x.iter().zip(eta).map(|(z, e)| e * z.norm_sqr()).sum();
                if q * eta[level] <= 0.0 {
                    return None;
                }
                q.abs().sqrt()
            }
            None => x[level].re,
        };
        x.iter_mut().for_each(|z| *z /= scale);
        v.set_column(level, &x);
        labelled[level] = lambda;
    }
    let inv = v.inverse().ok()?;
    Some((v, inv, labelled))
}

/// Interaction-picture phases measured from a reference level at the
/// middle of the slope and static ranges. The reference only contributes a
/// global phase, which is restored in closed form, and keeping the phases
/// small keeps their rounding independent of a common energy shift.
struct Rotating {
    b: Vec<f64>,
    e: Vec<f64>,
    b_ref: f64,
    e_ref: f64,
}

impl Rotating {
    fn new(b: &[f64], e: &[f64]) -> Self {
        let mid = |x: &[f64]| {
            let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            0.5 * (lo + hi)
        };
        let (b_ref, e_ref) = (mid(b), mid(e));
        Self {
            b: b.iter().map(|x| x - b_ref).collect(),
            e: e.iter().map(|x| x - e_ref).collect(),
            b_ref,
            e_ref,
        }
    }

    fn of(model: &NmlzModel) -> Self {
        Self::new(model.slopes(), model.statics())
    }

    fn enter(&self, phi: &[C64], t: f64) -> Vec<C64> {
        phi.iter().zip(linear_phases(&self.b, &self.e, t)).map(|(p, r)| p * r).collect()
    }

    /// Diabatic amplitudes at `t` of a state entered at `t0`.
    fn leave(&self, c: &[C64], t0: f64, t: f64) -> Vec<C64> {
        let theta = 0.5 * self.b_ref * (t - t0) * (t + t0) + self.e_ref * (t - t0);
        let global = C64::new(theta.cos(), -theta.sin());
        c.iter().zip(linear_phases(&self.b, &self.e, t)).map(|(c, r)| c * r.conj() * global).collect()
    }

    fn rhs<'a>(&'a self, g: &'a ComplexMatrix) -> impl FnMut(f64, &[C64], &mut [C64]) + 'a {
        linear_interaction_rhs(&self.b, &self.e, g)
    }
}

fn linear_phases(b: &[f64], e: &[f64], t: f64) -> Vec<C64> {
    b.iter()
        .zip(e)
        .map(|(b, e)| {
            let theta = 0.5 * b * t * t + e * t;
            C64::new(theta.cos(), theta.sin())
        })
        .collect()
}

/// Interaction-picture right-hand side `dc/dt = -i e^{i theta} G e^{-i theta} c`.
fn linear_interaction_rhs<'a>(
    b: &'a [f64],
    e: &'a [f64],
    g: &'a ComplexMatrix,
) -> impl FnMut(f64, &[C64], &mut [C64]) + 'a {
    let n = b.len();
    let mut rot = vec![ZERO; n];
    let mut w = vec![ZERO; n];
    move |t, c, dc| {
        for m in 0..n {
            let theta = 0.5 * b[m] * t * t + e[m] * t;
            rot[m] = C64::new(theta.cos(), theta.sin());
            w[m] = c[m] * rot[m].conj();
        }
        for m in 0..n {
            let row = g.row(m);
            let mut acc = ZERO;
            for k in 0..n {
                acc += row[k] * w[k];
            }
            dc[m] = -I * rot[m] * acc;
        }
    }
}

/// Evolves diabatic amplitudes `psi * exp(log_offset)` from `t0` to `t1`
/// under `i dpsi/dt = (diag(b) t + diag(e) + g) psi`, with no structural
/// requirement on `g`. Returns the rescaled state and its new log offset.
pub fn evolve_linear(
    b: &[f64],
    e: &[f64],
    g: &ComplexMatrix,
    psi: &[C64],
    log_offset: f64,
    t0: f64,
    t1: f64,
    settings: &PropagationSettings,
) -> Result<(Vec<C64>, f64)> {
    settings.validate()?;
    let n = b.len();
    if e.len() != n || psi.len() != n || g.rows() != n || g.cols() != n {
        return Err(Error::DimensionMismatch("generator and state sizes differ".into()));
    }
    let frame = Rotating::new(b, e);
    let mut st = OdeState::new(t0, frame.enter(psi, t0));
    st.log_offset = log_offset;
    st.normalize();
    let span = (t1 - t0).abs().max(t0.abs()).max(t1.abs());
    ode::integrate(&mut st, t1, span, &settings.step_control(), frame.rhs(g))?;
    Ok((frame.leave(&st.y, t0, t1), st.log_offset))
}

/// [`evolve_linear`] for a validated model.
pub fn evolve_state(
    model: &NmlzModel,
    psi: &[C64],
    log_offset: f64,
    t0: f64,
    t1: f64,
    settings: &PropagationSettings,
) -> Result<(Vec<C64>, f64)> {
    evolve_linear(
        model.slopes(),
        model.statics(),
        model.coupling(),
        psi,
        log_offset,
        t0,
        t1,
        settings,
    )
}

/// Matrix taking asymptotic amplitudes to the diabatic state at time `t`
/// (`None` when the eigenframe cannot be labelled).
pub fn preparation_map(model: &NmlzModel, t: f64) -> Option<ComplexMatrix> {
    endpoints(model, t, t, EndpointBasis::Adiabatic).prepare
}

/// Matrix taking the diabatic state at time `t` to asymptotic amplitudes.
pub fn readout_map(model: &NmlzModel, t: f64) -> Option<ComplexMatrix> {
    endpoints(model, t, t, EndpointBasis::Adiabatic).read
}

fn check_level(model: &NmlzModel, level: usize) -> Result<()> {
    if level >= model.dim() {
        return Err(Error::InvalidArgument(format!(
            "start level {level} outside 0..{}",
            model.dim()
        )));
    }
    Ok(())
}

fn initial_vector(model: &NmlzModel, level: usize, ends: &Endpoints) -> Vec<C64> {
    match &ends.prepare {
        Some(p) => p.column(level),
        None => {
            let mut y = vec![ZERO; model.dim()];
            y[level] = ONE;
            y
        }
    }
}

fn read_out(phi: Vec<C64>, ends: &Endpoints) -> Vec<C64> {
    match &ends.read {
        Some(r) => r.matvec(&phi),
        None => phi,
    }
}

fn finish(amplitudes: Vec<C64>, log_offset: f64) -> ColumnResult {
    let mut st = OdeState::new(0.0, amplitudes);
    st.log_offset = log_offset;
    st.normalize();
    ColumnResult {
        amplitudes: st.y,
        log_offset: st.log_offset,
    }
}

/// Column `level` (zero-based) of the scattering matrix.
pub fn propagate_column(model: &NmlzModel, level: usize, settings: &PropagationSettings) -> Result<ColumnResult> {
    settings.validate()?;
    check_level(model, level)?;
    let horizon = settings.horizon_for(model);
    let ends = endpoints(model, -horizon, horizon, settings.endpoint_basis);
    propagate_column_with(model, level, horizon, settings, &ends)
}

fn propagate_column_with(
    model: &NmlzModel,
    level: usize,
    horizon: f64,
    settings: &PropagationSettings,
    ends: &Endpoints,
) -> Result<ColumnResult> {
    let phi0 = initial_vector(model, level, ends);
    let frame = Rotating::of(model);
    let mut st = OdeState::new(-horizon, frame.enter(&phi0, -horizon));
    st.normalize();
    ode::integrate(
        &mut st,
        horizon,
        2.0 * horizon,
        &settings.step_control(),
        frame.rhs(model.coupling()),
    )?;
    let phi = frame.leave(&st.y, -horizon, horizon);
    Ok(finish(read_out(phi, ends), st.log_offset))
}

/// Same column, integrating `i dpsi/dt = H(t) psi` without the interaction
/// picture. Only practical for small horizons; used as a cross-check.
pub fn propagate_column_raw(model: &NmlzModel, level: usize, settings: &PropagationSettings) -> Result<ColumnResult> {
    settings.validate()?;
    check_level(model, level)?;
    let horizon = settings.horizon_for(model);
    let ends = endpoints(model, -horizon, horizon, settings.endpoint_basis);
    let n = model.dim();
    let mut st = OdeState::new(-horizon, initial_vector(model, level, &ends));
    st.normalize();
    let g = model.coupling();
    let b = model.slopes();
    let e = model.statics();
    ode::integrate(&mut st, horizon, 2.0 * horizon, &settings.step_control(), |t, y, dy| {
        for m in 0..n {
            let row = g.row(m);
            let mut acc = y[m] * (b[m] * t + e[m]);
            for k in 0..n {
                acc += row[k] * y[k];
            }
            dy[m] = -I * acc;
        }
    })?;
    let phi = st.y.clone();
    Ok(finish(read_out(phi, &ends), st.log_offset))
}

/// A sampled trajectory of diabatic amplitudes.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Scaled amplitudes; the true value is `amplitudes[k] * exp(log_offsets[k])`.
    pub amplitudes: Vec<Vec<C64>>,
    pub log_offsets: Vec<f64>,
    /// Asymptotic column read out in the endpoint basis at the final time.
    pub final_column: ColumnResult,
}

/// Diabatic amplitudes `phi(t)` of the solution that enters as level
/// `level`, sampled at the ordered `times` (first and last define the span).
pub fn propagate_trajectory(
    model: &NmlzModel,
    level: usize,
    times: &[f64],
    settings: &PropagationSettings,
) -> Result<Trajectory> {
    settings.validate()?;
    check_level(model, level)?;
    if times.len() < 2 || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("trajectory times must be increasing, at least two".into()));
    }
    let t0 = times[0];
    let t1 = *times.last().unwrap();
    let ends = endpoints(model, t0, t1, settings.endpoint_basis);
    let phi0 = initial_vector(model, level, &ends);
    let frame = Rotating::of(model);
    let mut st = OdeState::new(t0, frame.enter(&phi0, t0));
    let ctl = settings.step_control();
    let span = t1 - t0;
    let mut amplitudes = Vec::with_capacity(times.len());
    let mut log_offsets = Vec::with_capacity(times.len());
    let mut rhs = frame.rhs(model.coupling());
    for &t in times {
        ode::integrate(&mut st, t, span, &ctl, &mut rhs)?;
        amplitudes.push(frame.leave(&st.y, t0, t));
        log_offsets.push(st.log_offset);
    }
    let phi = amplitudes.last().unwrap().clone();
    let final_column = finish(read_out(phi, &ends), st.log_offset);
    Ok(Trajectory {
        times: times.to_vec(),
        amplitudes,
        log_offsets,
        final_column,
    })
}

fn thread_cap() -> Option<usize> {
    std::env::var("NMLZ_THREADS").ok()?.trim().parse().ok().filter(|&n: &usize| n > 0)
}

fn all_columns(model: &NmlzModel, horizon: f64, settings: &PropagationSettings) -> Result<Vec<ColumnResult>> {
    let ends = endpoints(model, -horizon, horizon, settings.endpoint_basis);
    with_thread_cap(|| {
        (0..model.dim())
            .into_par_iter()
            .map(|n| propagate_column_with(model, n, horizon, settings, &ends))
            .collect::<Result<Vec<_>>>()
    })
}

/// Runs `f` on a pool of at most `NMLZ_THREADS` threads when the variable
/// is set, on the global pool otherwise.
pub fn with_thread_cap<R, F>(f: F) -> R
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    match thread_cap() {
        Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        None => f(),
    }
}

fn assemble(cols: Vec<ColumnResult>, horizon: f64) -> ScatteringResult {
    let n = cols.len();
    let mut s = ComplexMatrix::zeros(n, n);
    let mut offsets = Vec::with_capacity(n);
    for (j, c) in cols.into_iter().enumerate() {
        s.set_column(j, &c.amplitudes);
        offsets.push(c.log_offset);
    }
    ScatteringResult {
        s_matrix: s,
        log_offsets: offsets,
        horizon_used: horizon,
        convergence_estimate: f64::NAN,
    }
}

/// Max change of `|S_mn|^2` between two results, relative to each column's
/// largest entry.
pub fn relative_change(a: &ScatteringResult, b: &ScatteringResult) -> f64 {
    let n = a.dim();
    let mut worst: f64 = 0.0;
    for col in 0..n {
        let max_log = (0..n).map(|m| a.log_p_tilde(m, col)).fold(f64::NEG_INFINITY, f64::max);
        for m in 0..n {
            let pa = (a.log_p_tilde(m, col) - max_log).exp();
            let pb = (b.log_p_tilde(m, col) - max_log).exp();
            worst = worst.max((pa - pb).abs());
        }
    }
    worst
}

pub fn scattering_matrix(model: &NmlzModel, settings: &PropagationSettings) -> Result<ScatteringResult> {
    settings.validate()?;
    let horizon = settings.horizon_for(model);
    let mut result = assemble(all_columns(model, horizon, settings)?, horizon);
    if settings.estimate_convergence {
        let half = assemble(all_columns(model, 0.5 * horizon, settings)?, 0.5 * horizon);
        result.convergence_estimate = relative_change(&result, &half);
    }
    Ok(result)
}

/// Unnormalized and normalized transition probabilities. Tables are indexed
/// `[to][from]`, i.e. entry `(m, n)` is the transition from `n` to `m`.
#[derive(Debug, Clone)]
pub struct TransitionTable {
    log_unnormalized: Vec<Vec<f64>>,
    normalized: Vec<Vec<f64>>,
    log_column_norms: Vec<f64>,
}

/// Entries whose log exceeds this cannot be materialized safely.
pub const LOG_OVERFLOW: f64 = 700.0;

impl TransitionTable {
    pub fn from_log(log_unnormalized: Vec<Vec<f64>>) -> Result<Self> {
        let n = log_unnormalized.len();
        if log_unnormalized.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch("transition table must be square".into()));
        }
        let mut normalized = vec![vec![0.0; n]; n];
        let mut log_column_norms = vec![0.0; n];
        for col in 0..n {
            let max_log = (0..n).map(|m| log_unnormalized[m][col]).fold(f64::NEG_INFINITY, f64::max);
            if max_log == f64::NEG_INFINITY {
                return Err(Error::ZeroColumn(col));
            }
            if max_log.is_nan() {
                return Err(Error::NonFiniteEntry("transition table"));
            }
            let sum: f64 = (0..n).map(|m| (log_unnormalized[m][col] - max_log).exp()).sum();
            log_column_norms[col] = max_log + sum.ln();
            for m in 0..n {
                normalized[m][col] = (log_unnormalized[m][col] - log_column_norms[col]).exp();
            }
        }
        Ok(Self {
            log_unnormalized,
            normalized,
            log_column_norms,
        })
    }

    pub fn dim(&self) -> usize {
        self.normalized.len()
    }

    pub fn log_unnormalized(&self) -> &[Vec<f64>] {
        &self.log_unnormalized
    }

    pub fn log_column_norms(&self) -> &[f64] {
        &self.log_column_norms
    }

    pub fn normalized(&self) -> &[Vec<f64>] {
        &self.normalized
    }

    pub fn max_log(&self) -> f64 {
        self.log_unnormalized.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `P~` as plain reals; fails when any entry would overflow.
    pub fn unnormalized(&self) -> Result<Vec<Vec<f64>>> {
        let m = self.max_log();
        if m > LOG_OVERFLOW {
            return Err(Error::Overflow(m));
        }
        Ok(self
            .log_unnormalized
            .iter()
            .map(|r| r.iter().map(|x| x.exp()).collect())
            .collect())
    }

    pub fn p_tilde(&self, to: usize, from: usize) -> f64 {
        self.log_unnormalized[to][from].exp()
    }

    pub fn column_norms(&self) -> Result<Vec<f64>> {
        let m = self.log_column_norms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if m > LOG_OVERFLOW {
            return Err(Error::Overflow(m));
        }
        Ok(self.log_column_norms.iter().map(|x| x.exp()).collect())
    }

    /// Column `from` of `P~`, rescaled so its largest entry is one, with the
    /// log of the scale.
    pub fn scaled_column(&self, from: usize) -> (Vec<f64>, f64) {
        let n = self.dim();
        let max_log = (0..n).map(|m| self.log_unnormalized[m][from]).fold(f64::NEG_INFINITY, f64::max);
        (
            (0..n).map(|m| (self.log_unnormalized[m][from] - max_log).exp()).collect(),
            max_log,
        )
    }

    /// CSV with header `from,to,p_tilde,p_normalized,log_p_tilde` and 1-based
    /// level labels.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("from,to,p_tilde,p_normalized,log_p_tilde\n");
        let n = self.dim();
        for from in 0..n {
            for to in 0..n {
                let lp = self.log_unnormalized[to][from];
                let p = if lp > LOG_OVERFLOW { f64::INFINITY } else { lp.exp() };
                s.push_str(&format!(
                    "{},{},{:.12e},{:.12e},{:.12e}\n",
                    from + 1,
                    to + 1,
                    p,
                    self.normalized[to][from],
                    lp
                ));
            }
        }
        s
    }
}

pub fn transition_table(result: &ScatteringResult) -> Result<TransitionTable> {
    let n = result.dim();
    let mut logs = vec![vec![0.0; n]; n];
    for m in 0..n {
        for col in 0..n {
            let v = result.log_p_tilde(m, col);
            if v.is_nan() || v == f64::INFINITY {
                return Err(Error::NonFiniteEntry("scattering matrix"));
            }
            logs[m][col] = v;
        }
    }
    TransitionTable::from_log(logs)
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub horizon: f64,
    pub table: TransitionTable,
}

pub fn convergence_sweep(
    model: &NmlzModel,
    horizons: &[f64],
    settings: &PropagationSettings,
) -> Result<Vec<SweepPoint>> {
    if horizons.is_empty() || horizons.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("horizons must be nonempty and increasing".into()));
    }
    horizons
        .iter()
        .map(|&t| {
            let s = PropagationSettings {
                horizon: Some(t),
                estimate_convergence: false,
                ..*settings
            };
            let r = scattering_matrix(model, &s)?;
            Ok(SweepPoint {
                horizon: t,
                table: transition_table(&r)?,
            })
        })
        .collect()
}

/// First horizon whose table differs from the previous one by less than
/// `tol` (relative to each column's largest entry).
pub fn select_horizon(points: &[SweepPoint], tol: f64) -> Option<f64> {
    points.windows(2).find_map(|w| {
        let n = w[0].table.dim();
        let mut worst: f64 = 0.0;
        for col in 0..n {
            let (a, _) = w[0].table.scaled_column(col);
            let (b, _) = w[1].table.scaled_column(col);
            for m in 0..n {
                worst = worst.max((a[m] - b[m]).abs());
            }
            let ma = w[0].table.log_column_norms()[col];
            let mb = w[1].table.log_column_norms()[col];
            worst = worst.max(((ma - mb).exp() - 1.0).abs());
        }
        (worst < tol).then_some(w[1].horizon)
    })
}
