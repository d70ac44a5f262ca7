//! Adaptive Dormand-Prince 5(4) integration of linear complex systems
//! `dy/ds = f(s, y)` with running log-magnitude rescaling.

use crate::error::{Error, Result};
use crate::matrix::{C64, ZERO};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    /// Rescale whenever `ln max|y|` exceeds this.
    pub renorm_threshold: f64,
    /// Smallest allowed step as a fraction of the reference span.
    pub min_step_fraction: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-10,
            max_steps: 20_000_000,
            renorm_threshold: 20.0,
            min_step_fraction: 1e-14,
        }
    }
}

/// Integration state: the true solution is `y * exp(log_offset)`.
#[derive(Debug, Clone)]
pub struct OdeState {
    pub s: f64,
    pub y: Vec<C64>,
    pub log_offset: f64,
    // compensated-summation residues of `s` and `y`
    s_comp: f64,
    y_comp: Vec<C64>,
    step_hint: Option<f64>,
    fsal: Option<Vec<C64>>,
    err_old: f64,
    pub steps: usize,
    pub rejected: usize,
}

impl OdeState {
    pub fn new(s: f64, y: Vec<C64>) -> Self {
        let n = y.len();
        Self {
            s,
            y,
            log_offset: 0.0,
            s_comp: 0.0,
            y_comp: vec![ZERO; n],
            step_hint: None,
            fsal: None,
            err_old: 1e-4,
            steps: 0,
            rejected: 0,
        }
    }

    /// Rescales `y` so its largest entry has modulus one.
    pub fn normalize(&mut self) {
        let m = max_abs(&self.y);
        if m > 0.0 && m.is_finite() {
            self.rescale(m);
        }
    }

    fn rescale(&mut self, m: f64) {
        let inv = 1.0 / m;
        self.y.iter_mut().for_each(|v| *v *= inv);
        self.y_comp.iter_mut().for_each(|v| *v *= inv);
        if let Some(k) = self.fsal.as_mut() {
            k.iter_mut().for_each(|v| *v *= inv);
        }
        self.log_offset += m.ln();
    }

    /// Forgets the cached derivative, needed when the right-hand side changes.
    pub fn reset_rhs(&mut self) {
        self.fsal = None;
    }
}

pub fn max_abs(y: &[C64]) -> f64 {
    y.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

// Dormand-Prince tableau
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates from `state.s` to `s_end` (either direction). `rhs` must be
/// linear in `y`; rescaling relies on it. `span` is the reference length for
/// the step-underflow check.
pub fn integrate<F>(state: &mut OdeState, s_end: f64, span: f64, ctl: &StepControl, mut rhs: F) -> Result<()>
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    let n = state.y.len();
    let total = s_end - state.s;
    if total == 0.0 {
        return Ok(());
    }
    let dir = total.signum();
    let min_step = ctl.min_step_fraction * span.abs().max(f64::MIN_POSITIVE);
    let renorm = ctl.renorm_threshold.exp();

    let mut k1 = match state.fsal.take() {
        Some(k) => k,
        None => {
            let mut k = vec![ZERO; n];
            rhs(state.s, &state.y, &mut k);
            k
        }
    };
    let mut k2 = vec![ZERO; n];
    let mut k3 = vec![ZERO; n];
    let mut k4 = vec![ZERO; n];
    let mut k5 = vec![ZERO; n];
    let mut k6 = vec![ZERO; n];
    let mut k7 = vec![ZERO; n];
    let mut tmp = vec![ZERO; n];
    let mut y_new = vec![ZERO; n];
    let mut comp_new = vec![ZERO; n];
    if state.y_comp.len() != n {
        state.y_comp = vec![ZERO; n];
    }

    let mut h = state
        .step_hint
        .map(f64::abs)
        .unwrap_or_else(|| initial_step(&state.y, &k1, ctl, total.abs()))
        .min(total.abs());

    loop {
        let remaining = (s_end - state.s) * dir;
        if remaining <= 0.0 {
            break;
        }
        let mut last = false;
        if h >= remaining {
            h = remaining;
            last = true;
        }
        if state.steps >= ctl.max_steps {
            state.fsal = Some(k1);
            return Err(Error::StepLimitExceeded(ctl.max_steps));
        }
        let hs = h * dir;
        let s = state.s;
        let y = &state.y;

        for i in 0..n {
            tmp[i] = y[i] + k1[i] * (hs * A21);
        }
        rhs(s + C2 * hs, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + (k1[i] * A31 + k2[i] * A32) * hs;
        }
        rhs(s + C3 * hs, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + (k1[i] * A41 + k2[i] * A42 + k3[i] * A43) * hs;
        }
        rhs(s + C4 * hs, &tmp, &mut k4);
        for i in 0..n {
            tmp[i] = y[i] + (k1[i] * A51 + k2[i] * A52 + k3[i] * A53 + k4[i] * A54) * hs;
        }
        rhs(s + C5 * hs, &tmp, &mut k5);
        for i in 0..n {
            tmp[i] = y[i] + (k1[i] * A61 + k2[i] * A62 + k3[i] * A63 + k4[i] * A64 + k5[i] * A65) * hs;
        }
        let (s_next, s_comp) = if last {
            (s_end, 0.0)
        } else {
            kahan(s, hs, state.s_comp)
        };
        rhs(s_next, &tmp, &mut k6);
        for i in 0..n {
            let incr = (k1[i] * A71 + k3[i] * A73 + k4[i] * A74 + k5[i] * A75 + k6[i] * A76) * hs;
            let (re, cre) = kahan(y[i].re, incr.re, state.y_comp[i].re);
            let (im, cim) = kahan(y[i].im, incr.im, state.y_comp[i].im);
            y_new[i] = C64::new(re, im);
            comp_new[i] = C64::new(cre, cim);
        }
        rhs(s_next, &y_new, &mut k7);

        let ymax = max_abs(y).max(max_abs(&y_new)).max(1.0);
        let mut acc = 0.0;
        for i in 0..n {
            let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * hs;
            let sk = ctl.abs_tol * ymax + ctl.rel_tol * y[i].norm().max(y_new[i].norm());
            acc += (e.norm() / sk).powi(2);
        }
        let err = (acc / n as f64).sqrt();
        if !err.is_finite() {
            h *= 0.1;
            state.rejected += 1;
            if h < min_step {
                state.fsal = Some(k1);
                return Err(Error::StepUnderflow { step: h, at: state.s });
            }
            continue;
        }

        if err <= 1.0 {
            let fac = (err.max(1e-12).powf(0.17) / state.err_old.powf(0.04) / 0.9).clamp(0.2, 10.0);
            state.err_old = err.max(1e-4);
            std::mem::swap(&mut state.y, &mut y_new);
            std::mem::swap(&mut state.y_comp, &mut comp_new);
            std::mem::swap(&mut k1, &mut k7);
            state.s = s_next;
            state.s_comp = s_comp;
            state.steps += 1;
            let m = max_abs(&state.y);
            if m > renorm {
                let inv = 1.0 / m;
                state.y.iter_mut().for_each(|v| *v *= inv);
                state.y_comp.iter_mut().for_each(|v| *v *= inv);
                k1.iter_mut().for_each(|v| *v *= inv);
                state.log_offset += m.ln();
            }
            let h_new = h / fac;
            if last {
                state.step_hint = Some(h_new);
                break;
            }
            h = h_new;
        } else {
            let fac = (err.powf(0.17) / 0.9).min(10.0);
            h /= fac;
            state.rejected += 1;
        }
        if h < min_step {
            state.fsal = Some(k1);
            return Err(Error::StepUnderflow { step: h, at: state.s });
        }
    }
    state.fsal = Some(k1);
    Ok(())
}

/// `sum + x` with the running residue `comp` of earlier additions folded in.
fn kahan(sum: f64, x: f64, comp: f64) -> (f64, f64) {
    let x = x - comp;
    let t = sum + x;
    (t, (t - sum) - x)
}

fn initial_step(y: &[C64], f: &[C64], ctl: &StepControl, span: f64) -> f64 {
    let ymax = max_abs(y).max(1.0);
    let sk = |v: C64| ctl.abs_tol * ymax + ctl.rel_tol * v.norm();
    let n = y.len() as f64;
    let d0 = (y.iter().map(|&v| (v.norm() / sk(v)).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = (y.iter().zip(f).map(|(&v, fv)| (fv.norm() / sk(v)).powi(2)).sum::<f64>() / n).sqrt();
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h.min(span).max(span * 1e-12)
}
