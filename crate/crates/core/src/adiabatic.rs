//! Large-`|t|` adiabatic eigenvalues and the phase accumulated along them.
//!
//! Far from all crossings the eigenvalue that continues level `n` is
//! `eps_n(t) = b_n t + E_n + c_n / t + O(t^-2)` with
//! `c_n = s sum_m |G_nm|^2 / (b_n - b_m)`, `s = +1` for Hermitian and `-1`
//! for anti-Hermitian coupling. Only the `1/t` term survives in the modulus
//! of `exp(-i int eps_n dt)` along a large half circle.

use std::f64::consts::PI;

use crate::eigen;
use crate::error::{Error, Result};
use crate::matrix::{C64, I, ZERO};
use crate::model::NmlzModel;
use crate::quadrature::BranchQuadrature;

/// `|db| |t|` must exceed this multiple of `max |G|` for every coupled pair.
pub const SEPARATION_FACTOR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdiabaticExpansion {
    pub level: usize,
    pub slope: f64,
    pub leading: f64,
    /// Coefficient of `1/t`.
    pub correction_coeff: f64,
}

impl AdiabaticExpansion {
    pub fn at(&self, t: C64) -> C64 {
        t * self.slope + self.leading + C64::new(self.correction_coeff, 0.0) / t
    }
}

pub fn adiabatic_expansion(model: &NmlzModel, n: usize) -> Result<AdiabaticExpansion> {
    if n >= model.dim() {
        return Err(Error::InvalidArgument(format!("level {n} outside 0..{}", model.dim())));
    }
    let b = model.slopes();
    let mut c = 0.0;
    for m in 0..model.dim() {
        let g2 = model.coupling()[(n, m)].norm_sqr();
        if m == n || g2 == 0.0 {
            continue;
        }
        if b[n] == b[m] {
            return Err(Error::DegenerateSlopePair(n.min(m), n.max(m)));
        }
        c += g2 / (b[n] - b[m]);
    }
    Ok(AdiabaticExpansion {
        level: n,
        slope: b[n],
        leading: model.statics()[n],
        correction_coeff: model.hermiticity().sign() * c,
    })
}

/// Refuses times with `|db| |t| <= 10 max|G|` for some coupled pair.
fn check_far(model: &NmlzModel, t: f64) -> Result<()> {
    let g = model.coupling().max_abs();
    let b = model.slopes();
    for (i, j) in model.coupled_pairs() {
        let db = (b[i] - b[j]).abs();
        if db * t.abs() <= SEPARATION_FACTOR * g {
            return Err(Error::TooCloseToCrossing(t));
        }
    }
    Ok(())
}

/// Expansion value of the eigenvalue continuing level `n` at real `t`.
pub fn adiabatic_eigenvalue(model: &NmlzModel, n: usize, t: f64) -> Result<C64> {
    check_far(model, t)?;
    Ok(adiabatic_expansion(model, n)?.at(C64::new(t, 0.0)))
}

/// The exact eigenvalue nearest to the expansion.
pub fn exact_eigenvalue(model: &NmlzModel, n: usize, t: f64) -> Result<C64> {
    let guess = adiabatic_eigenvalue(model, n, t)?;
    nearest(&eigen::eigenvalues(&model.hamiltonian_at(t))?, guess)
}

fn nearest(ev: &[C64], target: C64) -> Result<C64> {
    ev.iter()
        .copied()
        .min_by(|a, b| (a - target).norm().total_cmp(&(b - target).norm()))
        .ok_or(Error::NoConvergence(0))
}

/// `-i int_{t_i}^{t_f} eps_n dt` from the expansion along the real axis;
/// both endpoints on the same side of all crossings.
pub fn adiabatic_phase_integral(model: &NmlzModel, n: usize, t_i: f64, t_f: f64) -> Result<C64> {
    check_far(model, t_i)?;
    check_far(model, t_f)?;
    if t_i.signum() != t_f.signum() {
        return Err(Error::TooCloseToCrossing(0.0));
    }
    let e = adiabatic_expansion(model, n)?;
    let integral = e.slope * 0.5 * (t_f * t_f - t_i * t_i) + e.leading * (t_f - t_i) + e.correction_coeff * (t_f / t_i).ln();
    Ok(-I * integral)
}

/// Which half plane carries the contour: the level with the largest slope
/// decays into the upper one, the level with the smallest into the lower.
fn contour_side(model: &NmlzModel, n: usize) -> Result<f64> {
    let b = model.slopes();
    if n >= b.len() {
        return Err(Error::InvalidArgument(format!("level {n} outside 0..{}", b.len())));
    }
    if b.iter().enumerate().all(|(m, &x)| m == n || x < b[n]) {
        Ok(1.0)
    } else if b.iter().enumerate().all(|(m, &x)| m == n || x > b[n]) {
        Ok(-1.0)
    } else {
        Err(Error::SlopeNotExtremal(n))
    }
}

/// `-i int eps_n dt` from the expansion along the half circle
/// `t = R e^{i phi}` from `-R` to `R` through the half plane where level `n`
/// decays. Its real part is `ln |S_nn|`.
pub fn semicircle_phase(model: &NmlzModel, n: usize, radius: f64) -> Result<C64> {
    let side = contour_side(model, n)?;
    check_far(model, radius)?;
    let e = adiabatic_expansion(model, n)?;
    // int t dt vanishes; int dt = 2R; int dt/t = ln(R) - ln(-R) = -i pi side
    let integral = C64::new(2.0 * radius * e.leading, 0.0) - I * (PI * side * e.correction_coeff);
    Ok(-I * integral)
}

/// [`semicircle_phase`] by quadrature of the exact eigenvalue, with the
/// diabatic part `b_n t + E_n` integrated in closed form.
pub fn semicircle_phase_numeric(model: &NmlzModel, n: usize, radius: f64) -> Result<C64> {
    let side = contour_side(model, n)?;
    check_far(model, radius)?;
    let e = adiabatic_expansion(model, n)?;
    // the subtraction leaves roundoff of order eps |b| R^2
    let mut quad = BranchQuadrature::default();
    quad.abs_tol = 1e3 * f64::EPSILON * (e.slope.abs() * radius * radius + 1.0);
    quad.rel_tol = 1e-10;
    let mut failure = None;
    let mut f = |u: f64, _prev: C64| {
        // phi runs from pi to 0 (upper) or -pi to 0 (lower)
        let phi = side * PI * (1.0 - u);
        let t = C64::from_polar(radius, phi);
        let dt = -I * t * (side * PI);
        let lambda = eigen::eigenvalues(&model.hamiltonian_at_complex(t)).and_then(|ev| nearest(&ev, e.at(t)));
        match lambda {
            Ok(l) => (l - t * e.slope - e.leading) * dt,
            Err(err) => {
                failure = Some(err);
                ZERO
            }
        }
    };
    let (val, _) = quad.integrate(&mut f, 0.0, 1.0, ZERO)?;
    if let Some(err) = failure {
        return Err(err);
    }
    Ok(-I * (val + 2.0 * radius * e.leading))
}
