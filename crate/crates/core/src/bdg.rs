//! Mean-field molecular dissociation into two atomic modes as a two-level
//! non-Hermitian sweep. The pair `(a, b^dagger)` obeys
//! `i d/dt (a, b^dagger) = [[mu1(t), g*], [-g, mu2(t)]] (a, b^dagger)`,
//! and the occupations `n_a = |phi_1|^2 - 1`, `n_b = |phi_2|^2` grow
//! together, so `n_a - n_b` is conserved.

use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, C64};
use crate::model::{Hermiticity, NmlzModel};
use crate::propagator::{self, PropagationSettings};
use crate::quadrature::BranchQuadrature;

/// Linear chemical-potential sweeps `mu_k(t) = slope_k t + offset_k` and
/// the effective coupling `g = J <psi>` (molecular field frozen).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissociationSystem {
    pub mu1_slope: f64,
    pub mu2_slope: f64,
    pub mu1_0: f64,
    pub mu2_0: f64,
    pub g_eff: C64,
}

impl DissociationSystem {
    /// `mu1 = -v t / 2`, `mu2 = +v t / 2`: relative sweep rate `v`.
    pub fn symmetric(v: f64, g: C64) -> Self {
        Self {
            mu1_slope: -0.5 * v,
            mu2_slope: 0.5 * v,
            mu1_0: 0.0,
            mu2_0: 0.0,
            g_eff: g,
        }
    }

    /// Fits sampled sweeps; anything but a straight line is refused.
    pub fn from_samples(times: &[f64], mu1: &[f64], mu2: &[f64], g: C64) -> Result<Self> {
        let (s1, o1) = fit_line(times, mu1)?;
        let (s2, o2) = fit_line(times, mu2)?;
        Ok(Self {
            mu1_slope: s1,
            mu2_slope: s2,
            mu1_0: o1,
            mu2_0: o2,
            g_eff: g,
        })
    }

    /// Time at which `mu1 = mu2`.
    pub fn crossing_time(&self) -> Result<f64> {
        let ds = self.mu1_slope - self.mu2_slope;
        if ds == 0.0 {
            return Err(Error::DegenerateSlopePair(0, 1));
        }
        Ok((self.mu2_0 - self.mu1_0) / ds)
    }

    pub fn relative_rate(&self) -> f64 {
        (self.mu1_slope - self.mu2_slope).abs()
    }
}

/// Least-squares line through the samples; `NotLinear` if any sample is
/// off by more than `1e-9` of the sample scale.
fn fit_line(t: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if t.len() != y.len() {
        return Err(Error::DimensionMismatch("sweep samples and times differ in length".into()));
    }
    if t.len() < 2 {
        return Err(Error::InvalidArgument("a sweep needs at least two samples".into()));
    }
    if t.iter().chain(y).any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteEntry("sweep sample"));
    }
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let stt: f64 = t.iter().map(|x| (x - tm).powi(2)).sum();
    if stt == 0.0 {
        return Err(Error::InvalidArgument("sweep times coincide".into()));
    }
    let sty: f64 = t.iter().zip(y).map(|(x, v)| (x - tm) * (v - ym)).sum();
    let slope = sty / stt;
    let offset = ym - slope * tm;
    let scale = y.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let worst = t
        .iter()
        .zip(y)
        .map(|(x, v)| (slope * x + offset - v).abs())
        .fold(0.0, f64::max);
    if worst > 1e-9 * scale {
        return Err(Error::NotLinear(format!("sample deviates from the best line by {worst:.3e}")));
    }
    Ok((slope, offset))
}

/// The generator `[[mu1(t), g*], [-g, mu2(t)]]` as an anti-Hermitian model.
pub fn dissociation_to_nlz(sys: &DissociationSystem) -> Result<NmlzModel> {
    let mut g = ComplexMatrix::zeros(2, 2);
    g[(0, 1)] = sys.g_eff.conj();
    g[(1, 0)] = -sys.g_eff;
    NmlzModel::new(
        vec![sys.mu1_slope, sys.mu2_slope],
        vec![sys.mu1_0, sys.mu2_0],
        g,
        Hermiticity::AntiHermitian,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairObservables {
    pub times: Vec<f64>,
    pub n_a: Vec<f64>,
    pub n_b: Vec<f64>,
    pub difference: Vec<f64>,
    /// Occupations read out in the asymptotic basis after the last sample.
    pub final_n_a: f64,
    pub final_n_b: f64,
}

impl PairObservables {
    /// Largest deviation of `n_a - n_b` from its first value.
    pub fn drift(&self) -> f64 {
        let d0 = self.difference[0];
        self.difference.iter().map(|d| (d - d0).abs()).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,n_a,n_b,diff\n");
        for k in 0..self.times.len() {
            out.push_str(&format!(
                "{:.10e},{:.10e},{:.10e},{:.10e}\n",
                self.times[k], self.n_a[k], self.n_b[k], self.difference[k]
            ));
        }
        out
    }
}

/// Occupations along `samples` evenly spaced times across the settings'
/// horizon, centred on the crossing, starting from the atomic vacuum.
pub fn pair_production_run(
    sys: &DissociationSystem,
    samples: usize,
    settings: &PropagationSettings,
) -> Result<PairObservables> {
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let model = dissociation_to_nlz(sys)?;
    let t0 = sys.crossing_time()?;
    let horizon = settings.horizon_for(&model);
    let times: Vec<f64> = (0..samples)
        .map(|k| t0 - horizon + 2.0 * horizon * k as f64 / (samples - 1) as f64)
        .collect();
    let traj = propagator::propagate_trajectory(&model, 0, &times, settings)?;
    let mut n_a = Vec::with_capacity(samples);
    let mut n_b = Vec::with_capacity(samples);
    for (amp, off) in traj.amplitudes.iter().zip(&traj.log_offsets) {
        let w = (2.0 * off).exp();
        n_a.push(amp[0].norm_sqr() * w - 1.0);
        n_b.push(amp[1].norm_sqr() * w);
    }
    let difference = n_a.iter().zip(&n_b).map(|(a, b)| a - b).collect();
    let fc = &traj.final_column;
    let w = (2.0 * fc.log_offset).exp();
    Ok(PairObservables {
        times,
        n_a,
        n_b,
        difference,
        final_n_a: fc.amplitudes[0].norm_sqr() * w - 1.0,
        final_n_b: fc.amplitudes[1].norm_sqr() * w,
    })
}

/// `2 int Im lambda_+(t) dt` over the window where the eigenvalues of the
/// generator are complex, by quadrature.
pub fn growth_area(sys: &DissociationSystem) -> Result<f64> {
    let g = sys.g_eff.norm();
    let ds = sys.mu1_slope - sys.mu2_slope;
    if ds == 0.0 {
        return Err(Error::DegenerateSlopePair(0, 1));
    }
    if g == 0.0 {
        return Ok(0.0);
    }
    let model = dissociation_to_nlz(sys)?;
    let centre = sys.crossing_time()?;
    // Im lambda vanishes like a square root at |t - centre| = 2|g| / |ds|;
    // t = centre + half sin(theta) removes the endpoint singularity.
    let half = 2.0 * g / ds.abs();
    let quad = BranchQuadrature::default();
    let mut f = |theta: f64, _prev: C64| {
        let t = centre + half * theta.sin();
        let h = model.hamiltonian_at(t);
        let ev = crate::eigen::eigenvalues_2x2(h[(0, 0)], h[(0, 1)], h[(1, 0)], h[(1, 1)]);
        let im = ev[0].im.abs().max(ev[1].im.abs());
        C64::new(im * half * theta.cos(), 0.0)
    };
    let half_pi = std::f64::consts::FRAC_PI_2;
    let (val, _) = quad.integrate(&mut f, -half_pi, half_pi, C64::new(0.0, 0.0))?;
    Ok(2.0 * val.re)
}
