//! Linearly driven models `H(t) = B t + E + G` with diagonal `B`, `E`.

use serde::{Deserialize, Serialize};

use crate::eigen::{self, match_continuity};
use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, C64, ZERO};
use crate::numeric::NumericSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hermiticity {
    /// `G^† = -G`: the non-Hermitian class.
    AntiHermitian,
    /// `G^† = G`: ordinary multistate Landau-Zener.
    Hermitian,
}

impl Hermiticity {
    pub fn name(self) -> &'static str {
        match self {
            Hermiticity::AntiHermitian => "antihermitian",
            Hermiticity::Hermitian => "hermitian",
        }
    }

    /// Sign relating the lower triangle to the conjugated upper triangle.
    pub fn sign(self) -> f64 {
        match self {
            Hermiticity::AntiHermitian => -1.0,
            Hermiticity::Hermitian => 1.0,
        }
    }
}

/// A validated model. Construct through [`NmlzModel::new`] or [`NmlzModel::from_spec`].
#[derive(Debug, Clone, PartialEq)]
pub struct NmlzModel {
    slopes: Vec<f64>,
    statics: Vec<f64>,
    coupling: ComplexMatrix,
    hermiticity: Hermiticity,
}

impl NmlzModel {
    /// Validates and symmetrizes the coupling. The diagonal of `coupling`
    /// must vanish: static diagonal energies belong in `statics`.
    pub fn new(
        slopes: Vec<f64>,
        statics: Vec<f64>,
        coupling: ComplexMatrix,
        hermiticity: Hermiticity,
    ) -> Result<Self> {
        Self::with_settings(slopes, statics, coupling, hermiticity, &NumericSettings::default())
    }

    pub fn with_settings(
        slopes: Vec<f64>,
        statics: Vec<f64>,
        coupling: ComplexMatrix,
        hermiticity: Hermiticity,
        settings: &NumericSettings,
    ) -> Result<Self> {
        let n = slopes.len();
        if n == 0 {
            return Err(Error::DimensionMismatch("model needs at least one level".into()));
        }
        if n > eigen::MAX_DIM {
            return Err(Error::DimensionMismatch(format!(
                "dimension {n} exceeds {}",
                eigen::MAX_DIM
            )));
        }
        if statics.len() != n || coupling.rows() != n || coupling.cols() != n {
            return Err(Error::DimensionMismatch(format!(
                "slopes {n}, statics {}, coupling {}x{}",
                statics.len(),
                coupling.rows(),
                coupling.cols()
            )));
        }
        if slopes.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteEntry("slopes"));
        }
        if statics.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteEntry("statics"));
        }
        if !coupling.is_finite() {
            return Err(Error::NonFiniteEntry("coupling"));
        }
        let sign = hermiticity.sign();
        for i in 0..n {
            if coupling[(i, i)].norm() > settings.hermiticity_reject {
                return Err(Error::HermiticityViolation {
                    flag: "zero-diagonal",
                    row: i,
                    col: i,
                    residual: coupling[(i, i)].norm(),
                });
            }
            for j in 0..n {
                let residual = (coupling[(i, j)] - coupling[(j, i)].conj() * sign).norm();
                if residual > settings.hermiticity_reject {
                    return Err(Error::HermiticityViolation {
                        flag: hermiticity.name(),
                        row: i,
                        col: j,
                        residual,
                    });
                }
            }
        }
        let mut sym = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    sym[(i, j)] = (coupling[(i, j)] + coupling[(j, i)].conj() * sign) * 0.5;
                }
            }
        }
        Ok(Self {
            slopes,
            statics,
            coupling: sym,
            hermiticity,
        })
    }

    /// Builds a model from the upper triangle of the coupling; the lower
    /// triangle follows from the hermiticity flag.
    pub fn from_upper(
        slopes: Vec<f64>,
        statics: Vec<f64>,
        upper: &[(usize, usize, C64)],
        hermiticity: Hermiticity,
    ) -> Result<Self> {
        let n = slopes.len();
        let mut g = ComplexMatrix::zeros(n, n);
        for &(i, j, v) in upper {
            if i >= n || j >= n {
                return Err(Error::DimensionMismatch(format!(
                    "coupling entry ({i}, {j}) outside dimension {n}"
                )));
            }
            if i >= j {
                return Err(Error::InvalidArgument(format!(
                    "coupling entry ({i}, {j}) is not in the strict upper triangle"
                )));
            }
            g[(i, j)] = v;
            g[(j, i)] = v.conj() * hermiticity.sign();
        }
        Self::new(slopes, statics, g, hermiticity)
    }

    pub fn dim(&self) -> usize {
        self.slopes.len()
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn statics(&self) -> &[f64] {
        &self.statics
    }

    pub fn coupling(&self) -> &ComplexMatrix {
        &self.coupling
    }

    pub fn hermiticity(&self) -> Hermiticity {
        self.hermiticity
    }

    /// `diag(b) t + diag(E) + G`.
    pub fn hamiltonian_at(&self, t: f64) -> ComplexMatrix {
        self.hamiltonian_at_complex(C64::new(t, 0.0))
    }

    pub fn hamiltonian_at_complex(&self, t: C64) -> ComplexMatrix {
        let mut h = self.coupling.clone();
        for i in 0..self.dim() {
            h[(i, i)] = t * self.slopes[i] + self.statics[i];
        }
        h
    }

    /// Index pairs `(i, j)`, `i < j`, with nonzero coupling.
    pub fn coupled_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.dim();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.coupling[(i, j)].norm() > 0.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Errors if a coupled pair has equal slopes.
    pub fn check_nondegenerate(&self) -> Result<()> {
        for (i, j) in self.coupled_pairs() {
            if self.slopes[i] == self.slopes[j] {
                return Err(Error::DegenerateSlopePair(i, j));
            }
        }
        Ok(())
    }

    /// Same slopes, statics and coupling magnitudes with a different flag;
    /// the upper triangle is kept verbatim.
    pub fn with_hermiticity(&self, flag: Hermiticity) -> Self {
        let n = self.dim();
        let mut g = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                g[(i, j)] = self.coupling[(i, j)];
                g[(j, i)] = self.coupling[(i, j)].conj() * flag.sign();
            }
        }
        Self {
            slopes: self.slopes.clone(),
            statics: self.statics.clone(),
            coupling: g,
            hermiticity: flag,
        }
    }

    /// Adds `shift` to every static energy.
    pub fn with_static_shift(&self, shift: f64) -> Self {
        let mut m = self.clone();
        m.statics.iter_mut().for_each(|e| *e += shift);
        m
    }

    /// Applies `b -> b s_b`, `E -> E s_e`, `G -> G s_g`.
    pub fn rescaled(&self, slope_scale: f64, static_scale: f64, coupling_scale: f64) -> Self {
        Self {
            slopes: self.slopes.iter().map(|b| b * slope_scale).collect(),
            statics: self.statics.iter().map(|e| e * static_scale).collect(),
            coupling: self.coupling.scale(C64::new(coupling_scale, 0.0)),
            hermiticity: self.hermiticity,
        }
    }

    /// Diagonal signature `eta` with `eta H(t)` Hermitian for all `t`, if one
    /// exists. For Hermitian models this is all ones. For anti-Hermitian
    /// models it exists when the coupling graph is bipartite; `eta` then
    /// takes opposite signs across every coupled pair, and
    /// `sum_m eta_m |phi_m|^2` is conserved by the evolution.
    pub fn conserved_metric(&self) -> Option<Vec<f64>> {
        let n = self.dim();
        if self.hermiticity == Hermiticity::Hermitian {
            return Some(vec![1.0; n]);
        }
        let mut color = vec![0i8; n];
        for start in 0..n {
            if color[start] != 0 {
                continue;
            }
            color[start] = 1;
            let mut stack = vec![start];
            while let Some(i) = stack.pop() {
                for j in 0..n {
                    if i == j || self.coupling[(i, j)].norm() == 0.0 {
                        continue;
                    }
                    if color[j] == 0 {
                        color[j] = -color[i];
                        stack.push(j);
                    } else if color[j] == color[i] {
                        return None;
                    }
                }
            }
        }
        Some(color.into_iter().map(f64::from).collect())
    }

    pub fn to_spec(&self) -> ModelSpec {
        let n = self.dim();
        let mut coupling = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let g = self.coupling[(i, j)];
                if g != ZERO {
                    coupling.push([i as f64, j as f64, g.re, g.im]);
                }
            }
        }
        ModelSpec {
            dim: n,
            slopes: self.slopes.clone(),
            statics: self.statics.clone(),
            coupling,
            hermiticity: self.hermiticity,
        }
    }

    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        if spec.slopes.len() != spec.dim || spec.statics.len() != spec.dim {
            return Err(Error::DimensionMismatch(format!(
                "dim {} but {} slopes and {} statics",
                spec.dim,
                spec.slopes.len(),
                spec.statics.len()
            )));
        }
        let mut upper = Vec::with_capacity(spec.coupling.len());
        for entry in &spec.coupling {
            let (r, c) = (entry[0], entry[1]);
            if r.fract() != 0.0 || c.fract() != 0.0 || r < 0.0 || c < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "coupling indices must be non-negative integers, got ({r}, {c})"
                )));
            }
            upper.push((r as usize, c as usize, C64::new(entry[2], entry[3])));
        }
        Self::from_upper(spec.slopes.clone(), spec.statics.clone(), &upper, spec.hermiticity)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("model JSON: {e}")))?;
        Self::from_spec(&spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_spec()).expect("model spec serializes")
    }
}

/// On-disk model format. `coupling` lists `[row, col, re, im]` for the strict
/// upper triangle with zero-based indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub dim: usize,
    pub slopes: Vec<f64>,
    pub statics: Vec<f64>,
    pub coupling: Vec<[f64; 4]>,
    pub hermiticity: Hermiticity,
}

/// Instantaneous eigenvalues on a time grid, continuity ordered.
#[derive(Debug, Clone)]
pub struct EigenvalueTrace {
    pub times: Vec<f64>,
    pub eigenvalues: Vec<Vec<C64>>,
}

impl EigenvalueTrace {
    /// Maximal runs of consecutive samples where at least one eigenvalue has
    /// `|Im| > tol`, as `(t_start, t_end)` pairs of the first and last sample.
    pub fn nonreal_windows(&self, tol: f64) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut open: Option<f64> = None;
        let mut last = f64::NAN;
        for (t, ev) in self.times.iter().zip(&self.eigenvalues) {
            let nonreal = ev.iter().any(|z| z.im.abs() > tol);
            match (nonreal, open) {
                (true, None) => open = Some(*t),
                (false, Some(s)) => {
                    out.push((s, last));
                    open = None;
                }
                _ => {}
            }
            last = *t;
        }
        if let Some(s) = open {
            out.push((s, last));
        }
        out
    }

    /// CSV with columns `t, re_1, im_1, ..., re_N, im_N`.
    pub fn to_csv(&self) -> String {
        let n = self.eigenvalues.first().map_or(0, Vec::len);
        let mut s = String::from("t");
        for k in 1..=n {
            s.push_str(&format!(",re_{k},im_{k}"));
        }
        s.push('\n');
        for (t, ev) in self.times.iter().zip(&self.eigenvalues) {
            s.push_str(&format!("{t:.12e}"));
            for z in ev {
                s.push_str(&format!(",{:.12e},{:.12e}", z.re, z.im));
            }
            s.push('\n');
        }
        s
    }
}

pub fn eigenvalue_trace(
    model: &NmlzModel,
    t_min: f64,
    t_max: f64,
    samples: usize,
) -> Result<EigenvalueTrace> {
    if samples < 2 {
        return Err(Error::InvalidArgument("eigenvalue trace needs at least two samples".into()));
    }
    if !(t_max > t_min) {
        return Err(Error::InvalidArgument(format!("empty time range [{t_min}, {t_max}]")));
    }
    let mut times = Vec::with_capacity(samples);
    let mut eigenvalues: Vec<Vec<C64>> = Vec::with_capacity(samples);
    for k in 0..samples {
        let t = t_min + (t_max - t_min) * k as f64 / (samples - 1) as f64;
        let mut ev = eigen::eigenvalues(&model.hamiltonian_at(t))?;
        ev = match eigenvalues.last() {
            Some(prev) => match_continuity(prev, &ev),
            None => {
                ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
                ev
            }
        };
        times.push(t);
        eigenvalues.push(ev);
    }
    Ok(EigenvalueTrace { times, eigenvalues })
}
