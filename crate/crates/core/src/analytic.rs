//! Closed-form transition probabilities for solvable models and
//! conservation-law discovery.
//!
//! Slope convention: every closed form takes the *relative* slope of the
//! crossing pair. The two-level factor `e^{2 pi |g|^2 / v}` therefore belongs
//! to slopes `(-v/2, v/2)`; see [`two_level_model`].

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::matrix::C64;
use crate::model::{Hermiticity, NmlzModel};
use crate::propagator::{TransitionTable, LOG_OVERFLOW};

/// Crossing parameters of one isolated level pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LzPairParams {
    /// `x = 2 pi |G_ij|^2 / |b_i - b_j|`
    pub exponent: f64,
    pub p_tilde: f64,
    pub q_tilde: f64,
    pub p: f64,
    pub q: f64,
}

impl LzPairParams {
    pub fn from_exponent(x: f64) -> Self {
        Self {
            exponent: x,
            p_tilde: x.exp(),
            q_tilde: x.exp_m1(),
            p: (-x).exp(),
            q: -(-x).exp_m1(),
        }
    }

    pub fn new(coupling_abs2: f64, relative_slope: f64) -> Result<Self> {
        if !(relative_slope.abs() > 0.0) {
            return Err(Error::InvalidArgument("crossing needs a nonzero relative slope".into()));
        }
        Ok(Self::from_exponent(2.0 * PI * coupling_abs2 / relative_slope.abs()))
    }

    /// Parameters of the crossing between levels `i` and `j` of `model`.
    pub fn for_pair(model: &NmlzModel, i: usize, j: usize) -> Result<Self> {
        let db = model.slopes()[i] - model.slopes()[j];
        if db == 0.0 {
            return Err(Error::DegenerateSlopePair(i, j));
        }
        Self::new(model.coupling()[(i, j)].norm_sqr(), db)
    }

    /// `(ln p~, ln q~)`, finite for any exponent.
    pub fn log_tilde(&self) -> (f64, f64) {
        (self.exponent, self.exponent + ln_one_minus_exp_neg(self.exponent))
    }

    /// `(ln p, ln q)`.
    pub fn log_hermitian(&self) -> (f64, f64) {
        (-self.exponent, ln_one_minus_exp_neg(self.exponent))
    }
}

/// Rejects couplings whose relative phase threads a flux through the
/// coupling loop; only `g* gamma` real is solvable.
fn check_loop_phase(g: C64, gamma: C64) -> Result<()> {
    let w = g.conj() * gamma;
    if w.im.abs() > 1e-12 * (g.norm() * gamma.norm()).max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidArgument(format!(
            "g and gamma must have equal phases up to sign, got g* gamma = {w}"
        )));
    }
    Ok(())
}

/// `ln(1 - e^{-x})` for `x >= 0`, `-inf` at zero.
fn ln_one_minus_exp_neg(x: f64) -> f64 {
    (-(-x).exp_m1()).ln()
}

fn two_level_exponent(g: C64, v: f64) -> Result<f64> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::InvalidArgument(format!("relative slope must be positive, got {v}")));
    }
    Ok(2.0 * PI * g.norm_sqr() / v)
}

/// `(ln P~_11, ln P~_21)` of the anti-Hermitian two-level model with relative
/// slope `v`.
pub fn nlz_two_level_log(g: C64, v: f64) -> Result<(f64, f64)> {
    let x = two_level_exponent(g, v)?;
    Ok((x, x + ln_one_minus_exp_neg(x)))
}

/// `(P~_11, P~_21) = (e^x, e^x - 1)` with `x = 2 pi |g|^2 / v`; beyond the
/// overflow limit use [`nlz_two_level_log`].
pub fn nlz_two_level(g: C64, v: f64) -> Result<(f64, f64)> {
    let (l11, _) = nlz_two_level_log(g, v)?;
    if l11 > LOG_OVERFLOW {
        return Err(Error::Overflow(l11));
    }
    Ok((l11.exp(), l11.exp_m1()))
}

/// `(P_11, P_21) = (e^{-x}, 1 - e^{-x})` for the Hermitian counterpart.
pub fn lz_two_level_hermitian(g: C64, v: f64) -> Result<(f64, f64)> {
    let x = two_level_exponent(g, v)?;
    Ok(((-x).exp(), -(-x).exp_m1()))
}

/// Two-level model with slopes `(-v/2, v/2)`, no statics and coupling `g` in
/// the upper corner.
pub fn two_level_model(g: C64, v: f64, flag: Hermiticity) -> Result<NmlzModel> {
    NmlzModel::from_upper(vec![-0.5 * v, 0.5 * v], vec![0.0, 0.0], &[(0, 1, g)], flag)
}

/// `ln |S_nn|` from the diagonal formula for a level of extremal slope:
/// `+pi sum |G_nm|^2 / |b_n - b_m|` for anti-Hermitian coupling, the
/// negative of it for Hermitian coupling.
///
/// The level must have the strictly largest or strictly smallest slope.
pub fn modified_be_diagonal(model: &NmlzModel, n: usize) -> Result<f64> {
    let b = model.slopes();
    if n >= b.len() {
        return Err(Error::InvalidArgument(format!("level {n} outside 0..{}", b.len())));
    }
    let strict_max = b.iter().enumerate().all(|(m, &bm)| m == n || bm < b[n]);
    let strict_min = b.iter().enumerate().all(|(m, &bm)| m == n || bm > b[n]);
    if !(strict_max || strict_min) {
        return Err(Error::SlopeNotExtremal(n));
    }
    let mut sum = 0.0;
    for m in 0..b.len() {
        if m == n {
            continue;
        }
        let g2 = model.coupling()[(n, m)].norm_sqr();
        if g2 > 0.0 {
            sum += g2 / (b[n] - b[m]).abs();
        }
    }
    Ok(-model.hermiticity().sign() * PI * sum)
}

/// Parameters of the solvable four-level model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolvableN4Params {
    pub b1: f64,
    pub b2: f64,
    pub e1: f64,
    pub e2: f64,
    pub g: C64,
    pub gamma: C64,
}

impl SolvableN4Params {
    pub fn beta1(&self) -> f64 {
        0.5 * (self.b1 + self.b2)
    }

    pub fn beta2(&self) -> f64 {
        0.5 * (self.b1 - self.b2)
    }

    /// The closed form needs both slopes of one sign and `g* gamma` real.
    fn check(&self) -> Result<()> {
        if self.b1 == self.b2 {
            return Err(Error::DegenerateSlopePair(0, 2));
        }
        if self.b1 == -self.b2 {
            return Err(Error::DegenerateSlopePair(0, 3));
        }
        if !(self.b1 * self.b2 > 0.0) {
            return Err(Error::OrderViolation(format!(
                "b1 and b2 must share a sign, got {} and {}",
                self.b1, self.b2
            )));
        }
        check_loop_phase(self.g, self.gamma)
    }

    /// `(g-crossing, gamma-crossing)` parameters, relative slopes
    /// `|b1 - b2| = 2|beta2|` and `|b1 + b2| = 2|beta1|`.
    pub fn crossings(&self) -> Result<(LzPairParams, LzPairParams)> {
        self.check()?;
        Ok((
            LzPairParams::new(self.g.norm_sqr(), self.b1 - self.b2)?,
            LzPairParams::new(self.gamma.norm_sqr(), self.b1 + self.b2)?,
        ))
    }
}

/// Four-level double-dot model: diagonal `(b1 t + E1, -b1 t + E1, b2 t + E2,
/// -b2 t + E2)`, upper couplings `g*, -gamma*` (row 1) and `gamma*, g*`
/// (row 2) towards levels 3 and 4.
pub fn n4_model(p: &SolvableN4Params, flag: Hermiticity) -> Result<NmlzModel> {
    NmlzModel::from_upper(
        vec![p.b1, -p.b1, p.b2, -p.b2],
        vec![p.e1, p.e1, p.e2, p.e2],
        &[
            (0, 2, p.g.conj()),
            (0, 3, -p.gamma.conj()),
            (1, 2, p.gamma.conj()),
            (1, 3, p.g.conj()),
        ],
        flag,
    )
}

/// Log-space table of the four-level model from per-crossing `(ln p, ln q)`.
fn n4_log_table(g: (f64, f64), c: (f64, f64)) -> Vec<Vec<f64>> {
    let (pg, qg) = g;
    let (pc, qc) = c;
    let z = f64::NEG_INFINITY;
    let d = pg + pc;
    let a = pc + qg;
    vec![
        vec![d, z, a, qc],
        vec![z, d, qc, a],
        vec![a, qc, d, z],
        vec![qc, a, z, d],
    ]
}

/// `P~` of the solvable four-level model with `p~_g = e^{2 pi |g|^2 / |b1 - b2|}`
/// and `p~_gamma = e^{2 pi |gamma|^2 / |b1 + b2|}`.
pub fn solvable_n4(p: &SolvableN4Params) -> Result<TransitionTable> {
    let (g, c) = p.crossings()?;
    TransitionTable::from_log(n4_log_table(g.log_tilde(), c.log_tilde()))
}

/// Transition probabilities of the Hermitian four-level model: the same
/// table with `p, q` in place of `p~, q~`.
pub fn solvable_n4_hermitian(p: &SolvableN4Params) -> Result<TransitionTable> {
    let (g, c) = p.crossings()?;
    TransitionTable::from_log(n4_log_table(g.log_hermitian(), c.log_hermitian()))
}

/// Parameters of the solvable six-level model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolvableN6Params {
    pub b1: f64,
    pub b2: f64,
    pub e: f64,
    pub g: C64,
    pub gamma: C64,
}

impl SolvableN6Params {
    fn check(&self) -> Result<()> {
        if !(self.b2 > self.b1 && self.b1 > 0.0) {
            return Err(Error::OrderViolation(format!(
                "need b2 > b1 > 0, got b1 = {}, b2 = {}",
                self.b1, self.b2
            )));
        }
        check_loop_phase(self.g, self.gamma)
    }

    /// `(p~_1, p~_2)` crossings with relative slopes `|b1 - b2|`, `|b1 + b2|`.
    pub fn crossings(&self) -> Result<(LzPairParams, LzPairParams)> {
        self.check()?;
        Ok((
            LzPairParams::new(self.g.norm_sqr(), self.b1 - self.b2)?,
            LzPairParams::new(self.gamma.norm_sqr(), self.b1 + self.b2)?,
        ))
    }
}

/// Six-level model: diagonal `(b1 t - E, b1 t + E, -b1 t - E, -b1 t + E,
/// -b2 t, b2 t)` coupled to the last two levels.
pub fn n6_model(p: &SolvableN6Params, flag: Hermiticity) -> Result<NmlzModel> {
    let (g, c) = (p.g, p.gamma);
    NmlzModel::from_upper(
        vec![p.b1, p.b1, -p.b1, -p.b1, -p.b2, p.b2],
        vec![-p.e, p.e, -p.e, p.e, 0.0, 0.0],
        &[
            (0, 4, -c),
            (0, 5, g),
            (1, 4, c),
            (1, 5, g),
            (2, 4, g),
            (2, 5, c),
            (3, 4, g),
            (3, 5, -c),
        ],
        flag,
    )
}

fn n6_log_table(one: (f64, f64), two: (f64, f64)) -> Vec<Vec<f64>> {
    let (p1, q1) = one;
    let (p2, q2) = two;
    let z = f64::NEG_INFINITY;
    vec![
        vec![p1 + p2, 2.0 * q2, z, p2 + q1 + q2, p1 + p2 + q2, p2 + q1],
        vec![2.0 * (p2 + q1), p1 + p2, p2 + q2 + q1, z, q2, 2.0 * p2 + p1 + q1],
        vec![z, p2 + q2 + q1, p1 + p2, 2.0 * (p2 + q1), 2.0 * p2 + p1 + q1, q2],
        vec![p2 + q2 + q1, z, 2.0 * q2, p1 + p2, q1 + p2, p1 + p2 + q2],
        vec![q2, p1 + p2 + q2, p2 + q1, 2.0 * p2 + p1 + q1, 2.0 * (p1 + p2), z],
        vec![2.0 * p2 + p1 + q1, p2 + q1, q2 + p2 + p1, q2, z, 2.0 * (p1 + p2)],
    ]
}

/// `P~` of the six-level model, valid for `b2 > b1 > 0`.
pub fn solvable_n6(p: &SolvableN6Params) -> Result<TransitionTable> {
    let (one, two) = p.crossings()?;
    TransitionTable::from_log(n6_log_table(one.log_tilde(), two.log_tilde()))
}

pub fn solvable_n6_hermitian(p: &SolvableN6Params) -> Result<TransitionTable> {
    let (one, two) = p.crossings()?;
    TransitionTable::from_log(n6_log_table(one.log_hermitian(), two.log_hermitian()))
}

/// Column-normalizes a nonnegative `P~` given as `[to][from]` rows.
pub fn normalize(p_tilde: &[Vec<f64>]) -> Result<TransitionTable> {
    let mut logs = Vec::with_capacity(p_tilde.len());
    for row in p_tilde {
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteEntry("probability table"));
        }
        if row.iter().any(|&x| x < 0.0) {
            return Err(Error::InvalidArgument("probability table has negative entries".into()));
        }
        logs.push(row.iter().map(|x| x.ln()).collect());
    }
    TransitionTable::from_log(logs)
}

/// A sign vector `s` with `sum_m s_m P~_mn = 1` for one column.
#[derive(Debug, Clone, PartialEq)]
pub struct ConservationSignature {
    pub signs: Vec<i8>,
    /// `|sum_m s_m P~_mn - 1|`
    pub residual: f64,
}

/// Exhaustive search over sign vectors with `signs[initial] = +1`. Returns
/// the best signature when its residual is below `tol`; ties go to the
/// vector with the fewest negative entries.
pub fn conservation_signature(column: &[f64], initial: usize, tol: f64) -> Option<ConservationSignature> {
    let n = column.len();
    if n == 0 || n > crate::eigen::MAX_DIM || initial >= n || column.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let others: Vec<usize> = (0..n).filter(|&m| m != initial).collect();
    let mut best: Option<(f64, u32, u32)> = None;
    for mask in 0u32..(1u32 << others.len()) {
        let mut sum = column[initial];
        for (bit, &m) in others.iter().enumerate() {
            if mask >> bit & 1 == 1 {
                sum -= column[m];
            } else {
                sum += column[m];
            }
        }
        let residual = (sum - 1.0).abs();
        let negatives = mask.count_ones();
        let better = match best {
            None => true,
            Some((r, k, _)) => residual < r || (residual == r && negatives < k),
        };
        if better {
            best = Some((residual, negatives, mask));
        }
    }
    let (residual, _, mask) = best?;
    if !(residual < tol) {
        return None;
    }
    let mut signs = vec![1i8; n];
    for (bit, &m) in others.iter().enumerate() {
        if mask >> bit & 1 == 1 {
            signs[m] = -1;
        }
    }
    Some(ConservationSignature { signs, residual })
}

/// Residual of a given signature on a log-space column, divided by the
/// largest entry of the column so that huge entries stay comparable.
pub fn scaled_signature_residual(log_column: &[f64], signs: &[i8]) -> f64 {
    let m = log_column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = log_column
        .iter()
        .zip(signs)
        .map(|(l, &s)| f64::from(s) * (l - m).exp())
        .sum();
    (sum - (-m).exp()).abs()
}

/// Hermitian model with the same slopes, statics and upper-triangle couplings.
pub fn hermitian_counterpart(model: &NmlzModel) -> Result<NmlzModel> {
    if model.hermiticity() != Hermiticity::AntiHermitian {
        return Err(Error::InvalidArgument("counterpart needs an anti-Hermitian model".into()));
    }
    Ok(model.with_hermiticity(Hermiticity::Hermitian))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::propagator::{scattering_matrix, transition_table, PropagationSettings};
    use std::f64::consts::E;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn two_level_values() {
        assert_eq!(nlz_two_level(c(0.0), 1.0).unwrap(), (1.0, 0.0));
        let (a, b) = nlz_two_level(c(1.0), 2.0 * PI).unwrap();
        assert!((a - E).abs() < 1e-14 && (b - (E - 1.0)).abs() < 1e-14);
        let (h1, h2) = lz_two_level_hermitian(c(1.0), 2.0 * PI).unwrap();
        assert!((h1 - 1.0 / E).abs() < 1e-15 && (h1 + h2 - 1.0).abs() < 1e-15);
        assert!(matches!(nlz_two_level(c(20.0), 1.0), Err(Error::Overflow(_))));
        let (l1, l2) = nlz_two_level_log(c(20.0), 1.0).unwrap();
        assert!((l1 - 800.0 * PI).abs() < 1e-9 && (l1 - l2).abs() < 1e-12);
        assert!(nlz_two_level(c(1.0), 0.0).is_err());
    }

    #[test]
    fn pair_identities() {
        for x in [0.0, 0.3, 2.0, 7.5] {
            let p = LzPairParams::from_exponent(x);
            assert!((p.p_tilde - p.q_tilde - 1.0).abs() < 1e-12 * p.p_tilde);
            assert!((p.p_tilde * p.p - 1.0).abs() < 1e-14);
            assert!((p.p + p.q - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn be_diagonal_sign_and_extremality() {
        let m = two_level_model(c(0.5), 1.0, Hermiticity::AntiHermitian).unwrap();
        assert!((modified_be_diagonal(&m, 0).unwrap() - PI * 0.25).abs() < 1e-15);
        let h = hermitian_counterpart(&m).unwrap();
        assert!((modified_be_diagonal(&h, 1).unwrap() + PI * 0.25).abs() < 1e-15);
        let three = NmlzModel::from_upper(
            vec![0.0, 1.0, 2.0],
            vec![0.0; 3],
            &[(0, 1, c(0.2)), (1, 2, c(0.2))],
            Hermiticity::AntiHermitian,
        )
        .unwrap();
        assert_eq!(modified_be_diagonal(&three, 1), Err(Error::SlopeNotExtremal(1)));
    }

    #[test]
    fn n4_structure_and_conservation() {
        let p = SolvableN4Params {
            b1: 1.0,
            b2: 0.4,
            e1: 0.0,
            e2: 0.0,
            g: c(0.3),
            gamma: c(0.3),
        };
        let t = solvable_n4(&p).unwrap();
        let u = t.unnormalized().unwrap();
        for (i, j) in [(0, 1), (1, 0), (2, 3), (3, 2)] {
            assert_eq!(u[i][j], 0.0);
        }
        let col: Vec<f64> = (0..4).map(|m| u[m][0]).collect();
        let sig = conservation_signature(&col, 0, 1e-12).unwrap();
        assert_eq!(sig.signs, vec![1, 1, -1, -1]);
        let zero = SolvableN4Params {
            g: c(0.0),
            gamma: c(0.0),
            ..p
        };
        let id = solvable_n4(&zero).unwrap().unnormalized().unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(id[i][j], if i == j { 1.0 } else { 0.0 });
            }
        }
        assert!(matches!(
            solvable_n4(&SolvableN4Params { b2: 1.0, ..p }),
            Err(Error::DegenerateSlopePair(..))
        ));
        assert!(matches!(
            solvable_n4(&SolvableN4Params { b2: -0.4, ..p }),
            Err(Error::OrderViolation(_))
        ));
        assert!(matches!(
            solvable_n4(&SolvableN4Params { g: C64::new(0.0, 0.3), ..p }),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn n6_fig3_factors_and_norms() {
        let p = SolvableN6Params {
            b1: 0.3,
            b2: 1.6,
            e: 2.2,
            g: c(0.3),
            gamma: c(0.3),
        };
        let (one, two) = p.crossings().unwrap();
        assert!((one.p_tilde - 1.5451).abs() < 2e-4);
        assert!((two.p_tilde - 1.3467).abs() < 1e-4);
        let t = solvable_n6(&p).unwrap();
        let norms = t.column_norms().unwrap();
        // equal sums pair up as {1,4}, {2,3}, {5,6}
        for (a, b) in [(0, 3), (1, 2), (4, 5)] {
            assert!((norms[a] / norms[b] - 1.0).abs() < 1e-12);
        }
        assert!((norms[0] / norms[1] - 1.0).abs() > 1e-3);
        let u = t.unnormalized().unwrap();
        for (i, j) in [(0, 2), (1, 3), (2, 0), (3, 1), (4, 5), (5, 4)] {
            assert_eq!(u[i][j], 0.0);
        }
        assert!(matches!(
            solvable_n6(&SolvableN6Params { b2: 0.2, ..p }),
            Err(Error::OrderViolation(_))
        ));
    }

    #[test]
    fn normalize_two_level_column() {
        let t = normalize(&[vec![E, 0.0], vec![E - 1.0, 1.0]]).unwrap();
        assert!((t.normalized()[0][0] - 0.6127).abs() < 1e-4);
        assert!((t.normalized()[1][0] - 0.3873).abs() < 1e-4);
        assert_eq!(normalize(&[vec![0.0, 0.0], vec![0.0, 1.0]]).err(), Some(Error::ZeroColumn(0)));
    }

    #[test]
    fn signature_prefers_fewest_negatives() {
        let s = conservation_signature(&[1.0, 0.25, 0.25, 0.5], 0, 1e-12).unwrap();
        // (+,-,-,+) and (+,+,+,-) both hit exactly
        assert_eq!(s.signs, vec![1, 1, 1, -1]);
        assert!(conservation_signature(&[3.0, 0.5], 0, 1e-6).is_none());
        let two = conservation_signature(&[E, E - 1.0], 0, 1e-12).unwrap();
        assert_eq!(two.signs, vec![1, -1]);
    }

    #[test]
    fn n4_propagator_matches_table() {
        let p = SolvableN4Params {
            b1: -1.0,
            b2: -0.4,
            e1: 0.2,
            e2: -0.1,
            g: C64::from_polar(0.25, 0.7),
            gamma: C64::from_polar(-0.3, 0.7),
        };
        let model = n4_model(&p, Hermiticity::AntiHermitian).unwrap();
        let s = PropagationSettings {
            estimate_convergence: false,
            ..Default::default()
        };
        let num = transition_table(&scattering_matrix(&model, &s).unwrap()).unwrap();
        let exact = solvable_n4(&p).unwrap();
        let (nu, eu) = (num.unnormalized().unwrap(), exact.unnormalized().unwrap());
        for i in 0..4 {
            for j in 0..4 {
                let scale = eu[i][j].max(1e-6 * nu[i][j].max(1.0));
                assert!((nu[i][j] - eu[i][j]).abs() < 1e-2 * scale, "({i},{j}) {} vs {}", nu[i][j], eu[i][j]);
            }
        }
        let herm = transition_table(&scattering_matrix(&hermitian_counterpart(&model).unwrap(), &s).unwrap()).unwrap();
        let he = solvable_n4_hermitian(&p).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((herm.normalized()[i][j] - he.normalized()[i][j]).abs() < 1e-3);
            }
        }
    }
}
