//! Eigenvalues of small dense complex matrices.
//!
//! Householder reduction to upper Hessenberg form followed by single-shift
//! QR sweeps with Wilkinson shifts and deflation. 2x2 matrices use the
//! closed form directly.

use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, C64, ONE, ZERO};

pub const MAX_DIM: usize = 16;

/// All eigenvalues of a square matrix, in no particular order.
pub fn eigenvalues(m: &ComplexMatrix) -> Result<Vec<C64>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "eigenvalues of a {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    if n > MAX_DIM {
        return Err(Error::DimensionMismatch(format!(
            "dimension {n} exceeds the supported maximum {MAX_DIM}"
        )));
    }
    if !m.is_finite() {
        return Err(Error::NonFiniteEntry("eigenvalue input"));
    }
    match n {
        0 => Ok(vec![]),
        1 => Ok(vec![m[(0, 0)]]),
        2 => Ok(eigenvalues_2x2(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]).to_vec()),
        _ => {
            let mut h = m.clone();
            hessenberg_in_place(&mut h);
            shifted_qr(&mut h)
        }
    }
}

/// Eigenvalues of `[[a, b], [c, d]]`, written to avoid cancellation in the
/// smaller root.
pub fn eigenvalues_2x2(a: C64, b: C64, c: C64, d: C64) -> [C64; 2] {
    let half_tr = (a + d) * 0.5;
    let disc = (((a - d) * 0.5).powi(2) + b * c).sqrt();
    let big = if (half_tr + disc).norm() >= (half_tr - disc).norm() {
        half_tr + disc
    } else {
        half_tr - disc
    };
    let det = a * d - b * c;
    let small = if big.norm() > 0.0 { det / big } else { ZERO };
    if (half_tr + disc).norm() >= (half_tr - disc).norm() {
        [big, small]
    } else {
        [small, big]
    }
}

fn hessenberg_in_place(a: &mut ComplexMatrix) {
    let n = a.rows();
    for k in 0..n.saturating_sub(2) {
        let alpha_norm: f64 = (k + 1..n).map(|i| a[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        if alpha_norm == 0.0 {
            continue;
        }
        let x0 = a[(k + 1, k)];
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { ONE };
        // v = x + phase * |x| e1, H = I - 2 v v^† / (v^† v)
        let mut v: Vec<C64> = (k + 1..n).map(|i| a[(i, k)]).collect();
        v[0] += phase * alpha_norm;
        let vnorm2: f64 = v.iter().map(|x| x.norm_sqr()).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        // left: A <- H A on rows k+1..n
        for j in 0..n {
            let dot: C64 = v
                .iter()
                .enumerate()
                .map(|(r, vr)| vr.conj() * a[(k + 1 + r, j)])
                .sum();
            let f = dot * (2.0 / vnorm2);
            for (r, vr) in v.iter().enumerate() {
                a[(k + 1 + r, j)] -= vr * f;
            }
        }
        // right: A <- A H on cols k+1..n
        for i in 0..n {
            let dot: C64 = v
                .iter()
                .enumerate()
                .map(|(r, vr)| a[(i, k + 1 + r)] * vr)
                .sum();
            let f = dot * (2.0 / vnorm2);
            for (r, vr) in v.iter().enumerate() {
                a[(i, k + 1 + r)] -= f * vr.conj();
            }
        }
        for i in k + 2..n {
            a[(i, k)] = ZERO;
        }
    }
}

fn givens(x: C64, y: C64) -> (C64, C64) {
    let r = (x.norm_sqr() + y.norm_sqr()).sqrt();
    if r == 0.0 {
        (ONE, ZERO)
    } else {
        (x / r, y / r)
    }
}

fn shifted_qr(h: &mut ComplexMatrix) -> Result<Vec<C64>> {
    let n = h.rows();
    let mut eig = vec![ZERO; n];
    let max_sweeps = 100 * n;
    let mut sweeps = 0usize;
    let mut since_deflation = 0usize;
    let mut hi = n - 1;
    let scale = h.max_abs().max(f64::MIN_POSITIVE);
    loop {
        if hi == 0 {
            eig[0] = h[(0, 0)];
            break;
        }
        let mut lo = hi;
        while lo > 0 {
            let sub = h[(lo, lo - 1)].norm();
            let diag = h[(lo - 1, lo - 1)].norm() + h[(lo, lo)].norm();
            let reference = if diag > 0.0 { diag } else { scale };
            if sub <= f64::EPSILON * reference {
                h[(lo, lo - 1)] = ZERO;
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            eig[hi] = h[(hi, hi)];
            hi -= 1;
            since_deflation = 0;
            continue;
        }
        if lo + 1 == hi {
            let [e0, e1] = eigenvalues_2x2(
                h[(lo, lo)],
                h[(lo, hi)],
                h[(hi, lo)],
                h[(hi, hi)],
            );
            eig[lo] = e0;
            eig[hi] = e1;
            if lo == 0 {
                break;
            }
            hi = lo - 1;
            since_deflation = 0;
            continue;
        }
        sweeps += 1;
        since_deflation += 1;
        if sweeps > max_sweeps {
            return Err(Error::NoConvergence(max_sweeps));
        }
        let mu = if since_deflation % 11 == 10 {
            // exceptional shift to break cycles
            h[(hi, hi)] + C64::new(0.75 * h[(hi, hi - 1)].norm(), 0.0)
        } else {
            let [e0, e1] = eigenvalues_2x2(
                h[(hi - 1, hi - 1)],
                h[(hi - 1, hi)],
                h[(hi, hi - 1)],
                h[(hi, hi)],
            );
            let d = h[(hi, hi)];
            if (e0 - d).norm() <= (e1 - d).norm() {
                e0
            } else {
                e1
            }
        };
        qr_sweep(h, lo, hi, mu);
    }
    Ok(eig)
}

/// One explicit shifted QR step on the active block `lo..=hi`.
fn qr_sweep(h: &mut ComplexMatrix, lo: usize, hi: usize, mu: C64) {
    for k in lo..=hi {
        h[(k, k)] -= mu;
    }
    let mut rotations = Vec::with_capacity(hi - lo);
    for k in lo..hi {
        let (c, s) = givens(h[(k, k)], h[(k + 1, k)]);
        for j in k..=hi {
            let x = h[(k, j)];
            let y = h[(k + 1, j)];
            h[(k, j)] = c.conj() * x + s.conj() * y;
            h[(k + 1, j)] = -s * x + c * y;
        }
        rotations.push((c, s));
    }
    for (idx, &(c, s)) in rotations.iter().enumerate() {
        let k = lo + idx;
        let last = (k + 2).min(hi);
        for i in lo..=last {
            let x = h[(i, k)];
            let y = h[(i, k + 1)];
            h[(i, k)] = x * c + y * s;
            h[(i, k + 1)] = -x * s.conj() + y * c.conj();
        }
    }
    for k in lo..=hi {
        h[(k, k)] += mu;
    }
}

/// Right eigenvector for a known eigenvalue by inverse iteration; returned
/// with unit Euclidean norm.
pub fn eigenvector(m: &ComplexMatrix, lambda: C64) -> Result<Vec<C64>> {
    let n = m.rows();
    let scale = m.max_abs().max(1.0);
    let mut shifted = m.clone();
    let delta = C64::new(scale * 1e-11, scale * 1e-11);
    for i in 0..n {
        shifted[(i, i)] -= lambda + delta;
    }
    let lu = shifted.lu()?;
    let mut x: Vec<C64> = (0..n).map(|i| C64::new(1.0, 0.1 * i as f64)).collect();
    for _ in 0..3 {
        x = lu.solve(&x);
        let nrm: f64 = x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if !nrm.is_finite() || nrm == 0.0 {
            return Err(Error::Singular);
        }
        x.iter_mut().for_each(|v| *v /= nrm);
    }
    Ok(x)
}

/// Largest relative residual `|Hv - lambda v| / |H|` over all computed pairs.
pub fn max_relative_residual(m: &ComplexMatrix, eig: &[C64]) -> Result<f64> {
    let nrm = m.frobenius().max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for &lambda in eig {
        let v = eigenvector(m, lambda)?;
        let hv = m.matvec(&v);
        let r: f64 = hv
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - lambda * b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        worst = worst.max(r / nrm);
    }
    Ok(worst)
}

/// Greedy minimal-displacement matching of `next` onto the ordering of `prev`.
/// Pairs are taken in order of increasing distance; exact ties keep the
/// previous index order.
pub fn match_continuity(prev: &[C64], next: &[C64]) -> Vec<C64> {
    let n = prev.len();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for (i, p) in prev.iter().enumerate() {
        for (j, q) in next.iter().enumerate() {
            pairs.push(((p - q).norm(), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = vec![ZERO; n];
    let mut used_prev = vec![false; n];
    let mut used_next = vec![false; n];
    for (_, i, j) in pairs {
        if !used_prev[i] && !used_next[j] {
            out[i] = next[j];
            used_prev[i] = true;
            used_next[j] = true;
        }
    }
    out
}
