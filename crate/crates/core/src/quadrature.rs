//! Gauss-Legendre rules and an adaptive integrator for complex integrands
//! whose branch must be continued from left to right.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::matrix::{C64, ZERO};

/// Nodes and weights of the `n`-point rule on `[-1, 1]`, ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `(P_n(x), P_n'(x))`
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Adaptive Gauss-Legendre bisection that visits nodes left to right.
pub struct BranchQuadrature {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_depth: usize,
    /// Cap on the number of fixed-rule panels per call.
    pub max_panels: usize,
}

impl Default for BranchQuadrature {
    fn default() -> Self {
        let (nodes, weights) = gauss_legendre(10);
        Self {
            nodes,
            weights,
            rel_tol: 1e-13,
            abs_tol: 1e-15,
            max_depth: 40,
            max_panels: 200_000,
        }
    }
}

impl BranchQuadrature {
    /// Integrates over `[a, b]`; `f(u, prev)` evaluates the integrand at `u`
    /// on the branch closest to `prev`, the value at the previous node.
    /// `start` is the integrand at `a`. Returns the integral and the
    /// continued value at `b`.
    pub fn integrate<F>(&self, f: &mut F, a: f64, b: f64, start: C64) -> Result<(C64, C64)>
    where
        F: FnMut(f64, C64) -> C64,
    {
        let mut budget = self.max_panels;
        let (whole, _) = self.panel(f, a, b, start);
        self.refine(f, a, b, start, whole, 0, &mut budget)
    }

    /// One fixed rule over `[a, b]`, continuing the branch node by node.
    fn panel<F>(&self, f: &mut F, a: f64, b: f64, start: C64) -> (C64, C64)
    where
        F: FnMut(f64, C64) -> C64,
    {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut prev = start;
        let mut sum = ZERO;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            prev = f(mid + half * x, prev);
            sum += prev * *w;
        }
        let end = f(b, prev);
        (sum * half, end)
    }

    #[allow(clippy::too_many_arguments)]
    fn refine<F>(
        &self,
        f: &mut F,
        a: f64,
        b: f64,
        start: C64,
        whole: C64,
        depth: usize,
        budget: &mut usize,
    ) -> Result<(C64, C64)>
    where
        F: FnMut(f64, C64) -> C64,
    {
        let m = 0.5 * (a + b);
        let (left, mid_val) = self.panel(f, a, m, start);
        let (right, end2) = self.panel(f, m, b, mid_val);
        let sum = left + right;
        let err = (sum - whole).norm();
        if err <= self.abs_tol.max(self.rel_tol * sum.norm()) {
            return Ok((sum, end2));
        }
        if depth >= self.max_depth || *budget < 2 {
            return Err(Error::QuadratureFailure(err));
        }
        *budget -= 2;
        let (l, mid_val) = self.refine(f, a, m, start, left, depth + 1, budget)?;
        let (r, e) = self.refine(f, m, b, mid_val, right, depth + 1, budget)?;
        Ok((l + r, e))
    }
}
