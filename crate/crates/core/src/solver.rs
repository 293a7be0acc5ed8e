//! Solvers for the diffusion system `(I - αS) f = (1 - α) y`.
//!
//! Conjugate gradient is the production path. The fixed-point diffusion
//! iteration (a Jacobi sweep on the same system) and a dense Cholesky solve
//! are kept as reference methods. CG on the unnormalized system
//! `(D - αA) g = (1 - α) D^{1/2} y`, mapped back with `f = D^{1/2} g`,
//! reaches the same solution without the diagonal scaling that the
//! normalization provides.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::descriptors::dot;
use crate::error::{Error, Result};
use crate::graph::{check_alpha, NormalizedGraph, SparseAffinity};

pub const DEFAULT_DENSE_CAP: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Cg,
    JacobiIteration,
    DenseDirect,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub max_iters: usize,
    /// Relative residual target for CG, relative update target for the
    /// diffusion iteration.
    pub rel_tol: f64,
    pub method: SolveMethod,
    /// Largest system the dense solver accepts.
    pub dense_cap: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { max_iters: 50, rel_tol: 1e-6, method: SolveMethod::Cg, dense_cap: DEFAULT_DENSE_CAP }
    }
}

impl SolveOptions {
    pub fn with_method(mut self, method: SolveMethod) -> Self {
        self.method = method;
        self
    }

    pub fn with_tolerance(mut self, rel_tol: f64, max_iters: usize) -> Self {
        self.rel_tol = rel_tol;
        self.max_iters = max_iters;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::input("max_iters must be at least 1"));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::input(format!("rel_tol={} must lie in (0, 1)", self.rel_tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub solution: Vec<f64>,
    pub iterations_used: usize,
    /// `‖b - L f‖ / ‖b‖` of the returned solution, recomputed explicitly.
    pub final_relative_residual: f64,
    /// Last relative update `‖f^t - f^{t-1}‖ / ‖f^t‖`; diffusion iteration only.
    pub final_relative_update: Option<f64>,
    pub converged: bool,
    /// The method's stopping metric per iteration, starting with the initial
    /// guess for CG.
    pub history: Vec<f64>,
    pub elapsed: Duration,
}

impl SolveReport {
    fn trivial(n: usize, start: Instant) -> Self {
        Self {
            solution: vec![0.0; n],
            iterations_used: 0,
            final_relative_residual: 0.0,
            final_relative_update: None,
            converged: true,
            history: Vec::new(),
            elapsed: start.elapsed(),
        }
    }
}

fn check_rhs(n: usize, y: &[f64]) -> Result<()> {
    if y.len() != n {
        return Err(Error::input(format!("query vector length {} != graph size {n}", y.len())));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::input(format!("query vector entry {i} is negative or not finite")));
    }
    Ok(())
}

fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Dispatches on `opts.method`.
pub fn solve(g: &NormalizedGraph, y: &[f64], opts: &SolveOptions) -> Result<SolveReport> {
    match opts.method {
        SolveMethod::Cg => solve_cg(g, y, opts),
        SolveMethod::JacobiIteration => solve_jacobi_iteration(g, y, opts),
        SolveMethod::DenseDirect => {
            let start = Instant::now();
            let solution = solve_dense_direct_capped(g, y, opts.dense_cap)?;
            let residual = relative_residual(g, y, &solution);
            Ok(SolveReport {
                solution,
                iterations_used: 0,
                final_relative_residual: residual,
                final_relative_update: None,
                converged: true,
                history: Vec::new(),
                elapsed: start.elapsed(),
            })
        }
    }
}

/// `‖(1-α)y - (I - αS) f‖ / ‖(1-α)y‖`, zero for a zero right-hand side.
pub fn relative_residual(g: &NormalizedGraph, y: &[f64], f: &[f64]) -> f64 {
    let scale = 1.0 - g.alpha();
    let mut lf = vec![0.0; f.len()];
    g.apply_system(f, &mut lf);
    let r: f64 = lf.iter().zip(y).map(|(a, b)| (scale * b - a).powi(2)).sum::<f64>().sqrt();
    let b = scale * norm2(y);
    if b == 0.0 {
        r
    } else {
        r / b
    }
}

struct CgOutcome {
    x: Vec<f64>,
    iterations: usize,
    converged: bool,
    history: Vec<f64>,
}

/// Unpreconditioned CG from `x = 0` for an SPD operator. When the recursive
/// residual meets the target the true residual is checked; on a mismatch the
/// iteration restarts from the true residual.
fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    max_iters: usize,
    rel_tol: f64,
    mut observer: impl FnMut(usize, &[f64]),
) -> CgOutcome {
    let n = b.len();
    let b_norm = norm2(b);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let mut history = vec![rr.sqrt() / b_norm];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iters {
        if rr.sqrt() <= rel_tol * b_norm {
            apply(&x, &mut ap);
            for i in 0..n {
                r[i] = b[i] - ap[i];
            }
            rr = dot(&r, &r);
            if rr.sqrt() <= rel_tol * b_norm {
                converged = true;
                break;
            }
            p.copy_from_slice(&r);
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            // Breakdown; impossible in exact arithmetic for an SPD system.
            break;
        }
        let step = rr / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        rr = rr_next;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        iterations += 1;
        history.push(rr.sqrt() / b_norm);
        observer(iterations, &x);
    }
    if !converged && rr.sqrt() <= rel_tol * b_norm {
        apply(&x, &mut ap);
        let true_rr: f64 = b.iter().zip(&ap).map(|(bi, ai)| (bi - ai).powi(2)).sum();
        converged = true_rr.sqrt() <= rel_tol * b_norm;
    }
    CgOutcome { x, iterations, converged, history }
}

/// Conjugate gradient on the normalized system, starting from zero.
pub fn solve_cg(g: &NormalizedGraph, y: &[f64], opts: &SolveOptions) -> Result<SolveReport> {
    solve_cg_observed(g, y, opts, |_, _| {})
}

/// As [`solve_cg`], calling `observer(t, f_t)` after every iteration.
pub fn solve_cg_observed(
    g: &NormalizedGraph,
    y: &[f64],
    opts: &SolveOptions,
    observer: impl FnMut(usize, &[f64]),
) -> Result<SolveReport> {
    let start = Instant::now();
    opts.validate()?;
    check_rhs(g.n(), y)?;
    if y.iter().all(|&v| v == 0.0) {
        return Ok(SolveReport::trivial(g.n(), start));
    }
    let scale = 1.0 - g.alpha();
    let b: Vec<f64> = y.iter().map(|v| scale * v).collect();
    let out = conjugate_gradient(|v, o| g.apply_system(v, o), &b, opts.max_iters, opts.rel_tol, observer);
    let residual = relative_residual(g, y, &out.x);
    Ok(SolveReport {
        solution: out.x,
        iterations_used: out.iterations,
        final_relative_residual: residual,
        final_relative_update: None,
        converged: out.converged,
        history: out.history,
        elapsed: start.elapsed(),
    })
}

/// Fixed-point diffusion `f ← αSf + (1-α)y` from `f = y`, stopped on the
/// relative update.
pub fn solve_jacobi_iteration(g: &NormalizedGraph, y: &[f64], opts: &SolveOptions) -> Result<SolveReport> {
    let start = Instant::now();
    opts.validate()?;
    check_rhs(g.n(), y)?;
    if y.iter().all(|&v| v == 0.0) {
        return Ok(SolveReport::trivial(g.n(), start));
    }
    let alpha = g.alpha();
    let s = g.s_matrix();
    let mut f = y.to_vec();
    let mut next = vec![0.0; f.len()];
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut update = f64::INFINITY;
    while iterations < opts.max_iters {
        s.mul_vec(&f, &mut next);
        let mut diff = 0.0;
        let mut size = 0.0;
        for i in 0..f.len() {
            next[i] = alpha * next[i] + (1.0 - alpha) * y[i];
            diff += (next[i] - f[i]).powi(2);
            size += next[i] * next[i];
        }
        std::mem::swap(&mut f, &mut next);
        iterations += 1;
        update = diff.sqrt() / size.sqrt();
        history.push(update);
        if update <= opts.rel_tol {
            converged = true;
            break;
        }
    }
    let residual = relative_residual(g, y, &f);
    Ok(SolveReport {
        solution: f,
        iterations_used: iterations,
        final_relative_residual: residual,
        final_relative_update: Some(update),
        converged,
        history,
        elapsed: start.elapsed(),
    })
}

/// Closed form `(1-α)(I - αS)^{-1} y` by dense Cholesky; `n` up to the default cap.
pub fn solve_dense_direct(g: &NormalizedGraph, y: &[f64]) -> Result<Vec<f64>> {
    solve_dense_direct_capped(g, y, DEFAULT_DENSE_CAP)
}

pub fn solve_dense_direct_capped(g: &NormalizedGraph, y: &[f64], cap: usize) -> Result<Vec<f64>> {
    let n = g.n();
    if n > cap {
        return Err(Error::Capability(format!(
            "dense solve limited to n <= {cap} (got n = {n}); use the cg solver"
        )));
    }
    check_rhs(n, y)?;
    let m = DMatrix::from_row_slice(n, n, &g.dense_system());
    let rhs = DVector::from_iterator(n, y.iter().map(|v| (1.0 - g.alpha()) * v));
    let x = match m.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => m
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Capability("system matrix is singular".into()))?,
    };
    Ok(x.iter().copied().collect())
}

/// CG on `(D - αA) g = (1-α) D^{1/2} y` followed by `f = D^{1/2} g`.
/// Isolated nodes are solved directly as `f_i = (1-α) y_i`; the reported
/// residual refers to the unnormalized system.
pub fn solve_unnormalized(a: &SparseAffinity, alpha: f64, y: &[f64], opts: &SolveOptions) -> Result<SolveReport> {
    let start = Instant::now();
    check_alpha(alpha)?;
    opts.validate()?;
    let n = a.n();
    check_rhs(n, y)?;
    let degrees = a.degrees();
    let isolated: Vec<bool> = degrees.iter().map(|&d| d <= 0.0).collect();
    let sqrt_d: Vec<f64> = degrees.iter().map(|d| d.max(0.0).sqrt()).collect();
    let b: Vec<f64> = (0..n)
        .map(|i| if isolated[i] { 0.0 } else { (1.0 - alpha) * sqrt_d[i] * y[i] })
        .collect();

    // Isolated rows are replaced by the identity so the operator stays SPD;
    // their right-hand side is zero.
    let matrix = a.matrix();
    let apply = |v: &[f64], out: &mut [f64]| {
        matrix.mul_vec(v, out);
        for i in 0..n {
            out[i] = if isolated[i] { v[i] } else { degrees[i] * v[i] - alpha * out[i] };
        }
    };

    let (x, iterations, converged, history, residual) = if b.iter().all(|&v| v == 0.0) {
        (vec![0.0; n], 0, true, Vec::new(), 0.0)
    } else {
        let out = conjugate_gradient(apply, &b, opts.max_iters, opts.rel_tol, |_, _| {});
        let mut ax = vec![0.0; n];
        apply(&out.x, &mut ax);
        let r = b.iter().zip(&ax).map(|(bi, ai)| (bi - ai).powi(2)).sum::<f64>().sqrt();
        (out.x, out.iterations, out.converged, out.history, r / norm2(&b))
    };

    let solution = (0..n)
        .map(|i| if isolated[i] { (1.0 - alpha) * y[i] } else { sqrt_d[i] * x[i] })
        .collect();
    Ok(SolveReport {
        solution,
        iterations_used: iterations,
        final_relative_residual: residual,
        final_relative_update: None,
        converged,
        history,
        elapsed: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::normalize;

    fn two_node(alpha: f64) -> NormalizedGraph {
        normalize(&SparseAffinity::from_edges(2, &[(0, 1, 1.0)]).unwrap(), alpha).unwrap()
    }

    fn tight() -> SolveOptions {
        SolveOptions::default().with_tolerance(1e-12, 10_000)
    }

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn ring(n: usize, chords: &[(usize, usize, f64)]) -> SparseAffinity {
        let mut edges: Vec<(usize, usize, f64)> =
            (0..n).map(|i| (i, (i + 1) % n, 0.5 + 0.5 * ((i * 37 % 11) as f64) / 11.0)).collect();
        edges.extend_from_slice(chords);
        SparseAffinity::from_edges(n, &edges).unwrap()
    }

    #[test]
    fn two_node_closed_form() {
        // (1-α)(I - αS)^{-1} e1 with S = [[0,1],[1,0]], α = 1/2:
        // (I - αS)^{-1} = 1/(1-α²) [[1, α],[α, 1]] → 0.5/0.75 * [1, 0.5].
        let g = two_node(0.5);
        let expected = [2.0 / 3.0, 1.0 / 3.0];
        let cg = solve_cg(&g, &[1.0, 0.0], &tight()).unwrap();
        assert!(cg.converged);
        assert!(max_abs_diff(&cg.solution, &expected) < 1e-12);
        let jac = solve_jacobi_iteration(&g, &[1.0, 0.0], &tight()).unwrap();
        assert!(jac.converged);
        assert!(max_abs_diff(&jac.solution, &expected) < 1e-10);
        let dense = solve_dense_direct(&g, &[1.0, 0.0]).unwrap();
        assert!(max_abs_diff(&dense, &expected) < 1e-14);
    }

    #[test]
    fn tiny_alpha_returns_y() {
        let g = normalize(&ring(10, &[(0, 5, 0.3)]), 1e-9).unwrap();
        let y: Vec<f64> = (0..10).map(|i| (i % 3) as f64).collect();
        let r = solve_cg(&g, &y, &SolveOptions::default()).unwrap();
        assert!(max_abs_diff(&r.solution, &y) < 1e-6);
    }

    #[test]
    fn zero_rhs_is_trivial() {
        let g = two_node(0.9);
        for r in [
            solve_cg(&g, &[0.0, 0.0], &SolveOptions::default()).unwrap(),
            solve_jacobi_iteration(&g, &[0.0, 0.0], &SolveOptions::default()).unwrap(),
        ] {
            assert!(r.converged);
            assert_eq!(r.iterations_used, 0);
            assert_eq!(r.solution, vec![0.0, 0.0]);
        }
    }

    #[test]
    fn empty_graph_scales_y() {
        let g = normalize(&SparseAffinity::from_edges(3, &[]).unwrap(), 0.7).unwrap();
        let f = solve_dense_direct(&g, &[1.0, 2.0, 0.0]).unwrap();
        assert!(max_abs_diff(&f, &[0.3, 0.6, 0.0]) < 1e-15);
        let u = solve_unnormalized(&SparseAffinity::from_edges(3, &[]).unwrap(), 0.7, &[1.0, 2.0, 0.0], &tight()).unwrap();
        assert!(max_abs_diff(&u.solution, &[0.3, 0.6, 0.0]) < 1e-15);
    }

    #[test]
    fn three_cycle_symmetry() {
        let a = SparseAffinity::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap();
        let f = solve_dense_direct(&normalize(&a, 0.9).unwrap(), &[1.0, 0.0, 0.0]).unwrap();
        assert!((f[1] - f[2]).abs() < 1e-15);
        assert!(f[0] > f[1]);
    }

    #[test]
    fn dense_cap_enforced() {
        let g = normalize(&ring(30, &[]), 0.9).unwrap();
        let y = vec![1.0; 30];
        assert!(matches!(solve_dense_direct_capped(&g, &y, 20), Err(Error::Capability(_))));
        let opts = SolveOptions { method: SolveMethod::DenseDirect, dense_cap: 20, ..Default::default() };
        assert!(matches!(solve(&g, &y, &opts), Err(Error::Capability(_))));
    }

    #[test]
    fn dense_residual_small() {
        let chords: Vec<(usize, usize, f64)> = (0..50).map(|i| (i, (i * 7 + 3) % 50, 0.2)).filter(|&(i, j, _)| i < j && j != i + 1 && !(i == 0 && j == 49)).collect();
        let g = normalize(&ring(50, &chords), 0.99).unwrap();
        let y: Vec<f64> = (0..50).map(|i| if i % 7 == 0 { 1.0 } else { 0.0 }).collect();
        let f = solve_dense_direct(&g, &y).unwrap();
        let mut lf = vec![0.0; 50];
        g.apply_system(&f, &mut lf);
        let res: f64 = lf.iter().zip(&y).map(|(a, b)| (a - 0.01 * b).powi(2)).sum::<f64>().sqrt();
        assert!(res <= 1e-10, "{res}");
    }

    #[test]
    fn unnormalized_matches_on_unit_degrees() {
        let a = SparseAffinity::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        let u = solve_unnormalized(&a, 0.5, &[1.0, 0.0], &tight()).unwrap();
        let c = solve_cg(&normalize(&a, 0.5).unwrap(), &[1.0, 0.0], &tight()).unwrap();
        assert!(max_abs_diff(&u.solution, &c.solution) < 1e-14);
    }

    #[test]
    fn unnormalized_handles_isolated_nodes() {
        let a = SparseAffinity::from_edges(4, &[(0, 1, 2.0), (1, 2, 0.5)]).unwrap();
        let y = [1.0, 0.0, 0.5, 3.0];
        let u = solve_unnormalized(&a, 0.9, &y, &tight()).unwrap();
        let d = solve_dense_direct(&normalize(&a, 0.9).unwrap(), &y).unwrap();
        assert!(max_abs_diff(&u.solution, &d) < 1e-10);
        assert!((u.solution[3] - 0.1 * 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = two_node(0.5);
        assert!(solve_cg(&g, &[1.0], &SolveOptions::default()).is_err());
        assert!(solve_cg(&g, &[-1.0, 0.0], &SolveOptions::default()).is_err());
        assert!(solve_cg(&g, &[f64::NAN, 0.0], &SolveOptions::default()).is_err());
        let bad = SolveOptions { rel_tol: 1.5, ..Default::default() };
        assert!(solve_cg(&g, &[1.0, 0.0], &bad).is_err());
        let bad = SolveOptions { max_iters: 0, ..Default::default() };
        assert!(solve_jacobi_iteration(&g, &[1.0, 0.0], &bad).is_err());
    }

    #[test]
    fn budget_exhaustion_reports_non_convergence() {
        let g = normalize(&ring(40, &[(0, 20, 0.5)]), 0.99).unwrap();
        let mut y = vec![0.0; 40];
        y[0] = 1.0;
        let opts = SolveOptions::default().with_tolerance(1e-12, 2);
        let r = solve_cg(&g, &y, &opts).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations_used, 2);
        let r = solve_jacobi_iteration(&g, &y, &opts).unwrap();
        assert!(!r.converged);
    }
}
